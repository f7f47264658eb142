#include "dln/hmc.hpp"

namespace dln {

double grad_check(const EnergyTarget& target, const Eigen::VectorXd& state,
                  double eps) {
  Eigen::VectorXd g = target.gradient(state);
  double worst = 0.0;
  Eigen::VectorXd probe = state;
  for (int i = 0; i < state.size(); ++i) {
    probe[i] = state[i] + eps;
    const double ep = target.energy(probe);
    probe[i] = state[i] - eps;
    const double em = target.energy(probe);
    probe[i] = state[i];
    const double fd = (ep - em) / (2.0 * eps);
    const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - g[i]) / denom);
  }
  return worst;
}

}  // namespace dln
