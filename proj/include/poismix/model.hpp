#ifndef POISMIX_MODEL_HPP
#define POISMIX_MODEL_HPP

#include <cmath>
#include <stdexcept>
#include <string>

#include "poismix/types.hpp"

namespace poismix {

/// eta = X_i beta + Z_i b_i, concatenated in cluster order.
/// Throws std::invalid_argument naming the offending cluster on a
/// dimension mismatch.
Vec linear_predictor(const ClusteredCounts& data, const Vec& beta,
                     const std::vector<Vec>& b);

/// mu = exp(eta) elementwise. Throws std::overflow_error carrying the
/// offending eta value when exp would overflow.
Vec fitted_means(const ClusteredCounts& data, const Vec& beta,
                 const std::vector<Vec>& b);

/// Largest linear predictor exp() accepts before overflowing a double.
inline constexpr double kMaxLinearPredictor = 700.0;

/// Poisson conditional log-likelihood sum_i (-mu_i + y_i log mu_i - log y_i!),
/// with the y_i log mu_i term dropped when y_i = 0 and log y_i! computed via
/// lgamma. Throws std::domain_error if any mu_i <= 0.
template <class DY, class DM>
double conditional_log_lik(const Eigen::MatrixBase<DY>& y,
                           const Eigen::MatrixBase<DM>& mu) {
  if (y.size() != mu.size()) {
    throw std::invalid_argument(
        "conditional_log_lik: y has length " + std::to_string(y.size()) +
        " but mu has length " + std::to_string(mu.size()));
  }
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double mi = mu(i);
    const double yi = y(i);
    if (!(mi > 0.0)) {
      throw std::domain_error("conditional_log_lik: mu[" + std::to_string(i) +
                              "] = " + std::to_string(mi) +
                              " is not positive");
    }
    ll -= mi;
    if (yi > 0.0) ll += yi * std::log(mi) - std::lgamma(yi + 1.0);
  }
  return ll;
}

}  // namespace poismix

#endif  // POISMIX_MODEL_HPP
