#include "poismix/model.hpp"

namespace poismix {

Vec linear_predictor(const ClusteredCounts& data, const Vec& beta,
                     const std::vector<Vec>& b) {
  const int m = data.num_clusters();
  if (beta.size() != data.p()) {
    throw std::invalid_argument(
        "linear_predictor: beta has length " + std::to_string(beta.size()) +
        ", design has p = " + std::to_string(data.p()));
  }
  const bool use_b = data.q() > 0;
  if (use_b && static_cast<int>(b.size()) != m) {
    throw std::invalid_argument(
        "linear_predictor: got " + std::to_string(b.size()) +
        " random-effect vectors for " + std::to_string(m) + " clusters");
  }
  Vec eta(data.total_obs());
  for (int i = 0; i < m; ++i) {
    const Cluster& cl = data.cluster(i);
    auto seg = eta.segment(data.cluster_offset(i), cl.y.size());
    seg = cl.X * beta;
    if (use_b) {
      if (b[static_cast<size_t>(i)].size() != data.q()) {
        throw std::invalid_argument(
            "linear_predictor: cluster " + std::to_string(i) +
            " has b of length " + std::to_string(b[static_cast<size_t>(i)].size()) +
            ", expected q = " + std::to_string(data.q()));
      }
      seg += cl.Z * b[static_cast<size_t>(i)];
    }
  }
  return eta;
}

Vec fitted_means(const ClusteredCounts& data, const Vec& beta,
                 const std::vector<Vec>& b) {
  Vec eta = linear_predictor(data, beta, b);
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (eta(i) > kMaxLinearPredictor) {
      throw std::overflow_error(
          "fitted_means: linear predictor " + std::to_string(eta(i)) +
          " at observation " + std::to_string(i) + " overflows exp");
    }
  }
  return eta.array().exp();
}

}  // namespace poismix
