#ifndef POISMIX_TYPES_HPP
#define POISMIX_TYPES_HPP

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

namespace poismix {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One cluster of counts with its design matrices. Rows of X and Z align
/// with the entries of y.
struct Cluster {
  Vec y;  // counts, non-negative integers stored as doubles
  Mat X;  // n_i x p fixed-effects design
  Mat Z;  // n_i x q random-effects design
};

/// Clustered count data. Construction validates shapes (all clusters share
/// p and q, n_i >= 1) and that every count is a non-negative integer.
/// Immutable afterwards; the global observation index is concatenation order.
class ClusteredCounts {
 public:
  explicit ClusteredCounts(std::vector<Cluster> clusters);

  const std::vector<Cluster>& clusters() const { return clusters_; }
  const Cluster& cluster(int i) const { return clusters_[static_cast<size_t>(i)]; }
  int num_clusters() const { return static_cast<int>(clusters_.size()); }
  int p() const { return p_; }
  int q() const { return q_; }
  int total_obs() const { return n_total_; }

  /// Global index of the first observation of cluster i.
  int cluster_offset(int i) const { return offsets_[static_cast<size_t>(i)]; }

  /// Maps a global observation index to (cluster, row within cluster).
  std::pair<int, int> locate(int global_index) const;

  /// All counts concatenated in cluster order (length total_obs()).
  Vec stacked_y() const;

  /// Copy with the count at the given global index decremented by one.
  /// The count there must be positive.
  ClusteredCounts with_decremented(int global_index) const;

 private:
  std::vector<Cluster> clusters_;
  std::vector<int> offsets_;
  int p_ = 0;
  int q_ = 0;
  int n_total_ = 0;
};

enum class ModelKind { FixedOnly, MixedDiagonal };

struct SolverControls {
  int max_inner = 200;   // Newton iterations for posterior modes
  int max_outer = 500;   // quasi-Newton iterations over (beta, log sigma)
  int max_halvings = 30;
  double inner_grad_tol = 1e-10;
  double outer_obj_tol = 1e-8;
  double outer_grad_tol = 1e-8;

  void validate() const;
};

/// Which model to fit. The random-effect covariance is restricted to
/// diag(sigma_1^2, ..., sigma_q^2), parameterized by log sigma so the outer
/// optimization stays unconstrained down to the variance floor.
struct ModelSpec {
  ModelKind kind = ModelKind::MixedDiagonal;
  int q = 1;                     // random-effect dimension, 0 for FixedOnly
  double variance_floor = 1e-8;  // smallest admissible random-effect variance
  SolverControls solver;

  void validate() const;

  static ModelSpec fixed_only();
  static ModelSpec mixed_diagonal(int q = 1);
};

/// Population parameters: fixed effects and log random-effect standard
/// deviations. dim() = p + q.
struct Parameters {
  Vec beta;
  Vec log_sigma;

  int dim() const { return static_cast<int>(beta.size() + log_sigma.size()); }
  void validate() const;  // finite entries only
};

}  // namespace poismix

#endif  // POISMIX_TYPES_HPP
