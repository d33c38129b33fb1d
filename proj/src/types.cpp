#include "poismix/types.hpp"

#include <cmath>
#include <stdexcept>

namespace poismix {

namespace {

bool is_count(double v) {
  return std::isfinite(v) && v >= 0.0 && std::floor(v) == v;
}

}  // namespace

ClusteredCounts::ClusteredCounts(std::vector<Cluster> clusters)
    : clusters_(std::move(clusters)) {
  if (clusters_.empty()) {
    throw std::invalid_argument("ClusteredCounts: at least one cluster required");
  }
  p_ = static_cast<int>(clusters_[0].X.cols());
  q_ = static_cast<int>(clusters_[0].Z.cols());
  offsets_.reserve(clusters_.size());
  for (size_t c = 0; c < clusters_.size(); ++c) {
    const Cluster& cl = clusters_[c];
    const auto n_i = cl.y.size();
    const std::string where = "cluster " + std::to_string(c);
    if (n_i < 1) {
      throw std::invalid_argument("ClusteredCounts: " + where + " is empty");
    }
    if (cl.X.rows() != n_i || cl.Z.rows() != n_i) {
      throw std::invalid_argument("ClusteredCounts: " + where +
                                  " has design rows not matching y length " +
                                  std::to_string(n_i));
    }
    if (cl.X.cols() != p_) {
      throw std::invalid_argument(
          "ClusteredCounts: " + where + " has " + std::to_string(cl.X.cols()) +
          " fixed-design columns, expected " + std::to_string(p_));
    }
    if (cl.Z.cols() != q_) {
      throw std::invalid_argument(
          "ClusteredCounts: " + where + " has " + std::to_string(cl.Z.cols()) +
          " random-design columns, expected " + std::to_string(q_));
    }
    for (Eigen::Index j = 0; j < n_i; ++j) {
      if (!is_count(cl.y(j))) {
        throw std::invalid_argument("ClusteredCounts: " + where + " row " +
                                    std::to_string(j) + " has count " +
                                    std::to_string(cl.y(j)) +
                                    "; counts must be non-negative integers");
      }
    }
    offsets_.push_back(n_total_);
    n_total_ += static_cast<int>(n_i);
  }
}

std::pair<int, int> ClusteredCounts::locate(int global_index) const {
  if (global_index < 0 || global_index >= n_total_) {
    throw std::out_of_range("ClusteredCounts::locate: index " +
                            std::to_string(global_index) + " out of range");
  }
  int c = static_cast<int>(offsets_.size()) - 1;
  while (offsets_[static_cast<size_t>(c)] > global_index) --c;
  return {c, global_index - offsets_[static_cast<size_t>(c)]};
}

Vec ClusteredCounts::stacked_y() const {
  Vec y(n_total_);
  for (size_t c = 0; c < clusters_.size(); ++c) {
    y.segment(offsets_[c], clusters_[c].y.size()) = clusters_[c].y;
  }
  return y;
}

ClusteredCounts ClusteredCounts::with_decremented(int global_index) const {
  auto [c, j] = locate(global_index);
  std::vector<Cluster> copy = clusters_;
  double& v = copy[static_cast<size_t>(c)].y(j);
  if (v < 1.0) {
    throw std::invalid_argument(
        "with_decremented: count at global index " +
        std::to_string(global_index) + " is zero");
  }
  v -= 1.0;
  return ClusteredCounts(std::move(copy));
}

void SolverControls::validate() const {
  if (max_inner < 1 || max_outer < 1 || max_halvings < 0) {
    throw std::invalid_argument("SolverControls: iteration limits must be positive");
  }
  if (!(inner_grad_tol > 0.0) || !(outer_obj_tol > 0.0) || !(outer_grad_tol > 0.0)) {
    throw std::invalid_argument("SolverControls: tolerances must be positive");
  }
}

void ModelSpec::validate() const {
  solver.validate();
  if (!(variance_floor > 0.0)) {
    throw std::invalid_argument("ModelSpec: variance_floor must be positive");
  }
  if (kind == ModelKind::FixedOnly && q != 0) {
    throw std::invalid_argument("ModelSpec: FixedOnly requires q = 0");
  }
  if (kind == ModelKind::MixedDiagonal && q < 1) {
    throw std::invalid_argument("ModelSpec: MixedDiagonal requires q >= 1");
  }
}

ModelSpec ModelSpec::fixed_only() {
  ModelSpec spec;
  spec.kind = ModelKind::FixedOnly;
  spec.q = 0;
  return spec;
}

ModelSpec ModelSpec::mixed_diagonal(int q) {
  ModelSpec spec;
  spec.kind = ModelKind::MixedDiagonal;
  spec.q = q;
  return spec;
}

void Parameters::validate() const {
  if (!beta.allFinite() || !log_sigma.allFinite()) {
    throw std::invalid_argument("Parameters: entries must be finite");
  }
}

}  // namespace poismix
