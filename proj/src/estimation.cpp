#include "poismix/estimation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace poismix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;
// Linear predictors beyond this are treated as divergence inside solvers.
constexpr double kEtaDivergence = 300.0;

// Objective-comparison slack: near an optimum the true improvement of a
// Newton step can fall below double resolution; steps within this slack are
// still accepted so the gradient can be polished to its tolerance.
double ulp_slack(double value) {
  return 4.0 * std::numeric_limits<double>::epsilon() *
         (1.0 + std::abs(value));
}

// Score equations are sums of N products; their floating-point noise floor
// grows with the data scale, so the gradient tolerance is the configured
// value or a small multiple of that floor, whichever is larger.
double scaled_grad_tol(double tol, const Mat& design, const Vec& y) {
  double scale = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    scale += design.row(j).cwiseAbs().maxCoeff() * (y(j) + 1.0);
  }
  return std::max(tol, 4.0 * std::numeric_limits<double>::epsilon() * scale);
}

// sum_j (-exp(eta_j) + y_j eta_j), the eta-parameterized Poisson kernel.
// Returns -inf (and leaves mu unspecified) if any eta overflows exp.
double poisson_kernel(const Vec& y, const Vec& eta, Vec& mu) {
  if ((eta.array() > kMaxLinearPredictor).any()) return kNegInf;
  mu = eta.array().exp();
  return y.dot(eta) - mu.sum();
}

double lgamma_sum(const Vec& y) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) s += std::lgamma(y(j) + 1.0);
  return s;
}

// Relative condition guard on an LDLT factorization; throws with the
// pivot-ratio estimate when the system is numerically singular.
void check_ldlt(const Eigen::LDLT<Mat>& ldlt, const char* where) {
  const Vec d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  const double dmin = d.minCoeff();
  if (!(dmin > 0.0) || dmin < 1e-14 * dmax) {
    std::ostringstream msg;
    msg << where << ": singular Hessian (pivot ratio "
        << (dmax > 0 ? dmin / dmax : 0.0) << ")";
    throw std::runtime_error(msg.str());
  }
}

// Per-cluster state for mode profiling; buffers are reused across
// evaluations so the hot path does not allocate.
struct ClusterWork {
  Vec eta_x;  // X beta
  Vec eta;    // eta_x + Z b
  Vec mu;
  Vec b;      // current mode
  Mat H;      // q x q negative Hessian in b at the mode
  Mat C;      // H^{-1}
  double kernel = 0.0;  // Poisson kernel at the mode
  double lgs = 0.0;     // sum lgamma(y + 1) for this cluster
  double grad_tol = 0.0;
  bool mode_converged = true;
  int newton_iters = 0;
};

// Shared machinery for everything that needs profiled random-effect modes:
// the Laplace marginal, its gradient, mixed-model fitting and AGHQ.
class LaplaceEnv {
 public:
  LaplaceEnv(const ClusteredCounts& data, const SolverControls& controls)
      : data_(data), controls_(controls) {
    const int m = data.num_clusters();
    const int q = data.q();
    work_.resize(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
      const Cluster& cl = data.cluster(i);
      ClusterWork& w = work_[static_cast<size_t>(i)];
      const auto n_i = cl.y.size();
      w.eta_x.resize(n_i);
      w.eta.resize(n_i);
      w.mu.resize(n_i);
      w.b = Vec::Zero(q);
      w.H.resize(q, q);
      w.C.resize(q, q);
      w.lgs = lgamma_sum(cl.y);
      w.grad_tol = scaled_grad_tol(controls.inner_grad_tol, cl.Z, cl.y);
    }
    grad_tmp_.resize(q);
    step_tmp_.resize(q);
    b_trial_.resize(q);
    t_tmp_.resize(q);
  }

  void seed_modes(const std::vector<Vec>& b) {
    for (size_t i = 0; i < work_.size(); ++i) work_[i].b = b[i];
  }

  /// Laplace marginal log-likelihood at (beta, lambda), profiling each
  /// cluster mode by damped Newton from the previous mode. Optional
  /// analytic gradient output. Returns -inf if the fixed part of the
  /// linear predictor already overflows.
  double eval(const Vec& beta, const Vec& lambda, Vec* grad_beta,
              Vec* grad_lambda) {
    const int m = data_.num_clusters();
    const int q = data_.q();
    const Eigen::ArrayXd ginv = (-2.0 * lambda.array()).exp();
    const double lambda_sum = lambda.sum();
    double total = 0.0;
    if (grad_beta) grad_beta->setZero(data_.p());
    if (grad_lambda) grad_lambda->setZero(q);
    all_modes_converged_ = true;

    for (int i = 0; i < m; ++i) {
      const Cluster& cl = data_.cluster(i);
      ClusterWork& w = work_[static_cast<size_t>(i)];
      w.eta_x.noalias() = cl.X * beta;
      if ((w.eta_x.array() > kEtaDivergence).any()) return kNegInf;
      if (!newton_mode(cl, ginv, w)) all_modes_converged_ = false;

      // psi at the mode, with all density constants.
      const double quad = 0.5 * (ginv * w.b.array().square()).sum();
      const double psi = w.kernel - w.lgs - quad - lambda_sum - 0.5 * q * kLog2Pi;

      double logdet;
      if (q == 1) {
        w.C(0, 0) = 1.0 / w.H(0, 0);
        logdet = std::log(w.H(0, 0));
      } else {
        Eigen::LDLT<Mat> ldlt(w.H);
        check_ldlt(ldlt, "laplace_marginal_loglik");
        w.C = ldlt.solve(Mat::Identity(q, q));
        logdet = ldlt.vectorD().array().log().sum();
      }
      total += psi + 0.5 * q * kLog2Pi - 0.5 * logdet;

      if (grad_beta || grad_lambda) {
        // a_j = z_j' C z_j;  t_l = sum_j mu_j Z_jl a_j.
        const Vec a = ((cl.Z * w.C).cwiseProduct(cl.Z)).rowwise().sum();
        t_tmp_.noalias() = cl.Z.transpose() * w.mu.cwiseProduct(a);
        if (grad_beta && data_.p() > 0) {
          // d/dbeta of psi(mode) and of -1/2 log det H through both the
          // explicit beta dependence and the mode shift.
          const Vec v = cl.Z * (w.C * t_tmp_);
          grad_beta->noalias() +=
              cl.X.transpose() *
              (cl.y - w.mu - 0.5 * w.mu.cwiseProduct(a) + 0.5 * w.mu.cwiseProduct(v));
        }
        if (grad_lambda) {
          for (int k = 0; k < q; ++k) {
            const double gk = ginv(k);
            (*grad_lambda)(k) += gk * w.b(k) * w.b(k) - 1.0 + gk * w.C(k, k) -
                                 gk * w.b(k) * t_tmp_.dot(w.C.col(k));
          }
        }
      }
    }
    return total;
  }

  bool all_modes_converged() const { return all_modes_converged_; }
  int inner_iterations() const { return inner_total_; }
  const std::vector<ClusterWork>& work() const { return work_; }

  std::vector<Vec> modes() const {
    std::vector<Vec> b;
    b.reserve(work_.size());
    for (const auto& w : work_) b.push_back(w.b);
    return b;
  }

 private:
  // Damped Newton for one cluster mode at fixed eta_x and ginv. Maximizes
  // kernel(eta) - 1/2 sum_k ginv_k b_k^2; constants are added by eval().
  bool newton_mode(const Cluster& cl, const Eigen::ArrayXd& ginv, ClusterWork& w) {
    const int q = data_.q();
    w.eta.noalias() = w.eta_x + cl.Z * w.b;
    double kernel = poisson_kernel(cl.y, w.eta, w.mu);
    if (kernel == kNegInf) {
      w.b.setZero();
      w.eta = w.eta_x;
      kernel = poisson_kernel(cl.y, w.eta, w.mu);
      if (kernel == kNegInf) return false;  // fixed part alone overflows
    }
    double obj = kernel - 0.5 * (ginv * w.b.array().square()).sum();
    bool converged = false;
    int iter = 0;
    for (; iter < controls_.max_inner; ++iter) {
      grad_tmp_.noalias() = cl.Z.transpose() * (cl.y - w.mu);
      grad_tmp_.array() -= ginv * w.b.array();
      if (grad_tmp_.cwiseAbs().maxCoeff() <= w.grad_tol) {
        converged = true;
        break;
      }
      w.H.noalias() = cl.Z.transpose() * w.mu.asDiagonal() * cl.Z;
      w.H.diagonal().array() += ginv;
      if (q == 1) {
        step_tmp_(0) = grad_tmp_(0) / w.H(0, 0);
      } else {
        Eigen::LDLT<Mat> ldlt(w.H);
        check_ldlt(ldlt, "joint_mode");
        step_tmp_.noalias() = ldlt.solve(grad_tmp_);
      }
      double alpha = 1.0;
      bool accepted = false;
      for (int h = 0; h <= controls_.max_halvings; ++h) {
        b_trial_ = w.b + alpha * step_tmp_;
        w.eta.noalias() = w.eta_x + cl.Z * b_trial_;
        const double k_trial = poisson_kernel(cl.y, w.eta, w.mu);
        const double obj_trial =
            k_trial - 0.5 * (ginv * b_trial_.array().square()).sum();
        if (obj_trial > obj - ulp_slack(obj)) {
          w.b = b_trial_;
          kernel = k_trial;
          obj = obj_trial;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        // restore buffers to the current iterate before leaving
        w.eta.noalias() = w.eta_x + cl.Z * w.b;
        kernel = poisson_kernel(cl.y, w.eta, w.mu);
        break;
      }
    }
    inner_total_ += iter;
    w.newton_iters = iter;
    w.kernel = kernel;
    // negative Hessian at the final iterate
    w.H.noalias() = cl.Z.transpose() * w.mu.asDiagonal() * cl.Z;
    w.H.diagonal().array() += ginv;
    w.mode_converged = converged;
    return converged;
  }

  const ClusteredCounts& data_;
  SolverControls controls_;
  std::vector<ClusterWork> work_;
  Vec grad_tmp_, step_tmp_, b_trial_, t_tmp_;
  bool all_modes_converged_ = true;
  int inner_total_ = 0;
};

struct BfgsResult {
  Vec x;
  double value = kNegInf;  // maximized objective
  double grad_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Projected BFGS ascent with backtracking line search. `floor` applies to
// coordinates floor_begin..end (the log-sigma block); others are free.
template <class FnValGrad>
BfgsResult bfgs_maximize(FnValGrad&& eval, Vec x, int floor_begin,
                         double floor_value, const SolverControls& c) {
  const int d = static_cast<int>(x.size());
  auto clamp = [&](Vec& v) {
    for (int k = floor_begin; k < d; ++k) v(k) = std::max(v(k), floor_value);
  };
  clamp(x);

  Vec g(d), g_new(d), pg(d), dir(d), x_new(d), s(d), yv(d);
  auto projected = [&](const Vec& point, const Vec& grad_min, Vec& out) {
    out = grad_min;
    for (int k = floor_begin; k < d; ++k) {
      if (point(k) <= floor_value + 1e-12 && grad_min(k) > 0.0) out(k) = 0.0;
    }
  };

  // minimize f = -objective
  double f = -eval(x, &g);
  g = -g;
  Mat hinv = Mat::Identity(d, d);
  bool scaled = false;

  BfgsResult res;
  res.x = x;
  res.value = -f;
  int iter = 0;
  for (; iter < c.max_outer; ++iter) {
    projected(x, g, pg);
    res.grad_norm = pg.cwiseAbs().maxCoeff();
    if (res.grad_norm <= c.outer_grad_tol) {
      res.converged = true;
      break;
    }
    dir.noalias() = -(hinv * pg);
    if (dir.dot(pg) >= 0.0) {  // not a descent direction; reset metric
      hinv.setIdentity();
      dir = -pg;
    }
    double alpha = std::min(1.0, 1.0 / std::max(1.0, dir.cwiseAbs().maxCoeff()));
    bool accepted = false;
    double f_new = f;
    Vec pg_new(d);
    for (int h = 0; h <= c.max_halvings; ++h) {
      x_new = x + alpha * dir;
      clamp(x_new);
      s = x_new - x;
      if (s.cwiseAbs().maxCoeff() == 0.0) break;
      f_new = -eval(x_new, &g_new);
      g_new = -g_new;
      if (std::isfinite(f_new)) {
        const double slack = ulp_slack(f);
        const bool armijo = f_new <= f + 1e-4 * g.dot(s) + slack;
        // once improvements drop below double resolution, accept any step
        // that still contracts the gradient
        projected(x_new, g_new, pg_new);
        const bool grad_contract =
            f_new <= f + slack &&
            pg_new.cwiseAbs().maxCoeff() <= 0.5 * res.grad_norm;
        if (armijo || grad_contract) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!hinv.isIdentity(0.0)) {  // one retry along steepest descent
        hinv.setIdentity();
        continue;
      }
      break;  // stalled
    }
    yv = g_new - g;
    const double sy = s.dot(yv);
    const double df = f - f_new;
    x = x_new;
    f = f_new;
    g = g_new;
    res.x = x;
    res.value = -f;
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!scaled) {
        hinv *= sy / yv.dot(yv);
        scaled = true;
      }
      const double rho = 1.0 / sy;
      // H <- (I - rho s y') H (I - rho y s') + rho s s'
      const Vec hy = hinv * yv;
      const double yhy = yv.dot(hy);
      hinv += (rho * rho * yhy + rho) * (s * s.transpose());
      hinv -= rho * (hy * s.transpose() + s * hy.transpose());
    }
    projected(x, g, pg);
    res.grad_norm = pg.cwiseAbs().maxCoeff();
    if (res.grad_norm <= c.outer_grad_tol ||
        (std::abs(df) <= c.outer_obj_tol && res.grad_norm <= 1e-6)) {
      ++iter;
      res.converged = true;
      break;
    }
  }
  res.iterations = iter;
  return res;
}

std::string column_list(const std::vector<int>& cols) {
  std::string s;
  for (size_t i = 0; i < cols.size(); ++i) {
    if (i) s += ", ";
    s += "x" + std::to_string(cols[i] + 1);
  }
  return s;
}

}  // namespace

double joint_objective(const ClusteredCounts& data, const Vec& log_sigma,
                       const Vec& beta, const std::vector<Vec>& b) {
  const int q = data.q();
  if (log_sigma.size() != q || beta.size() != data.p() ||
      static_cast<int>(b.size()) != data.num_clusters()) {
    throw std::invalid_argument("joint_objective: argument dimensions do not "
                                "match the data");
  }
  const Eigen::ArrayXd ginv = (-2.0 * log_sigma.array()).exp();
  double total = 0.0;
  Vec mu;
  for (int i = 0; i < data.num_clusters(); ++i) {
    const Cluster& cl = data.cluster(i);
    const Vec eta = cl.X * beta + cl.Z * b[static_cast<size_t>(i)];
    const double kernel = poisson_kernel(cl.y, eta, mu);
    if (kernel == kNegInf) return kNegInf;
    const Vec& bi = b[static_cast<size_t>(i)];
    total += kernel - lgamma_sum(cl.y) -
             0.5 * (ginv * bi.array().square()).sum() - log_sigma.sum() -
             0.5 * q * kLog2Pi;
  }
  return total;
}

double joint_objective_grad(const ClusteredCounts& data, const Vec& log_sigma,
                            const Vec& beta, const std::vector<Vec>& b,
                            Vec& grad_beta, std::vector<Vec>& grad_b) {
  const Eigen::ArrayXd ginv = (-2.0 * log_sigma.array()).exp();
  grad_beta.setZero(data.p());
  grad_b.assign(static_cast<size_t>(data.num_clusters()), Vec());
  Vec mu;
  double total = 0.0;
  for (int i = 0; i < data.num_clusters(); ++i) {
    const Cluster& cl = data.cluster(i);
    const Vec& bi = b[static_cast<size_t>(i)];
    const Vec eta = cl.X * beta + cl.Z * bi;
    const double kernel = poisson_kernel(cl.y, eta, mu);
    if (kernel == kNegInf) {
      throw std::overflow_error(
          "joint_objective_grad: linear predictor overflows in cluster " +
          std::to_string(i));
    }
    total += kernel - lgamma_sum(cl.y) -
             0.5 * (ginv * bi.array().square()).sum() - log_sigma.sum() -
             0.5 * data.q() * kLog2Pi;
    grad_beta.noalias() += cl.X.transpose() * (cl.y - mu);
    grad_b[static_cast<size_t>(i)] = cl.Z.transpose() * (cl.y - mu);
    grad_b[static_cast<size_t>(i)].array() -= ginv * bi.array();
  }
  return total;
}

FitResult fit_fixed_glm(const ClusteredCounts& data,
                        const SolverControls& controls,
                        const Parameters* warm_start) {
  controls.validate();
  const int p = data.p();
  const int n = data.total_obs();
  if (p < 1) {
    throw std::invalid_argument("fit_fixed_glm: design has no fixed-effect columns");
  }
  Mat X(n, p);
  Vec y(n);
  for (int i = 0; i < data.num_clusters(); ++i) {
    const Cluster& cl = data.cluster(i);
    X.middleRows(data.cluster_offset(i), cl.y.size()) = cl.X;
    y.segment(data.cluster_offset(i), cl.y.size()) = cl.y;
  }

  Eigen::ColPivHouseholderQR<Mat> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::vector<int> dropped;
    const auto perm = qr.colsPermutation().indices();
    for (int k = qr.rank(); k < p; ++k) dropped.push_back(perm(k));
    std::sort(dropped.begin(), dropped.end());
    throw std::invalid_argument("fit_fixed_glm: design is rank deficient; "
                                "collinear columns: " + column_list(dropped));
  }

  Vec beta = Vec::Zero(p);
  if (warm_start != nullptr) {
    if (warm_start->beta.size() != p) {
      throw std::invalid_argument("fit_fixed_glm: warm start has wrong length");
    }
    beta = warm_start->beta;
  }

  Vec eta = X * beta;
  Vec mu;
  double ll = poisson_kernel(y, eta, mu);
  if (ll == kNegInf) {  // warm start overflows; restart at zero
    beta.setZero();
    eta.setZero(n);
    ll = poisson_kernel(y, eta, mu);
  }

  const double grad_tol = scaled_grad_tol(controls.inner_grad_tol, X, y);
  Vec grad(p), step(p), beta_trial(p);
  Mat H(p, p);
  bool grad_ok = false;
  int iter = 0;
  for (; iter < controls.max_inner; ++iter) {
    grad.noalias() = X.transpose() * (y - mu);
    if (grad.cwiseAbs().maxCoeff() <= grad_tol) {
      grad_ok = true;
      break;
    }
    H.noalias() = X.transpose() * mu.asDiagonal() * X;
    Eigen::LDLT<Mat> ldlt(H);
    check_ldlt(ldlt, "fit_fixed_glm");
    step.noalias() = ldlt.solve(grad);
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h <= controls.max_halvings; ++h) {
      beta_trial = beta + alpha * step;
      eta.noalias() = X * beta_trial;
      const double ll_trial = poisson_kernel(y, eta, mu);
      if (ll_trial > ll - ulp_slack(ll)) {
        beta = beta_trial;
        ll = ll_trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      eta.noalias() = X * beta;
      ll = poisson_kernel(y, eta, mu);
      break;
    }
    if (eta.cwiseAbs().maxCoeff() > kEtaDivergence) break;  // diverging
  }
  grad.noalias() = X.transpose() * (y - mu);

  // A vanishing information matrix means the "optimum" is a flat ray, not a
  // maximum (e.g. all-zero counts); report that as non-convergence.
  H.noalias() = X.transpose() * mu.asDiagonal() * X;
  const Vec hd = Eigen::LDLT<Mat>(H).vectorD();
  const bool curvature_ok =
      hd.minCoeff() > 1e-10 * std::max(1.0, hd.cwiseAbs().maxCoeff());

  FitResult fit;
  fit.kind = ModelKind::FixedOnly;
  fit.beta_hat = beta;
  fit.y_hat = mu;
  fit.cond_loglik = conditional_log_lik(y, fit.y_hat);
  fit.converged = grad_ok && curvature_ok &&
                  grad.cwiseAbs().maxCoeff() <= grad_tol;
  fit.outer_iterations = iter;
  fit.grad_norm = grad.cwiseAbs().maxCoeff();
  return fit;
}

JointModeResult joint_mode(const ClusteredCounts& data, const Vec& log_sigma,
                           const SolverControls& controls, const Vec* beta0,
                           const std::vector<Vec>* b0) {
  controls.validate();
  if (log_sigma.size() != data.q()) {
    throw std::invalid_argument("joint_mode: log_sigma has length " +
                                std::to_string(log_sigma.size()) +
                                ", expected q = " + std::to_string(data.q()));
  }
  const int m = data.num_clusters();
  const int p = data.p();
  const int q = data.q();
  const Eigen::ArrayXd ginv = (-2.0 * log_sigma.array()).exp();

  Vec beta = beta0 ? *beta0 : Vec::Zero(p);
  std::vector<Vec> b =
      b0 ? *b0 : std::vector<Vec>(static_cast<size_t>(m), Vec::Zero(q));

  double obj = joint_objective(data, log_sigma, beta, b);
  if (obj == kNegInf) {
    beta.setZero();
    for (auto& bi : b) bi.setZero();
    obj = joint_objective(data, log_sigma, beta, b);
  }

  double grad_tol = controls.inner_grad_tol;
  for (int i = 0; i < m; ++i) {
    const Cluster& cl = data.cluster(i);
    grad_tol = std::max(grad_tol,
                        scaled_grad_tol(controls.inner_grad_tol, cl.Z, cl.y));
    if (p > 0) {
      grad_tol = std::max(grad_tol,
                          scaled_grad_tol(controls.inner_grad_tol, cl.X, cl.y));
    }
  }
  std::vector<Mat> S(static_cast<size_t>(m));
  std::vector<Vec> gb(static_cast<size_t>(m)), db(static_cast<size_t>(m));
  Vec grad_beta(p), dbeta(p);
  Vec mu;
  double grad_norm = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iter = 0;
  for (; iter < controls.max_inner; ++iter) {
    // assemble gradient and the arrow Hessian blocks
    grad_beta.setZero();
    Mat A = Mat::Zero(p, p);
    Vec rhs = Vec::Zero(p);
    grad_norm = 0.0;
    for (int i = 0; i < m; ++i) {
      const Cluster& cl = data.cluster(i);
      const size_t si = static_cast<size_t>(i);
      const Vec eta = cl.X * beta + cl.Z * b[si];
      mu = eta.array().exp();
      gb[si] = cl.Z.transpose() * (cl.y - mu);
      gb[si].array() -= ginv * b[si].array();
      S[si].noalias() = cl.Z.transpose() * mu.asDiagonal() * cl.Z;
      S[si].diagonal().array() += ginv;
      grad_norm = std::max(grad_norm, gb[si].cwiseAbs().maxCoeff());
      if (p > 0) {
        const Vec r = cl.y - mu;
        grad_beta.noalias() += cl.X.transpose() * r;
        const Mat B = cl.X.transpose() * mu.asDiagonal() * cl.Z;  // p x q
        Eigen::LDLT<Mat> ldlt(S[si]);
        check_ldlt(ldlt, "joint_mode");
        A.noalias() += cl.X.transpose() * mu.asDiagonal() * cl.X -
                       B * ldlt.solve(B.transpose());
        rhs.noalias() += B * ldlt.solve(gb[si]);
      } else {
        Eigen::LDLT<Mat> ldlt(S[si]);
        check_ldlt(ldlt, "joint_mode");
        db[si] = ldlt.solve(gb[si]);
      }
    }
    if (p > 0) grad_norm = std::max(grad_norm, grad_beta.cwiseAbs().maxCoeff());
    if (grad_norm <= grad_tol) {
      converged = true;
      break;
    }

    if (p > 0) {
      Eigen::LDLT<Mat> ldltA(A);
      check_ldlt(ldltA, "joint_mode (Schur block)");
      dbeta.noalias() = ldltA.solve(grad_beta - rhs);
      for (int i = 0; i < m; ++i) {
        const Cluster& cl = data.cluster(i);
        const size_t si = static_cast<size_t>(i);
        const Mat B = cl.X.transpose() *
                      (cl.X * beta + cl.Z * b[si]).array().exp().matrix().asDiagonal() *
                      cl.Z;
        Eigen::LDLT<Mat> ldlt(S[si]);
        db[si] = ldlt.solve(gb[si] - B.transpose() * dbeta);
      }
    } else {
      dbeta.resize(0);
    }

    double alpha = 1.0;
    bool accepted = false;
    std::vector<Vec> b_trial = b;
    for (int h = 0; h <= controls.max_halvings; ++h) {
      const Vec beta_trial = beta + alpha * dbeta;
      for (int i = 0; i < m; ++i) {
        b_trial[static_cast<size_t>(i)] = b[static_cast<size_t>(i)] +
                                          alpha * db[static_cast<size_t>(i)];
      }
      const double obj_trial = joint_objective(data, log_sigma, beta_trial, b_trial);
      if (obj_trial > obj - ulp_slack(obj)) {
        beta = beta_trial;
        b = b_trial;
        obj = obj_trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
  }

  JointModeResult out;
  out.beta = beta;
  out.b = b;
  out.objective = obj;
  out.converged = converged;
  out.iterations = iter;
  out.grad_norm = grad_norm;
  out.neg_hessian.resize(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    const Cluster& cl = data.cluster(i);
    const Vec eta = cl.X * beta + cl.Z * b[static_cast<size_t>(i)];
    mu = eta.array().exp();
    out.neg_hessian[static_cast<size_t>(i)].noalias() =
        cl.Z.transpose() * mu.asDiagonal() * cl.Z;
    out.neg_hessian[static_cast<size_t>(i)].diagonal().array() += ginv;
  }
  return out;
}

JointModeResult profile_modes(const ClusteredCounts& data,
                              const Parameters& params,
                              const SolverControls& controls) {
  controls.validate();
  params.validate();
  if (params.beta.size() != data.p() || params.log_sigma.size() != data.q()) {
    throw std::invalid_argument("profile_modes: parameter dimensions do not "
                                "match the data");
  }
  LaplaceEnv env(data, controls);
  (void)env.eval(params.beta, params.log_sigma, nullptr, nullptr);
  JointModeResult out;
  out.beta = params.beta;
  out.b = env.modes();
  out.objective = joint_objective(data, params.log_sigma, params.beta, out.b);
  out.converged = env.all_modes_converged();
  out.iterations = env.inner_iterations();
  out.neg_hessian.reserve(env.work().size());
  for (const auto& w : env.work()) out.neg_hessian.push_back(w.H);
  Vec gb_unused;
  std::vector<Vec> grad_b;
  (void)joint_objective_grad(data, params.log_sigma, params.beta, out.b,
                             gb_unused, grad_b);
  out.grad_norm = 0.0;
  for (const Vec& g : grad_b) {
    out.grad_norm = std::max(out.grad_norm, g.cwiseAbs().maxCoeff());
  }
  return out;
}

double laplace_marginal_loglik(const ClusteredCounts& data,
                               const Parameters& params,
                               const SolverControls& controls) {
  controls.validate();
  params.validate();
  if (params.beta.size() != data.p() || params.log_sigma.size() != data.q()) {
    throw std::invalid_argument("laplace_marginal_loglik: parameter dimensions "
                                "do not match the data");
  }
  LaplaceEnv env(data, controls);
  return env.eval(params.beta, params.log_sigma, nullptr, nullptr);
}

double laplace_marginal_with_gradient(const ClusteredCounts& data,
                                      const Parameters& params,
                                      const SolverControls& controls,
                                      Vec& grad_beta, Vec& grad_log_sigma) {
  controls.validate();
  params.validate();
  LaplaceEnv env(data, controls);
  return env.eval(params.beta, params.log_sigma, &grad_beta, &grad_log_sigma);
}

FitResult fit_glmm(const ClusteredCounts& data, const ModelSpec& spec,
                   const FitResult* warm_start) {
  spec.validate();
  if (spec.kind != ModelKind::MixedDiagonal) {
    throw std::invalid_argument("fit_glmm: spec must be MixedDiagonal");
  }
  if (spec.q != data.q()) {
    throw std::invalid_argument("fit_glmm: spec.q = " + std::to_string(spec.q) +
                                " but data has q = " + std::to_string(data.q()));
  }
  const int p = data.p();
  const int q = data.q();
  const double lambda_floor = 0.5 * std::log(spec.variance_floor);

  LaplaceEnv env(data, spec.solver);
  Vec x(p + q);
  if (warm_start != nullptr && warm_start->kind == ModelKind::MixedDiagonal &&
      warm_start->beta_hat.size() == p && warm_start->log_sigma_hat.size() == q) {
    x.head(p) = warm_start->beta_hat;
    x.tail(q) = warm_start->log_sigma_hat;
    if (static_cast<int>(warm_start->b_hat.size()) == data.num_clusters()) {
      env.seed_modes(warm_start->b_hat);
    }
  } else {
    if (p > 0) {
      const FitResult glm = fit_fixed_glm(data, spec.solver);
      x.head(p) = glm.beta_hat;
    }
    x.tail(q).setConstant(std::log(0.5));
  }

  Vec gb, gl;
  auto eval = [&](const Vec& point, Vec* grad) -> double {
    const double value = env.eval(point.head(p), point.tail(q),
                                  grad ? &gb : nullptr, grad ? &gl : nullptr);
    if (grad) {
      grad->resize(p + q);
      grad->head(p) = gb;
      grad->tail(q) = gl;
    }
    return value;
  };

  BfgsResult opt = bfgs_maximize(eval, x, p, lambda_floor, spec.solver);

  // The marginal is nearly flat in log sigma on the way down to the floor,
  // so the optimizer can legitimately stop a little above it. If pinning a
  // component at the floor costs no more than the objective tolerance, pin
  // it; boundary estimates are then reported as exactly at the floor.
  for (int k = 0; k < q; ++k) {
    if (opt.x(p + k) <= lambda_floor + 1e-12) continue;
    Vec x_try = opt.x;
    x_try(p + k) = lambda_floor;
    const double v_try = eval(x_try, nullptr);
    if (v_try >= opt.value - spec.solver.outer_obj_tol) {
      opt.x = x_try;
      opt.value = v_try;
    }
  }

  // Final profile at the optimum so modes/buffers match the reported point.
  const double marg = env.eval(opt.x.head(p), opt.x.tail(q), nullptr, nullptr);

  FitResult fit;
  fit.kind = ModelKind::MixedDiagonal;
  fit.beta_hat = opt.x.head(p);
  fit.log_sigma_hat = opt.x.tail(q);
  fit.b_hat = env.modes();
  fit.y_hat = fitted_means(data, fit.beta_hat, fit.b_hat);
  fit.cond_loglik = conditional_log_lik(data.stacked_y(), fit.y_hat);
  fit.marg_loglik = marg;
  fit.converged = opt.converged && env.all_modes_converged();
  fit.outer_iterations = opt.iterations;
  fit.inner_iterations = env.inner_iterations();
  fit.grad_norm = opt.grad_norm;
  fit.sigma_at_floor = (fit.log_sigma_hat.array() <= lambda_floor + 1e-12).any();
  return fit;
}

double aghq_marginal_loglik(const ClusteredCounts& data,
                            const Parameters& params, int nodes,
                            const SolverControls& controls) {
  controls.validate();
  params.validate();
  if (data.q() != 1) {
    throw std::invalid_argument("aghq_marginal_loglik: only q = 1 is supported "
                                "(got q = " + std::to_string(data.q()) + ")");
  }
  if (nodes < 1) throw std::invalid_argument("aghq_marginal_loglik: nodes >= 1");
  if (params.beta.size() != data.p() || params.log_sigma.size() != 1) {
    throw std::invalid_argument("aghq_marginal_loglik: parameter dimensions "
                                "do not match the data");
  }
  const GaussHermiteRule rule = gauss_hermite(nodes);
  const double lambda = params.log_sigma(0);
  const double ginv = std::exp(-2.0 * lambda);

  LaplaceEnv env(data, controls);
  (void)env.eval(params.beta, params.log_sigma, nullptr, nullptr);

  double total = 0.0;
  Vec mu;
  for (int i = 0; i < data.num_clusters(); ++i) {
    const Cluster& cl = data.cluster(i);
    const ClusterWork& w = env.work()[static_cast<size_t>(i)];
    const double bhat = w.b(0);
    const double scale = std::sqrt(2.0 / w.H(0, 0));
    double lse = kNegInf;
    Vec terms(nodes);
    for (int k = 0; k < nodes; ++k) {
      const double bk = bhat + scale * rule.nodes(k);
      const Vec eta = w.eta_x + cl.Z.col(0) * bk;
      const double kernel = poisson_kernel(cl.y, eta, mu);
      const double psi = kernel - w.lgs - 0.5 * ginv * bk * bk - lambda -
                         0.5 * kLog2Pi;
      terms(k) = rule.log_weights(k) + rule.nodes(k) * rule.nodes(k) + psi;
      lse = std::max(lse, terms(k));
    }
    double acc = 0.0;
    for (int k = 0; k < nodes; ++k) {
      if (std::isfinite(terms(k))) acc += std::exp(terms(k) - lse);
    }
    total += std::log(scale) + lse + std::log(acc);
  }
  return total;
}

GaussHermiteRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n >= 1 required");
  GaussHermiteRule rule;
  if (n == 1) {
    rule.nodes = Vec::Zero(1);
    rule.log_weights = Vec::Constant(1, 0.5 * std::log(M_PI));
    return rule;
  }
  Mat J = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double off = std::sqrt(0.5 * k);
    J(k, k - 1) = off;
    J(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  rule.nodes = es.eigenvalues();
  rule.log_weights.resize(n);
  for (int k = 0; k < n; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    rule.log_weights(k) = 0.5 * std::log(M_PI) + 2.0 * std::log(std::abs(v0));
  }
  return rule;
}

}  // namespace poismix
