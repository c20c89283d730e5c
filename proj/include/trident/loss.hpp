#pragma once

// Two-branch self-supervised losses (VICReg and InfoNCE), their pairwise-sum
// generalisation to N primary + M privileged branches, and analytic gradients
// with respect to every branch's embedding batch.
//
// Conventions: an embedding batch is an n x D matrix, rows indexed by batch
// element, columns by embedding dimension. Every reduction below accumulates
// in double precision regardless of the input scalar type.

#include "trident/types.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace trident {

enum class LossFamily { kVicreg, kInfonce };

/// Pair enumeration used by the multi-branch sum. Unordered sums each branch
/// pair once (three terms for two primary branches plus one privileged);
/// ordered counts each pair twice, which rescales the loss and its gradients
/// by a global factor of two without moving the minimisers.
enum class PairReduction { kUnordered, kOrdered };

struct LossConfig {
  LossFamily family = LossFamily::kVicreg;
  double lambda = 25.0;   // invariance weight
  double mu = 25.0;       // variance weight
  double nu = 1.0;        // covariance weight
  double gamma = 1.0;     // target per-dimension standard deviation
  double epsilon = 1e-4;  // stability constant inside the sqrt
  double tau = 0.5;       // softmax temperature
  PairReduction pairs = PairReduction::kUnordered;

  void validate() const {
    require(lambda >= 0.0 && mu >= 0.0 && nu >= 0.0, "LossConfig: lambda, mu, nu must be >= 0");
    require(gamma > 0.0, "LossConfig: gamma must be > 0");
    require(epsilon > 0.0, "LossConfig: epsilon must be > 0");
    require(tau > 0.0, "LossConfig: tau must be > 0");
  }
};

namespace detail {

template <class Derived>
void check_batch(const Eigen::MatrixBase<Derived>& z, const char* who) {
  require(z.rows() >= 2, std::string(who) + ": batch size must be >= 2");
  require(z.cols() >= 1, std::string(who) + ": embedding dimension must be >= 1");
  require(z.allFinite(), std::string(who) + ": non-finite embedding entry");
}

template <class DA, class DB>
void check_pair(const Eigen::MatrixBase<DA>& za, const Eigen::MatrixBase<DB>& zb, const char* who) {
  check_batch(za, who);
  check_batch(zb, who);
  require(za.rows() == zb.rows() && za.cols() == zb.cols(),
          std::string(who) + ": branch batches must share shape");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// VICReg terms
// ---------------------------------------------------------------------------

/// Mean squared distance between paired rows: (1/n) sum_k ||za_k - zb_k||^2.
template <class DA, class DB>
double vicreg_invariance(const Eigen::MatrixBase<DA>& za, const Eigen::MatrixBase<DB>& zb) {
  detail::check_pair(za, zb, "vicreg_invariance");
  const MatD d = za.template cast<double>() - zb.template cast<double>();
  return d.squaredNorm() / static_cast<double>(d.rows());
}

/// Hinge on per-dimension standard deviation:
/// (1/D) sum_d max(0, gamma - sqrt(Var_d + epsilon)), Var unbiased (n-1).
template <class Derived>
double vicreg_variance(const Eigen::MatrixBase<Derived>& z, double gamma, double epsilon) {
  detail::check_batch(z, "vicreg_variance");
  require(gamma > 0.0, "vicreg_variance: gamma must be > 0");
  require(epsilon >= 0.0, "vicreg_variance: epsilon must be >= 0");
  const MatD zd = z.template cast<double>();
  const Eigen::Index n = zd.rows(), D = zd.cols();
  const MatD centered = zd.rowwise() - zd.colwise().mean();
  double acc = 0.0;
  for (Eigen::Index d = 0; d < D; ++d) {
    const double var = centered.col(d).squaredNorm() / static_cast<double>(n - 1);
    acc += std::max(0.0, gamma - std::sqrt(var + epsilon));
  }
  return acc / static_cast<double>(D);
}

/// Sum of squared off-diagonal entries of the unbiased covariance, over D:
/// C = (1/(n-1)) sum_k (z_k - mean)(z_k - mean)^T, result (1/D) sum_{d != e} C_de^2.
template <class Derived>
double vicreg_covariance(const Eigen::MatrixBase<Derived>& z) {
  detail::check_batch(z, "vicreg_covariance");
  const MatD zd = z.template cast<double>();
  const MatD centered = zd.rowwise() - zd.colwise().mean();
  const MatD cov = (centered.transpose() * centered) / static_cast<double>(zd.rows() - 1);
  return (cov.squaredNorm() - cov.diagonal().squaredNorm()) / static_cast<double>(zd.cols());
}

/// lambda * s(za, zb) + mu * (v(za) + v(zb)) + nu * (c(za) + c(zb)).
template <class DA, class DB>
double vicreg_pair_loss(const Eigen::MatrixBase<DA>& za, const Eigen::MatrixBase<DB>& zb,
                        const LossConfig& cfg) {
  require(cfg.family == LossFamily::kVicreg, "vicreg_pair_loss: config selects another family");
  cfg.validate();
  detail::check_pair(za, zb, "vicreg_pair_loss");
  return cfg.lambda * vicreg_invariance(za, zb) +
         cfg.mu * (vicreg_variance(za, cfg.gamma, cfg.epsilon) +
                   vicreg_variance(zb, cfg.gamma, cfg.epsilon)) +
         cfg.nu * (vicreg_covariance(za) + vicreg_covariance(zb));
}

// ---------------------------------------------------------------------------
// InfoNCE
// ---------------------------------------------------------------------------

namespace detail {

inline MatD normalize_rows(const MatD& z, const char* who) {
  MatD out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double norm = z.row(i).norm();
    require(norm > 0.0, std::string(who) + ": zero-norm embedding row");
    out.row(i) = z.row(i) / norm;
  }
  return out;
}

inline double logsumexp(const Eigen::Ref<const VecD>& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace detail

/// Symmetrised InfoNCE over cosine similarities at temperature tau. For each
/// anchor the denominator ranges over the other view only (including the
/// positive itself).
template <class DA, class DB>
double infonce_pair_loss(const Eigen::MatrixBase<DA>& za, const Eigen::MatrixBase<DB>& zb,
                         const LossConfig& cfg) {
  require(cfg.family == LossFamily::kInfonce, "infonce_pair_loss: config selects another family");
  cfg.validate();
  detail::check_pair(za, zb, "infonce_pair_loss");
  const MatD a = detail::normalize_rows(za.template cast<double>(), "infonce_pair_loss");
  const MatD b = detail::normalize_rows(zb.template cast<double>(), "infonce_pair_loss");
  const Eigen::Index n = a.rows();
  const MatD sim = (a * b.transpose()) / cfg.tau;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const VecD row = sim.row(i).transpose();
    const VecD col = sim.col(i);
    acc += -2.0 * sim(i, i) + detail::logsumexp(row) + detail::logsumexp(col);
  }
  return acc / (2.0 * static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Multi-branch generalisation
// ---------------------------------------------------------------------------

/// N primary + M privileged embedding batches with a common shape.
template <class Scalar>
struct BranchSet {
  std::vector<Mat<Scalar>> primary;
  std::vector<Mat<Scalar>> privileged;

  std::size_t branch_count() const { return primary.size() + privileged.size(); }

  const Mat<Scalar>& branch(std::size_t i) const {
    return i < primary.size() ? primary[i] : privileged[i - primary.size()];
  }

  void validate() const {
    require(!primary.empty(), "BranchSet: at least one primary branch required");
    require(branch_count() >= 2, "BranchSet: at least two branches required");
    const auto& first = primary.front();
    for (std::size_t i = 0; i < branch_count(); ++i) {
      detail::check_batch(branch(i), "BranchSet");
      require(branch(i).rows() == first.rows() && branch(i).cols() == first.cols(),
              "BranchSet: branch batches must share shape");
    }
  }
};

template <class DA, class DB>
double pair_loss(const Eigen::MatrixBase<DA>& za, const Eigen::MatrixBase<DB>& zb,
                 const LossConfig& cfg) {
  return cfg.family == LossFamily::kVicreg ? vicreg_pair_loss(za, zb, cfg)
                                           : infonce_pair_loss(za, zb, cfg);
}

/// One evaluated branch pair of the multi-branch sum; indices address the
/// concatenated [primary..., privileged...] branch list.
struct PairTerm {
  std::size_t a;
  std::size_t b;
  double value;
};

template <class Scalar>
std::vector<PairTerm> multibranch_terms(const BranchSet<Scalar>& branches, const LossConfig& cfg) {
  branches.validate();
  cfg.validate();
  const double scale = cfg.pairs == PairReduction::kOrdered ? 2.0 : 1.0;
  std::vector<PairTerm> terms;
  for (std::size_t i = 0; i < branches.branch_count(); ++i)
    for (std::size_t j = i + 1; j < branches.branch_count(); ++j)
      terms.push_back({i, j, scale * pair_loss(branches.branch(i), branches.branch(j), cfg)});
  return terms;
}

/// Sum of the selected pair loss over branch pairs. With (N=2, M=0) this is
/// the plain Siamese loss, (N=1, M=1) the privileged Siamese loss, and
/// (N=2, M=1) the three-term objective.
template <class Scalar>
double multibranch_loss(const BranchSet<Scalar>& branches, const LossConfig& cfg) {
  double acc = 0.0;
  for (const PairTerm& t : multibranch_terms(branches, cfg)) acc += t.value;
  return acc;
}

// ---------------------------------------------------------------------------
// Analytic gradients
// ---------------------------------------------------------------------------

namespace detail {

// Accumulates d(pair loss)/d(za|zb) into ga/gb, all in double.
inline void vicreg_pair_grad(const MatD& za, const MatD& zb, const LossConfig& cfg,
                             double scale, MatD& ga, MatD& gb) {
  const double n = static_cast<double>(za.rows());
  const double D = static_cast<double>(za.cols());

  // invariance
  const MatD diff = za - zb;
  ga += (scale * cfg.lambda * 2.0 / n) * diff;
  gb -= (scale * cfg.lambda * 2.0 / n) * diff;

  const auto add_regularizers = [&](const MatD& z, MatD& g) {
    const MatD centered = z.rowwise() - z.colwise().mean();
    // variance hinge: active only where sd < gamma (hinge boundary gets 0)
    for (Eigen::Index d = 0; d < z.cols(); ++d) {
      const double var = centered.col(d).squaredNorm() / (n - 1.0);
      const double sd = std::sqrt(var + cfg.epsilon);
      if (sd < cfg.gamma)
        g.col(d) -= (scale * cfg.mu / (D * sd * (n - 1.0))) * centered.col(d);
    }
    // covariance: (4 nu / (D (n-1))) * centered * offdiag(C)
    MatD cov = (centered.transpose() * centered) / (n - 1.0);
    cov.diagonal().setZero();
    g += (scale * cfg.nu * 4.0 / (D * (n - 1.0))) * (centered * cov);
  };
  add_regularizers(za, ga);
  add_regularizers(zb, gb);
}

inline void infonce_pair_grad(const MatD& za, const MatD& zb, const LossConfig& cfg,
                              double scale, MatD& ga, MatD& gb) {
  const Eigen::Index n = za.rows();
  const MatD a = normalize_rows(za, "loss_gradient");
  const MatD b = normalize_rows(zb, "loss_gradient");
  const MatD sim = (a * b.transpose()) / cfg.tau;

  MatD coeff(n, n);  // d(loss)/d(sim)
  for (Eigen::Index i = 0; i < n; ++i) {
    const VecD row = sim.row(i).transpose();
    const double lse_r = logsumexp(row);
    for (Eigen::Index j = 0; j < n; ++j) coeff(i, j) = std::exp(sim(i, j) - lse_r);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const VecD col = sim.col(j);
    const double lse_c = logsumexp(col);
    for (Eigen::Index i = 0; i < n; ++i) coeff(i, j) += std::exp(sim(i, j) - lse_c);
  }
  coeff.diagonal().array() -= 2.0;
  coeff *= scale / (2.0 * static_cast<double>(n) * cfg.tau);

  const MatD ga_unit = coeff * b;              // gradient wrt normalized rows of a
  const MatD gb_unit = coeff.transpose() * a;  // gradient wrt normalized rows of b
  for (Eigen::Index i = 0; i < n; ++i) {
    ga.row(i) += (ga_unit.row(i) - ga_unit.row(i).dot(a.row(i)) * a.row(i)) / za.row(i).norm();
    gb.row(i) += (gb_unit.row(i) - gb_unit.row(i).dot(b.row(i)) * b.row(i)) / zb.row(i).norm();
  }
}

}  // namespace detail

/// d(multibranch_loss)/d(branch embeddings), one matrix per branch with the
/// input's shape and scalar type. Gradient accumulation across shared-weight
/// branches is the trainer's job, not this function's.
template <class Scalar>
BranchSet<Scalar> loss_gradient(const BranchSet<Scalar>& branches, const LossConfig& cfg) {
  branches.validate();
  cfg.validate();
  const std::size_t count = branches.branch_count();
  const double scale = cfg.pairs == PairReduction::kOrdered ? 2.0 : 1.0;

  std::vector<MatD> z(count), g(count);
  for (std::size_t i = 0; i < count; ++i) {
    z[i] = branches.branch(i).template cast<double>();
    g[i] = MatD::Zero(z[i].rows(), z[i].cols());
  }
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = i + 1; j < count; ++j) {
      if (cfg.family == LossFamily::kVicreg)
        detail::vicreg_pair_grad(z[i], z[j], cfg, scale, g[i], g[j]);
      else
        detail::infonce_pair_grad(z[i], z[j], cfg, scale, g[i], g[j]);
    }

  BranchSet<Scalar> out;
  for (std::size_t i = 0; i < count; ++i) {
    Mat<Scalar> gi = g[i].cast<Scalar>();
    if (i < branches.primary.size())
      out.primary.push_back(std::move(gi));
    else
      out.privileged.push_back(std::move(gi));
  }
  return out;
}

}  // namespace trident
