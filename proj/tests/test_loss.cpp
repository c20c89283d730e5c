#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "trident/loss.hpp"

#include <cmath>

using namespace trident;

namespace {

MatD random_batch(RngStream& rng, int n, int d, double scale = 1.0) {
  MatD z(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) z(i, j) = scale * rng.normal();
  return z;
}

oracle::Grid to_grid(const MatD& m) {
  oracle::Grid g(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

MatD from_flat(const std::vector<double>& flat, int n, int d) {
  MatD m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = flat[i * d + j];
  return m;
}

LossConfig vicreg_cfg(double lambda = 25.0, double mu = 25.0, double nu = 1.0) {
  LossConfig cfg;
  cfg.family = LossFamily::kVicreg;
  cfg.lambda = lambda;
  cfg.mu = mu;
  cfg.nu = nu;
  return cfg;
}

LossConfig infonce_cfg(double tau = 0.5) {
  LossConfig cfg;
  cfg.family = LossFamily::kInfonce;
  cfg.tau = tau;
  return cfg;
}

}  // namespace

TEST_CASE("vicreg_invariance basics") {
  RngStream rng(7);
  const MatD z = random_batch(rng, 4, 3);
  CHECK(vicreg_invariance(z, z) == doctest::Approx(0.0));

  MatD za(2, 2), zb(2, 2);
  za << 1, 0, 0, 1;
  zb.setZero();
  // (1 + 1) / 2, hand evaluation frozen
  CHECK(vicreg_invariance(za, zb) == doctest::Approx(1.0));
  CHECK(vicreg_invariance(za, zb) == doctest::Approx(oracle::vicreg_invariance(to_grid(za), to_grid(zb))));

  MatD one_row(1, 2);
  one_row << 2, 0;
  CHECK_THROWS_AS(vicreg_invariance(one_row, MatD::Zero(1, 2)), contract_error);
  CHECK_THROWS_AS(vicreg_invariance(za, MatD::Zero(3, 2)), contract_error);
}

TEST_CASE("vicreg_variance hinge") {
  // per-dimension sample std of 2*gamma in every dim -> hinge inactive
  MatD wide(2, 3);
  wide.row(0).setConstant(0.0);
  wide.row(1).setConstant(2.0 * std::sqrt(2.0));  // std = 2 with the (n-1) estimator
  CHECK(vicreg_variance(wide, 1.0, 0.0) == doctest::Approx(0.0));

  // constant columns: Var = 0 -> 1 - sqrt(1e-4) = 0.99
  MatD flat = MatD::Constant(4, 5, 3.25);
  CHECK(vicreg_variance(flat, 1.0, 1e-4) == doctest::Approx(0.99).epsilon(1e-12));

  // unbiased variance of {0, 2} is 2, std > gamma -> 0
  MatD two(2, 1);
  two << 0, 2;
  CHECK(vicreg_variance(two, 1.0, 0.0) == doctest::Approx(0.0));

  CHECK_THROWS_AS(vicreg_variance(MatD::Zero(1, 3), 1.0, 1e-4), contract_error);
}

TEST_CASE("vicreg_covariance") {
  RngStream rng(11);
  CHECK(vicreg_covariance(random_batch(rng, 6, 1)) == doctest::Approx(0.0));

  MatD z(2, 2);
  z << 1, 1, -1, -1;
  // C = [[2,2],[2,2]], off-diagonal squared sum 8, / D=2 -> 4
  CHECK(vicreg_covariance(z) == doctest::Approx(4.0));
  CHECK(vicreg_covariance(z) == doctest::Approx(oracle::vicreg_covariance(to_grid(z))));

  // exactly uncorrelated columns
  MatD ortho(4, 2);
  ortho << 1, 1, 1, -1, -1, 1, -1, -1;
  CHECK(vicreg_covariance(ortho) == doctest::Approx(0.0));
}

TEST_CASE("vicreg_pair_loss matches the scalar oracle") {
  RngStream rng(3);
  const LossConfig unit = vicreg_cfg(1.0, 1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const MatD za = random_batch(rng, 4, 3);
    const MatD zb = random_batch(rng, 4, 3);
    const double expected = oracle::vicreg_pair(to_grid(za), to_grid(zb), 1, 1, 1, 1.0, 1e-4);
    CHECK(vicreg_pair_loss(za, zb, unit) == doctest::Approx(expected).epsilon(1e-9));
  }

  // identical, well-spread, decorrelated batch: all three terms vanish
  MatD spread(4, 2);
  spread << 2, 2, 2, -2, -2, 2, -2, -2;  // per-dim std > 1, diagonal covariance
  CHECK(vicreg_pair_loss(spread, spread, vicreg_cfg()) == doctest::Approx(0.0));
}

TEST_CASE("infonce_pair_loss closed forms") {
  const LossConfig cfg = infonce_cfg(0.5);

  // identical orthonormal views: every term is -log(e^2 / (e^2 + 1))
  MatD eye(2, 2);
  eye << 1, 0, 0, 1;
  const double frozen = 0.12692801104297253;  // log(1 + exp(-2))
  CHECK(infonce_pair_loss(eye, eye, cfg) == doctest::Approx(frozen).epsilon(1e-12));
  CHECK(infonce_pair_loss(eye, eye, cfg) ==
        doctest::Approx(oracle::infonce_pair(to_grid(eye), to_grid(eye), 0.5)).epsilon(1e-12));

  // all rows identical -> uniform softmax -> log n
  for (int n : {2, 4, 7}) {
    const MatD same = MatD::Ones(n, 3);
    CHECK(infonce_pair_loss(same, same, cfg) == doctest::Approx(std::log(double(n))).epsilon(1e-12));
  }

  // random batches against the oracle
  RngStream rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const MatD za = random_batch(rng, 4, 3);
    const MatD zb = random_batch(rng, 4, 3);
    const double expected = oracle::infonce_pair(to_grid(za), to_grid(zb), 0.5);
    CHECK(infonce_pair_loss(za, zb, cfg) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(infonce_pair_loss(za, zb, cfg) >= 0.0);
  }

  MatD with_zero(2, 2);
  with_zero << 0, 0, 1, 0;
  CHECK_THROWS_AS(infonce_pair_loss(with_zero, eye, cfg), contract_error);
}

TEST_CASE("infonce row-scale invariance") {
  RngStream rng(23);
  const MatD za = random_batch(rng, 5, 4);
  const MatD zb = random_batch(rng, 5, 4);
  MatD sa = za, sb = zb;
  for (int i = 0; i < 5; ++i) {
    sa.row(i) *= rng.uniform(0.1, 10.0);
    sb.row(i) *= rng.uniform(0.1, 10.0);
  }
  const LossConfig cfg = infonce_cfg();
  CHECK(infonce_pair_loss(sa, sb, cfg) ==
        doctest::Approx(infonce_pair_loss(za, zb, cfg)).epsilon(1e-12));
}

TEST_CASE("pair losses are symmetric") {
  RngStream rng(29);
  for (const auto& cfg : {vicreg_cfg(), infonce_cfg()}) {
    const MatD za = random_batch(rng, 6, 4);
    const MatD zb = random_batch(rng, 6, 4);
    CHECK(pair_loss(za, zb, cfg) == doctest::Approx(pair_loss(zb, za, cfg)).epsilon(1e-12));
  }
}

TEST_CASE("multibranch reductions") {
  RngStream rng(31);
  const LossConfig cfg = vicreg_cfg();

  BranchSet<double> two;
  two.primary = {random_batch(rng, 4, 3), random_batch(rng, 4, 3)};
  CHECK(multibranch_loss(two, cfg) == vicreg_pair_loss(two.primary[0], two.primary[1], cfg));

  BranchSet<double> cross;
  cross.primary = {two.primary[0]};
  cross.privileged = {two.primary[1]};
  CHECK(multibranch_loss(cross, cfg) == vicreg_pair_loss(two.primary[0], two.primary[1], cfg));

  BranchSet<double> three;
  three.primary = {random_batch(rng, 4, 3), random_batch(rng, 4, 3)};
  three.privileged = {random_batch(rng, 4, 3)};
  const double expected = vicreg_pair_loss(three.primary[0], three.primary[1], cfg) +
                          vicreg_pair_loss(three.primary[0], three.privileged[0], cfg) +
                          vicreg_pair_loss(three.primary[1], three.privileged[0], cfg);
  CHECK(multibranch_loss(three, cfg) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(multibranch_terms(three, cfg).size() == 3);

  // identical well-spread branches: every term zero
  MatD spread(4, 2);
  spread << 2, 2, 2, -2, -2, 2, -2, -2;
  BranchSet<double> same;
  same.primary = {spread, spread};
  same.privileged = {spread};
  CHECK(multibranch_loss(same, cfg) == doctest::Approx(0.0));

  // ordered-pair mode doubles the unordered sum
  LossConfig ordered = cfg;
  ordered.pairs = PairReduction::kOrdered;
  CHECK(multibranch_loss(three, ordered) == doctest::Approx(2.0 * multibranch_loss(three, cfg)));

  BranchSet<double> lone;
  lone.primary = {random_batch(rng, 4, 3)};
  CHECK_THROWS_AS(multibranch_loss(lone, cfg), contract_error);
}

TEST_CASE("multibranch permutation invariance") {
  RngStream rng(37);
  for (const auto& cfg : {vicreg_cfg(), infonce_cfg()}) {
    BranchSet<double> set;
    set.primary = {random_batch(rng, 4, 3), random_batch(rng, 4, 3), random_batch(rng, 4, 3)};
    set.privileged = {random_batch(rng, 4, 3), random_batch(rng, 4, 3)};
    BranchSet<double> swapped;
    swapped.primary = {set.primary[2], set.primary[0], set.primary[1]};
    swapped.privileged = {set.privileged[1], set.privileged[0]};
    CHECK(multibranch_loss(set, cfg) == doctest::Approx(multibranch_loss(swapped, cfg)).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  RngStream rng(41);
  const double h = 1e-5;
  for (const auto& cfg : {vicreg_cfg(), infonce_cfg()}) {
    for (int trial = 0; trial < 3; ++trial) {
      const int n = 8, d = 6;
      BranchSet<double> set;
      set.primary = {random_batch(rng, n, d), random_batch(rng, n, d)};
      set.privileged = {random_batch(rng, n, d)};
      const BranchSet<double> grad = loss_gradient(set, cfg);

      for (int bi = 0; bi < 3; ++bi) {
        std::vector<double> flat(n * d);
        const MatD& branch = set.branch(bi);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) flat[i * d + j] = branch(i, j);

        auto eval = [&](const std::vector<double>& x) {
          BranchSet<double> probe = set;
          MatD& target = bi < 2 ? probe.primary[bi] : probe.privileged[0];
          target = from_flat(x, n, d);
          return multibranch_loss(probe, cfg);
        };
        const std::vector<double> fd = oracle::central_differences(eval, flat, h);
        const MatD& g = grad.branch(bi);
        double worst = 0.0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) {
            const double f = fd[i * d + j];
            const double a = g(i, j);
            worst = std::max(worst, std::abs(a - f) / std::max(1.0, std::abs(f)));
          }
        CHECK(worst <= 1e-6);
      }
    }
  }
}

TEST_CASE("gradient vanishes at a flat zero of the loss") {
  // identical, well-spread, decorrelated batches with inactive hinges
  MatD spread(4, 2);
  spread << 2, 2, 2, -2, -2, 2, -2, -2;
  BranchSet<double> set;
  set.primary = {spread, spread};
  set.privileged = {spread};
  const BranchSet<double> grad = loss_gradient(set, vicreg_cfg());
  for (std::size_t i = 0; i < 3; ++i) CHECK(grad.branch(i).norm() == doctest::Approx(0.0));
}

TEST_CASE("vicreg terms stay nonnegative on random input") {
  RngStream rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const MatD za = random_batch(rng, 3 + int(rng.integer(6)), 1 + int(rng.integer(8)), rng.uniform(0.1, 4.0));
    const MatD zb = random_batch(rng, za.rows(), za.cols(), rng.uniform(0.1, 4.0));
    CHECK(vicreg_invariance(za, zb) >= 0.0);
    CHECK(vicreg_variance(za, 1.0, 1e-4) >= 0.0);
    CHECK(vicreg_covariance(za) >= 0.0);
    CHECK(vicreg_pair_loss(za, zb, vicreg_cfg()) >= 0.0);
  }
}
