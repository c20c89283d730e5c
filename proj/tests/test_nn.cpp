#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "trident/nn.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>

using namespace trident;

namespace {

RowMat random_rows(RngStream& rng, int r, int c, double scale = 1.0) {
  RowMat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = static_cast<float>(scale * rng.normal());
  return m;
}

// Scalar readout so finite differences can probe a whole net: sum of the
// output weighted by a fixed random matrix.
struct Readout {
  RowMat weights;
  double value(const RowMat& y) const { return y.cwiseProduct(weights).sum(); }
  RowMat grad() const { return weights; }
};

double max_rel_error(const RowMat& analytic, const RowMat& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.rows(); ++i)
    for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
      const double a = analytic(i, j), f = numeric(i, j);
      worst = std::max(worst, std::abs(a - f) / std::max(1.0, std::abs(f)));
    }
  return worst;
}

// Central differences through an arbitrary forward closure, in float.
// Coordinates where halving the step changes the estimate are non-smooth
// (a ReLU mask flipped under perturbation) and are reported as NaN.
RowMat fd_matrix(RowMat& target, const std::function<double()>& eval, float h = 1e-2f) {
  RowMat grad(target.rows(), target.cols());
  auto central = [&](Eigen::Index i, Eigen::Index j, float step) {
    const float keep = target(i, j);
    target(i, j) = keep + step;
    const double up = eval();
    target(i, j) = keep - step;
    const double down = eval();
    target(i, j) = keep;
    return (up - down) / (2.0 * step);
  };
  for (Eigen::Index i = 0; i < target.rows(); ++i)
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
      const double coarse = central(i, j, h);
      const double fine = central(i, j, h / 2);
      const bool smooth = std::abs(coarse - fine) <= 1e-3 * std::max(1.0, std::abs(fine));
      grad(i, j) = smooth ? static_cast<float>(fine)
                          : std::numeric_limits<float>::quiet_NaN();
    }
  return grad;
}

// Relative error over smooth coordinates; requires most coordinates usable.
double max_rel_error_smooth(const RowMat& analytic, const RowMat& numeric) {
  double worst = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < analytic.rows(); ++i)
    for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
      const double f = numeric(i, j);
      if (std::isnan(f)) continue;
      ++used;
      worst = std::max(worst, std::abs(analytic(i, j) - f) / std::max(1.0, std::abs(f)));
    }
  REQUIRE(used * 2 >= analytic.size());
  return worst;
}

void check_net_gradients(Net& net, const RowMat& x0, bool training, double tol = 2e-3) {
  RngStream rng(99);
  Net::Tape probe = net.make_tape();
  const RowMat y0 = net.forward(x0, probe, training);
  Readout readout{random_rows(rng, static_cast<int>(y0.rows()), static_cast<int>(y0.cols()))};

  RowMat x = x0;
  auto eval = [&]() {
    Net::Tape tape = net.make_tape();
    return readout.value(net.forward(x, tape, training));
  };

  // analytic pass
  net.zero_grads();
  Net::Tape tape = net.make_tape();
  net.forward(x, tape, training);
  const RowMat gx = net.backward(readout.grad(), tape);

  CHECK(max_rel_error_smooth(gx, fd_matrix(x, eval)) < tol);
  for (Param* p : net.params()) {
    INFO("param ", p->name);
    CHECK(max_rel_error_smooth(p->grad, fd_matrix(p->value, eval)) < tol);
  }
}

}  // namespace

TEST_CASE("dense layer forward and gradients") {
  RngStream rng(1);
  Net net;
  net.append(std::make_unique<DenseLayer>("fc", 5, 3, rng));
  const RowMat x = random_rows(rng, 4, 5);
  check_net_gradients(net, x, true);
}

TEST_CASE("relu gradients") {
  RngStream rng(2);
  Net net;
  net.append(std::make_unique<DenseLayer>("fc", 4, 4, rng));
  net.append(std::make_unique<ReluLayer>());
  check_net_gradients(net, random_rows(rng, 3, 4), true);
}

TEST_CASE("batch norm training statistics and gradients") {
  RngStream rng(3);
  auto bn_owned = std::make_unique<BatchNormLayer>("bn", 4);
  BatchNormLayer* bn = bn_owned.get();
  Net net;
  net.append(std::move(bn_owned));

  const RowMat x = random_rows(rng, 16, 4, 2.0);
  Net::Tape tape = net.make_tape();
  const RowMat y = net.forward(x, tape, true);

  // normalized output: near-zero mean, near-unit variance per column
  for (int j = 0; j < 4; ++j) {
    CHECK(std::abs(y.col(j).mean()) < 1e-5);
    const float var = (y.col(j).array() - y.col(j).mean()).square().mean();
    CHECK(var == doctest::Approx(1.0f).epsilon(0.01));
  }
  // running stats moved toward the batch
  CHECK(bn->running_mean.value.cwiseAbs().sum() > 0.0f);

  check_net_gradients(net, random_rows(rng, 8, 4), true);
}

TEST_CASE("batch norm inference mode uses running stats and has gradients") {
  RngStream rng(4);
  Net net;
  net.append(std::make_unique<BatchNormLayer>("bn", 3));
  // accumulate running statistics
  for (int i = 0; i < 20; ++i) {
    Net::Tape tape = net.make_tape();
    net.forward(random_rows(rng, 8, 3, 1.5), tape, true);
  }
  const RowMat x = random_rows(rng, 4, 3);
  Net::Tape t1 = net.make_tape(), t2 = net.make_tape();
  const RowMat y1 = net.forward(x, t1, false);
  const RowMat y2 = net.forward(x, t2, false);
  CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0f);  // eval path has no state updates
  check_net_gradients(net, x, false);
}

TEST_CASE("conv2d matches a direct convolution") {
  RngStream rng(5);
  const int in_c = 2, out_c = 3, h = 6, w = 5, k = 3, stride = 2, pad = 1;
  auto conv_owned = std::make_unique<Conv2dLayer>("conv", in_c, out_c, h, w, k, stride, pad, rng);
  Conv2dLayer* conv = conv_owned.get();
  const int oh = conv->out_height(), ow = conv->out_width();
  CHECK(oh == 3);
  CHECK(ow == 3);

  const int batch = 2;
  const RowMat x = random_rows(rng, batch * h * w, in_c);
  Net net;
  net.append(std::move(conv_owned));
  Net::Tape tape = net.make_tape();
  const RowMat y = net.forward(x, tape, true);

  for (int s = 0; s < batch; ++s)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int co = 0; co < out_c; ++co) {
          double acc = conv->bias.value(0, co);
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              for (int ci = 0; ci < in_c; ++ci)
                acc += conv->weight.value((ky * k + kx) * in_c + ci, co) *
                       x((s * h + iy) * w + ix, ci);
            }
          CHECK(y((s * oh + oy) * ow + ox, co) == doctest::Approx(acc).epsilon(1e-4));
        }
}

TEST_CASE("conv2d gradients") {
  RngStream rng(6);
  Net net;
  net.append(std::make_unique<Conv2dLayer>("conv", 2, 3, 6, 6, 3, 2, 1, rng));
  check_net_gradients(net, random_rows(rng, 2 * 6 * 6, 2), true);
}

TEST_CASE("global average pool") {
  RngStream rng(7);
  Net net;
  net.append(std::make_unique<GlobalAvgPoolLayer>(2, 3));
  const RowMat x = random_rows(rng, 2 * 6, 4);
  Net::Tape tape = net.make_tape();
  const RowMat y = net.forward(x, tape, true);
  CHECK(y.rows() == 2);
  CHECK(y(0, 0) == doctest::Approx(x.block(0, 0, 6, 1).mean()));
  check_net_gradients(net, x, true);
}

TEST_CASE("composite conv backbone gradients") {
  RngStream rng(8);
  Net net;
  net.append(std::make_unique<Conv2dLayer>("c1", 1, 4, 8, 8, 3, 2, 1, rng));
  net.append(std::make_unique<BatchNormLayer>("b1", 4));
  net.append(std::make_unique<ReluLayer>());
  net.append(std::make_unique<Conv2dLayer>("c2", 4, 6, 4, 4, 3, 2, 1, rng));
  net.append(std::make_unique<BatchNormLayer>("b2", 6));
  net.append(std::make_unique<ReluLayer>());
  net.append(std::make_unique<GlobalAvgPoolLayer>(2, 2));
  net.append(std::make_unique<DenseLayer>("fc", 6, 5, rng));
  check_net_gradients(net, random_rows(rng, 2 * 8 * 8, 1), true, 5e-3);
}

TEST_CASE("empty net is the identity") {
  Net net;
  Net::Tape tape = net.make_tape();
  RngStream rng(9);
  const RowMat x = random_rows(rng, 3, 4);
  CHECK(net.forward(x, tape, true) == x);
  CHECK(net.backward(x, tape) == x);
  CHECK(net.params().empty());
}

TEST_CASE("softmax cross entropy gradient and weighting") {
  RngStream rng(10);
  RowMat logits = random_rows(rng, 5, 3);
  const std::vector<int> labels = {0, 2, 1, 2, 0};

  RowMat grad;
  const double loss = softmax_cross_entropy(logits, labels, {}, grad);
  CHECK(loss > 0.0);
  auto eval = [&]() {
    RowMat g;
    return softmax_cross_entropy(logits, labels, {}, g);
  };
  CHECK(max_rel_error(grad, fd_matrix(logits, eval, 1e-3f)) < 2e-3);

  // class weights rescale per-sample terms
  RowMat wgrad;
  const std::vector<double> weights = {2.0, 1.0, 0.5};
  const double wloss = softmax_cross_entropy(logits, labels, weights, wgrad);
  CHECK(wloss != doctest::Approx(loss));
  auto weval = [&]() {
    RowMat g;
    return softmax_cross_entropy(logits, labels, weights, g);
  };
  CHECK(max_rel_error(wgrad, fd_matrix(logits, weval, 1e-3f)) < 2e-3);
}

TEST_CASE("mse loss and gradient") {
  RngStream rng(11);
  RowMat pred = random_rows(rng, 4, 3);
  const RowMat target = random_rows(rng, 4, 3);
  RowMat grad;
  const double loss = mse_loss(pred, target, grad);
  CHECK(loss == doctest::Approx((pred - target).array().square().mean()));
  auto eval = [&]() {
    RowMat g;
    return mse_loss(pred, target, g);
  };
  CHECK(max_rel_error(grad, fd_matrix(pred, eval, 1e-3f)) < 2e-3);
}

TEST_CASE("adam minimizes a quadratic") {
  Param p;
  p.name = "w";
  p.value = RowMat::Constant(1, 4, 5.0f);
  p.zero_grad();
  AdamOptimizer opt({&p});
  for (int step = 0; step < 2000; ++step) {
    p.grad = 2.0f * p.value;  // d/dw ||w||^2
    opt.step(0.05);
  }
  CHECK(p.value.cwiseAbs().maxCoeff() < 1e-2f);
}

TEST_CASE("deterministic initialization from seed") {
  RngStream a(21), b(21), c(22);
  DenseLayer la("fc", 6, 4, a), lb("fc", 6, 4, b), lc("fc", 6, 4, c);
  CHECK(la.weight.value == lb.weight.value);
  CHECK(la.weight.value != lc.weight.value);
}
