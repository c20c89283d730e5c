#include "trident/nn.hpp"

#include <cmath>

namespace trident {

void Layer::collect(std::vector<Param*>&, std::vector<Param*>&) {}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(std::string name, int in_features, int out_features, RngStream& rng) {
  weight.name = name + ".weight";
  weight.value.resize(in_features, out_features);
  const float std = std::sqrt(2.0f / static_cast<float>(in_features));
  for (int i = 0; i < in_features; ++i)
    for (int j = 0; j < out_features; ++j)
      weight.value(i, j) = static_cast<float>(rng.normal(0.0, std));
  weight.zero_grad();
  bias.name = name + ".bias";
  bias.value = RowMat::Zero(1, out_features);
  bias.zero_grad();
}

RowMat DenseLayer::forward(const RowMat& x, LayerCache& cache, bool training) {
  cache.training = training;
  cache.saved = {x};
  RowMat y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

RowMat DenseLayer::backward(const RowMat& gy, const LayerCache& cache) {
  const RowMat& x = cache.saved[0];
  weight.grad.noalias() += x.transpose() * gy;
  bias.grad.row(0) += gy.colwise().sum();
  return gy * weight.value.transpose();
}

void DenseLayer::collect(std::vector<Param*>& params, std::vector<Param*>&) {
  params.push_back(&weight);
  params.push_back(&bias);
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

RowMat ReluLayer::forward(const RowMat& x, LayerCache& cache, bool) {
  cache.saved = {x};
  return x.cwiseMax(0.0f);
}

RowMat ReluLayer::backward(const RowMat& gy, const LayerCache& cache) {
  return (cache.saved[0].array() > 0.0f).cast<float>().matrix().cwiseProduct(gy);
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNormLayer::BatchNormLayer(std::string name, int features, double momentum_in, double eps_in)
    : momentum(momentum_in), eps(eps_in) {
  gamma.name = name + ".gamma";
  gamma.value = RowMat::Ones(1, features);
  gamma.zero_grad();
  beta.name = name + ".beta";
  beta.value = RowMat::Zero(1, features);
  beta.zero_grad();
  running_mean.name = name + ".running_mean";
  running_mean.value = RowMat::Zero(1, features);
  running_var.name = name + ".running_var";
  running_var.value = RowMat::Ones(1, features);
}

RowMat BatchNormLayer::forward(const RowMat& x, LayerCache& cache, bool training) {
  cache.training = training;
  const auto m = static_cast<float>(x.rows());
  RowMat mean(1, x.cols()), inv_std(1, x.cols());

  if (training) {
    require(x.rows() >= 2, "BatchNormLayer: training forward needs at least 2 rows");
    mean = x.colwise().mean();
    RowMat centered = x.rowwise() - mean.row(0);
    RowMat var = centered.array().square().colwise().mean().matrix();
    inv_std = (var.array() + static_cast<float>(eps)).rsqrt().matrix();
    // running stats track the unbiased estimator
    const float unbias = m / std::max(1.0f, m - 1.0f);
    running_mean.value = static_cast<float>(momentum) * running_mean.value +
                         static_cast<float>(1.0 - momentum) * mean;
    running_var.value = static_cast<float>(momentum) * running_var.value +
                        static_cast<float>(1.0 - momentum) * (unbias * var);
    RowMat xhat = centered.array().rowwise() * inv_std.row(0).array();
    cache.saved = {xhat, inv_std};
    RowMat y = xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    return y;
  }

  inv_std = (running_var.value.array() + static_cast<float>(eps)).rsqrt().matrix();
  RowMat xhat = (x.rowwise() - running_mean.value.row(0)).array().rowwise() *
                inv_std.row(0).array();
  cache.saved = {xhat, inv_std};
  RowMat y = xhat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  return y;
}

RowMat BatchNormLayer::backward(const RowMat& gy, const LayerCache& cache) {
  const RowMat& xhat = cache.saved[0];
  const RowMat& inv_std = cache.saved[1];

  gamma.grad.row(0) += gy.cwiseProduct(xhat).colwise().sum();
  beta.grad.row(0) += gy.colwise().sum();

  RowMat gxhat = gy.array().rowwise() * gamma.value.row(0).array();
  if (!cache.training)  // running statistics are constants
    return gxhat.array().rowwise() * inv_std.row(0).array();

  const auto m = static_cast<float>(gy.rows());
  const RowMat sum_g = gxhat.colwise().sum();
  const RowMat sum_gx = gxhat.cwiseProduct(xhat).colwise().sum();
  RowMat gx = m * gxhat;
  gx.rowwise() -= sum_g.row(0);
  gx -= (xhat.array().rowwise() * sum_gx.row(0).array()).matrix();
  gx.array().rowwise() *= (inv_std.row(0).array() / m);
  return gx;
}

void BatchNormLayer::collect(std::vector<Param*>& params, std::vector<Param*>& buffers) {
  params.push_back(&gamma);
  params.push_back(&beta);
  buffers.push_back(&running_mean);
  buffers.push_back(&running_var);
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2dLayer::Conv2dLayer(std::string name, int in_channels_in, int out_channels_in, int in_height,
                         int in_width, int kernel_in, int stride_in, int pad_in, RngStream& rng)
    : in_channels(in_channels_in),
      out_channels(out_channels_in),
      in_h(in_height),
      in_w(in_width),
      kernel(kernel_in),
      stride(stride_in),
      pad(pad_in) {
  out_h = (in_h + 2 * pad - kernel) / stride + 1;
  out_w = (in_w + 2 * pad - kernel) / stride + 1;
  require(out_h > 0 && out_w > 0, "Conv2dLayer: kernel does not fit the input");

  const int fan_in = kernel * kernel * in_channels;
  weight.name = name + ".weight";
  weight.value.resize(fan_in, out_channels);
  const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
  for (int i = 0; i < fan_in; ++i)
    for (int j = 0; j < out_channels; ++j)
      weight.value(i, j) = static_cast<float>(rng.normal(0.0, std));
  weight.zero_grad();
  bias.name = name + ".bias";
  bias.value = RowMat::Zero(1, out_channels);
  bias.zero_grad();
}

RowMat Conv2dLayer::im2col(const RowMat& x, int batch) const {
  RowMat cols = RowMat::Zero(static_cast<Eigen::Index>(batch) * out_h * out_w,
                             static_cast<Eigen::Index>(kernel) * kernel * in_channels);
  const float* src = x.data();
  float* dst = cols.data();
  const Eigen::Index patch = static_cast<Eigen::Index>(kernel) * kernel * in_channels;
  for (int s = 0; s < batch; ++s) {
    const Eigen::Index in_base = static_cast<Eigen::Index>(s) * in_h * in_w;
    const Eigen::Index out_base = static_cast<Eigen::Index>(s) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        float* row = dst + (out_base + static_cast<Eigen::Index>(oy) * out_w + ox) * patch;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in_h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= in_w) continue;
            const float* cell = src + (in_base + static_cast<Eigen::Index>(iy) * in_w + ix) * in_channels;
            float* slot = row + (static_cast<Eigen::Index>(ky) * kernel + kx) * in_channels;
            for (int c = 0; c < in_channels; ++c) slot[c] = cell[c];
          }
        }
      }
  }
  return cols;
}

RowMat Conv2dLayer::forward(const RowMat& x, LayerCache& cache, bool training) {
  require(x.cols() == in_channels, "Conv2dLayer: channel mismatch");
  require(x.rows() % (static_cast<Eigen::Index>(in_h) * in_w) == 0,
          "Conv2dLayer: rows do not tile the spatial extent");
  const int batch = static_cast<int>(x.rows() / (static_cast<Eigen::Index>(in_h) * in_w));
  cache.training = training;
  RowMat cols = im2col(x, batch);
  RowMat y = cols * weight.value;
  y.rowwise() += bias.value.row(0);
  cache.saved = {std::move(cols)};
  return y;
}

RowMat Conv2dLayer::backward(const RowMat& gy, const LayerCache& cache) {
  const RowMat& cols = cache.saved[0];
  const int batch = static_cast<int>(gy.rows() / (static_cast<Eigen::Index>(out_h) * out_w));

  weight.grad.noalias() += cols.transpose() * gy;
  bias.grad.row(0) += gy.colwise().sum();

  const RowMat gcols = gy * weight.value.transpose();
  RowMat gx = RowMat::Zero(static_cast<Eigen::Index>(batch) * in_h * in_w, in_channels);
  const float* src = gcols.data();
  float* dst = gx.data();
  const Eigen::Index patch = static_cast<Eigen::Index>(kernel) * kernel * in_channels;
  for (int s = 0; s < batch; ++s) {
    const Eigen::Index in_base = static_cast<Eigen::Index>(s) * in_h * in_w;
    const Eigen::Index out_base = static_cast<Eigen::Index>(s) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const float* row = src + (out_base + static_cast<Eigen::Index>(oy) * out_w + ox) * patch;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in_h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= in_w) continue;
            float* cell = dst + (in_base + static_cast<Eigen::Index>(iy) * in_w + ix) * in_channels;
            const float* slot = row + (static_cast<Eigen::Index>(ky) * kernel + kx) * in_channels;
            for (int c = 0; c < in_channels; ++c) cell[c] += slot[c];
          }
        }
      }
  }
  return gx;
}

void Conv2dLayer::collect(std::vector<Param*>& params, std::vector<Param*>&) {
  params.push_back(&weight);
  params.push_back(&bias);
}

// ---------------------------------------------------------------------------
// Global average pooling
// ---------------------------------------------------------------------------

RowMat GlobalAvgPoolLayer::forward(const RowMat& x, LayerCache& cache, bool training) {
  require(x.rows() % positions == 0, "GlobalAvgPoolLayer: rows do not tile the spatial extent");
  cache.training = training;
  const Eigen::Index batch = x.rows() / positions;
  RowMat y(batch, x.cols());
  for (Eigen::Index s = 0; s < batch; ++s)
    y.row(s) = x.middleRows(s * positions, positions).colwise().mean();
  return y;
}

RowMat GlobalAvgPoolLayer::backward(const RowMat& gy, const LayerCache&) {
  RowMat gx(gy.rows() * positions, gy.cols());
  const float scale = 1.0f / static_cast<float>(positions);
  for (Eigen::Index s = 0; s < gy.rows(); ++s)
    gx.middleRows(s * positions, positions) = (gy.row(s) * scale).replicate(positions, 1);
  return gx;
}

// ---------------------------------------------------------------------------
// Net
// ---------------------------------------------------------------------------

RowMat Net::forward(const RowMat& x, Tape& tape, bool training) const {
  return forward_prefix(x, tape, training, layers_.size());
}

RowMat Net::forward_prefix(const RowMat& x, Tape& tape, bool training, std::size_t upto) const {
  require(tape.size() == layers_.size(), "Net: tape shape mismatch");
  RowMat h = x;
  for (std::size_t i = 0; i < upto; ++i) h = layers_[i]->forward(h, tape[i], training);
  return h;
}

RowMat Net::backward(const RowMat& gy, const Tape& tape) const {
  return backward_suffix(gy, tape, 0);
}

RowMat Net::backward_suffix(const RowMat& gy, const Tape& tape, std::size_t from) const {
  require(tape.size() == layers_.size(), "Net: tape shape mismatch");
  RowMat g = gy;
  for (std::size_t i = layers_.size(); i-- > from;) g = layers_[i]->backward(g, tape[i]);
  return g;
}

std::vector<Param*> Net::params() const {
  std::vector<Param*> params, buffers;
  for (const auto& layer : layers_) layer->collect(params, buffers);
  return params;
}

std::vector<Param*> Net::buffers() const {
  std::vector<Param*> params, buffers;
  for (const auto& layer : layers_) layer->collect(params, buffers);
  return buffers;
}

void Net::zero_grads() const {
  for (Param* p : params()) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<Param*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Param* p : params_) {
    m_.push_back(RowMat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(RowMat::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamOptimizer::step(double lr) {
  ++t_;
  const double correction1 = 1.0 - std::pow(beta1_, t_);
  const double correction2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    m_[i] = static_cast<float>(beta1_) * m_[i] + static_cast<float>(1 - beta1_) * p.grad;
    v_[i] = (static_cast<float>(beta2_) * v_[i].array() +
             static_cast<float>(1 - beta2_) * p.grad.array().square())
                .matrix();
    const auto mhat = m_[i].array() / static_cast<float>(correction1);
    const auto vhat = v_[i].array() / static_cast<float>(correction2);
    p.value.array() -= static_cast<float>(lr) * mhat / (vhat.sqrt() + static_cast<float>(eps_));
  }
}

void AdamOptimizer::zero_grads() {
  for (Param* p : params_) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Heads
// ---------------------------------------------------------------------------

RowMat softmax(const RowMat& logits) {
  RowMat probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const float m = logits.row(i).maxCoeff();
    Eigen::ArrayXf e = (logits.row(i).array() - m).exp();
    probs.row(i) = (e / e.sum()).matrix();
  }
  return probs;
}

double softmax_cross_entropy(const RowMat& logits, const std::vector<int>& labels,
                             const std::vector<double>& class_weights, RowMat& grad) {
  require(static_cast<std::size_t>(logits.rows()) == labels.size(),
          "softmax_cross_entropy: label count mismatch");
  const RowMat probs = softmax(logits);
  grad = probs;
  double loss = 0.0, weight_sum = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < logits.cols(), "softmax_cross_entropy: label out of range");
    const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y)];
    loss -= w * std::log(std::max(1e-12f, probs(i, y)));
    grad.row(i) *= static_cast<float>(w);
    grad(i, y) -= static_cast<float>(w);
    weight_sum += w;
  }
  const double norm = weight_sum > 0.0 ? weight_sum : 1.0;
  grad /= static_cast<float>(norm);
  return loss / norm;
}

double mse_loss(const RowMat& pred, const RowMat& target, RowMat& grad) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(),
          "mse_loss: shape mismatch");
  const RowMat diff = pred - target;
  grad = 2.0f * diff / static_cast<float>(diff.size());
  return diff.array().square().sum() / static_cast<double>(diff.size());
}

}  // namespace trident
