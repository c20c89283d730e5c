#pragma once

// Small feedforward stack on Eigen with explicit forward tapes and manual
// backpropagation. Activations are row-major batches: dense layers see one
// row per sample; convolutional layers see one row per spatial position,
// (sample * H + y) * W + x, with one column per channel.

#include "trident/types.hpp"

#include <memory>
#include <string>
#include <vector>

namespace trident {

struct Param {
  std::string name;
  RowMat value;
  RowMat grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Per-layer forward state stashed for the backward pass. One tape instance
/// per concurrent forward pass; parameters may be shared across tapes.
struct LayerCache {
  std::vector<RowMat> saved;
  bool training = false;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual RowMat forward(const RowMat& x, LayerCache& cache, bool training) = 0;
  virtual RowMat backward(const RowMat& gy, const LayerCache& cache) = 0;
  /// Trainable parameters and non-trainable buffers (running statistics).
  virtual void collect(std::vector<Param*>& params, std::vector<Param*>& buffers);
  virtual int output_features(int input_features) const = 0;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::string name, int in_features, int out_features, RngStream& rng);
  RowMat forward(const RowMat& x, LayerCache& cache, bool training) override;
  RowMat backward(const RowMat& gy, const LayerCache& cache) override;
  void collect(std::vector<Param*>& params, std::vector<Param*>& buffers) override;
  int output_features(int) const override { return static_cast<int>(weight.value.cols()); }

  Param weight;  // in x out
  Param bias;    // 1 x out
};

class ReluLayer final : public Layer {
 public:
  RowMat forward(const RowMat& x, LayerCache& cache, bool training) override;
  RowMat backward(const RowMat& gy, const LayerCache& cache) override;
  int output_features(int input_features) const override { return input_features; }
};

/// Column-wise batch normalization; covers both the dense case (rows =
/// samples) and the convolutional case (rows = samples x positions).
class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(std::string name, int features, double momentum = 0.9, double eps = 1e-5);
  RowMat forward(const RowMat& x, LayerCache& cache, bool training) override;
  RowMat backward(const RowMat& gy, const LayerCache& cache) override;
  void collect(std::vector<Param*>& params, std::vector<Param*>& buffers) override;
  int output_features(int input_features) const override { return input_features; }

  Param gamma, beta;
  Param running_mean, running_var;  // buffers
  double momentum;
  double eps;
};

class Conv2dLayer final : public Layer {
 public:
  Conv2dLayer(std::string name, int in_channels, int out_channels, int in_height, int in_width,
              int kernel, int stride, int pad, RngStream& rng);
  RowMat forward(const RowMat& x, LayerCache& cache, bool training) override;
  RowMat backward(const RowMat& gy, const LayerCache& cache) override;
  void collect(std::vector<Param*>& params, std::vector<Param*>& buffers) override;
  int output_features(int) const override { return out_channels; }

  int out_height() const { return out_h; }
  int out_width() const { return out_w; }

  Param weight;  // (kernel * kernel * in_channels) x out_channels
  Param bias;    // 1 x out_channels
  int in_channels, out_channels, in_h, in_w, kernel, stride, pad, out_h, out_w;

 private:
  RowMat im2col(const RowMat& x, int batch) const;
};

/// Mean over each sample's spatial positions: (n*H*W, C) -> (n, C).
class GlobalAvgPoolLayer final : public Layer {
 public:
  GlobalAvgPoolLayer(int height, int width) : positions(height * width) {}
  RowMat forward(const RowMat& x, LayerCache& cache, bool training) override;
  RowMat backward(const RowMat& gy, const LayerCache& cache) override;
  int output_features(int input_features) const override { return input_features; }

  int positions;
};

/// A feedforward stack. Forward passes record into an external tape so a
/// single parameter set can serve several concurrent branches.
class Net {
 public:
  using Tape = std::vector<LayerCache>;

  Net() = default;
  Net(Net&&) = default;
  Net& operator=(Net&&) = default;

  void append(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  bool empty() const { return layers_.empty(); }
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  Tape make_tape() const { return Tape(layers_.size()); }

  /// Identity when the stack is empty.
  RowMat forward(const RowMat& x, Tape& tape, bool training) const;
  /// Forward truncated to layers [0, upto); used for attribution hooks.
  RowMat forward_prefix(const RowMat& x, Tape& tape, bool training, std::size_t upto) const;
  RowMat backward(const RowMat& gy, const Tape& tape) const;
  /// Backward from the output down to (and excluding) layer `from`.
  RowMat backward_suffix(const RowMat& gy, const Tape& tape, std::size_t from) const;

  std::vector<Param*> params() const;
  std::vector<Param*> buffers() const;
  void zero_grads() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Adam over an explicit parameter list; state is positional, so the list
/// must be stable across steps.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Param*> params, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);
  void step(double lr);
  void zero_grads();

 private:
  std::vector<Param*> params_;
  std::vector<RowMat> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Softmax cross-entropy over logits (n x K); optional per-class weights.
/// Returns the mean weighted loss and writes d(loss)/d(logits).
double softmax_cross_entropy(const RowMat& logits, const std::vector<int>& labels,
                             const std::vector<double>& class_weights, RowMat& grad);

/// Row-wise softmax probabilities.
RowMat softmax(const RowMat& logits);

/// Mean squared error against targets; writes d(loss)/d(pred).
double mse_loss(const RowMat& pred, const RowMat& target, RowMat& grad);

}  // namespace trident
