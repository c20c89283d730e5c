#pragma once

// Pretraining loop for the multi-branch objective plus the supervised and
// direct-regression baselines, with warmup-cosine scheduling and Adam.

#include "trident/model.hpp"

#include <string>
#include <vector>

namespace trident {

enum class TrainMode { kSslPretrain, kSupervised, kGeneRegression };

struct TrainRunConfig {
  BranchTopology topology;
  LossConfig loss;
  EncoderSpec encoder;
  EncoderSpec privileged_encoder;
  ProjectorSpec projector;
  ProjectorSpec privileged_projector;
  AugmentPolicy augment;

  int epochs = 100;
  int batch_size = 64;
  double max_lr = 1e-3;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kSslPretrain;
  bool class_weighting = false;  // supervised mode

  void validate() const;
};

struct TrainStep {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double pair_12 = 0.0;  // primary-primary term
  double pair_1p = 0.0;  // first primary vs privileged
  double pair_2p = 0.0;  // second primary vs privileged
  double mean_std = 0.0; // mean per-dimension embedding std (collapse monitor)
};

struct TrainTrace {
  std::vector<TrainStep> steps;
  std::vector<double> epoch_mean_std;

  void to_csv(const std::string& path) const;
};

/// A NaN loss aborts the run; the trace up to the failing step rides along.
class TrainAbortError : public std::runtime_error {
 public:
  TrainAbortError(const std::string& msg, TrainTrace trace_in)
      : std::runtime_error(msg), trace(std::move(trace_in)) {}
  TrainTrace trace;
};

/// Linear ramp 0 -> max_lr over the warmup steps, then cosine decay to 0.
double lr_schedule(long step, long total_steps, double max_lr, double warmup_fraction);

struct PretrainResult {
  BranchModels models;
  TrainTrace trace;
};

/// Runs epochs x floor(|data| / batch_size) optimizer steps minimizing the
/// multi-branch loss over embeddings; the final partial batch is dropped.
PretrainResult pretrain(const std::vector<PairedSample>& data, const TrainRunConfig& cfg);

/// Proportional weights |data| / (K * n_c); absent classes get weight 0 with
/// a warning on stderr.
std::vector<double> proportional_class_weights(const std::vector<int>& labels, int classes);

int label_of(const PairedSample& sample, char task);

struct SupervisedResult {
  BranchModels models;  // encoder only; the training head is discarded
  TrainTrace trace;
  double train_accuracy = 0.0;
};

SupervisedResult train_supervised(const std::vector<PairedSample>& data, char task, int classes,
                                  const TrainRunConfig& cfg);

struct RegressionResult {
  BranchModels models;
  TrainTrace trace;
  double final_mse = 0.0;
};

/// Supervised MSE regression from the primary input to the privileged count
/// vector through a linear output head.
RegressionResult train_gene_regressor(const std::vector<PairedSample>& data,
                                      const TrainRunConfig& cfg);

}  // namespace trident
