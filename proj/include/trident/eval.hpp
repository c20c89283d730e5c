#pragma once

// Frozen-encoder linear probing, representation export, representation-gene
// correlation analysis, summed-gradient attribution maps, and the results
// table across checkpoints.

#include "trident/model.hpp"
#include "trident/train.hpp"

#include <string>
#include <vector>

namespace trident {

struct ProbeConfig {
  int epochs = 100;  // convention: match the encoder pretraining epoch count
  bool class_weighting = false;
  double fraction = 1.0;  // stratified share of the training split
  std::uint64_t seed = 0;
  int batch_size = 64;
  double max_lr = 1e-3;
  double warmup_fraction = 0.1;
  AugmentPolicy augment;  // applied to head-training inputs only

  void validate() const;
};

/// Per-class stratified subset of [0, labels.size()); class shares deviate
/// from the full set by at most one sample where arithmetic permits.
std::vector<std::size_t> stratified_subsample(const std::vector<int>& labels, double fraction,
                                              std::uint64_t seed);

struct ProbeResult {
  Net head;
  double accuracy = 0.0;  // top-1 on the untouched test split, no augmentation
  std::size_t train_samples_used = 0;
};

/// Trains a batch-norm + dense softmax head on augmented inputs over the
/// frozen encoder; the encoder runs in inference mode and receives no
/// gradient updates.
ProbeResult train_probe(BranchModels& models, const std::vector<PairedSample>& train,
                        const std::vector<PairedSample>& test, char task, int classes,
                        const ProbeConfig& cfg);

// ---------------------------------------------------------------------------
// Representations
// ---------------------------------------------------------------------------

struct RepresentationMatrix {
  RowMat values;  // n_samples x representation_dim, dataset order
  std::vector<std::string> sample_ids;
  std::string checkpoint_id;
};

RepresentationMatrix extract_representations(BranchModels& models,
                                             const std::vector<PairedSample>& data,
                                             const std::string& checkpoint_id = "",
                                             int batch_size = 256);

/// Raw float32 matrix + JSON sidecar; lossless round trip.
void write_representations(const std::string& base_path, const RepresentationMatrix& reps);
RepresentationMatrix read_representations(const std::string& base_path);

// ---------------------------------------------------------------------------
// Correlation analysis
// ---------------------------------------------------------------------------

struct Histogram {
  std::vector<double> edges;  // bin_count + 1 entries
  std::vector<long> counts;   // bin_count entries; sums to the sample count
};

struct CorrelationReport {
  VecD scores;              // per-gene max |pearson| in [0, 1]
  std::vector<int> argmax;  // representation element achieving the max
  Histogram histogram;
};

/// Pearson correlation of every (gene, element) pair across samples;
/// zero-variance columns contribute correlation 0; ties break toward the
/// lowest element index.
CorrelationReport gene_correlations(const RowMat& representations, const RowMat& counts);

/// Bin count rule: max of Sturges and Freedman-Diaconis, falling back to
/// Sturges when the IQR vanishes.
int histogram_bin_count(const VecD& values);
Histogram correlation_histogram(const VecD& scores);

// ---------------------------------------------------------------------------
// Attribution
// ---------------------------------------------------------------------------

/// Composite attribution map at the resolution of the last conv block:
/// each representation element contributes ReLU(sum_k w_k A_k) with w_k the
/// spatially averaged gradient of that element; elements are summed. Raw,
/// un-normalized values; optionally exposes the per-element maps.
Eigen::MatrixXf gradcam_raw(Net& encoder, const Image& image,
                            std::vector<Eigen::MatrixXf>* per_element = nullptr);

/// gradcam_raw upsampled to the input size and min-max normalized to [0, 1].
Image gradcam_sum(Net& encoder, const Image& image);

// ---------------------------------------------------------------------------
// Results table
// ---------------------------------------------------------------------------

struct SuiteEntry {
  std::string method;
  bool privileged = false;
  std::string loss;
  std::string task;
  double fraction = 1.0;
  double accuracy = 0.0;
};

struct SuiteCheckpoint {
  std::string method;  // e.g. trident, siamese-priv, siamese-unpriv, supervised
  bool privileged = false;
  std::string loss;
  std::string path;
};

/// Probes every (checkpoint, task, fraction) triple; missing checkpoint
/// files are skipped with a warning on stderr.
std::vector<SuiteEntry> evaluate_suite(const std::vector<SuiteCheckpoint>& checkpoints,
                                       const std::vector<PairedSample>& train,
                                       const std::vector<PairedSample>& test,
                                       const std::vector<char>& tasks,
                                       const std::vector<double>& fractions,
                                       const ProbeConfig& probe);

/// Header: method,privileged,loss,task,fraction,accuracy.
void write_suite_csv(const std::string& path, const std::vector<SuiteEntry>& entries);
std::vector<SuiteEntry> read_suite_csv(const std::string& path);

}  // namespace trident
