#pragma once

// Encoder/projector constructors and the branch assembly used for training
// and evaluation. The weight-sharing contract: primary branches share one
// encoder f and one projector g (unless the unshared ablation is selected);
// the privileged branch always has its own f* and g*.

#include "trident/augment.hpp"
#include "trident/data.hpp"
#include "trident/loss.hpp"
#include "trident/nn.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace trident {

enum class EncoderKind { kConvBackbone, kMlp };

struct EncoderSpec {
  EncoderKind kind = EncoderKind::kConvBackbone;
  // conv inputs
  int input_height = 32;
  int input_width = 32;
  int input_channels = 1;
  std::vector<int> conv_channels = {32, 64, 128, 128};  // stride-2 blocks
  // mlp inputs
  int input_dim = 16;
  std::vector<int> mlp_hidden = {256, 256};

  int representation_dim = 128;
  std::uint64_t init_seed = 0;

  void validate() const;
};

struct ProjectorSpec {
  std::vector<int> widths = {512, 512, 512};  // last entry is the embedding width

  void validate() const;
  int embedding_dim(int representation_dim, bool use_projectors) const {
    return use_projectors ? widths.back() : representation_dim;
  }
};

struct BranchTopology {
  int primary_branches = 2;     // N
  int privileged_branches = 1;  // M
  bool share_primary_weights = true;
  bool use_projectors = true;
  // Table-variant: feed the primary input to the privileged branch as well.
  bool privileged_from_primary = false;

  void validate() const;
};

/// Deterministically initialized encoder: conv backbone (stride-2 blocks,
/// batch norm, ReLU, global average pooling) or MLP with a linear final layer.
Net build_encoder(const EncoderSpec& spec, const std::string& prefix = "enc");

/// Dense projector with batch norm between layers, ReLU activations and a
/// linear final layer; empty (identity) when use_projectors is off.
Net build_projector(const ProjectorSpec& spec, int in_dim, bool use_projectors,
                    std::uint64_t init_seed, const std::string& prefix = "proj");

/// Classifier head: batch normalization followed by a single dense layer;
/// softmax is applied by the loss/prediction path.
Net build_classifier_head(int in_dim, int classes, std::uint64_t init_seed);

/// The trained bundle: parameter storage for every branch plus the specs
/// needed to rebuild it from a checkpoint.
struct BranchModels {
  BranchTopology topology;
  EncoderSpec primary_spec;
  EncoderSpec privileged_spec;
  ProjectorSpec projector_spec;
  ProjectorSpec privileged_projector_spec;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string method_tag;  // e.g. trident, siamese-priv; free-form
  std::string loss_tag;    // e.g. vicreg, infonce

  std::vector<Net> primary_encoders;    // one net when weights are shared
  std::vector<Net> primary_projectors;  // aligned with primary_encoders
  Net privileged_encoder;
  Net privileged_projector;

  Net& primary_encoder(int branch) {
    return primary_encoders[topology.share_primary_weights ? 0 : branch];
  }
  Net& primary_projector(int branch) {
    return primary_projectors[topology.share_primary_weights ? 0 : branch];
  }

  std::vector<Param*> all_params() const;
  std::vector<Param*> all_buffers() const;
};

BranchModels build_models(const BranchTopology& topology, const EncoderSpec& primary,
                          const EncoderSpec& privileged, const ProjectorSpec& projector,
                          const ProjectorSpec& privileged_projector, std::uint64_t seed);

/// One training/evaluation forward over a batch: N primary embeddings from
/// independent augmentations of x, M privileged embeddings from augmented x*.
struct BranchForward {
  BranchSet<float> embeddings;
  std::vector<RowMat> representations;      // per branch, n x D_repr
  std::vector<Net::Tape> encoder_tapes;     // per branch
  std::vector<Net::Tape> projector_tapes;   // per branch
};

struct AugmentPolicy {
  ImageAugmentConfig primary_image = ImageAugmentConfig::disabled();
  ImageAugmentConfig privileged_image = ImageAugmentConfig::disabled();
  GeneAugmentConfig gene = GeneAugmentConfig::disabled();
  bool enabled = false;  // evaluation paths run the identity transform
};

BranchForward forward_branches(const std::vector<const PairedSample*>& batch,
                               BranchModels& models, const AugmentPolicy& augment,
                               RngStream& rng, bool training);

/// Conv-layout batch assembly: (n * H * W) rows, one column per channel.
RowMat images_to_conv_rows(const std::vector<const Image*>& images);
RowMat counts_to_rows(const std::vector<const VecF*>& counts);

// ---------------------------------------------------------------------------
// Checkpoints: a zip of raw little-endian float32 arrays + a JSON manifest.
// ---------------------------------------------------------------------------

void save_checkpoint(const BranchModels& models, const std::string& path);
BranchModels load_checkpoint(const std::string& path);

}  // namespace trident
