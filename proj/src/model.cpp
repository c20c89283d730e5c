#include "trident/model.hpp"

#include "trident/zipio.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <map>
#include <memory>

namespace trident {

void EncoderSpec::validate() const {
  require(representation_dim >= 1, "EncoderSpec: representation_dim must be >= 1");
  if (kind == EncoderKind::kConvBackbone) {
    require(input_height >= 8 && input_width >= 8 && input_channels >= 1,
            "EncoderSpec: conv input must be at least 8x8");
    require(!conv_channels.empty(), "EncoderSpec: conv_channels must be nonempty");
    require(conv_channels.back() == representation_dim,
            "EncoderSpec: representation_dim must equal the final conv width");
  } else {
    require(input_dim >= 1, "EncoderSpec: input_dim must be >= 1");
  }
}

void ProjectorSpec::validate() const {
  require(!widths.empty(), "ProjectorSpec: widths must be nonempty");
  for (int w : widths) require(w >= 1, "ProjectorSpec: widths must be >= 1");
}

void BranchTopology::validate() const {
  require(primary_branches == 1 || primary_branches == 2,
          "BranchTopology: primary branch count must be 1 or 2");
  require(privileged_branches == 0 || privileged_branches == 1,
          "BranchTopology: privileged branch count must be 0 or 1");
  require(primary_branches + privileged_branches >= 2,
          "BranchTopology: at least two branches required");
}

Net build_encoder(const EncoderSpec& spec, const std::string& prefix) {
  spec.validate();
  RngStream rng(spec.init_seed);
  Net net;
  if (spec.kind == EncoderKind::kConvBackbone) {
    int h = spec.input_height, w = spec.input_width, channels = spec.input_channels;
    for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
      const std::string name = prefix + ".block" + std::to_string(i + 1);
      auto conv = std::make_unique<Conv2dLayer>(name + ".conv", channels, spec.conv_channels[i],
                                                h, w, 3, 2, 1, rng);
      h = conv->out_height();
      w = conv->out_width();
      channels = spec.conv_channels[i];
      net.append(std::move(conv));
      net.append(std::make_unique<BatchNormLayer>(name + ".bn", channels));
      net.append(std::make_unique<ReluLayer>());
    }
    net.append(std::make_unique<GlobalAvgPoolLayer>(h, w));
  } else {
    int in_dim = spec.input_dim;
    for (std::size_t i = 0; i < spec.mlp_hidden.size(); ++i) {
      const std::string name = prefix + ".fc" + std::to_string(i + 1);
      net.append(std::make_unique<DenseLayer>(name, in_dim, spec.mlp_hidden[i], rng));
      net.append(std::make_unique<BatchNormLayer>(name + ".bn", spec.mlp_hidden[i]));
      net.append(std::make_unique<ReluLayer>());
      in_dim = spec.mlp_hidden[i];
    }
    net.append(std::make_unique<DenseLayer>(prefix + ".fc_out", in_dim, spec.representation_dim, rng));
  }
  return net;
}

Net build_projector(const ProjectorSpec& spec, int in_dim, bool use_projectors,
                    std::uint64_t init_seed, const std::string& prefix) {
  Net net;
  if (!use_projectors) return net;  // identity
  spec.validate();
  require(in_dim >= 1, "build_projector: in_dim must be >= 1");
  RngStream rng(init_seed);
  int dim = in_dim;
  for (std::size_t i = 0; i < spec.widths.size(); ++i) {
    const std::string name = prefix + ".fc" + std::to_string(i + 1);
    net.append(std::make_unique<DenseLayer>(name, dim, spec.widths[i], rng));
    dim = spec.widths[i];
    if (i + 1 < spec.widths.size()) {  // linear final layer
      net.append(std::make_unique<BatchNormLayer>(name + ".bn", dim));
      net.append(std::make_unique<ReluLayer>());
    }
  }
  return net;
}

Net build_classifier_head(int in_dim, int classes, std::uint64_t init_seed) {
  require(in_dim >= 1 && classes >= 2, "build_classifier_head: bad dimensions");
  RngStream rng(init_seed);
  Net net;
  net.append(std::make_unique<BatchNormLayer>("head.bn", in_dim));
  net.append(std::make_unique<DenseLayer>("head.fc", in_dim, classes, rng));
  return net;
}

std::vector<Param*> BranchModels::all_params() const {
  std::vector<Param*> out;
  const auto append = [&out](const Net& net) {
    for (Param* p : net.params()) out.push_back(p);
  };
  for (const Net& net : primary_encoders) append(net);
  for (const Net& net : primary_projectors) append(net);
  append(privileged_encoder);
  append(privileged_projector);
  return out;
}

std::vector<Param*> BranchModels::all_buffers() const {
  std::vector<Param*> out;
  const auto append = [&out](const Net& net) {
    for (Param* p : net.buffers()) out.push_back(p);
  };
  for (const Net& net : primary_encoders) append(net);
  for (const Net& net : primary_projectors) append(net);
  append(privileged_encoder);
  append(privileged_projector);
  return out;
}

BranchModels build_models(const BranchTopology& topology, const EncoderSpec& primary,
                          const EncoderSpec& privileged, const ProjectorSpec& projector,
                          const ProjectorSpec& privileged_projector, std::uint64_t seed) {
  topology.validate();
  BranchModels models;
  models.topology = topology;
  models.primary_spec = primary;
  models.privileged_spec = privileged;
  models.projector_spec = projector;
  models.privileged_projector_spec = privileged_projector;
  models.seed = seed;

  const int encoder_count = topology.share_primary_weights ? 1 : topology.primary_branches;
  for (int i = 0; i < encoder_count; ++i) {
    EncoderSpec spec = primary;
    spec.init_seed = seed + static_cast<std::uint64_t>(i);
    models.primary_encoders.push_back(build_encoder(spec, "enc" + std::to_string(i)));
    models.primary_projectors.push_back(build_projector(
        projector, primary.representation_dim, topology.use_projectors,
        seed + 101 + static_cast<std::uint64_t>(i), "proj" + std::to_string(i)));
  }
  if (topology.privileged_branches == 1) {
    EncoderSpec spec = privileged;
    spec.init_seed = seed + 201;
    models.privileged_encoder = build_encoder(spec, "enc_priv");
    models.privileged_projector =
        build_projector(privileged_projector, privileged.representation_dim,
                        topology.use_projectors, seed + 301, "proj_priv");
  }
  return models;
}

RowMat images_to_conv_rows(const std::vector<const Image*>& images) {
  require(!images.empty(), "images_to_conv_rows: empty batch");
  const Image& first = *images.front();
  RowMat rows(static_cast<Eigen::Index>(images.size()) * first.height * first.width,
              first.channels);
  for (std::size_t s = 0; s < images.size(); ++s) {
    const Image& img = *images[s];
    require(img.same_shape(first), "images_to_conv_rows: inconsistent image shapes");
    const Eigen::Index base = static_cast<Eigen::Index>(s) * first.height * first.width;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < img.channels; ++c)
          rows(base + static_cast<Eigen::Index>(y) * img.width + x, c) = img.at(y, x, c);
  }
  return rows;
}

RowMat counts_to_rows(const std::vector<const VecF*>& counts) {
  require(!counts.empty(), "counts_to_rows: empty batch");
  const Eigen::Index genes = counts.front()->size();
  RowMat rows(static_cast<Eigen::Index>(counts.size()), genes);
  for (std::size_t s = 0; s < counts.size(); ++s) {
    require(counts[s]->size() == genes, "counts_to_rows: inconsistent vector lengths");
    rows.row(static_cast<Eigen::Index>(s)) = counts[s]->transpose();
  }
  return rows;
}

namespace {

Mat<float> to_embedding(const RowMat& rows) {
  return Mat<float>(rows);
}

}  // namespace

BranchForward forward_branches(const std::vector<const PairedSample*>& batch,
                               BranchModels& models, const AugmentPolicy& augment,
                               RngStream& rng, bool training) {
  require(!batch.empty(), "forward_branches: empty batch");
  models.topology.validate();
  const int n_primary = models.topology.primary_branches;
  const int n_privileged = models.topology.privileged_branches;

  BranchForward result;

  for (int b = 0; b < n_primary; ++b) {
    std::vector<Image> augmented;
    std::vector<const Image*> views;
    augmented.reserve(batch.size());
    for (const PairedSample* sample : batch) {
      if (augment.enabled)
        augmented.push_back(augment_image(sample->primary, augment.primary_image, rng));
      else
        augmented.push_back(identity_eval_transform(sample->primary));
      views.push_back(&augmented.back());
    }
    const RowMat input = images_to_conv_rows(views);

    Net& encoder = models.primary_encoder(b);
    Net& projector = models.primary_projector(b);
    Net::Tape enc_tape = encoder.make_tape();
    Net::Tape proj_tape = projector.make_tape();
    const RowMat reps = encoder.forward(input, enc_tape, training);
    const RowMat embeddings = projector.forward(reps, proj_tape, training);

    result.representations.push_back(reps);
    result.embeddings.primary.push_back(to_embedding(embeddings));
    result.encoder_tapes.push_back(std::move(enc_tape));
    result.projector_tapes.push_back(std::move(proj_tape));
  }

  if (n_privileged == 1) {
    const bool counts_branch = models.privileged_spec.kind == EncoderKind::kMlp;
    RowMat input;
    if (models.topology.privileged_from_primary) {
      require(!counts_branch,
              "forward_branches: privileged_from_primary needs an image encoder");
      std::vector<Image> augmented;
      std::vector<const Image*> views;
      augmented.reserve(batch.size());
      for (const PairedSample* sample : batch) {
        if (augment.enabled)
          augmented.push_back(augment_image(sample->primary, augment.primary_image, rng));
        else
          augmented.push_back(identity_eval_transform(sample->primary));
        views.push_back(&augmented.back());
      }
      input = images_to_conv_rows(views);
    } else if (counts_branch) {
      std::vector<VecF> augmented;
      std::vector<const VecF*> views;
      augmented.reserve(batch.size());
      for (const PairedSample* sample : batch) {
        require(sample->privileged_counts.size() > 0,
                "forward_branches: sample " + sample->id + " lacks privileged counts");
        if (augment.enabled)
          augmented.push_back(augment_counts(sample->privileged_counts, augment.gene, rng));
        else
          augmented.push_back(identity_eval_transform(sample->privileged_counts));
        views.push_back(&augmented.back());
      }
      input = counts_to_rows(views);
    } else {
      std::vector<Image> augmented;
      std::vector<const Image*> views;
      augmented.reserve(batch.size());
      for (const PairedSample* sample : batch) {
        require(sample->privileged_image.height > 0,
                "forward_branches: sample " + sample->id + " lacks a privileged image");
        if (augment.enabled)
          augmented.push_back(augment_image(sample->privileged_image, augment.privileged_image, rng));
        else
          augmented.push_back(identity_eval_transform(sample->privileged_image));
        views.push_back(&augmented.back());
      }
      input = images_to_conv_rows(views);
    }

    Net::Tape enc_tape = models.privileged_encoder.make_tape();
    Net::Tape proj_tape = models.privileged_projector.make_tape();
    const RowMat reps = models.privileged_encoder.forward(input, enc_tape, training);
    const RowMat embeddings = models.privileged_projector.forward(reps, proj_tape, training);

    result.representations.push_back(reps);
    result.embeddings.privileged.push_back(to_embedding(embeddings));
    result.encoder_tapes.push_back(std::move(enc_tape));
    result.projector_tapes.push_back(std::move(proj_tape));
  }

  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

nlohmann::json encoder_to_json(const EncoderSpec& spec) {
  return {
      {"kind", spec.kind == EncoderKind::kConvBackbone ? "conv_backbone" : "mlp"},
      {"input_height", spec.input_height},
      {"input_width", spec.input_width},
      {"input_channels", spec.input_channels},
      {"conv_channels", spec.conv_channels},
      {"input_dim", spec.input_dim},
      {"mlp_hidden", spec.mlp_hidden},
      {"representation_dim", spec.representation_dim},
  };
}

EncoderSpec encoder_from_json(const nlohmann::json& j) {
  EncoderSpec spec;
  spec.kind = j.at("kind") == "mlp" ? EncoderKind::kMlp : EncoderKind::kConvBackbone;
  spec.input_height = j.at("input_height");
  spec.input_width = j.at("input_width");
  spec.input_channels = j.at("input_channels");
  spec.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  spec.input_dim = j.at("input_dim");
  spec.mlp_hidden = j.at("mlp_hidden").get<std::vector<int>>();
  spec.representation_dim = j.at("representation_dim");
  return spec;
}

void add_net_arrays(ZipWriter& zip, nlohmann::json& index, const std::string& prefix,
                    const Net& net) {
  const auto add = [&](Param* p) {
    const std::string name = prefix + "/" + p->name;
    index[name] = {{"rows", p->value.rows()}, {"cols", p->value.cols()}};
    zip.add("arrays/" + name + ".bin", p->value.data(), sizeof(float) * p->value.size());
  };
  for (Param* p : net.params()) add(p);
  for (Param* p : net.buffers()) add(p);
}

void read_net_arrays(const ZipReader& zip, const nlohmann::json& index, const std::string& prefix,
                     Net& net) {
  const auto fill = [&](Param* p) {
    const std::string name = prefix + "/" + p->name;
    require(index.contains(name), "load_checkpoint: missing array " + name);
    const auto meta = index.at(name);
    require(meta.at("rows") == p->value.rows() && meta.at("cols") == p->value.cols(),
            "load_checkpoint: shape mismatch for " + name);
    const std::vector<char> bytes = zip.read("arrays/" + name + ".bin");
    require(bytes.size() == sizeof(float) * p->value.size(),
            "load_checkpoint: payload size mismatch for " + name);
    std::memcpy(p->value.data(), bytes.data(), bytes.size());
  };
  for (Param* p : net.params()) fill(p);
  for (Param* p : net.buffers()) fill(p);
}

}  // namespace

void save_checkpoint(const BranchModels& models, const std::string& path) {
  nlohmann::json manifest;
  manifest["format"] = "trident-checkpoint-v1";
  manifest["topology"] = {
      {"primary_branches", models.topology.primary_branches},
      {"privileged_branches", models.topology.privileged_branches},
      {"share_primary_weights", models.topology.share_primary_weights},
      {"use_projectors", models.topology.use_projectors},
      {"privileged_from_primary", models.topology.privileged_from_primary},
  };
  manifest["primary_spec"] = encoder_to_json(models.primary_spec);
  manifest["privileged_spec"] = encoder_to_json(models.privileged_spec);
  manifest["projector_spec"] = {{"widths", models.projector_spec.widths}};
  manifest["privileged_projector_spec"] = {{"widths", models.privileged_projector_spec.widths}};
  manifest["seed"] = models.seed;
  manifest["epoch"] = models.epoch;
  manifest["method_tag"] = models.method_tag;
  manifest["loss_tag"] = models.loss_tag;

  nlohmann::json index = nlohmann::json::object();
  ZipWriter zip(path);
  for (std::size_t i = 0; i < models.primary_encoders.size(); ++i) {
    add_net_arrays(zip, index, "primary_encoder_" + std::to_string(i), models.primary_encoders[i]);
    add_net_arrays(zip, index, "primary_projector_" + std::to_string(i),
                   models.primary_projectors[i]);
  }
  add_net_arrays(zip, index, "privileged_encoder", models.privileged_encoder);
  add_net_arrays(zip, index, "privileged_projector", models.privileged_projector);
  manifest["arrays"] = index;
  zip.add("manifest.json", manifest.dump(2) + "\n");
  zip.finish();
}

BranchModels load_checkpoint(const std::string& path) {
  const ZipReader zip(path);
  const nlohmann::json manifest = nlohmann::json::parse(zip.read_text("manifest.json"));
  require(manifest.at("format") == "trident-checkpoint-v1",
          "load_checkpoint: unrecognized checkpoint format");

  BranchTopology topology;
  const auto& topo = manifest.at("topology");
  topology.primary_branches = topo.at("primary_branches");
  topology.privileged_branches = topo.at("privileged_branches");
  topology.share_primary_weights = topo.at("share_primary_weights");
  topology.use_projectors = topo.at("use_projectors");
  topology.privileged_from_primary = topo.at("privileged_from_primary");

  BranchModels models = build_models(
      topology, encoder_from_json(manifest.at("primary_spec")),
      encoder_from_json(manifest.at("privileged_spec")),
      ProjectorSpec{manifest.at("projector_spec").at("widths").get<std::vector<int>>()},
      ProjectorSpec{manifest.at("privileged_projector_spec").at("widths").get<std::vector<int>>()},
      manifest.at("seed").get<std::uint64_t>());
  models.epoch = manifest.at("epoch");
  models.method_tag = manifest.value("method_tag", "");
  models.loss_tag = manifest.value("loss_tag", "");

  const nlohmann::json& index = manifest.at("arrays");
  for (std::size_t i = 0; i < models.primary_encoders.size(); ++i) {
    read_net_arrays(zip, index, "primary_encoder_" + std::to_string(i), models.primary_encoders[i]);
    read_net_arrays(zip, index, "primary_projector_" + std::to_string(i),
                    models.primary_projectors[i]);
  }
  read_net_arrays(zip, index, "privileged_encoder", models.privileged_encoder);
  read_net_arrays(zip, index, "privileged_projector", models.privileged_projector);
  return models;
}

}  // namespace trident
