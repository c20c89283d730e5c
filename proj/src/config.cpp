#include "trident/config.hpp"

#include "trident/io.hpp"

#include <nlohmann/json.hpp>

#include <set>

namespace trident {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  require(obj.is_object(), "run spec: " + where + " must be an object");
  for (const auto& [key, value] : obj.items())
    require(allowed.count(key) > 0, "run spec: unknown key '" + key + "' in " + where);
}

template <class T>
void maybe(const json& obj, const char* key, T& target) {
  if (obj.contains(key)) target = obj.at(key).get<T>();
}

void parse_image_aug(const json& obj, ImageAugmentConfig& cfg, const std::string& where) {
  check_keys(obj,
             {"flip_prob", "crop_scale_range", "gaussian_noise_prob", "gaussian_noise_std",
              "gaussian_noise_grid", "rotation_prob", "rotation_right_angles", "solarize_prob",
              "solarize_threshold", "color_jitter_prob", "brightness_delta", "contrast_delta",
              "saturation_delta", "hue_delta"},
             where);
  maybe(obj, "flip_prob", cfg.flip_prob);
  maybe(obj, "crop_scale_range", cfg.crop_scale_range);
  maybe(obj, "gaussian_noise_prob", cfg.gaussian_noise_prob);
  maybe(obj, "gaussian_noise_std", cfg.gaussian_noise_std);
  maybe(obj, "gaussian_noise_grid", cfg.gaussian_noise_grid);
  maybe(obj, "rotation_prob", cfg.rotation_prob);
  maybe(obj, "rotation_right_angles", cfg.rotation_right_angles);
  maybe(obj, "solarize_prob", cfg.solarize_prob);
  maybe(obj, "solarize_threshold", cfg.solarize_threshold);
  maybe(obj, "color_jitter_prob", cfg.color_jitter_prob);
  maybe(obj, "brightness_delta", cfg.brightness_delta);
  maybe(obj, "contrast_delta", cfg.contrast_delta);
  maybe(obj, "saturation_delta", cfg.saturation_delta);
  maybe(obj, "hue_delta", cfg.hue_delta);
}

json image_aug_to_json(const ImageAugmentConfig& cfg) {
  return {
      {"flip_prob", cfg.flip_prob},
      {"crop_scale_range", cfg.crop_scale_range},
      {"gaussian_noise_prob", cfg.gaussian_noise_prob},
      {"gaussian_noise_std", cfg.gaussian_noise_std},
      {"gaussian_noise_grid", cfg.gaussian_noise_grid},
      {"rotation_prob", cfg.rotation_prob},
      {"rotation_right_angles", cfg.rotation_right_angles},
      {"solarize_prob", cfg.solarize_prob},
      {"solarize_threshold", cfg.solarize_threshold},
      {"color_jitter_prob", cfg.color_jitter_prob},
      {"brightness_delta", cfg.brightness_delta},
      {"contrast_delta", cfg.contrast_delta},
      {"saturation_delta", cfg.saturation_delta},
      {"hue_delta", cfg.hue_delta},
  };
}

void parse_encoder(const json& obj, EncoderSpec& spec, const std::string& where) {
  check_keys(obj,
             {"kind", "input_height", "input_width", "input_channels", "conv_channels",
              "input_dim", "mlp_hidden", "representation_dim"},
             where);
  if (obj.contains("kind")) {
    const std::string kind = obj.at("kind");
    require(kind == "conv_backbone" || kind == "mlp", "run spec: unknown encoder kind " + kind);
    spec.kind = kind == "mlp" ? EncoderKind::kMlp : EncoderKind::kConvBackbone;
  }
  maybe(obj, "input_height", spec.input_height);
  maybe(obj, "input_width", spec.input_width);
  maybe(obj, "input_channels", spec.input_channels);
  maybe(obj, "conv_channels", spec.conv_channels);
  maybe(obj, "input_dim", spec.input_dim);
  maybe(obj, "mlp_hidden", spec.mlp_hidden);
  maybe(obj, "representation_dim", spec.representation_dim);
}

json encoder_to_json(const EncoderSpec& spec) {
  return {
      {"kind", spec.kind == EncoderKind::kMlp ? "mlp" : "conv_backbone"},
      {"input_height", spec.input_height},
      {"input_width", spec.input_width},
      {"input_channels", spec.input_channels},
      {"conv_channels", spec.conv_channels},
      {"input_dim", spec.input_dim},
      {"mlp_hidden", spec.mlp_hidden},
      {"representation_dim", spec.representation_dim},
  };
}

}  // namespace

BranchTopology topology_by_name(const std::string& name) {
  BranchTopology topology;
  if (name == "trident") {
    topology.primary_branches = 2;
    topology.privileged_branches = 1;
  } else if (name == "siamese-priv") {
    topology.primary_branches = 1;
    topology.privileged_branches = 1;
  } else if (name == "siamese-unpriv") {
    topology.primary_branches = 2;
    topology.privileged_branches = 0;
  } else if (name == "trident-unpriv") {
    topology.primary_branches = 2;
    topology.privileged_branches = 1;
    topology.privileged_from_primary = true;
  } else {
    throw contract_error("unknown topology '" + name +
                         "' (expected trident, siamese-priv, siamese-unpriv or trident-unpriv)");
  }
  return topology;
}

LossFamily loss_by_name(const std::string& name) {
  if (name == "vicreg") return LossFamily::kVicreg;
  if (name == "infonce") return LossFamily::kInfonce;
  throw contract_error("unknown loss '" + name + "' (expected vicreg or infonce)");
}

void RunSpec::resolve() {
  const bool share = train.topology.share_primary_weights;
  const bool projectors = train.topology.use_projectors;
  train.topology = topology_by_name(topology_name);
  train.topology.share_primary_weights = share;
  train.topology.use_projectors = projectors;
  train.loss.family = loss_by_name(loss_name);
  if (mode_name == "ssl")
    train.mode = TrainMode::kSslPretrain;
  else if (mode_name == "supervised")
    train.mode = TrainMode::kSupervised;
  else if (mode_name == "gene-regression")
    train.mode = TrainMode::kGeneRegression;
  else
    throw contract_error("unknown mode '" + mode_name + "'");
}

RunSpec parse_run_spec(const json& doc) {
  RunSpec spec;
  check_keys(doc,
             {"dataset", "output", "seed", "topology", "loss", "mode", "supervised_task",
              "synthetic", "train", "probe"},
             "top level");
  maybe(doc, "dataset", spec.dataset_root);
  maybe(doc, "output", spec.output_dir);
  if (doc.contains("seed")) {
    const std::uint64_t seed = doc.at("seed").get<std::uint64_t>();
    spec.train.seed = seed;
    spec.probe.seed = seed;
    spec.synthetic.seed = seed;
  }
  maybe(doc, "topology", spec.topology_name);
  maybe(doc, "loss", spec.loss_name);
  maybe(doc, "mode", spec.mode_name);
  if (doc.contains("supervised_task")) {
    const std::string task = doc.at("supervised_task");
    require(task.size() == 1 && (task[0] == 'a' || task[0] == 'b' || task[0] == 'c'),
            "run spec: supervised_task must be a, b or c");
    spec.supervised_task = task[0];
  }

  if (doc.contains("synthetic")) {
    const json& synth = doc.at("synthetic");
    check_keys(synth,
               {"image_size", "a_strong", "a_weak", "sigma_aug", "base_noise", "train_samples",
                "valid_samples", "test_samples", "privileged_mode", "counts_genes", "seed"},
               "synthetic");
    maybe(synth, "image_size", spec.synthetic.image_size);
    maybe(synth, "a_strong", spec.synthetic.a_strong);
    maybe(synth, "a_weak", spec.synthetic.a_weak);
    maybe(synth, "sigma_aug", spec.synthetic.sigma_aug);
    maybe(synth, "base_noise", spec.synthetic.base_noise);
    maybe(synth, "train_samples", spec.synthetic.train_samples);
    maybe(synth, "valid_samples", spec.synthetic.valid_samples);
    maybe(synth, "test_samples", spec.synthetic.test_samples);
    maybe(synth, "counts_genes", spec.synthetic.counts_genes);
    maybe(synth, "seed", spec.synthetic.seed);
    if (synth.contains("privileged_mode")) {
      const std::string mode = synth.at("privileged_mode");
      require(mode == "image" || mode == "counts", "run spec: privileged_mode must be image or counts");
      spec.synthetic.privileged_mode =
          mode == "counts" ? PrivilegedMode::kCounts : PrivilegedMode::kImage;
    }
  }

  if (doc.contains("train")) {
    const json& train = doc.at("train");
    check_keys(train,
               {"epochs", "batch_size", "max_lr", "warmup_fraction", "share_primary_weights",
                "use_projectors", "lambda", "mu", "nu", "gamma", "epsilon", "tau",
                "ordered_pairs", "class_weighting", "encoder", "privileged_encoder",
                "projector_widths", "privileged_projector_widths", "augment_enabled", "augment",
                "privileged_augment", "gene_mask_prob_range", "gene_shuffle_prob_range"},
               "train");
    maybe(train, "epochs", spec.train.epochs);
    maybe(train, "batch_size", spec.train.batch_size);
    maybe(train, "max_lr", spec.train.max_lr);
    maybe(train, "warmup_fraction", spec.train.warmup_fraction);
    maybe(train, "share_primary_weights", spec.train.topology.share_primary_weights);
    maybe(train, "use_projectors", spec.train.topology.use_projectors);
    maybe(train, "lambda", spec.train.loss.lambda);
    maybe(train, "mu", spec.train.loss.mu);
    maybe(train, "nu", spec.train.loss.nu);
    maybe(train, "gamma", spec.train.loss.gamma);
    maybe(train, "epsilon", spec.train.loss.epsilon);
    maybe(train, "tau", spec.train.loss.tau);
    if (train.contains("ordered_pairs"))
      spec.train.loss.pairs = train.at("ordered_pairs").get<bool>() ? PairReduction::kOrdered
                                                                    : PairReduction::kUnordered;
    maybe(train, "class_weighting", spec.train.class_weighting);
    if (train.contains("encoder")) parse_encoder(train.at("encoder"), spec.train.encoder, "train.encoder");
    if (train.contains("privileged_encoder"))
      parse_encoder(train.at("privileged_encoder"), spec.train.privileged_encoder,
                    "train.privileged_encoder");
    maybe(train, "projector_widths", spec.train.projector.widths);
    maybe(train, "privileged_projector_widths", spec.train.privileged_projector.widths);
    if (train.contains("augment")) {
      spec.train.augment.enabled = true;
      parse_image_aug(train.at("augment"), spec.train.augment.primary_image, "train.augment");
    }
    maybe(train, "augment_enabled", spec.train.augment.enabled);
    if (train.contains("privileged_augment")) {
      parse_image_aug(train.at("privileged_augment"), spec.train.augment.privileged_image,
                      "train.privileged_augment");
    }
    maybe(train, "gene_mask_prob_range", spec.train.augment.gene.mask_prob_range);
    maybe(train, "gene_shuffle_prob_range", spec.train.augment.gene.shuffle_prob_range);
  }

  if (doc.contains("probe")) {
    const json& probe = doc.at("probe");
    check_keys(probe,
               {"epochs", "class_weighting", "fractions", "batch_size", "max_lr",
                "warmup_fraction", "augment_enabled", "augment"},
               "probe");
    maybe(probe, "epochs", spec.probe.epochs);
    maybe(probe, "class_weighting", spec.probe.class_weighting);
    maybe(probe, "fractions", spec.probe_fractions);
    maybe(probe, "batch_size", spec.probe.batch_size);
    maybe(probe, "max_lr", spec.probe.max_lr);
    maybe(probe, "warmup_fraction", spec.probe.warmup_fraction);
    if (probe.contains("augment")) {
      spec.probe.augment.enabled = true;
      parse_image_aug(probe.at("augment"), spec.probe.augment.primary_image, "probe.augment");
    }
    maybe(probe, "augment_enabled", spec.probe.augment.enabled);
  }

  spec.resolve();
  return spec;
}

json run_spec_to_json(const RunSpec& spec) {
  json doc;
  doc["dataset"] = spec.dataset_root;
  doc["output"] = spec.output_dir;
  doc["seed"] = spec.train.seed;
  doc["topology"] = spec.topology_name;
  doc["loss"] = spec.loss_name;
  doc["mode"] = spec.mode_name;
  doc["supervised_task"] = std::string(1, spec.supervised_task);

  doc["synthetic"] = {
      {"image_size", spec.synthetic.image_size},
      {"a_strong", spec.synthetic.a_strong},
      {"a_weak", spec.synthetic.a_weak},
      {"sigma_aug", spec.synthetic.sigma_aug},
      {"base_noise", spec.synthetic.base_noise},
      {"train_samples", spec.synthetic.train_samples},
      {"valid_samples", spec.synthetic.valid_samples},
      {"test_samples", spec.synthetic.test_samples},
      {"privileged_mode",
       spec.synthetic.privileged_mode == PrivilegedMode::kCounts ? "counts" : "image"},
      {"counts_genes", spec.synthetic.counts_genes},
      {"seed", spec.synthetic.seed},
  };

  doc["train"] = {
      {"epochs", spec.train.epochs},
      {"batch_size", spec.train.batch_size},
      {"max_lr", spec.train.max_lr},
      {"warmup_fraction", spec.train.warmup_fraction},
      {"share_primary_weights", spec.train.topology.share_primary_weights},
      {"use_projectors", spec.train.topology.use_projectors},
      {"lambda", spec.train.loss.lambda},
      {"mu", spec.train.loss.mu},
      {"nu", spec.train.loss.nu},
      {"gamma", spec.train.loss.gamma},
      {"epsilon", spec.train.loss.epsilon},
      {"tau", spec.train.loss.tau},
      {"ordered_pairs", spec.train.loss.pairs == PairReduction::kOrdered},
      {"class_weighting", spec.train.class_weighting},
      {"augment_enabled", spec.train.augment.enabled},
      {"encoder", encoder_to_json(spec.train.encoder)},
      {"privileged_encoder", encoder_to_json(spec.train.privileged_encoder)},
      {"projector_widths", spec.train.projector.widths},
      {"privileged_projector_widths", spec.train.privileged_projector.widths},
      {"augment", image_aug_to_json(spec.train.augment.primary_image)},
      {"privileged_augment", image_aug_to_json(spec.train.augment.privileged_image)},
      {"gene_mask_prob_range", spec.train.augment.gene.mask_prob_range},
      {"gene_shuffle_prob_range", spec.train.augment.gene.shuffle_prob_range},
  };

  doc["probe"] = {
      {"epochs", spec.probe.epochs},
      {"class_weighting", spec.probe.class_weighting},
      {"fractions", spec.probe_fractions},
      {"batch_size", spec.probe.batch_size},
      {"max_lr", spec.probe.max_lr},
      {"warmup_fraction", spec.probe.warmup_fraction},
      {"augment_enabled", spec.probe.augment.enabled},
      {"augment", image_aug_to_json(spec.probe.augment.primary_image)},
  };
  return doc;
}

RunSpec load_run_spec(const std::string& path) {
  return parse_run_spec(json::parse(read_text_file(path)));
}

void archive_run_spec(const RunSpec& spec, const std::string& path) {
  write_text_file(path, run_spec_to_json(spec).dump(2) + "\n");
}

}  // namespace trident
