// Command-line front end: dataset generation, pretraining, probing,
// correlation analysis, attribution maps and report emission.

#include "trident/config.hpp"
#include "trident/eval.hpp"
#include "trident/io.hpp"
#include "trident/plot.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace trident;

namespace {

// TRIDENT_OUT, when set, roots every relative output path.
fs::path resolve_out(const std::string& out) {
  const char* root = std::getenv("TRIDENT_OUT");
  fs::path path(out);
  if (root && *root && path.is_relative()) return fs::path(root) / path;
  return path;
}

// every command archives its effective invocation next to its outputs
void archive_invocation(const fs::path& dir, const nlohmann::json& doc) {
  fs::create_directories(dir);
  write_text_file((dir / "invocation.json").string(), doc.dump(2) + "\n");
}

std::vector<PairedSample> load_split(const std::string& data_root, const std::string& split) {
  const PairedManifest manifest = read_manifest(data_root);
  std::vector<PairedSample> samples = load_paired(manifest, split);
  require(!samples.empty(), "dataset " + data_root + " has no '" + split + "' samples");
  return samples;
}

int infer_classes(const std::vector<PairedSample>& samples, char task) {
  int classes = 0;
  for (const PairedSample& s : samples) classes = std::max(classes, label_of(s, task) + 1);
  require(classes >= 2, "task '" + std::string(1, task) + "' has fewer than two classes");
  return classes;
}

std::string derive_method(const BranchTopology& topology) {
  if (topology.privileged_branches == 1 && topology.primary_branches == 2)
    return topology.privileged_from_primary ? "trident-unpriv" : "trident";
  if (topology.privileged_branches == 1) return "siamese-priv";
  return "siamese-unpriv";
}

// Input geometry comes from the data; the archived config carries the
// resolved values so a run is reproducible from that copy alone.
void fit_specs_to_data(RunSpec& spec, const std::vector<PairedSample>& train) {
  const Image& primary = train.front().primary;
  spec.train.encoder.input_height = primary.height;
  spec.train.encoder.input_width = primary.width;
  spec.train.encoder.input_channels = primary.channels;
  if (train.front().privileged_counts.size() > 0) {
    spec.train.privileged_encoder.kind = EncoderKind::kMlp;
    spec.train.privileged_encoder.input_dim =
        static_cast<int>(train.front().privileged_counts.size());
  } else if (train.front().privileged_image.height > 0) {
    spec.train.privileged_encoder.kind = EncoderKind::kConvBackbone;
    spec.train.privileged_encoder.input_height = train.front().privileged_image.height;
    spec.train.privileged_encoder.input_width = train.front().privileged_image.width;
    spec.train.privileged_encoder.input_channels = train.front().privileged_image.channels;
  }
}

int cmd_synth(const std::string& config, const std::string& out,
              std::optional<std::uint64_t> seed) {
  RunSpec spec = config.empty() ? RunSpec{} : load_run_spec(config);
  if (seed) spec.synthetic.seed = *seed;

  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);
  const SyntheticDataset dataset = generate_synthetic(spec.synthetic);
  save_dataset(dataset, out_dir.string());
  archive_run_spec(spec, (out_dir / "config.json").string());

  std::map<std::string, long> split_counts;
  std::map<int, long> class_counts;
  for (const PairedSample& s : dataset.samples) {
    ++split_counts[s.split];
    ++class_counts[s.label_a];
  }
  long total = 0;
  std::cout << "dataset written to " << out_dir.string() << "\n";
  for (const auto& [split, count] : split_counts) {
    std::cout << "  " << split << ": " << count << " samples\n";
    total += count;
  }
  std::cout << "  factor-a histogram:";
  for (const auto& [label, count] : class_counts) std::cout << " " << label << ":" << count;
  std::cout << " (total " << total << ")\n";
  return 0;
}

int cmd_pretrain(const std::string& config, const std::string& data, const std::string& out,
                 const std::string& topology, const std::string& loss,
                 std::optional<std::uint64_t> seed) {
  RunSpec spec = config.empty() ? RunSpec{} : load_run_spec(config);
  if (!topology.empty()) spec.topology_name = topology;
  if (!loss.empty()) spec.loss_name = loss;
  if (seed) {
    spec.train.seed = *seed;
    spec.probe.seed = *seed;
  }
  spec.resolve();
  if (!data.empty()) spec.dataset_root = data;
  require(!spec.dataset_root.empty(), "no dataset given (flag --data or config key 'dataset')");

  const std::vector<PairedSample> train = load_split(spec.dataset_root, "train");
  fit_specs_to_data(spec, train);

  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);
  archive_run_spec(spec, (out_dir / "config.json").string());

  const std::string checkpoint_path = (out_dir / "checkpoint.zip").string();
  const std::string trace_path = (out_dir / "trace.csv").string();

  TrainTrace trace;
  try {
    if (spec.train.mode == TrainMode::kSslPretrain) {
      PretrainResult result = pretrain(train, spec.train);
      trace = std::move(result.trace);
      result.models.method_tag = derive_method(result.models.topology);
      result.models.loss_tag = spec.loss_name;
      save_checkpoint(result.models, checkpoint_path);
      std::cout << "pretrained " << result.models.method_tag << "/" << spec.loss_name << " for "
                << spec.train.epochs << " epochs; final mean embedding std "
                << trace.epoch_mean_std.back() << "\n";
    } else if (spec.train.mode == TrainMode::kSupervised) {
      SupervisedResult result = train_supervised(train, spec.supervised_task,
                                                 infer_classes(train, spec.supervised_task),
                                                 spec.train);
      trace = std::move(result.trace);
      result.models.method_tag = "supervised";
      result.models.loss_tag = "cross-entropy";
      save_checkpoint(result.models, checkpoint_path);
      std::cout << "supervised baseline trained; final train accuracy " << result.train_accuracy
                << "\n";
    } else {
      RegressionResult result = train_gene_regressor(train, spec.train);
      trace = std::move(result.trace);
      result.models.method_tag = "gene-regression";
      result.models.loss_tag = "mse";
      save_checkpoint(result.models, checkpoint_path);
      std::cout << "direct regression baseline trained; final mse " << result.final_mse << "\n";
    }
  } catch (const TrainAbortError& err) {
    err.trace.to_csv(trace_path);
    std::cerr << "error: " << err.what() << " (trace written to " << trace_path << ")\n";
    return 2;
  }
  trace.to_csv(trace_path);
  std::cout << "checkpoint: " << checkpoint_path << "\ntrace: " << trace_path << "\n";
  return 0;
}

int cmd_probe(const std::string& checkpoint, const std::string& data, const std::string& task_str,
              const std::string& fractions_str, const std::string& out,
              std::optional<std::uint64_t> seed, std::optional<int> epochs,
              bool class_weighting, double noise_std) {
  require(task_str.size() == 1, "task must be one of a, b, c");
  const char task = task_str[0];

  BranchModels models = load_checkpoint(checkpoint);
  const std::vector<PairedSample> train = load_split(data, "train");
  const std::vector<PairedSample> test = load_split(data, "test");
  const int classes = infer_classes(train, task);

  ProbeConfig cfg;
  cfg.epochs = epochs ? *epochs : std::max(1, models.epoch);
  cfg.class_weighting = class_weighting;
  if (seed) cfg.seed = *seed;
  if (noise_std > 0.0) {
    cfg.augment.enabled = true;
    cfg.augment.primary_image = ImageAugmentConfig::noise_only(noise_std);
  }

  std::vector<double> fractions;
  std::istringstream in(fractions_str);
  std::string token;
  while (std::getline(in, token, ',')) fractions.push_back(std::stod(token));
  require(!fractions.empty(), "no fractions given");

  const std::string method =
      models.method_tag.empty() ? derive_method(models.topology) : models.method_tag;
  std::vector<SuiteEntry> entries;
  for (double fraction : fractions) {
    ProbeConfig fraction_cfg = cfg;
    fraction_cfg.fraction = fraction;
    const ProbeResult result = train_probe(models, train, test, task, classes, fraction_cfg);
    entries.push_back({method, models.topology.privileged_branches == 1, models.loss_tag,
                       std::string(1, task), fraction, result.accuracy});
    std::cout << method << " task=" << task << " fraction=" << fraction << " accuracy="
              << result.accuracy << " (head trained on " << result.train_samples_used
              << " samples)\n";
  }

  const fs::path out_path = resolve_out(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_suite_csv(out_path.string(), entries);
  archive_invocation(out_path.parent_path().empty() ? "." : out_path.parent_path(),
                     {{"command", "probe"},
                      {"checkpoint", checkpoint},
                      {"data", data},
                      {"task", std::string(1, task)},
                      {"fractions", fractions},
                      {"epochs", cfg.epochs},
                      {"seed", cfg.seed},
                      {"class_weighting", cfg.class_weighting},
                      {"augment_noise", noise_std},
                      {"out", out_path.string()}});
  std::cout << "results: " << out_path.string() << "\n";
  return 0;
}

int cmd_correlate(const std::string& checkpoint, const std::string& data, const std::string& out,
                  const std::string& split) {
  BranchModels models = load_checkpoint(checkpoint);
  const std::vector<PairedSample> samples = load_split(data, split);
  require(samples.front().privileged_counts.size() > 0,
          "correlate needs a counts-mode dataset (no gene vectors found)");

  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);

  const RepresentationMatrix reps = extract_representations(models, samples, checkpoint);
  std::vector<const VecF*> count_rows;
  count_rows.reserve(samples.size());
  for (const PairedSample& s : samples) count_rows.push_back(&s.privileged_counts);
  const RowMat counts = counts_to_rows(count_rows);

  const CorrelationReport report = gene_correlations(reps.values, counts);

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"gene", "score", "argmax_element"});
  for (Eigen::Index g = 0; g < report.scores.size(); ++g) {
    std::ostringstream score;
    score.precision(8);
    score << report.scores[g];
    rows.push_back({std::to_string(g), score.str(),
                    std::to_string(report.argmax[static_cast<std::size_t>(g)])});
  }
  write_csv((out_dir / "gene_correlations.csv").string(), rows);
  write_histogram_svg((out_dir / "correlation_histogram.svg").string(), report.histogram,
                      "max |correlation| per gene", "score");
  write_representations((out_dir / "representations").string(), reps);

  std::vector<std::vector<std::string>> labels;
  labels.push_back({"id", "label_a", "label_b", "label_c"});
  for (const PairedSample& s : samples)
    labels.push_back({s.id, std::to_string(s.label_a), std::to_string(s.label_b),
                      std::to_string(s.label_c)});
  write_csv((out_dir / "labels.csv").string(), labels);

  archive_invocation(out_dir, {{"command", "correlate"},
                               {"checkpoint", checkpoint},
                               {"data", data},
                               {"split", split},
                               {"out", out_dir.string()}});
  std::cout << "genes: " << report.scores.size() << ", histogram bins: "
            << report.histogram.counts.size() << "\nreport: " << out_dir.string() << "\n";
  return 0;
}

int cmd_attribute(const std::string& checkpoint, const std::string& data, const std::string& out,
                  const std::string& split, int limit) {
  BranchModels models = load_checkpoint(checkpoint);
  const std::vector<PairedSample> samples = load_split(data, split);
  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);

  const int count = std::min<int>(limit, static_cast<int>(samples.size()));
  for (int i = 0; i < count; ++i) {
    const Image heat = gradcam_sum(models.primary_encoders[0], samples[static_cast<std::size_t>(i)].primary);
    write_png((out_dir / ("attribution_" + samples[static_cast<std::size_t>(i)].id + ".png")).string(),
              heat);
  }
  archive_invocation(out_dir, {{"command", "attribute"},
                               {"checkpoint", checkpoint},
                               {"data", data},
                               {"split", split},
                               {"limit", limit},
                               {"out", out_dir.string()}});
  std::cout << "wrote " << count << " attribution maps to " << out_dir.string() << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  require(!inputs.empty(), "no input result files given");
  std::vector<SuiteEntry> entries;
  for (const std::string& path : inputs)
    for (SuiteEntry& e : read_suite_csv(path)) entries.push_back(std::move(e));

  const fs::path out_dir = resolve_out(out);
  fs::create_directories(out_dir);
  write_suite_csv((out_dir / "report.csv").string(), entries);

  // comparison table on stdout, one line per (method, loss, task)
  std::map<std::string, std::map<double, double>> by_key;
  std::set<std::string> tasks;
  for (const SuiteEntry& e : entries) {
    by_key[e.method + "/" + e.loss + "/task-" + e.task][e.fraction] = e.accuracy;
    tasks.insert(e.task);
  }
  for (const auto& [key, sweep] : by_key) {
    std::cout << key << ":";
    for (const auto& [fraction, accuracy] : sweep)
      std::cout << "  " << fraction << "->" << accuracy;
    std::cout << "\n";
  }

  // accuracy-vs-fraction curves per task
  for (const std::string& task : tasks) {
    std::vector<PlotSeries> series;
    for (const auto& [key, sweep] : by_key) {
      if (key.find("task-" + task) == std::string::npos) continue;
      PlotSeries s;
      s.label = key.substr(0, key.find("/task-"));
      for (const auto& [fraction, accuracy] : sweep) {
        s.x.push_back(fraction);
        s.y.push_back(accuracy);
      }
      if (s.x.size() >= 1) series.push_back(std::move(s));
    }
    if (series.empty()) continue;
    write_line_chart_svg((out_dir / ("accuracy_vs_fraction_task_" + task + ".svg")).string(),
                         series, "classifier data fraction sweep (task " + task + ")",
                         "fraction", "accuracy", true);
  }
  archive_invocation(out_dir, {{"command", "report"}, {"inputs", inputs},
                               {"out", out_dir.string()}});
  std::cout << "report: " << out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-branch privileged-information self-supervised learning"};
  app.require_subcommand(1);

  std::string config, data, out, topology, loss, task = "b", split = "test";
  std::string fractions = "1.0";
  std::vector<std::string> inputs;
  std::uint64_t seed_value = 0;
  int epochs_value = 0, limit = 16;
  bool class_weighting = false;
  double noise_std = 0.0;
  bool seed_given = false, epochs_given = false;

  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic paired dataset");
  synth->add_option("--config", config, "run-spec JSON file");
  synth->add_option("--out", out, "output dataset directory")->required();
  synth->add_option("--seed", seed_value, "override the generator seed")
      ->each([&](const std::string&) { seed_given = true; });

  CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "pretrain encoders on paired data");
  pretrain_cmd->add_option("--config", config, "run-spec JSON file");
  pretrain_cmd->add_option("--data", data, "dataset root (overrides config)");
  pretrain_cmd->add_option("--out", out, "output directory")->required();
  pretrain_cmd->add_option("--topology", topology,
                           "trident | siamese-priv | siamese-unpriv | trident-unpriv");
  pretrain_cmd->add_option("--loss", loss, "vicreg | infonce");
  pretrain_cmd->add_option("--seed", seed_value, "override the training seed")
      ->each([&](const std::string&) { seed_given = true; });

  CLI::App* probe = app.add_subcommand("probe", "train a frozen-encoder linear probe");
  probe->add_option("--checkpoint", config, "checkpoint archive")->required();
  probe->add_option("--data", data, "dataset root")->required();
  probe->add_option("--task", task, "label to probe: a | b | c")->capture_default_str();
  probe->add_option("--fractions", fractions, "comma-separated training fractions")
      ->capture_default_str();
  probe->add_option("--out", out, "results CSV path")->required();
  probe->add_option("--seed", seed_value, "probe seed")
      ->each([&](const std::string&) { seed_given = true; });
  probe->add_option("--epochs", epochs_value, "head training epochs (default: encoder epochs)")
      ->each([&](const std::string&) { epochs_given = true; });
  probe->add_flag("--class-weighting", class_weighting, "proportional class weights");
  probe->add_option("--augment-noise", noise_std, "train the head under gaussian noise of this std")
      ->capture_default_str();

  CLI::App* correlate = app.add_subcommand("correlate", "representation-gene correlation report");
  correlate->add_option("--checkpoint", config, "checkpoint archive")->required();
  correlate->add_option("--data", data, "counts-mode dataset root")->required();
  correlate->add_option("--out", out, "output directory")->required();
  correlate->add_option("--split", split, "dataset split to analyse")->capture_default_str();

  CLI::App* attribute = app.add_subcommand("attribute", "summed-gradient attribution heatmaps");
  attribute->add_option("--checkpoint", config, "checkpoint archive")->required();
  attribute->add_option("--data", data, "dataset root")->required();
  attribute->add_option("--out", out, "output directory")->required();
  attribute->add_option("--split", split, "dataset split to render")->capture_default_str();
  attribute->add_option("--limit", limit, "maximum number of images")->capture_default_str();

  CLI::App* report = app.add_subcommand("report", "merge probe results into tables and plots");
  report->add_option("--inputs", inputs, "result CSV files")->required()->delimiter(',');
  report->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  const std::optional<std::uint64_t> seed =
      seed_given ? std::optional<std::uint64_t>(seed_value) : std::nullopt;
  const std::optional<int> epochs =
      epochs_given ? std::optional<int>(epochs_value) : std::nullopt;

  try {
    if (synth->parsed()) return cmd_synth(config, out, seed);
    if (pretrain_cmd->parsed()) return cmd_pretrain(config, data, out, topology, loss, seed);
    if (probe->parsed())
      return cmd_probe(config, data, task, fractions, out, seed, epochs, class_weighting,
                       noise_std);
    if (correlate->parsed()) return cmd_correlate(config, data, out, split);
    if (attribute->parsed()) return cmd_attribute(config, data, out, split, limit);
    if (report->parsed()) return cmd_report(inputs, out);
  } catch (const TrainAbortError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const contract_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
