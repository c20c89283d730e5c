#include "trident/eval.hpp"

#include "trident/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>

namespace trident {

void ProbeConfig::validate() const {
  require(epochs >= 1, "ProbeConfig: epochs must be >= 1");
  require(fraction > 0.0 && fraction <= 1.0, "ProbeConfig: fraction must lie in (0, 1]");
  require(batch_size >= 2, "ProbeConfig: batch_size must be >= 2");
  require(max_lr > 0.0, "ProbeConfig: max_lr must be > 0");
}

std::vector<std::size_t> stratified_subsample(const std::vector<int>& labels, double fraction,
                                              std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 1.0, "stratified_subsample: fraction out of range");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  RngStream rng(seed);
  std::vector<std::size_t> chosen;
  for (auto& [label, members] : by_class) {
    rng.shuffle(members);
    const std::size_t take =
        static_cast<std::size_t>(std::lround(fraction * static_cast<double>(members.size())));
    if (take == 0)
      std::cerr << "warning: class " << label << " vanished from the " << fraction
                << " subsample\n";
    for (std::size_t i = 0; i < take; ++i) chosen.push_back(members[i]);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

ProbeResult train_probe(BranchModels& models, const std::vector<PairedSample>& train,
                        const std::vector<PairedSample>& test, char task, int classes,
                        const ProbeConfig& cfg) {
  cfg.validate();
  require(classes >= 2, "train_probe: need at least two classes");
  require(!test.empty(), "train_probe: empty test split");

  std::vector<int> labels;
  labels.reserve(train.size());
  for (const PairedSample& s : train) {
    const int y = label_of(s, task);
    require(y >= 0, "train_probe: sample " + s.id + " lacks a label for the task");
    labels.push_back(y);
  }

  const std::vector<std::size_t> subset = stratified_subsample(labels, cfg.fraction, cfg.seed);
  require(!subset.empty(), "train_probe: subsample is empty");

  std::vector<double> weights;
  if (cfg.class_weighting) {
    std::vector<int> subset_labels;
    subset_labels.reserve(subset.size());
    for (std::size_t i : subset) subset_labels.push_back(labels[i]);
    weights = proportional_class_weights(subset_labels, classes);
  }

  Net& encoder = models.primary_encoders[0];
  ProbeResult result;
  result.train_samples_used = subset.size();
  result.head =
      build_classifier_head(models.primary_spec.representation_dim, classes, cfg.seed + 17);

  std::vector<Param*> head_params = result.head.params();
  AdamOptimizer optimizer(head_params);

  RngStream seed_root(cfg.seed);
  RngStream shuffle_rng = seed_root.fork(1);
  RngStream aug_rng = seed_root.fork(2);

  const std::size_t batch =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), subset.size());
  const long steps_per_epoch = std::max<long>(1, static_cast<long>(subset.size() / batch));
  const long total_steps = steps_per_epoch * cfg.epochs;
  long global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = subset;
    shuffle_rng.shuffle(order);
    for (long s = 0; s < steps_per_epoch; ++s) {
      std::vector<const Image*> views;
      std::vector<Image> augmented;
      std::vector<int> batch_labels;
      augmented.reserve(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        const PairedSample& sample = train[order[static_cast<std::size_t>(s) * batch + i]];
        if (cfg.augment.enabled)
          augmented.push_back(augment_image(sample.primary, cfg.augment.primary_image, aug_rng));
        else
          augmented.push_back(sample.primary);
        views.push_back(&augmented.back());
        batch_labels.push_back(label_of(sample, task));
      }

      // encoder frozen: inference mode, gradients stop at the head input
      Net::Tape enc_tape = encoder.make_tape();
      const RowMat reps = encoder.forward(images_to_conv_rows(views), enc_tape, false);
      Net::Tape head_tape = result.head.make_tape();
      const RowMat logits = result.head.forward(reps, head_tape, true);

      RowMat grad;
      softmax_cross_entropy(logits, batch_labels, weights, grad);
      optimizer.zero_grads();
      result.head.backward(grad, head_tape);
      optimizer.step(lr_schedule(global_step, total_steps, cfg.max_lr, cfg.warmup_fraction));
      ++global_step;
    }
  }

  // top-1 accuracy on the untouched test split, evaluated without augmentation
  long correct = 0;
  for (std::size_t begin = 0; begin < test.size(); begin += 256) {
    const std::size_t count = std::min<std::size_t>(256, test.size() - begin);
    std::vector<const Image*> views;
    views.reserve(count);
    for (std::size_t i = 0; i < count; ++i) views.push_back(&test[begin + i].primary);
    Net::Tape enc_tape = encoder.make_tape();
    const RowMat reps = encoder.forward(images_to_conv_rows(views), enc_tape, false);
    Net::Tape head_tape = result.head.make_tape();
    const RowMat logits = result.head.forward(reps, head_tape, false);
    for (std::size_t i = 0; i < count; ++i) {
      Eigen::Index argmax;
      logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&argmax);
      if (static_cast<int>(argmax) == label_of(test[begin + i], task)) ++correct;
    }
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  return result;
}

// ---------------------------------------------------------------------------
// Representations
// ---------------------------------------------------------------------------

RepresentationMatrix extract_representations(BranchModels& models,
                                             const std::vector<PairedSample>& data,
                                             const std::string& checkpoint_id, int batch_size) {
  require(!data.empty(), "extract_representations: empty dataset");
  Net& encoder = models.primary_encoders[0];
  RepresentationMatrix out;
  out.checkpoint_id = checkpoint_id;
  out.sample_ids.reserve(data.size());
  for (const PairedSample& s : data) out.sample_ids.push_back(s.id);

  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t count =
        std::min<std::size_t>(static_cast<std::size_t>(batch_size), data.size() - begin);
    std::vector<const Image*> views;
    views.reserve(count);
    for (std::size_t i = 0; i < count; ++i) views.push_back(&data[begin + i].primary);
    Net::Tape tape = encoder.make_tape();
    const RowMat chunk = encoder.forward(images_to_conv_rows(views), tape, false);
    if (out.values.size() == 0)
      out.values = RowMat(static_cast<Eigen::Index>(data.size()), chunk.cols());
    out.values.middleRows(static_cast<Eigen::Index>(begin), chunk.rows()) = chunk;
  }
  return out;
}

void write_representations(const std::string& base_path, const RepresentationMatrix& reps) {
  nlohmann::json meta;
  meta["sample_ids"] = reps.sample_ids;
  meta["checkpoint_id"] = reps.checkpoint_id;
  write_matrix(base_path, reps.values, meta);
}

RepresentationMatrix read_representations(const std::string& base_path) {
  RepresentationMatrix reps;
  nlohmann::json meta;
  reps.values = read_matrix(base_path, &meta);
  reps.sample_ids = meta.at("sample_ids").get<std::vector<std::string>>();
  reps.checkpoint_id = meta.at("checkpoint_id").get<std::string>();
  return reps;
}

// ---------------------------------------------------------------------------
// Correlation analysis
// ---------------------------------------------------------------------------

namespace {

// Columns standardized to zero mean, unit norm; zero-variance columns are
// left as all-zero so their correlations vanish.
MatD standardize_columns(const RowMat& m) {
  MatD out = m.cast<double>();
  const Eigen::RowVectorXd mean = out.colwise().mean();
  out.rowwise() -= mean;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double norm = out.col(j).norm();
    if (norm > 0.0)
      out.col(j) /= norm;
    else
      out.col(j).setZero();
  }
  return out;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

CorrelationReport gene_correlations(const RowMat& representations, const RowMat& counts) {
  require(representations.rows() == counts.rows(),
          "gene_correlations: sample counts must match");
  require(representations.rows() >= 3, "gene_correlations: need at least 3 samples");
  require(representations.cols() >= 1 && counts.cols() >= 1,
          "gene_correlations: empty matrices");

  const MatD reps = standardize_columns(representations);
  const MatD genes = standardize_columns(counts);
  const MatD corr = genes.transpose() * reps;  // G x D, entries in [-1, 1]

  CorrelationReport report;
  report.scores = VecD(corr.rows());
  report.argmax.resize(static_cast<std::size_t>(corr.rows()));
  for (Eigen::Index g = 0; g < corr.rows(); ++g) {
    double best = -1.0;
    int best_j = 0;
    for (Eigen::Index j = 0; j < corr.cols(); ++j) {
      const double value = std::min(1.0, std::abs(corr(g, j)));
      if (value > best) {  // strict: ties keep the lowest element index
        best = value;
        best_j = static_cast<int>(j);
      }
    }
    report.scores[g] = best;
    report.argmax[static_cast<std::size_t>(g)] = best_j;
  }
  report.histogram = correlation_histogram(report.scores);
  return report;
}

int histogram_bin_count(const VecD& values) {
  require(values.size() >= 2, "histogram_bin_count: need at least 2 values");
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  const int sturges = static_cast<int>(std::ceil(std::log2(n))) + 1;
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  const double range = sorted.back() - sorted.front();
  if (iqr <= 0.0 || range <= 0.0) return sturges;
  const int fd = static_cast<int>(std::ceil(range * std::cbrt(n) / (2.0 * iqr)));
  return std::max(sturges, fd);
}

Histogram correlation_histogram(const VecD& scores) {
  require(scores.size() >= 1, "correlation_histogram: empty score vector");
  if (scores.size() == 1) {
    Histogram single;
    single.edges = {scores[0] - 0.5, scores[0] + 0.5};
    single.counts = {1};
    return single;
  }
  const int bins = histogram_bin_count(scores);
  const double lo = scores.minCoeff();
  const double hi = scores.maxCoeff();
  // degenerate spread still gets well-formed edges around the common value
  const double left = hi > lo ? lo : lo - 0.5;
  const double right = hi > lo ? hi : hi + 0.5;

  Histogram hist;
  hist.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b)
    hist.edges[static_cast<std::size_t>(b)] =
        left + (right - left) * static_cast<double>(b) / static_cast<double>(bins);
  hist.counts.assign(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const double v = scores[i];
    int b = static_cast<int>(std::floor((v - left) / (right - left) * bins));
    b = std::clamp(b, 0, bins - 1);
    ++hist.counts[static_cast<std::size_t>(b)];
  }
  return hist;
}

// ---------------------------------------------------------------------------
// Attribution
// ---------------------------------------------------------------------------

namespace {

// Index of the layer whose output feeds global average pooling.
std::size_t spatial_hook_index(const Net& encoder, int* height, int* width) {
  for (std::size_t i = encoder.size(); i-- > 0;) {
    if (const auto* gap = dynamic_cast<const GlobalAvgPoolLayer*>(&encoder.layer(i))) {
      require(i > 0, "gradcam: encoder has no layers before pooling");
      // walk back for the conv layer defining the spatial extent
      for (std::size_t j = i; j-- > 0;) {
        if (const auto* conv = dynamic_cast<const Conv2dLayer*>(&encoder.layer(j))) {
          *height = conv->out_height();
          *width = conv->out_width();
          return i;  // hook at the GAP input
        }
      }
      throw contract_error("gradcam: no convolutional layer ahead of pooling");
    }
  }
  throw contract_error("gradcam: encoder has no spatial feature layer");
}

}  // namespace

Eigen::MatrixXf gradcam_raw(Net& encoder, const Image& image,
                            std::vector<Eigen::MatrixXf>* per_element) {
  int fh = 0, fw = 0;
  const std::size_t hook = spatial_hook_index(encoder, &fh, &fw);

  std::vector<const Image*> views = {&image};
  const RowMat input = images_to_conv_rows(views);

  Net::Tape tape = encoder.make_tape();
  const RowMat features = encoder.forward_prefix(input, tape, false, hook);  // (fh*fw) x C
  // finish the forward pass so suffix tapes exist
  RowMat h = features;
  for (std::size_t i = hook; i < encoder.size(); ++i)
    h = encoder.layer(i).forward(h, tape[i], false);
  const Eigen::Index dims = h.cols();

  Eigen::MatrixXf composite = Eigen::MatrixXf::Zero(fh, fw);
  for (Eigen::Index r = 0; r < dims; ++r) {
    RowMat one_hot = RowMat::Zero(1, dims);
    one_hot(0, r) = 1.0f;
    const RowMat grad = encoder.backward_suffix(one_hot, tape, hook);  // (fh*fw) x C

    // channel weights: spatially averaged gradients
    const RowMat weights = grad.colwise().mean();
    Eigen::MatrixXf map(fh, fw);
    for (int y = 0; y < fh; ++y)
      for (int x = 0; x < fw; ++x) {
        float acc = 0.0f;
        for (Eigen::Index c = 0; c < features.cols(); ++c)
          acc += weights(0, c) * features(static_cast<Eigen::Index>(y) * fw + x, c);
        map(y, x) = std::max(0.0f, acc);  // per-element ReLU before summation
      }
    if (per_element) per_element->push_back(map);
    composite += map;
  }
  encoder.zero_grads();  // attribution must not leave gradient residue
  return composite;
}

Image gradcam_sum(Net& encoder, const Image& image) {
  const Eigen::MatrixXf raw = gradcam_raw(encoder, image);

  Image coarse(static_cast<int>(raw.rows()), static_cast<int>(raw.cols()), 1);
  for (int y = 0; y < coarse.height; ++y)
    for (int x = 0; x < coarse.width; ++x) coarse.at(y, x, 0) = raw(y, x);
  Image heat = resize_bilinear(coarse, image.height, image.width);

  const float lo = heat.data.minCoeff();
  const float hi = heat.data.maxCoeff();
  if (hi > lo)
    heat.data = (heat.data - lo) / (hi - lo);
  else
    heat.data.setZero();
  return heat;
}

// ---------------------------------------------------------------------------
// Results table
// ---------------------------------------------------------------------------

std::vector<SuiteEntry> evaluate_suite(const std::vector<SuiteCheckpoint>& checkpoints,
                                       const std::vector<PairedSample>& train,
                                       const std::vector<PairedSample>& test,
                                       const std::vector<char>& tasks,
                                       const std::vector<double>& fractions,
                                       const ProbeConfig& probe) {
  std::vector<SuiteEntry> entries;
  for (const SuiteCheckpoint& ck : checkpoints) {
    if (!std::filesystem::exists(ck.path)) {
      std::cerr << "warning: checkpoint " << ck.path << " missing; rows skipped\n";
      continue;
    }
    BranchModels models = load_checkpoint(ck.path);
    for (char task : tasks) {
      int classes = 0;
      for (const PairedSample& s : train) classes = std::max(classes, label_of(s, task) + 1);
      for (double fraction : fractions) {
        ProbeConfig cfg = probe;
        cfg.fraction = fraction;
        const ProbeResult result = train_probe(models, train, test, task, classes, cfg);
        entries.push_back({ck.method, ck.privileged, ck.loss, std::string(1, task), fraction,
                           result.accuracy});
      }
    }
  }
  return entries;
}

void write_suite_csv(const std::string& path, const std::vector<SuiteEntry>& entries) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"method", "privileged", "loss", "task", "fraction", "accuracy"});
  for (const SuiteEntry& e : entries) {
    std::ostringstream frac, acc;
    frac << e.fraction;
    acc.precision(6);
    acc << e.accuracy;
    rows.push_back({e.method, e.privileged ? "1" : "0", e.loss, e.task, frac.str(), acc.str()});
  }
  write_csv(path, rows);
}

std::vector<SuiteEntry> read_suite_csv(const std::string& path) {
  const auto rows = read_csv(path);
  require(!rows.empty(), "read_suite_csv: empty file " + path);
  std::vector<SuiteEntry> entries;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    require(row.size() == 6, "read_suite_csv: malformed row in " + path);
    entries.push_back({row[0], row[1] == "1", row[2], row[3], std::stod(row[4]),
                       std::stod(row[5])});
  }
  return entries;
}

}  // namespace trident
