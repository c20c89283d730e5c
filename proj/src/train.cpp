#include "trident/train.hpp"

#include "trident/io.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

namespace trident {

void TrainRunConfig::validate() const {
  topology.validate();
  loss.validate();
  encoder.validate();
  require(epochs >= 1, "TrainRunConfig: epochs must be >= 1");
  require(batch_size >= 2, "TrainRunConfig: batch_size must be >= 2");
  require(warmup_fraction > 0.0 && warmup_fraction < 1.0,
          "TrainRunConfig: warmup_fraction must lie in (0, 1)");
  require(max_lr > 0.0, "TrainRunConfig: max_lr must be > 0");
}

double lr_schedule(long step, long total_steps, double max_lr, double warmup_fraction) {
  require(total_steps >= 1, "lr_schedule: total_steps must be >= 1");
  require(step >= 0 && step < total_steps, "lr_schedule: step out of range");
  const long warmup = std::max<long>(1, std::lround(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup)
    return max_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(std::max<long>(1, total_steps - warmup));
  return 0.5 * max_lr * (1.0 + std::cos(3.141592653589793 * progress));
}

void TrainTrace::to_csv(const std::string& path) const {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"step", "lr", "loss", "loss_pair_12", "loss_pair_1p", "loss_pair_2p", "mean_std"});
  const auto fmt = [](double v) {
    std::ostringstream out;
    out.precision(10);
    out << v;
    return out.str();
  };
  for (const TrainStep& s : steps)
    rows.push_back({std::to_string(s.step), fmt(s.lr), fmt(s.loss), fmt(s.pair_12),
                    fmt(s.pair_1p), fmt(s.pair_2p), fmt(s.mean_std)});
  write_csv(path, rows);
}

namespace {

double mean_dimension_std(const Mat<float>& embeddings) {
  const MatD e = embeddings.cast<double>();
  const MatD centered = e.rowwise() - e.colwise().mean();
  double acc = 0.0;
  for (Eigen::Index d = 0; d < e.cols(); ++d)
    acc += std::sqrt(centered.col(d).squaredNorm() / static_cast<double>(e.rows() - 1));
  return acc / static_cast<double>(e.cols());
}

std::vector<const PairedSample*> gather(const std::vector<PairedSample>& data,
                                        const std::vector<std::size_t>& indices,
                                        std::size_t begin, std::size_t count) {
  std::vector<const PairedSample*> batch;
  batch.reserve(count);
  for (std::size_t i = 0; i < count; ++i) batch.push_back(&data[indices[begin + i]]);
  return batch;
}

}  // namespace

PretrainResult pretrain(const std::vector<PairedSample>& data, const TrainRunConfig& cfg) {
  cfg.validate();
  require(cfg.mode == TrainMode::kSslPretrain, "pretrain: config mode mismatch");
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  require(data.size() >= batch, "pretrain: dataset smaller than one batch");

  if (cfg.topology.privileged_branches == 1 && !cfg.topology.privileged_from_primary) {
    const bool counts_branch = cfg.privileged_encoder.kind == EncoderKind::kMlp;
    for (const PairedSample& s : data)
      require(counts_branch ? s.privileged_counts.size() > 0 : s.privileged_image.height > 0,
              "pretrain: sample " + s.id + " lacks the privileged input the topology requires");
  }

  BranchModels models = build_models(cfg.topology, cfg.encoder, cfg.privileged_encoder,
                                     cfg.projector, cfg.privileged_projector, cfg.seed);
  AdamOptimizer optimizer(models.all_params());

  RngStream seed_root(cfg.seed);
  RngStream shuffle_rng = seed_root.fork(1);
  RngStream aug_rng = seed_root.fork(2);

  const long steps_per_epoch = static_cast<long>(data.size() / batch);
  const long total_steps = steps_per_epoch * cfg.epochs;
  const int n_primary = cfg.topology.primary_branches;

  TrainTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(total_steps));
  long global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double epoch_std = 0.0;
    for (long s = 0; s < steps_per_epoch; ++s) {
      const auto batch_ptrs = gather(data, order, static_cast<std::size_t>(s) * batch, batch);
      BranchForward fwd = forward_branches(batch_ptrs, models, cfg.augment, aug_rng, true);

      bool finite_embeddings = true;
      for (std::size_t b = 0; b < fwd.embeddings.branch_count(); ++b)
        finite_embeddings &= fwd.embeddings.branch(b).allFinite();
      if (!finite_embeddings) {
        TrainStep record;
        record.step = global_step;
        record.loss = std::numeric_limits<double>::quiet_NaN();
        record.lr = lr_schedule(global_step, total_steps, cfg.max_lr, cfg.warmup_fraction);
        trace.steps.push_back(record);
        throw TrainAbortError(
            "pretrain: non-finite embeddings at step " + std::to_string(global_step), trace);
      }

      const std::vector<PairTerm> terms = multibranch_terms(fwd.embeddings, cfg.loss);
      double total = 0.0;
      TrainStep record;
      for (const PairTerm& t : terms) {
        total += t.value;
        if (t.a < static_cast<std::size_t>(n_primary) && t.b < static_cast<std::size_t>(n_primary))
          record.pair_12 = t.value;
        else if (t.a == 0)
          record.pair_1p = t.value;
        else
          record.pair_2p = t.value;
      }
      record.step = global_step;
      record.loss = total;
      record.lr = lr_schedule(global_step, total_steps, cfg.max_lr, cfg.warmup_fraction);
      record.mean_std = mean_dimension_std(fwd.embeddings.primary[0]);

      if (!std::isfinite(total)) {
        trace.steps.push_back(record);
        throw TrainAbortError("pretrain: non-finite loss at step " + std::to_string(global_step),
                              trace);
      }

      const BranchSet<float> grads = loss_gradient(fwd.embeddings, cfg.loss);
      optimizer.zero_grads();
      for (std::size_t b = 0; b < grads.branch_count(); ++b) {
        const RowMat g_embed = grads.branch(b);
        Net& projector = b < static_cast<std::size_t>(n_primary)
                             ? models.primary_projector(static_cast<int>(b))
                             : models.privileged_projector;
        Net& encoder = b < static_cast<std::size_t>(n_primary)
                           ? models.primary_encoder(static_cast<int>(b))
                           : models.privileged_encoder;
        const RowMat g_rep = projector.backward(g_embed, fwd.projector_tapes[b]);
        encoder.backward(g_rep, fwd.encoder_tapes[b]);
      }
      optimizer.step(record.lr);

      epoch_std += record.mean_std;
      trace.steps.push_back(record);
      ++global_step;
    }
    trace.epoch_mean_std.push_back(epoch_std / static_cast<double>(steps_per_epoch));
  }

  models.epoch = cfg.epochs;
  return {std::move(models), std::move(trace)};
}

std::vector<double> proportional_class_weights(const std::vector<int>& labels, int classes) {
  std::vector<long> counts(static_cast<std::size_t>(classes), 0);
  for (int y : labels) {
    require(y >= 0 && y < classes, "proportional_class_weights: label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  std::vector<double> weights(static_cast<std::size_t>(classes), 0.0);
  for (int c = 0; c < classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      std::cerr << "warning: class " << c << " absent from training data; weight set to 0\n";
      continue;
    }
    weights[static_cast<std::size_t>(c)] =
        static_cast<double>(labels.size()) /
        (static_cast<double>(classes) * static_cast<double>(counts[static_cast<std::size_t>(c)]));
  }
  return weights;
}

int label_of(const PairedSample& sample, char task) {
  switch (task) {
    case 'a': return sample.label_a;
    case 'b': return sample.label_b;
    case 'c': return sample.label_c;
    default: throw contract_error("label_of: unknown task (expected a, b or c)");
  }
}

namespace {

// Shared loop for the supervised baselines: encoder + head trained end to
// end on (augmented) primary inputs against a caller-supplied objective.
template <class LossFn>
TrainTrace supervised_loop(const std::vector<PairedSample>& data, const TrainRunConfig& cfg,
                           BranchModels& models, Net& head, LossFn&& step_loss) {
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  require(data.size() >= batch, "train: dataset smaller than one batch");

  std::vector<Param*> params = models.primary_encoders[0].params();
  for (Param* p : head.params()) params.push_back(p);
  AdamOptimizer optimizer(params);

  RngStream seed_root(cfg.seed);
  RngStream shuffle_rng = seed_root.fork(1);
  RngStream aug_rng = seed_root.fork(2);

  const long steps_per_epoch = static_cast<long>(data.size() / batch);
  const long total_steps = steps_per_epoch * cfg.epochs;

  TrainTrace trace;
  long global_step = 0;
  Net& encoder = models.primary_encoders[0];

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double epoch_std = 0.0;
    for (long s = 0; s < steps_per_epoch; ++s) {
      const auto batch_ptrs = gather(data, order, static_cast<std::size_t>(s) * batch, batch);

      std::vector<Image> augmented;
      std::vector<const Image*> views;
      augmented.reserve(batch_ptrs.size());
      for (const PairedSample* sample : batch_ptrs) {
        if (cfg.augment.enabled)
          augmented.push_back(augment_image(sample->primary, cfg.augment.primary_image, aug_rng));
        else
          augmented.push_back(sample->primary);
        views.push_back(&augmented.back());
      }

      Net::Tape enc_tape = encoder.make_tape();
      Net::Tape head_tape = head.make_tape();
      const RowMat reps = encoder.forward(images_to_conv_rows(views), enc_tape, true);
      const RowMat out = head.forward(reps, head_tape, true);

      RowMat grad;
      const double loss = step_loss(batch_ptrs, out, grad);

      TrainStep record;
      record.step = global_step;
      record.loss = loss;
      record.lr = lr_schedule(global_step, total_steps, cfg.max_lr, cfg.warmup_fraction);
      record.mean_std = mean_dimension_std(Mat<float>(reps));

      if (!std::isfinite(loss)) {
        trace.steps.push_back(record);
        throw TrainAbortError("train: non-finite loss at step " + std::to_string(global_step),
                              trace);
      }

      optimizer.zero_grads();
      encoder.backward(head.backward(grad, head_tape), enc_tape);
      optimizer.step(record.lr);

      epoch_std += record.mean_std;
      trace.steps.push_back(record);
      ++global_step;
    }
    trace.epoch_mean_std.push_back(epoch_std / static_cast<double>(steps_per_epoch));
  }
  models.epoch = cfg.epochs;
  return trace;
}

BranchModels encoder_only_models(const TrainRunConfig& cfg) {
  BranchTopology topology;
  topology.primary_branches = 2;  // one shared storage; checkpoint-compatible
  topology.privileged_branches = 0;
  topology.share_primary_weights = true;
  topology.use_projectors = false;
  return build_models(topology, cfg.encoder, cfg.privileged_encoder, cfg.projector,
                      cfg.privileged_projector, cfg.seed);
}

RowMat eval_representations(Net& encoder, const std::vector<PairedSample>& data,
                            std::size_t batch) {
  RowMat reps;
  for (std::size_t begin = 0; begin < data.size(); begin += batch) {
    const std::size_t count = std::min(batch, data.size() - begin);
    std::vector<const Image*> views;
    views.reserve(count);
    for (std::size_t i = 0; i < count; ++i) views.push_back(&data[begin + i].primary);
    Net::Tape tape = encoder.make_tape();
    const RowMat chunk = encoder.forward(images_to_conv_rows(views), tape, false);
    if (reps.size() == 0)
      reps = RowMat(static_cast<Eigen::Index>(data.size()), chunk.cols());
    reps.middleRows(static_cast<Eigen::Index>(begin), chunk.rows()) = chunk;
  }
  return reps;
}

}  // namespace

SupervisedResult train_supervised(const std::vector<PairedSample>& data, char task, int classes,
                                  const TrainRunConfig& cfg) {
  cfg.validate();
  require(classes >= 2, "train_supervised: need at least two classes");
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const PairedSample& s : data) {
    const int y = label_of(s, task);
    require(y >= 0, "train_supervised: sample " + s.id + " lacks a label for the task");
    labels.push_back(y);
  }
  const std::vector<double> weights =
      cfg.class_weighting ? proportional_class_weights(labels, classes) : std::vector<double>{};

  SupervisedResult result;
  result.models = encoder_only_models(cfg);
  Net head = build_classifier_head(cfg.encoder.representation_dim, classes, cfg.seed + 7);

  result.trace = supervised_loop(
      data, cfg, result.models, head,
      [&](const std::vector<const PairedSample*>& batch, const RowMat& logits, RowMat& grad) {
        std::vector<int> batch_labels;
        batch_labels.reserve(batch.size());
        for (const PairedSample* s : batch) batch_labels.push_back(label_of(*s, task));
        return softmax_cross_entropy(logits, batch_labels, weights, grad);
      });

  // training accuracy, evaluation mode, no augmentation
  const RowMat reps = eval_representations(result.models.primary_encoders[0], data,
                                           static_cast<std::size_t>(cfg.batch_size));
  Net::Tape head_tape = head.make_tape();
  const RowMat logits = head.forward(reps, head_tape, false);
  long correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index argmax;
    logits.row(i).maxCoeff(&argmax);
    if (static_cast<int>(argmax) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  result.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return result;
}

RegressionResult train_gene_regressor(const std::vector<PairedSample>& data,
                                      const TrainRunConfig& cfg) {
  cfg.validate();
  require(!data.empty() && data.front().privileged_counts.size() > 0,
          "train_gene_regressor: samples must carry privileged count vectors");
  const Eigen::Index genes = data.front().privileged_counts.size();
  for (const PairedSample& s : data)
    require(s.privileged_counts.size() == genes,
            "train_gene_regressor: inconsistent count vector length at " + s.id);

  RegressionResult result;
  result.models = encoder_only_models(cfg);
  RngStream head_rng(cfg.seed + 7);
  Net head;
  head.append(std::make_unique<DenseLayer>("head.fc", cfg.encoder.representation_dim,
                                           static_cast<int>(genes), head_rng));

  result.trace = supervised_loop(
      data, cfg, result.models, head,
      [&](const std::vector<const PairedSample*>& batch, const RowMat& pred, RowMat& grad) {
        RowMat target(pred.rows(), pred.cols());
        for (std::size_t i = 0; i < batch.size(); ++i)
          target.row(static_cast<Eigen::Index>(i)) = batch[i]->privileged_counts.transpose();
        return mse_loss(pred, target, grad);
      });

  // final fit quality on the training set, evaluation mode
  const RowMat reps = eval_representations(result.models.primary_encoders[0], data,
                                           static_cast<std::size_t>(cfg.batch_size));
  Net::Tape head_tape = head.make_tape();
  const RowMat pred = head.forward(reps, head_tape, false);
  RowMat target(pred.rows(), pred.cols());
  for (std::size_t i = 0; i < data.size(); ++i)
    target.row(static_cast<Eigen::Index>(i)) = data[i].privileged_counts.transpose();
  RowMat unused;
  result.final_mse = mse_loss(pred, target, unused);
  return result;
}

}  // namespace trident
