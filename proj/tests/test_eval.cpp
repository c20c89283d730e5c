#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "trident/eval.hpp"
#include "trident/io.hpp"

#include <cmath>
#include <filesystem>
#include <map>

using namespace trident;
namespace fs = std::filesystem;

namespace {

EncoderSpec probe_conv() {
  EncoderSpec spec;
  spec.conv_channels = {8, 16};
  spec.representation_dim = 16;
  return spec;
}

BranchModels random_models(std::uint64_t seed = 1) {
  BranchTopology topo;
  topo.privileged_branches = 0;
  return build_models(topo, probe_conv(), probe_conv(), ProjectorSpec{{16, 16, 16}},
                      ProjectorSpec{{16, 16, 16}}, seed);
}

// label is painted into the image as a global intensity level, so even a
// random conv encoder yields linearly separable representations
std::vector<PairedSample> intensity_dataset(int n, const std::string& split,
                                            std::uint64_t seed = 2) {
  RngStream rng(seed);
  std::vector<PairedSample> out;
  for (int i = 0; i < n; ++i) {
    PairedSample s;
    s.id = split + std::to_string(i);
    s.split = split;
    s.label_a = static_cast<int>(rng.integer(4));
    s.primary = Image(32, 32, 1);
    s.primary.data.setConstant(0.1f + 0.25f * static_cast<float>(s.label_a));
    for (Eigen::Index p = 0; p < s.primary.data.size(); ++p)
      s.primary.data[p] = std::clamp(
          s.primary.data[p] + static_cast<float>(rng.normal(0.0, 0.01)), 0.0f, 1.0f);
    out.push_back(std::move(s));
  }
  return out;
}

ProbeConfig fast_probe(std::uint64_t seed = 3) {
  ProbeConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 32;
  cfg.max_lr = 1e-2;
  cfg.seed = seed;
  return cfg;
}

RowMat random_rowmat(RngStream& rng, int r, int c) {
  RowMat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = static_cast<float>(rng.normal());
  return m;
}

oracle::Grid to_grid(const RowMat& m) {
  oracle::Grid g(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

}  // namespace

TEST_CASE("stratified subsample holds class proportions to one sample") {
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) labels.push_back(i % 4 < 2 ? 0 : (i % 4 == 2 ? 1 : 2));
  // class counts: 100 / 50 / 50
  const auto subset = stratified_subsample(labels, 0.1, 7);
  std::map<int, int> per_class;
  for (std::size_t i : subset) ++per_class[labels[i]];
  CHECK(per_class[0] == 10);
  CHECK(per_class[1] == 5);
  CHECK(per_class[2] == 5);
  CHECK(stratified_subsample(labels, 0.1, 7) == subset);  // deterministic
  CHECK(stratified_subsample(labels, 1.0, 7).size() == 200);
}

TEST_CASE("probe reaches full accuracy on separable representations") {
  BranchModels models = random_models();
  const auto train = intensity_dataset(128, "train", 4);
  const auto test = intensity_dataset(64, "test", 5);
  const ProbeResult result = train_probe(models, train, test, 'a', 4, fast_probe());
  CHECK(result.accuracy == doctest::Approx(1.0));
  CHECK(result.train_samples_used == 128);
}

TEST_CASE("probe on constant representations hits the majority-class rate") {
  BranchModels models = random_models();
  std::vector<PairedSample> train, test;
  for (int i = 0; i < 40; ++i) {
    PairedSample s;
    s.id = "t" + std::to_string(i);
    s.primary = Image(32, 32, 1);
    s.primary.data.setConstant(0.5f);
    s.label_a = i < 30 ? 0 : 1;  // 75% majority
    s.split = "train";
    train.push_back(s);
  }
  for (int i = 0; i < 16; ++i) {
    PairedSample s = train[static_cast<std::size_t>(i)];
    s.id = "e" + std::to_string(i);
    s.label_a = i < 12 ? 0 : 1;
    test.push_back(s);
  }
  const ProbeResult result = train_probe(models, train, test, 'a', 2, fast_probe());
  CHECK(result.accuracy == doctest::Approx(0.75));
}

TEST_CASE("probe never mutates encoder parameters") {
  BranchModels models = random_models(9);
  std::vector<RowMat> before;
  for (Param* p : models.all_params()) before.push_back(p->value);
  std::vector<RowMat> buffers_before;
  for (Param* p : models.all_buffers()) buffers_before.push_back(p->value);

  const auto train = intensity_dataset(64, "train", 6);
  const auto test = intensity_dataset(32, "test", 7);
  ProbeConfig cfg = fast_probe();
  cfg.epochs = 3;
  cfg.augment.enabled = true;
  cfg.augment.primary_image = ImageAugmentConfig::noise_only(0.1);
  train_probe(models, train, test, 'a', 4, cfg);

  const auto params = models.all_params();
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i]->value == before[i]);
  const auto buffers = models.all_buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) CHECK(buffers[i]->value == buffers_before[i]);
}

TEST_CASE("representation extraction is deterministic and round-trips") {
  BranchModels models = random_models(11);
  const auto data = intensity_dataset(20, "test", 8);
  const RepresentationMatrix a = extract_representations(models, data, "ck-test");
  const RepresentationMatrix b = extract_representations(models, data, "ck-test");
  CHECK(a.values.rows() == 20);
  CHECK(a.values.cols() == 16);
  CHECK(a.values == b.values);  // bit-identical without augmentation
  CHECK(a.sample_ids.front() == "test0");

  const fs::path base = fs::temp_directory_path() / "trident_reps";
  write_representations(base.string(), a);
  const RepresentationMatrix c = read_representations(base.string());
  CHECK(c.values == a.values);
  CHECK(c.sample_ids == a.sample_ids);
  CHECK(c.checkpoint_id == "ck-test");
  fs::remove(fs::path(base.string() + ".bin"));
  fs::remove(fs::path(base.string() + ".json"));
}

TEST_CASE("gene correlations: planted signals and the brute-force oracle") {
  RngStream rng(21);

  // element 2 equals gene 0 exactly; element 3 is its negation
  RowMat reps = random_rowmat(rng, 40, 6);
  RowMat counts = random_rowmat(rng, 40, 3);
  reps.col(2) = counts.col(0);
  reps.col(3) = -counts.col(1);
  const CorrelationReport report = gene_correlations(reps, counts);
  CHECK(report.scores[0] == doctest::Approx(1.0));
  CHECK(report.argmax[0] == 2);
  CHECK(report.scores[1] == doctest::Approx(1.0));
  CHECK(report.argmax[1] == 3);

  // oracle comparison over random instances
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 10 + static_cast<int>(rng.integer(90));
    const int genes = 1 + static_cast<int>(rng.integer(20));
    const int dims = 1 + static_cast<int>(rng.integer(20));
    const RowMat r = random_rowmat(rng, n, dims);
    const RowMat g = random_rowmat(rng, n, genes);
    const CorrelationReport rep = gene_correlations(r, g);
    const auto rg = to_grid(r), gg = to_grid(g);
    for (int i = 0; i < genes; ++i) {
      double best = 0.0;
      for (int j = 0; j < dims; ++j) {
        std::vector<double> gene_col(n), rep_col(n);
        for (int k = 0; k < n; ++k) {
          gene_col[static_cast<std::size_t>(k)] = gg[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
          rep_col[static_cast<std::size_t>(k)] = rg[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
        }
        best = std::max(best, std::abs(oracle::pearson(gene_col, rep_col)));
      }
      CHECK(rep.scores[i] == doctest::Approx(best).epsilon(1e-10));
    }
  }
}

TEST_CASE("gene correlations: conventions and contracts") {
  RngStream rng(22);
  RowMat reps = random_rowmat(rng, 30, 4);
  RowMat counts = random_rowmat(rng, 30, 2);

  // zero-variance gene contributes zero correlation
  counts.col(1).setConstant(3.0f);
  const CorrelationReport report = gene_correlations(reps, counts);
  CHECK(report.scores[1] == 0.0);

  // invariance under positive affine rescaling and negation of elements
  RowMat scaled = reps;
  scaled.col(0) = 2.5f * reps.col(0);
  scaled.col(1) = (-reps.col(1)).eval();
  scaled.col(2).array() += 7.0f;
  const CorrelationReport scaled_report = gene_correlations(scaled, counts);
  CHECK(scaled_report.scores[0] == doctest::Approx(report.scores[0]).epsilon(1e-12));

  CHECK_THROWS_AS(gene_correlations(random_rowmat(rng, 2, 3), random_rowmat(rng, 2, 2)),
                  contract_error);
  CHECK_THROWS_AS(gene_correlations(random_rowmat(rng, 5, 3), random_rowmat(rng, 6, 2)),
                  contract_error);
}

TEST_CASE("histogram bin rule") {
  // 1024 values with zero IQR: Sturges gives 11
  VecD spiky(1024);
  spiky.setConstant(0.5);
  for (int i = 0; i < 100; ++i) spiky[i] = 0.1 + 0.0005 * i;
  for (int i = 924; i < 1024; ++i) spiky[i] = 0.9;
  CHECK(histogram_bin_count(spiky) == 11);

  // all-equal values: a single occupied bin
  VecD flat = VecD::Constant(64, 0.7);
  const Histogram hist = correlation_histogram(flat);
  long occupied = 0, total = 0;
  for (long c : hist.counts) {
    if (c > 0) ++occupied;
    total += c;
  }
  CHECK(occupied == 1);
  CHECK(total == 64);

  // random data against the independent oracle
  RngStream rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 16 + static_cast<int>(rng.integer(500));
    VecD values(n);
    std::vector<double> copy(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      values[i] = rng.uniform(0.0, 1.0);
      copy[static_cast<std::size_t>(i)] = values[i];
    }
    CHECK(histogram_bin_count(values) == oracle::bin_count(copy));
    const Histogram h = correlation_histogram(values);
    long sum = 0;
    for (long c : h.counts) sum += c;
    CHECK(sum == n);
    CHECK(h.edges.size() == h.counts.size() + 1);
  }
}

TEST_CASE("gradcam: linearity, normalization, constant encoder, mlp rejection") {
  BranchModels models = random_models(31);
  Net& encoder = models.primary_encoders[0];
  const auto data = intensity_dataset(4, "test", 32);

  std::vector<Eigen::MatrixXf> maps;
  const Eigen::MatrixXf composite = gradcam_raw(encoder, data[0].primary, &maps);
  Eigen::MatrixXf total = Eigen::MatrixXf::Zero(composite.rows(), composite.cols());
  for (const auto& m : maps) total += m;
  CHECK((total - composite).cwiseAbs().maxCoeff() <= 1e-6f);

  const Image heat = gradcam_sum(encoder, data[0].primary);
  CHECK(heat.height == 32);
  CHECK(heat.width == 32);
  CHECK(heat.data.minCoeff() == 0.0f);
  CHECK(heat.data.maxCoeff() == 1.0f);

  // constant encoder: zero out the last block so its features vanish
  BranchModels constant = random_models(33);
  for (Param* p : constant.primary_encoders[0].params())
    if (p->name.find("block2") != std::string::npos) p->value.setZero();
  const Eigen::MatrixXf zero_map = gradcam_raw(constant.primary_encoders[0], data[0].primary);
  CHECK(zero_map.cwiseAbs().maxCoeff() == 0.0f);
  const Image zero_heat = gradcam_sum(constant.primary_encoders[0], data[0].primary);
  CHECK(zero_heat.data.maxCoeff() == 0.0f);  // stays zero rather than normalizing

  // encoders without spatial features are rejected
  EncoderSpec mlp;
  mlp.kind = EncoderKind::kMlp;
  mlp.input_dim = 16;
  mlp.mlp_hidden = {32};
  mlp.representation_dim = 16;
  Net mlp_net = build_encoder(mlp);
  CHECK_THROWS_AS(gradcam_raw(mlp_net, data[0].primary), contract_error);
}

TEST_CASE("suite table: layout, fraction sweep, missing checkpoints") {
  const fs::path dir = fs::temp_directory_path() / "trident_suite";
  fs::create_directories(dir);
  BranchModels models = random_models(41);
  const std::string ck_path = (dir / "ck.zip").string();
  save_checkpoint(models, ck_path);

  const auto train = intensity_dataset(64, "train", 42);
  const auto test = intensity_dataset(32, "test", 43);

  ProbeConfig probe = fast_probe();
  probe.epochs = 3;

  const std::vector<SuiteCheckpoint> checkpoints = {
      {"siamese-unpriv", false, "vicreg", ck_path},
      {"trident", true, "vicreg", (dir / "missing.zip").string()},
  };
  const auto entries =
      evaluate_suite(checkpoints, train, test, {'a'}, {1.0, 0.5}, probe);
  REQUIRE(entries.size() == 2);  // missing checkpoint rows skipped
  CHECK(entries[0].method == "siamese-unpriv");
  CHECK(entries[0].fraction == 1.0);
  CHECK(entries[1].fraction == 0.5);

  const std::string csv_path = (dir / "results.csv").string();
  write_suite_csv(csv_path, entries);
  const auto rows = read_csv(csv_path);
  CHECK(rows[0] == std::vector<std::string>{"method", "privileged", "loss", "task", "fraction",
                                            "accuracy"});
  CHECK(rows.size() == 3);
  const auto parsed = read_suite_csv(csv_path);
  CHECK(parsed.size() == 2);
  CHECK(parsed[0].method == entries[0].method);
  CHECK(parsed[0].accuracy == doctest::Approx(entries[0].accuracy));
  fs::remove_all(dir);
}
