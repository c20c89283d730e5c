#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "trident/data.hpp"
#include "trident/io.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

using namespace trident;
namespace fs = std::filesystem;

namespace {

SyntheticConfig small_config(std::uint64_t seed = 7) {
  SyntheticConfig cfg;
  cfg.train_samples = 24;
  cfg.test_samples = 8;
  cfg.seed = seed;
  return cfg;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("trident_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("factor patterns use disjoint pixels per factor") {
  using PatternFn = Image (*)(int, int);
  for (PatternFn pattern :
       {&factor_pattern_quadrant, &factor_pattern_stripes, &factor_pattern_border}) {
    for (int u = 0; u < 4; ++u) {
      CHECK(pattern(u, 32).data.sum() > 0.0f);  // nonempty
      for (int v = u + 1; v < 4; ++v) {
        const Image a = pattern(u, 32), b = pattern(v, 32);
        CHECK((a.data * b.data).sum() == 0.0f);  // no overlap
      }
    }
  }
}

TEST_CASE("weak-feature amplitude sits below the augmentation noise") {
  const SyntheticConfig cfg;
  for (int b = 0; b < 4; ++b) {
    const Image stripes = factor_pattern_stripes(b, cfg.image_size);
    Eigen::ArrayXf contribution = static_cast<float>(cfg.a_weak) * stripes.data;
    const float mean = contribution.mean();
    const float sd = std::sqrt((contribution - mean).square().mean());
    CHECK(sd < cfg.sigma_aug);
    CHECK(sd > 0.0f);
  }
}

TEST_CASE("synthetic generation is deterministic in the seed") {
  const SyntheticDataset a = generate_synthetic(small_config(3));
  const SyntheticDataset b = generate_synthetic(small_config(3));
  const SyntheticDataset c = generate_synthetic(small_config(4));
  REQUIRE(a.samples.size() == b.samples.size());
  bool identical = true, differs_from_c = false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    identical &= (a.samples[i].primary.data == b.samples[i].primary.data).all();
    identical &= a.manifest.records[i].privileged == b.manifest.records[i].privileged;
    differs_from_c |= !(a.samples[i].primary.data == c.samples[i].primary.data).all();
  }
  CHECK(identical);
  CHECK(differs_from_c);
}

TEST_CASE("dataset round-trips bit-identically through disk") {
  const fs::path dir = temp_dir("roundtrip");
  const SyntheticDataset dataset = generate_synthetic(small_config());
  save_dataset(dataset, dir.string());

  const PairedManifest manifest = read_manifest(dir.string());
  CHECK(manifest.records.size() == dataset.manifest.records.size());

  const std::vector<PairedSample> train = load_paired(manifest, "train");
  REQUIRE(train.size() == 24);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const PairedSample& original = dataset.samples[i];
    CHECK(train[i].id == original.id);
    CHECK((train[i].primary.data == original.primary.data).all());
    CHECK((train[i].privileged_image.data == original.privileged_image.data).all());
    CHECK(train[i].label_a == original.label_a);
  }
  fs::remove_all(dir);
}

TEST_CASE("counts mode stores privileged vectors inline") {
  const fs::path dir = temp_dir("counts");
  SyntheticConfig cfg = small_config();
  cfg.privileged_mode = PrivilegedMode::kCounts;
  const SyntheticDataset dataset = generate_synthetic(cfg);
  save_dataset(dataset, dir.string());

  const std::vector<PairedSample> train = load_paired(read_manifest(dir.string()), "train");
  REQUIRE(train.size() == 24);
  for (std::size_t i = 0; i < train.size(); ++i) {
    REQUIRE(train[i].privileged_counts.size() == cfg.counts_genes);
    CHECK(train[i].privileged_counts == dataset.samples[i].privileged_counts);
    CHECK(train[i].privileged_image.height == 0);
  }
  // block structure: first half linear in B, second half in C
  for (const PairedSample& s : train) {
    CHECK(s.privileged_counts[0] == doctest::Approx(static_cast<float>(s.label_b)));
    CHECK(s.privileged_counts[cfg.counts_genes / 2] ==
          doctest::Approx(static_cast<float>(s.label_c)));
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest invariants") {
  PairedManifest manifest;
  manifest.records.push_back({"a", "primary/a.png", "", 0, 0, 0, "train", "g1"});
  manifest.records.push_back({"b", "primary/b.png", "", 0, 0, 0, "test", "g2"});
  CHECK_NOTHROW(manifest.validate());

  PairedManifest duplicate = manifest;
  duplicate.records.push_back({"a", "primary/a.png", "", 0, 0, 0, "train", "g1"});
  CHECK_THROWS_AS(duplicate.validate(), contract_error);

  PairedManifest straddle = manifest;
  straddle.records.push_back({"c", "primary/c.png", "", 0, 0, 0, "test", "g1"});
  CHECK_THROWS_AS(straddle.validate(), contract_error);
}

TEST_CASE("missing files are hard errors carrying the record id") {
  const fs::path dir = temp_dir("missing");
  PairedManifest manifest;
  manifest.root = dir.string();
  manifest.records.push_back({"ghost", "primary/ghost.png", "", 0, 0, 0, "train", "g"});
  write_manifest(manifest);
  try {
    load_paired(manifest, "train");
    CHECK(false);
  } catch (const contract_error& err) {
    CHECK(std::string(err.what()).find("ghost") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("seeded shuffle is a permutation") {
  const auto idx = shuffled_indices(100, 5);
  std::set<std::size_t> seen(idx.begin(), idx.end());
  CHECK(seen.size() == 100);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 99);
  CHECK(shuffled_indices(100, 5) == idx);
  CHECK(shuffled_indices(100, 6) != idx);
}

TEST_CASE("patch extraction tiles the resized image") {
  RngStream rng(11);
  Image big(123, 123, 1);
  for (Eigen::Index i = 0; i < big.data.size(); ++i)
    big.data[i] = static_cast<float>(rng.uniform());

  PatchRecipe recipe;
  recipe.source_height = recipe.source_width = 123;
  recipe.resize_height = recipe.resize_width = 128;
  recipe.patch = 32;
  const std::vector<Image> patches = extract_patches(big, recipe);
  CHECK(patches.size() == 16);

  // reassembly reproduces the resized image exactly
  const Image resized = resize_bilinear(big, 128, 128);
  double patch_mass = 0.0;
  for (int py = 0; py < 4; ++py)
    for (int px = 0; px < 4; ++px) {
      const Image& patch = patches[py * 4 + px];
      patch_mass += patch.data.sum();
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          CHECK(patch.at(y, x, 0) == resized.at(py * 32 + y, px * 32 + x, 0));
    }
  CHECK(patch_mass == doctest::Approx(resized.data.sum()).epsilon(1e-6));

  // identity recipe: one patch equal to the input
  PatchRecipe identity;
  identity.source_height = identity.source_width = 123;
  identity.resize_height = identity.resize_width = 123;
  identity.patch = 123;
  const std::vector<Image> single = extract_patches(big, identity);
  REQUIRE(single.size() == 1);
  CHECK((single[0].data == big.data).all());

  PatchRecipe mismatch = recipe;
  mismatch.source_height = 100;
  CHECK_THROWS_AS(extract_patches(big, mismatch), contract_error);
}

TEST_CASE("counts csv round trip with gene-name header") {
  RowMat counts(3, 2);
  counts << 0, 6.5, 12, 5, 7, 0;
  const fs::path path = temp_dir("counts_csv") / "counts.csv";
  write_counts_csv(path.string(), counts, {"geneA", "geneB"});
  const auto [loaded, names] = read_counts_csv(path.string());
  CHECK(names == std::vector<std::string>{"geneA", "geneB"});
  CHECK(loaded == counts);
  fs::remove_all(path.parent_path());
}

TEST_CASE("gene filter boundary and idempotence") {
  // gene 0: exactly 50 samples with count 6 -> kept (boundary inclusive)
  // gene 1: counts all <= 5 -> dropped
  // gene 2: 49 samples above threshold -> dropped
  RowMat counts = RowMat::Zero(60, 3);
  for (int i = 0; i < 50; ++i) counts(i, 0) = 6.0f;
  for (int i = 0; i < 60; ++i) counts(i, 1) = 5.0f;
  for (int i = 0; i < 49; ++i) counts(i, 2) = 100.0f;

  const GeneFilterResult result = filter_genes(counts);
  REQUIRE(result.kept == std::vector<int>{0});
  CHECK(result.counts.rows() == 60);
  CHECK(result.counts.cols() == 1);

  const GeneFilterResult again = filter_genes(result.counts);
  CHECK(again.kept == std::vector<int>{0});
  CHECK(again.counts == result.counts);
}
