#pragma once

// Dataset ingestion and generation: the paired-manifest format, generic
// preprocessing recipes (patch tiling, gene filtering), and the synthetic
// three-factor dataset used by the desk-scale experiments.

#include "trident/image.hpp"
#include "trident/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace trident {

struct PairedSample {
  std::string id;
  Image primary;
  Image privileged_image;    // empty when absent
  VecF privileged_counts;    // empty when absent
  int label_a = -1;
  int label_b = -1;
  int label_c = -1;
  std::string split;         // train | valid | test
  std::string group;

  bool has_privileged() const {
    return privileged_image.height > 0 || privileged_counts.size() > 0;
  }
};

struct ManifestRecord {
  std::string id;
  std::string primary;     // path relative to the dataset root
  std::string privileged;  // path, inline counts ("1.5;0;2"), or empty
  int label_a = -1;
  int label_b = -1;
  int label_c = -1;
  std::string split;
  std::string group;
};

struct PairedManifest {
  std::string root;
  std::vector<ManifestRecord> records;

  /// ids unique; split is a function of group (no group straddles splits).
  void validate() const;
};

void write_manifest(const PairedManifest& manifest);
PairedManifest read_manifest(const std::string& root);

/// Materialized samples for one split, in manifest order.
std::vector<PairedSample> load_paired(const PairedManifest& manifest, const std::string& split);

/// Seeded permutation of [0, n); the shuffle used by training loops.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic three-factor dataset
// ---------------------------------------------------------------------------

enum class PrivilegedMode { kImage, kCounts };

/// Three independent factors drive each sample: A is strong in the primary
/// image, B is weak in the primary image and strong in the privileged input,
/// C appears only in the privileged input. The amplitude ordering
/// a_weak < sigma_aug < a_strong is what makes B weak and A strong relative
/// to the train-time augmentation noise.
struct SyntheticConfig {
  int image_size = 32;
  int classes_per_factor = 4;
  double a_strong = 1.0;
  double a_weak = 0.15;
  double sigma_aug = 0.3;    // noise std the training runs should augment with
  double base_noise = 0.02;
  int train_samples = 2000;
  int valid_samples = 0;
  int test_samples = 512;
  PrivilegedMode privileged_mode = PrivilegedMode::kImage;
  int counts_genes = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  PairedManifest manifest;            // root left empty until saved
  std::vector<PairedSample> samples;  // aligned with manifest.records
};

/// Binary factor patterns on the image grid; value selects one of four
/// disjoint pixel sets per factor.
Image factor_pattern_quadrant(int value, int size);  // factor A: textured quadrant
Image factor_pattern_stripes(int value, int size);   // factor B: stripe orientation
Image factor_pattern_border(int value, int size);    // factor C: border ring depth

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

/// Writes primary/*.png, privileged/*.png (image mode) and manifest.csv
/// under root; counts-mode privileged vectors are stored inline.
void save_dataset(const SyntheticDataset& dataset, const std::string& root);

// ---------------------------------------------------------------------------
// Preprocessing recipes
// ---------------------------------------------------------------------------

struct PatchRecipe {
  int source_height = 0;
  int source_width = 0;
  int resize_height = 0;  // bilinear, applied before tiling
  int resize_width = 0;
  int patch = 0;

  void validate() const;  // the patch grid must tile the resized image exactly
};

std::vector<Image> extract_patches(const Image& image, const PatchRecipe& recipe);

/// Counts matrix CSV: header row of gene names, one row of values per
/// sample.
void write_counts_csv(const std::string& path, const RowMat& counts,
                      const std::vector<std::string>& gene_names);
std::pair<RowMat, std::vector<std::string>> read_counts_csv(const std::string& path);

struct GeneFilterResult {
  RowMat counts;           // n x kept
  std::vector<int> kept;   // original column index per kept gene
};

/// Keeps gene g iff at least `min_occurrences` samples have count strictly
/// greater than `min_count` (defaults 50 and 5).
GeneFilterResult filter_genes(const RowMat& counts, int min_occurrences = 50, int min_count = 5);

}  // namespace trident
