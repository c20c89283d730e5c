#include "trident/data.hpp"

#include "trident/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace trident {

void PairedManifest::validate() const {
  std::set<std::string> ids;
  std::map<std::string, std::string> group_split;
  for (const ManifestRecord& r : records) {
    require(!r.id.empty(), "PairedManifest: empty sample id");
    require(ids.insert(r.id).second, "PairedManifest: duplicate id " + r.id);
    require(r.split == "train" || r.split == "valid" || r.split == "test",
            "PairedManifest: unknown split " + r.split);
    const auto [it, inserted] = group_split.emplace(r.group, r.split);
    require(inserted || it->second == r.split,
            "PairedManifest: group " + r.group + " straddles splits");
  }
}

namespace {

constexpr const char* kManifestHeader = "id,primary,privileged,label_a,label_b,label_c,split,group";

bool looks_like_counts(const std::string& field) {
  return field.find(';') != std::string::npos ||
         (!field.empty() && field.find('.') == std::string::npos &&
          field.find('/') == std::string::npos &&
          field.find_first_not_of("0123456789;-e+") == std::string::npos);
}

VecF parse_counts(const std::string& field) {
  std::vector<float> values;
  std::istringstream in(field);
  std::string token;
  while (std::getline(in, token, ';'))
    if (!token.empty()) values.push_back(std::stof(token));
  VecF out(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) out[static_cast<Eigen::Index>(i)] = values[i];
  return out;
}

std::string format_counts(const VecF& counts) {
  std::ostringstream out;
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (i) out << ';';
    out << counts[i];
  }
  return out.str();
}

}  // namespace

void write_manifest(const PairedManifest& manifest) {
  manifest.validate();
  std::vector<std::vector<std::string>> rows;
  {
    std::vector<std::string> header;
    std::istringstream in(kManifestHeader);
    std::string field;
    while (std::getline(in, field, ',')) header.push_back(field);
    rows.push_back(header);
  }
  for (const ManifestRecord& r : manifest.records)
    rows.push_back({r.id, r.primary, r.privileged, std::to_string(r.label_a),
                    std::to_string(r.label_b), std::to_string(r.label_c), r.split, r.group});
  write_csv((fs::path(manifest.root) / "manifest.csv").string(), rows);
}

PairedManifest read_manifest(const std::string& root) {
  const auto rows = read_csv((fs::path(root) / "manifest.csv").string());
  require(!rows.empty(), "read_manifest: empty manifest in " + root);
  PairedManifest manifest;
  manifest.root = root;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    require(row.size() == 8, "read_manifest: malformed row in " + root);
    ManifestRecord r;
    r.id = row[0];
    r.primary = row[1];
    r.privileged = row[2];
    r.label_a = std::stoi(row[3]);
    r.label_b = std::stoi(row[4]);
    r.label_c = std::stoi(row[5]);
    r.split = row[6];
    r.group = row[7];
    manifest.records.push_back(std::move(r));
  }
  manifest.validate();
  return manifest;
}

std::vector<PairedSample> load_paired(const PairedManifest& manifest, const std::string& split) {
  manifest.validate();
  std::vector<PairedSample> samples;
  for (const ManifestRecord& r : manifest.records) {
    if (r.split != split) continue;
    PairedSample s;
    s.id = r.id;
    const fs::path primary_path = fs::path(manifest.root) / r.primary;
    require(fs::exists(primary_path), "load_paired: missing file for record " + r.id);
    s.primary = read_png(primary_path.string());
    if (!r.privileged.empty()) {
      if (looks_like_counts(r.privileged)) {
        s.privileged_counts = parse_counts(r.privileged);
      } else {
        const fs::path priv_path = fs::path(manifest.root) / r.privileged;
        require(fs::exists(priv_path), "load_paired: missing file for record " + r.id);
        s.privileged_image = read_png(priv_path.string());
      }
    }
    s.label_a = r.label_a;
    s.label_b = r.label_b;
    s.label_c = r.label_c;
    s.split = r.split;
    s.group = r.group;
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  RngStream rng(seed);
  rng.shuffle(idx);
  return idx;
}

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
  require(image_size >= 16, "SyntheticConfig: image_size must be >= 16");
  require(classes_per_factor == 4, "SyntheticConfig: four classes per factor");
  require(a_weak < sigma_aug && sigma_aug < a_strong,
          "SyntheticConfig: a_weak < sigma_aug < a_strong must hold");
  require(train_samples > 0 && test_samples > 0, "SyntheticConfig: empty split");
  require(counts_genes >= 8, "SyntheticConfig: counts_genes must be >= 8");
}

Image factor_pattern_quadrant(int value, int size) {
  require(value >= 0 && value < 4, "factor_pattern_quadrant: value out of range");
  Image out(size, size, 1);
  const int half = size / 2;
  const int y0 = (value / 2) * half, x0 = (value % 2) * half;
  for (int y = 0; y < half; ++y)
    for (int x = 0; x < half; ++x) {
      // texture varies with the value so the factor stays decodable after
      // translation-invariant pooling: solid, checker, row bars, column bars
      bool on = true;
      switch (value) {
        case 0: on = true; break;
        case 1: on = ((y / 2 + x / 2) % 2) == 0; break;
        case 2: on = (y % 4) < 2; break;
        default: on = (x % 4) < 2; break;
      }
      if (on) out.at(y0 + y, x0 + x, 0) = 1.0f;
    }
  return out;
}

Image factor_pattern_stripes(int value, int size) {
  require(value >= 0 && value < 4, "factor_pattern_stripes: value out of range");
  auto member = [size](int value_in, int y, int x) {
    switch (value_in) {
      case 0: return (x + y) % 4 == 0;                    // diagonal
      case 1: return ((x - y) % 4 + 4) % 4 == 1;          // anti-diagonal
      case 2: return y % 4 == 2;                          // rows
      default: return x % 4 == 3;                         // columns
    }
  };
  Image out(size, size, 1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      if (!member(value, y, x)) continue;
      bool shadowed = false;  // earlier families own overlapping pixels
      for (int prior = 0; prior < value && !shadowed; ++prior)
        shadowed = member(prior, y, x);
      if (!shadowed) out.at(y, x, 0) = 1.0f;
    }
  return out;
}

Image factor_pattern_border(int value, int size) {
  require(value >= 0 && value < 4, "factor_pattern_border: value out of range");
  Image out(size, size, 1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int depth = std::min(std::min(x, y), std::min(size - 1 - x, size - 1 - y));
      if (depth == 2 * value || depth == 2 * value + 1) out.at(y, x, 0) = 1.0f;
    }
  return out;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  RngStream rng(cfg.seed);

  SyntheticDataset dataset;
  dataset.manifest.root.clear();

  const auto make_split = [&](const std::string& split, int count, int id_base) {
    for (int i = 0; i < count; ++i) {
      const int a = static_cast<int>(rng.integer(4));
      const int b = static_cast<int>(rng.integer(4));
      const int c = static_cast<int>(rng.integer(4));

      PairedSample s;
      s.id = split + "_" + std::to_string(id_base + i);
      s.label_a = a;
      s.label_b = b;
      s.label_c = c;
      s.split = split;
      s.group = s.id;  // synthetic samples are their own group

      const Image qa = factor_pattern_quadrant(a, cfg.image_size);
      const Image sb = factor_pattern_stripes(b, cfg.image_size);
      const Image bc = factor_pattern_border(c, cfg.image_size);

      s.primary = Image(cfg.image_size, cfg.image_size, 1);
      for (Eigen::Index p = 0; p < s.primary.data.size(); ++p) {
        const double v = cfg.a_strong * qa.data[p] + cfg.a_weak * sb.data[p] +
                         rng.normal(0.0, cfg.base_noise);
        s.primary.data[p] = quantize_unit(static_cast<float>(v));
      }

      if (cfg.privileged_mode == PrivilegedMode::kImage) {
        s.privileged_image = Image(cfg.image_size, cfg.image_size, 1);
        for (Eigen::Index p = 0; p < s.privileged_image.data.size(); ++p) {
          const double v = cfg.a_strong * sb.data[p] + cfg.a_strong * bc.data[p];
          s.privileged_image.data[p] = quantize_unit(static_cast<float>(v));
        }
      } else {
        // two blocks, linear in B and C with distinct slopes
        s.privileged_counts = VecF::Zero(cfg.counts_genes);
        const int half = cfg.counts_genes / 2;
        for (int g = 0; g < half; ++g)
          s.privileged_counts[g] = static_cast<float>(b) * (1.0f + 0.25f * static_cast<float>(g % 8));
        for (int g = half; g < cfg.counts_genes; ++g)
          s.privileged_counts[g] = static_cast<float>(c) * (1.0f + 0.25f * static_cast<float>(g % 8));
      }

      ManifestRecord r;
      r.id = s.id;
      r.primary = "primary/" + s.id + ".png";
      if (cfg.privileged_mode == PrivilegedMode::kImage)
        r.privileged = "privileged/" + s.id + ".png";
      else
        r.privileged = format_counts(s.privileged_counts);
      r.label_a = a;
      r.label_b = b;
      r.label_c = c;
      r.split = split;
      r.group = s.group;

      dataset.samples.push_back(std::move(s));
      dataset.manifest.records.push_back(std::move(r));
    }
  };

  make_split("train", cfg.train_samples, 0);
  make_split("valid", cfg.valid_samples, cfg.train_samples);
  make_split("test", cfg.test_samples, cfg.train_samples + cfg.valid_samples);
  return dataset;
}

void save_dataset(const SyntheticDataset& dataset, const std::string& root) {
  fs::create_directories(fs::path(root) / "primary");
  bool any_privileged_image = false;
  for (const PairedSample& s : dataset.samples)
    if (s.privileged_image.height > 0) any_privileged_image = true;
  if (any_privileged_image) fs::create_directories(fs::path(root) / "privileged");

  for (const PairedSample& s : dataset.samples) {
    write_png((fs::path(root) / "primary" / (s.id + ".png")).string(), s.primary);
    if (s.privileged_image.height > 0)
      write_png((fs::path(root) / "privileged" / (s.id + ".png")).string(), s.privileged_image);
  }
  PairedManifest manifest = dataset.manifest;
  manifest.root = root;
  write_manifest(manifest);
}

// ---------------------------------------------------------------------------
// Preprocessing recipes
// ---------------------------------------------------------------------------

void PatchRecipe::validate() const {
  require(source_height > 0 && source_width > 0 && patch > 0, "PatchRecipe: empty geometry");
  require(resize_height > 0 && resize_width > 0, "PatchRecipe: empty resize target");
  require(resize_height % patch == 0 && resize_width % patch == 0,
          "PatchRecipe: patch grid must tile the resized image exactly");
}

std::vector<Image> extract_patches(const Image& image, const PatchRecipe& recipe) {
  recipe.validate();
  require(image.height == recipe.source_height && image.width == recipe.source_width,
          "extract_patches: image does not match the recipe source size");
  const Image resized = resize_bilinear(image, recipe.resize_height, recipe.resize_width);
  std::vector<Image> patches;
  for (int py = 0; py < recipe.resize_height / recipe.patch; ++py)
    for (int px = 0; px < recipe.resize_width / recipe.patch; ++px) {
      Image patch(recipe.patch, recipe.patch, image.channels);
      for (int y = 0; y < recipe.patch; ++y)
        for (int x = 0; x < recipe.patch; ++x)
          for (int c = 0; c < image.channels; ++c)
            patch.at(y, x, c) = resized.at(py * recipe.patch + y, px * recipe.patch + x, c);
      patches.push_back(std::move(patch));
    }
  return patches;
}

void write_counts_csv(const std::string& path, const RowMat& counts,
                      const std::vector<std::string>& gene_names) {
  require(static_cast<Eigen::Index>(gene_names.size()) == counts.cols(),
          "write_counts_csv: one gene name per column required");
  std::vector<std::vector<std::string>> rows;
  rows.push_back(gene_names);
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    std::vector<std::string> row;
    row.reserve(static_cast<std::size_t>(counts.cols()));
    for (Eigen::Index g = 0; g < counts.cols(); ++g) {
      std::ostringstream value;
      value << counts(i, g);
      row.push_back(value.str());
    }
    rows.push_back(std::move(row));
  }
  write_csv(path, rows);
}

std::pair<RowMat, std::vector<std::string>> read_counts_csv(const std::string& path) {
  const auto rows = read_csv(path);
  require(rows.size() >= 2, "read_counts_csv: need a header and at least one sample in " + path);
  const std::vector<std::string>& names = rows.front();
  RowMat counts(static_cast<Eigen::Index>(rows.size() - 1),
                static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    require(rows[i].size() == names.size(), "read_counts_csv: ragged row in " + path);
    for (std::size_t g = 0; g < names.size(); ++g)
      counts(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(g)) =
          std::stof(rows[i][g]);
  }
  return {std::move(counts), names};
}

GeneFilterResult filter_genes(const RowMat& counts, int min_occurrences, int min_count) {
  require((counts.array() >= 0.0f).all(), "filter_genes: counts must be nonnegative");
  GeneFilterResult result;
  for (Eigen::Index g = 0; g < counts.cols(); ++g) {
    const Eigen::Index hits = (counts.col(g).array() > static_cast<float>(min_count)).count();
    if (hits >= min_occurrences) result.kept.push_back(static_cast<int>(g));
  }
  result.counts.resize(counts.rows(), static_cast<Eigen::Index>(result.kept.size()));
  for (std::size_t j = 0; j < result.kept.size(); ++j)
    result.counts.col(static_cast<Eigen::Index>(j)) = counts.col(result.kept[j]);
  return result;
}

}  // namespace trident
