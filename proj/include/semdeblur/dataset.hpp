#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semdeblur/alignment.hpp"
#include "semdeblur/blur_synth.hpp"
#include "semdeblur/rng.hpp"
#include "semdeblur/semantic_map.hpp"

namespace semdeblur {

inline constexpr int kFaceSize = 128;

struct FaceSample {
  Image clear;
  Image blurred;
  int kernel_id = -1;
  int kernel_size = 0;
  std::optional<SemanticMap> labels;
  std::optional<std::string> identity;
  std::size_t entry_index = 0;
};

struct ManifestEntry {
  std::string clear_path;  // relative to the manifest directory
  int kernel_id = 0;
  std::uint64_t noise_seed = 0;
  std::optional<std::string> labels_path;
  std::optional<std::string> identity;
  std::optional<std::string> blurred_path;  // materialized 8-bit copy
};

// JSON-lines file: a header line {"manifest": {...}} followed by one entry
// object per line.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  DegradationConfig degradation;
  std::string kernel_bank_path;  // relative to the manifest directory
  Landmarks alignment = canonical_template(kFaceSize);
  std::filesystem::path base_dir;  // set on load/save; not serialized

  std::filesystem::path resolve(const std::string& rel) const {
    return base_dir / rel;
  }
  bool has_labels() const;

  void save(const std::filesystem::path& path);
  static DatasetManifest load(const std::filesystem::path& path);
};

struct SynthesisOptions {
  std::filesystem::path clear_dir;
  std::optional<std::filesystem::path> labels_dir;
  std::optional<std::filesystem::path> landmarks_dir;
  std::filesystem::path kernel_bank_path;
  DegradationConfig degradation;
  std::filesystem::path out_dir;
  int pairs_per_image = 0;  // 0 = full image x kernel cross product
  bool materialize = false;
  std::uint64_t seed = 0;
};

// Enumerates *.png in clear_dir (sorted by name). Identity is the file stem
// up to its first '_' when the stem has one. Writes out_dir/manifest.jsonl.
DatasetManifest synthesize_dataset(const SynthesisOptions& opts);

// A manifest with its bank and decoded images; regenerates blurred images
// from (clear, kernel, noise_seed) on demand.
class Dataset {
 public:
  explicit Dataset(DatasetManifest manifest);
  static Dataset open(const std::filesystem::path& manifest_path);

  const DatasetManifest& manifest() const { return manifest_; }
  const KernelBank& bank() const { return bank_; }
  std::size_t size() const { return manifest_.entries.size(); }

  FaceSample sample(std::size_t index) const;
  Image regenerate_blurred(std::size_t index) const;
  int kernel_size(std::size_t index) const;

 private:
  const Image& clear_image(const std::string& rel) const;
  const SemanticMap& label_map(const std::string& rel) const;

  DatasetManifest manifest_;
  KernelBank bank_;
  mutable std::map<std::string, Image> clear_cache_;
  mutable std::map<std::string, SemanticMap> label_cache_;
};

struct AugmentParams {
  double max_rotation_deg = 10.0;
  double min_scale = 0.95;
  double max_scale = 1.05;
  double max_translation = 4.0;
};

// Applies one random similarity about the image center to clear, blurred and
// labels of the sample.
void augment_sample(FaceSample& sample, Rng& rng,
                    const AugmentParams& params = {});

// Epoch-shuffled batches; the final partial batch of an epoch is emitted.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, int batch_size, bool augment,
                std::uint64_t seed);

  std::vector<FaceSample> next();
  int epoch() const { return epoch_; }

 private:
  void start_epoch();

  const Dataset* data_;
  int batch_size_;
  bool augment_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int epoch_ = -1;
};

}  // namespace semdeblur
