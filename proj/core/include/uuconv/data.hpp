#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uuconv/config.hpp"
#include "uuconv/tensor.hpp"

namespace uuconv {

enum class SampleTask { kSeg, kCls, kBoth };

struct SampleRecord {
  std::string id;
  std::string image_path;           // relative to the manifest directory
  std::string mask_path;            // empty when absent
  std::optional<int> label;
  int way = 0;                      // 2 or 4 when a label is present
  PromptSet prompts;
  SampleTask task = SampleTask::kSeg;

  bool has_mask() const { return !mask_path.empty(); }
  void validate() const;
};

struct DatasetManifest {
  int version = 1;
  int image_size = 0;
  PromptCardinalities prompt_cardinalities;
  std::vector<SampleRecord> samples;
  std::filesystem::path base_dir;  // set on load; not serialized

  void validate(bool check_files) const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path);

struct LoadedSample {
  Tensor image;            // [C, S, S], values in [0,1]
  std::vector<int> mask;   // S*S labels; empty when the record has no mask
  std::optional<int> label;
};

// Decodes PGM/PPM or raw-tensor images, rescales pixel values to [0,1],
// resizes to target_size (bilinear for the image, nearest for the mask) and
// replicates a single channel up to target_channels when needed.
LoadedSample load_sample(const DatasetManifest& manifest,
                         const SampleRecord& record, int target_size,
                         int target_channels, int seg_classes);

// Standalone image decode+resize+channel-fit (the image half of
// load_sample); also reports the on-disk size.
Tensor load_image_tensor(const std::filesystem::path& path, int target_size,
                         int target_channels, int* orig_h = nullptr,
                         int* orig_w = nullptr);

struct SplitResult {
  DatasetManifest train;
  DatasetManifest val;
  DatasetManifest test;
};

// Deterministic seeded shuffle, then contiguous 7:1:2 cut at floor(0.7 n)
// and floor(0.8 n). Exact partition.
SplitResult split_dataset(const DatasetManifest& manifest, std::uint64_t seed);

}  // namespace uuconv
