#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "uuconv/data.hpp"

namespace uuconv {

// Ground-truth construction record for one synthetic sample, kept so tests
// can check the generator against the analytic ellipse.
struct SyntheticInfo {
  std::string id;
  bool has_lesion = false;
  double center_x = 0.0;
  double center_y = 0.0;
  double axis_a = 0.0;
  double axis_b = 0.0;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<SyntheticInfo> info;
};

// Writes a desk-scale ultrasound-like dataset: speckled backgrounds with
// elliptical lesions. Segmentation masks are the ellipse interiors; 2-way
// labels flag lesion presence; 4-way labels are the quadrant of the lesion
// center (cycling). Prompt position indices cycle through the 7 regions.
// Fully reproducible from the seed.
SyntheticDataset gen_synthetic(const std::filesystem::path& out_dir,
                               int n_seg, int n_cls, int size,
                               std::uint64_t seed);

}  // namespace uuconv
