#pragma once

#include <vector>

#include "uuconv/rng.hpp"
#include "uuconv/tensor.hpp"

namespace uuconv {

struct AugmentConfig {
  double flip_prob = 0.5;
  double max_rotation_deg = 20.0;
  double crop_fraction = 0.875;  // crop side as a fraction of the input side

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

// One concrete draw of the augmentation pipeline, applied identically to an
// image and its mask: horizontal flip, rotation about the center (bilinear
// for images, nearest for masks, zero fill), random crop, resize back.
struct AugmentParams {
  bool flip = false;
  double rotation_deg = 0.0;
  int crop_size = 0;  // crop window side; 0 means no crop
  int crop_x = 0;
  int crop_y = 0;
};

AugmentParams draw_augment_params(const AugmentConfig& config, int side,
                                  Rng& rng);

// image is [C,S,S]; mask (optional) is S*S class indices.
void apply_augment(Tensor& image, std::vector<int>* mask,
                   const AugmentParams& params);

void augment(Tensor& image, std::vector<int>* mask,
             const AugmentConfig& config, Rng& rng);

// Plain resampling helpers (not tape ops; used by the loader as well).
// Bilinear supports both up- and downscaling here.
Tensor resize_bilinear_chw(const Tensor& chw, int out_h, int out_w);
std::vector<int> resize_nearest_labels(const std::vector<int>& labels, int h,
                                       int w, int out_h, int out_w);

}  // namespace uuconv
