#include "uuconv/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "uuconv/errors.hpp"

namespace uuconv {

void AugmentConfig::validate() const {
  if (flip_prob < 0.0 || flip_prob > 1.0) {
    throw ValidationError("flip_prob must be in [0,1]");
  }
  if (max_rotation_deg < 0.0 || max_rotation_deg >= 90.0) {
    throw ValidationError("max_rotation_deg must be in [0,90)");
  }
  if (crop_fraction <= 0.0 || crop_fraction > 1.0) {
    throw ValidationError("crop_fraction must be in (0,1]");
  }
}

namespace {

struct ChwView {
  int c, h, w;
};

ChwView check_chw_square(const Tensor& image) {
  if (image.rank() != 3 || image.extent(1) != image.extent(2)) {
    throw ValidationError("augment expects a square [C,S,S] image, got " +
                          shape_str(image.shape()));
  }
  return {static_cast<int>(image.extent(0)),
          static_cast<int>(image.extent(1)),
          static_cast<int>(image.extent(2))};
}

double sample_bilinear_zero(const double* plane, int h, int w, double y,
                            double x) {
  if (y <= -1.0 || y >= static_cast<double>(h) || x <= -1.0 ||
      x >= static_cast<double>(w)) {
    return 0.0;
  }
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double ty = y - y0;
  const double tx = x - x0;
  auto at = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return plane[yy * w + xx];
  };
  return at(y0, x0) * (1 - ty) * (1 - tx) + at(y0, x0 + 1) * (1 - ty) * tx +
         at(y0 + 1, x0) * ty * (1 - tx) + at(y0 + 1, x0 + 1) * ty * tx;
}

void rotate_image(Tensor& image, double deg) {
  const ChwView v = check_chw_square(image);
  const double rad = deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = (v.h - 1) * 0.5, cx = (v.w - 1) * 0.5;
  std::vector<double> out(image.size());
  const double* src = image.values().data();
  for (int ch = 0; ch < v.c; ++ch) {
    const double* plane = src + static_cast<std::size_t>(ch) * v.h * v.w;
    double* dst = out.data() + static_cast<std::size_t>(ch) * v.h * v.w;
    for (int y = 0; y < v.h; ++y) {
      for (int x = 0; x < v.w; ++x) {
        // Inverse mapping: source = R(-deg) * (dst - center) + center.
        const double dy = y - cy, dx = x - cx;
        const double sy = c * dy - s * dx + cy;
        const double sx = s * dy + c * dx + cx;
        dst[y * v.w + x] = sample_bilinear_zero(plane, v.h, v.w, sy, sx);
      }
    }
  }
  image.values() = std::move(out);
}

void rotate_labels(std::vector<int>& labels, int h, int w, double deg) {
  const double rad = deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = (h - 1) * 0.5, cx = (w - 1) * 0.5;
  std::vector<int> out(labels.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dy = y - cy, dx = x - cx;
      const int sy = static_cast<int>(std::lround(c * dy - s * dx + cy));
      const int sx = static_cast<int>(std::lround(s * dy + c * dx + cx));
      if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
        out[y * w + x] = labels[sy * w + sx];
      }
    }
  }
  labels = std::move(out);
}

void flip_image(Tensor& image) {
  const ChwView v = check_chw_square(image);
  double* data = image.values().data();
  for (int ch = 0; ch < v.c; ++ch) {
    double* plane = data + static_cast<std::size_t>(ch) * v.h * v.w;
    for (int y = 0; y < v.h; ++y) {
      std::reverse(plane + y * v.w, plane + (y + 1) * v.w);
    }
  }
}

void flip_labels(std::vector<int>& labels, int h, int w) {
  for (int y = 0; y < h; ++y) {
    std::reverse(labels.begin() + y * w, labels.begin() + (y + 1) * w);
  }
}

}  // namespace

Tensor resize_bilinear_chw(const Tensor& chw, int out_h, int out_w) {
  if (chw.rank() != 3) {
    throw ValidationError("resize_bilinear_chw expects [C,H,W], got " +
                          shape_str(chw.shape()));
  }
  if (out_h < 1 || out_w < 1) {
    throw ValidationError("resize target must be positive");
  }
  const int c = static_cast<int>(chw.extent(0));
  const int h = static_cast<int>(chw.extent(1));
  const int w = static_cast<int>(chw.extent(2));
  if (h == out_h && w == out_w) return chw;
  Tensor out = Tensor::zeros({static_cast<std::size_t>(c),
                              static_cast<std::size_t>(out_h),
                              static_cast<std::size_t>(out_w)});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  const double* src = chw.values().data();
  double* dst = out.values().data();
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = src + static_cast<std::size_t>(ch) * h * w;
    double* oplane = dst + static_cast<std::size_t>(ch) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      double fy = (y + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double ty = fy - y0;
      for (int x = 0; x < out_w; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double tx = fx - x0;
        const double top = plane[y0 * w + x0] * (1 - tx) +
                           plane[y0 * w + x1] * tx;
        const double bot = plane[y1 * w + x0] * (1 - tx) +
                           plane[y1 * w + x1] * tx;
        oplane[y * out_w + x] = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

std::vector<int> resize_nearest_labels(const std::vector<int>& labels, int h,
                                       int w, int out_h, int out_w) {
  if (labels.size() != static_cast<std::size_t>(h) * w) {
    throw ValidationError("resize_nearest_labels: label buffer size does not "
                          "match dims");
  }
  if (h == out_h && w == out_w) return labels;
  std::vector<int> out(static_cast<std::size_t>(out_h) * out_w);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const int iy = std::min(static_cast<int>((y + 0.5) * sy), h - 1);
    for (int x = 0; x < out_w; ++x) {
      const int ix = std::min(static_cast<int>((x + 0.5) * sx), w - 1);
      out[y * out_w + x] = labels[iy * w + ix];
    }
  }
  return out;
}

AugmentParams draw_augment_params(const AugmentConfig& config, int side,
                                  Rng& rng) {
  config.validate();
  if (side < 2) throw ValidationError("augment: image side must be >= 2");
  AugmentParams p;
  p.flip = rng.bernoulli(config.flip_prob);
  p.rotation_deg =
      rng.uniform(-config.max_rotation_deg, config.max_rotation_deg);
  p.crop_size = std::max(
      1, static_cast<int>(std::lround(side * config.crop_fraction)));
  p.crop_size = std::min(p.crop_size, side);
  const int slack = side - p.crop_size;
  p.crop_x = slack > 0 ? static_cast<int>(rng.below(slack + 1)) : 0;
  p.crop_y = slack > 0 ? static_cast<int>(rng.below(slack + 1)) : 0;
  return p;
}

void apply_augment(Tensor& image, std::vector<int>* mask,
                   const AugmentParams& params) {
  const ChwView v = check_chw_square(image);
  if (mask && mask->size() != static_cast<std::size_t>(v.h) * v.w) {
    throw ValidationError("augment: mask size does not match image");
  }
  if (params.flip) {
    flip_image(image);
    if (mask) flip_labels(*mask, v.h, v.w);
  }
  if (params.rotation_deg != 0.0) {
    rotate_image(image, params.rotation_deg);
    if (mask) rotate_labels(*mask, v.h, v.w, params.rotation_deg);
  }
  const int cs = params.crop_size > 0 ? params.crop_size : v.h;
  if (cs != v.h || params.crop_x != 0 || params.crop_y != 0) {
    if (params.crop_x < 0 || params.crop_y < 0 || params.crop_x + cs > v.w ||
        params.crop_y + cs > v.h) {
      throw ValidationError("augment: crop window out of bounds");
    }
    Tensor cropped = Tensor::zeros({static_cast<std::size_t>(v.c),
                                    static_cast<std::size_t>(cs),
                                    static_cast<std::size_t>(cs)});
    const double* src = image.values().data();
    double* dst = cropped.values().data();
    for (int ch = 0; ch < v.c; ++ch) {
      for (int y = 0; y < cs; ++y) {
        const double* srow = src + (static_cast<std::size_t>(ch) * v.h +
                                    params.crop_y + y) * v.w + params.crop_x;
        std::copy(srow, srow + cs,
                  dst + (static_cast<std::size_t>(ch) * cs + y) * cs);
      }
    }
    image = resize_bilinear_chw(cropped, v.h, v.w);
    if (mask) {
      std::vector<int> mcrop(static_cast<std::size_t>(cs) * cs);
      for (int y = 0; y < cs; ++y) {
        for (int x = 0; x < cs; ++x) {
          mcrop[y * cs + x] =
              (*mask)[(params.crop_y + y) * v.w + params.crop_x + x];
        }
      }
      *mask = resize_nearest_labels(mcrop, cs, cs, v.h, v.w);
    }
  }
}

void augment(Tensor& image, std::vector<int>* mask,
             const AugmentConfig& config, Rng& rng) {
  const ChwView v = check_chw_square(image);
  AugmentParams params = draw_augment_params(config, v.h, rng);
  apply_augment(image, mask, params);
}

}  // namespace uuconv
