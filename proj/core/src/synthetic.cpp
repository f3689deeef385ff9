#include "uuconv/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "uuconv/errors.hpp"
#include "uuconv/image_io.hpp"
#include "uuconv/rng.hpp"

namespace uuconv {

namespace {

struct Ellipse {
  double cx, cy, a, b, phi;
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(phi), s = std::sin(phi);
    const double u = (dx * c + dy * s) / a;
    const double v = (-dx * s + dy * c) / b;
    return u * u + v * v <= 1.0;
  }
};

// Lesion somewhere fully inside the image; optionally constrained to one
// quadrant (with a margin so the quadrant of the center is unambiguous).
Ellipse draw_ellipse(Rng& rng, int size, int quadrant /* -1 = anywhere */) {
  Ellipse e;
  const double s = static_cast<double>(size);
  e.a = rng.uniform(0.14 * s, 0.24 * s);
  e.b = rng.uniform(0.14 * s, 0.24 * s);
  e.phi = rng.uniform(0.0, std::numbers::pi);
  const double r = std::max(e.a, e.b);
  const double lo = r + 1.0, hi = s - r - 1.0;
  if (quadrant < 0) {
    e.cx = rng.uniform(lo, hi);
    e.cy = rng.uniform(lo, hi);
  } else {
    const double margin = 0.04 * s;
    const double half = 0.5 * s;
    const bool qx = quadrant & 1;
    const bool qy = quadrant & 2;
    e.cx = qx ? rng.uniform(std::max(lo, half + margin), hi)
              : rng.uniform(lo, std::min(hi, half - margin));
    e.cy = qy ? rng.uniform(std::max(lo, half + margin), hi)
              : rng.uniform(lo, std::min(hi, half - margin));
  }
  return e;
}

std::string zero_pad(int v) {
  std::string s = std::to_string(v);
  while (s.size() < 4) s.insert(s.begin(), '0');
  return s;
}

// Speckled single-channel image; lesion pixels are hypoechoic (darker).
ImageU8 render(Rng& rng, int size, const Ellipse* lesion,
               std::vector<int>* mask_out) {
  ImageU8 img;
  img.width = size;
  img.height = size;
  img.channels = 1;
  img.pixels.resize(static_cast<std::size_t>(size) * size);
  if (mask_out) mask_out->assign(img.pixels.size(), 0);

  const double bg = rng.uniform(0.45, 0.6);
  const double fg = rng.uniform(0.1, 0.2);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool inside = lesion && lesion->contains(x, y);
      const double base = inside ? fg : bg;
      const double speckle = 0.75 + 0.5 * rng.uniform();
      const double v = std::clamp(base * speckle, 0.0, 1.0);
      img.pixels[static_cast<std::size_t>(y) * size + x] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
      if (inside && mask_out) {
        (*mask_out)[static_cast<std::size_t>(y) * size + x] = 1;
      }
    }
  }
  return img;
}

void write_mask(const std::filesystem::path& path,
                const std::vector<int>& mask, int size) {
  ImageU8 m;
  m.width = size;
  m.height = size;
  m.channels = 1;
  m.pixels.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    m.pixels[i] = static_cast<std::uint8_t>(mask[i]);
  }
  write_pnm(path, m);
}

}  // namespace

SyntheticDataset gen_synthetic(const std::filesystem::path& out_dir,
                               int n_seg, int n_cls, int size,
                               std::uint64_t seed) {
  if (size < 32 || size % 32 != 0) {
    throw ValidationError("gen_synthetic: size must be a positive multiple "
                          "of 32, got " + std::to_string(size));
  }
  if (n_seg < 0 || n_cls < 0 || n_seg + n_cls == 0) {
    throw ValidationError("gen_synthetic: need a positive sample count");
  }
  std::filesystem::create_directories(out_dir / "images");
  std::filesystem::create_directories(out_dir / "masks");

  SyntheticDataset ds;
  ds.manifest.version = 1;
  ds.manifest.image_size = size;
  ds.manifest.base_dir = out_dir;
  const auto& cards = ds.manifest.prompt_cardinalities;

  for (int i = 0; i < n_seg; ++i) {
    Rng rng(Rng::mix(seed, 0x736567ULL /* "seg" */, static_cast<std::uint64_t>(i)));
    const Ellipse e = draw_ellipse(rng, size, -1);
    std::vector<int> mask;
    const ImageU8 img = render(rng, size, &e, &mask);

    SampleRecord r;
    r.id = "seg-" + zero_pad(i);
    r.image_path = "images/" + r.id + ".pgm";
    r.mask_path = "masks/" + r.id + ".pgm";
    r.task = SampleTask::kSeg;
    r.prompts.nature = i % cards.nature;
    r.prompts.position = i % cards.position;
    r.prompts.task = 0;
    r.prompts.type = i % cards.type;
    write_pnm(out_dir / r.image_path, img);
    write_mask(out_dir / r.mask_path, mask, size);
    ds.manifest.samples.push_back(std::move(r));
    ds.info.push_back({"seg-" + zero_pad(i), true, e.cx, e.cy, e.a, e.b});
  }

  for (int i = 0; i < n_cls; ++i) {
    Rng rng(Rng::mix(seed, 0x636c73ULL /* "cls" */, static_cast<std::uint64_t>(i)));
    SampleRecord r;
    r.id = "cls-" + zero_pad(i);
    r.image_path = "images/" + r.id + ".pgm";
    r.task = SampleTask::kCls;
    r.way = (i % 2 == 0) ? 2 : 4;
    r.prompts.nature = i % cards.nature;
    r.prompts.position = i % cards.position;
    r.prompts.task = 1;
    r.prompts.type = (r.way == 4) ? 1 : 0;

    SyntheticInfo info;
    info.id = r.id;
    if (r.way == 2) {
      // Alternate lesion presence among the 2-way samples.
      info.has_lesion = ((i / 2) % 2) == 1;
      r.label = info.has_lesion ? 1 : 0;
      if (info.has_lesion) {
        const Ellipse e = draw_ellipse(rng, size, -1);
        info.center_x = e.cx;
        info.center_y = e.cy;
        info.axis_a = e.a;
        info.axis_b = e.b;
        write_pnm(out_dir / r.image_path, render(rng, size, &e, nullptr));
      } else {
        write_pnm(out_dir / r.image_path, render(rng, size, nullptr, nullptr));
      }
    } else {
      const int quadrant = (i / 2) % 4;
      const Ellipse e = draw_ellipse(rng, size, quadrant);
      info.has_lesion = true;
      info.center_x = e.cx;
      info.center_y = e.cy;
      info.axis_a = e.a;
      info.axis_b = e.b;
      r.label = quadrant;
      write_pnm(out_dir / r.image_path, render(rng, size, &e, nullptr));
    }
    ds.manifest.samples.push_back(std::move(r));
    ds.info.push_back(std::move(info));
  }

  save_manifest(ds.manifest, out_dir / "manifest.json");
  return ds;
}

}  // namespace uuconv
