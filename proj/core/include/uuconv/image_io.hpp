#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace uuconv {

// 8-bit image, planar layout: pixels[c*h*w + y*w + x]. channels is 1 for
// PGM (P5), 3 for PPM (P6).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  int maxval = 255;
  std::vector<std::uint8_t> pixels;
};

ImageU8 read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const ImageU8& image);

}  // namespace uuconv
