#include "uuconv/image_io.hpp"

#include <fstream>
#include <string>

#include "uuconv/errors.hpp"

namespace uuconv {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& file) {
  std::string tok;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  if (tok.empty()) {
    throw IoError("malformed PNM header in " + file + ": unexpected end");
  }
  return tok;
}

int parse_positive(const std::string& tok, const std::string& file,
                   const char* what) {
  try {
    const int v = std::stoi(tok);
    if (v <= 0) throw std::invalid_argument("not positive");
    return v;
  } catch (const std::exception&) {
    throw IoError("malformed PNM header in " + file + ": bad " +
                  std::string(what) + " '" + tok + "'");
  }
}

}  // namespace

ImageU8 read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image file " + path.string());
  const std::string file = path.string();

  const std::string magic = next_token(in, file);
  ImageU8 img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw IoError("unsupported PNM magic '" + magic + "' in " + file +
                  " (binary P5/P6 only)");
  }
  img.width = parse_positive(next_token(in, file), file, "width");
  img.height = parse_positive(next_token(in, file), file, "height");
  img.maxval = parse_positive(next_token(in, file), file, "maxval");
  if (img.maxval > 255) {
    throw IoError("maxval " + std::to_string(img.maxval) + " in " + file +
                  " exceeds 255 (single-byte samples only)");
  }

  const std::size_t count = static_cast<std::size_t>(img.width) *
                            static_cast<std::size_t>(img.height) *
                            static_cast<std::size_t>(img.channels);
  std::vector<std::uint8_t> interleaved(count);
  in.read(reinterpret_cast<char*>(interleaved.data()),
          static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) {
    throw IoError("truncated pixel payload in " + file + ": expected " +
                  std::to_string(count) + " bytes, got " +
                  std::to_string(in.gcount()));
  }

  // PNM is interleaved on disk; flip to planar.
  img.pixels.resize(count);
  const std::size_t plane = static_cast<std::size_t>(img.width) *
                            static_cast<std::size_t>(img.height);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < img.channels; ++c) {
      img.pixels[static_cast<std::size_t>(c) * plane + p] =
          interleaved[p * static_cast<std::size_t>(img.channels) +
                      static_cast<std::size_t>(c)];
    }
  }
  return img;
}

void write_pnm(const std::filesystem::path& path, const ImageU8& img) {
  if (img.width <= 0 || img.height <= 0 ||
      (img.channels != 1 && img.channels != 3)) {
    throw ValidationError("write_pnm: bad image dims " +
                          std::to_string(img.width) + "x" +
                          std::to_string(img.height) + "x" +
                          std::to_string(img.channels));
  }
  if (img.maxval <= 0 || img.maxval > 255) {
    throw ValidationError("write_pnm: maxval must be in [1,255]");
  }
  const std::size_t plane = static_cast<std::size_t>(img.width) *
                            static_cast<std::size_t>(img.height);
  const std::size_t count = plane * static_cast<std::size_t>(img.channels);
  if (img.pixels.size() != count) {
    throw ValidationError("write_pnm: pixel buffer has " +
                          std::to_string(img.pixels.size()) +
                          " bytes, expected " + std::to_string(count));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create image file " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n"
      << img.maxval << "\n";
  std::vector<std::uint8_t> interleaved(count);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < img.channels; ++c) {
      interleaved[p * static_cast<std::size_t>(img.channels) +
                  static_cast<std::size_t>(c)] =
          img.pixels[static_cast<std::size_t>(c) * plane + p];
    }
  }
  out.write(reinterpret_cast<const char*>(interleaved.data()),
            static_cast<std::streamsize>(count));
  if (!out) throw IoError("failed writing image file " + path.string());
}

}  // namespace uuconv
