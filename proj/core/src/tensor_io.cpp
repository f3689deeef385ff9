#include "uuconv/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "uuconv/errors.hpp"

namespace uuconv {

namespace {

constexpr bool kNativeLittle = std::endian::native == std::endian::little;

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in, const std::string& where) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw IoError("truncated tensor header in " + where);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& tensor) {
  out.write(kTensorMagic, 8);
  const std::uint8_t dtype = kDtypeF64;
  const std::uint8_t rank = static_cast<std::uint8_t>(tensor.rank());
  out.put(static_cast<char>(dtype));
  out.put(static_cast<char>(rank));
  for (std::size_t e : tensor.shape()) put_u64(out, e);
  const auto& v = tensor.values();
  if constexpr (kNativeLittle) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  } else {
    for (double d : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, 8);
      put_u64(out, bits);
    }
  }
  if (!out) throw IoError("failed writing tensor payload");
}

Tensor read_tensor(std::istream& in, const std::string& where) {
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kTensorMagic, 8) != 0) {
    throw IoError("bad tensor magic in " + where);
  }
  const int dtype = in.get();
  const int rank = in.get();
  if (dtype == EOF || rank == EOF) {
    throw IoError("truncated tensor header in " + where);
  }
  if (dtype != kDtypeF64) {
    throw IoError("unsupported tensor dtype code " + std::to_string(dtype) +
                  " in " + where);
  }
  Shape shape(static_cast<std::size_t>(rank));
  for (auto& e : shape) {
    e = static_cast<std::size_t>(get_u64(in, where));
    if (e == 0) throw IoError("zero extent in tensor header in " + where);
  }
  const std::size_t count = shape_numel(shape);
  std::vector<double> values(count);
  if constexpr (kNativeLittle) {
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) {
      throw IoError("truncated tensor payload in " + where);
    }
  } else {
    for (auto& d : values) {
      const std::uint64_t bits = get_u64(in, where);
      std::memcpy(&d, &bits, 8);
    }
  }
  return Tensor::from_values(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create tensor file " + path.string());
  write_tensor(out, tensor);
  if (!out) throw IoError("failed writing tensor file " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file " + path.string());
  return read_tensor(in, path.string());
}

}  // namespace uuconv
