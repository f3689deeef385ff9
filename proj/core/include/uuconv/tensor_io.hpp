#pragma once

#include <filesystem>
#include <iosfwd>

#include "uuconv/tensor.hpp"

namespace uuconv {

// Raw tensor interchange format, little-endian throughout:
//   magic "UUTENSR1" | u8 dtype (1 = float64) | u8 rank |
//   rank x u64 extents | packed payload.
inline constexpr char kTensorMagic[8] = {'U', 'U', 'T', 'E',
                                         'N', 'S', 'R', '1'};
inline constexpr std::uint8_t kDtypeF64 = 1;

void write_tensor(std::ostream& out, const Tensor& tensor);
Tensor read_tensor(std::istream& in, const std::string& where);

void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace uuconv
