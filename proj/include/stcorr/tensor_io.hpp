#pragma once

#include <filesystem>
#include <iosfwd>

#include "stcorr/tensor.hpp"

namespace stcorr {

// "STT1" container: bytes 0-3 ASCII magic `STT1`, byte 4 rank (u8, 1-5),
// then rank little-endian u64 dims, then row-major IEEE-754 binary32
// payload. No padding, no footer. Round-trips are bitwise exact.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace stcorr
