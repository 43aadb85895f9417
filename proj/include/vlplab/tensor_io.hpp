#pragma once

#include <string>

#include "vlplab/tensor.hpp"

namespace vlplab {

// Binary tensor file: magic "TNSR", u32 LE rank, rank x u32 LE dims, then the
// row-major payload as 32-bit LE IEEE-754. 32-bit is a storage format only;
// in-memory math stays in 64-bit.
void write_tnsr(const std::string& path, const Tensor& t);
Tensor read_tnsr(const std::string& path);

}  // namespace vlplab
