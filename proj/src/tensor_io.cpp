#include "vlplab/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace vlplab {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tnsr(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoError, "cannot open for write: " + path);
  os.write("TNSR", 4);
  put_u32(os, static_cast<uint32_t>(t.rank()));
  for (int64_t i = 0; i < t.rank(); ++i) put_u32(os, static_cast<uint32_t>(t.dim(i)));
  std::vector<float> payload(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) payload[static_cast<size_t>(i)] = static_cast<float>(t.at(i));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * 4));
  if (!os) throw Error(Errc::IoError, "write failed: " + path);
}

Tensor read_tnsr(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::MissingImageFile, "cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TNSR", 4) != 0)
    throw Error(Errc::CorruptRecord, "bad magic in " + path);
  uint32_t rank = get_u32(is);
  if (!is || rank == 0 || rank > 8) throw Error(Errc::CorruptRecord, "bad rank in " + path);
  std::vector<int64_t> dims(rank);
  int64_t n = 1;
  for (auto& d : dims) {
    d = static_cast<int64_t>(get_u32(is));
    if (!is || d <= 0) throw Error(Errc::CorruptRecord, "bad dim in " + path);
    n *= d;
  }
  std::vector<float> payload(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(n * 4));
  if (!is) throw Error(Errc::CorruptRecord, "truncated payload in " + path);
  std::vector<double> data(payload.begin(), payload.end());
  return Tensor(std::move(dims), std::move(data));
}

}  // namespace vlplab
