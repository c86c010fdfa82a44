#include "sspix/feature_dump.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "sspix/png_io.hpp"

namespace sspix {

namespace {

constexpr std::uint32_t kMagic = 0x31504D46u;  // "FMP1" little-endian

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_feature_dump(const std::string& path, const Tensor& chw) {
  if (chw.ndim() != 3) throw IoError("write_feature_dump: expects (C,H,W)");
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  put_u32(os, kMagic);
  put_u32(os, static_cast<std::uint32_t>(h));
  put_u32(os, static_cast<std::uint32_t>(w));
  put_u32(os, static_cast<std::uint32_t>(c));
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::vector<float> row(static_cast<std::size_t>(w) * c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int ci = 0; ci < c; ++ci)
        row[static_cast<std::size_t>(x) * c + ci] =
            static_cast<float>(chw[ci * hw + static_cast<std::int64_t>(y) * w + x]);
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw IoError("write failed: " + path);
}

Tensor read_feature_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  if (get_u32(is) != kMagic) throw IoError("bad feature dump magic: " + path);
  const int h = static_cast<int>(get_u32(is));
  const int w = static_cast<int>(get_u32(is));
  const int c = static_cast<int>(get_u32(is));
  if (!is || h <= 0 || w <= 0 || c <= 0) throw IoError("bad feature dump header: " + path);
  Tensor out({c, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::vector<float> row(static_cast<std::size_t>(w) * c);
  for (int y = 0; y < h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!is) throw IoError("truncated feature dump: " + path);
    for (int x = 0; x < w; ++x)
      for (int ci = 0; ci < c; ++ci)
        out[ci * hw + static_cast<std::int64_t>(y) * w + x] =
            static_cast<real>(row[static_cast<std::size_t>(x) * c + ci]);
  }
  return out;
}

}  // namespace sspix
