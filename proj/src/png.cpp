#include "mrt/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace mrt {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& payload) {
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const std::uint32_t crc = static_cast<std::uint32_t>(
      ::crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
  put_u32(out, crc);
}

}  // namespace

std::vector<std::uint8_t> encode_png_gray(const Tensor& image) {
  if (image.rank() != 2) throw ShapeMismatch("encode_png_gray: image must be (H,W)");
  const int H = image.dim(0), W = image.dim(1);

  // Raw scanlines with filter byte 0.
  std::vector<std::uint8_t> raw(static_cast<size_t>(H) * (W + 1));
  for (int y = 0; y < H; ++y) {
    raw[static_cast<size_t>(y) * (W + 1)] = 0;
    for (int x = 0; x < W; ++x) {
      double v = image.at(y, x);
      v = v < 0 ? 0 : (v > 1 ? 1 : v);
      raw[static_cast<size_t>(y) * (W + 1) + 1 + x] =
          static_cast<std::uint8_t>(v * 255.0 + 0.5);
    }
  }
  uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (::compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw Error("png: deflate failed");
  compressed.resize(bound);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(W));
  put_u32(ihdr, static_cast<std::uint32_t>(H));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", compressed);
  put_chunk(out, "IEND", {});
  return out;
}

void write_png_gray(const std::string& path, const Tensor& image) {
  const auto bytes = encode_png_gray(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IOError("short write to " + path);
}

}  // namespace mrt
