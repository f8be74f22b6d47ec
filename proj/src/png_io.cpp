#include "benet/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace benet {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

std::uint32_t get_u32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + crc_start,
                          static_cast<uInt>(4 + data.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

[[noreturn]] void parse_fail(const std::string& path, size_t offset, const std::string& what) {
  throw std::runtime_error("load_png: " + path + ": offset " + std::to_string(offset) + ": " +
                           what);
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void save_png(const std::string& path, const Tensor& image) {
  if (image.dim() != 3 || image.extent(0) != 3) {
    throw std::invalid_argument("save_png: expects (3,H,W) image, got " + shape_str(image.shape()));
  }
  const int h = image.extent(1), w = image.extent(2);
  const auto& v = image.values();
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;

  // filter type 0 per scanline
  std::vector<unsigned char> raw(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * 3));
  size_t pos = 0;
  for (int y = 0; y < h; ++y) {
    raw[pos++] = 0;
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        real val = v[static_cast<size_t>(c * plane + static_cast<std::int64_t>(y) * w + x)];
        val = std::min(real(1), std::max(real(0), val));
        raw[pos++] = static_cast<unsigned char>(std::lround(val * 255.0));
      }
    }
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw std::runtime_error("save_png: deflate failed");
  }
  compressed.resize(bound);

  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<unsigned char> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(w));
  put_u32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor RGB
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // adaptive filtering
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_png: cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("save_png: write failed for " + path);
}

Tensor load_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_png: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());

  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0) {
    parse_fail(path, 0, "not a PNG file (bad signature)");
  }

  size_t pos = 8;
  int width = 0, height = 0, bit_depth = 0, color_type = 0;
  std::vector<unsigned char> idat;
  bool seen_ihdr = false, seen_iend = false;
  while (pos + 8 <= buf.size() && !seen_iend) {
    const std::uint32_t len = get_u32(buf.data() + pos);
    if (pos + 12 + len > buf.size()) parse_fail(path, pos, "truncated chunk");
    const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
    const unsigned char* data = buf.data() + pos + 8;
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), buf.data() + pos + 4, 4 + len);
    if (static_cast<std::uint32_t>(crc) != get_u32(buf.data() + pos + 8 + len)) {
      parse_fail(path, pos, "chunk CRC mismatch");
    }
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) parse_fail(path, pos, "bad IHDR length");
      width = static_cast<int>(get_u32(data));
      height = static_cast<int>(get_u32(data + 4));
      bit_depth = data[8];
      color_type = data[9];
      if (data[10] != 0 || data[11] != 0) parse_fail(path, pos, "unsupported compression/filter");
      if (data[12] != 0) parse_fail(path, pos, "interlaced PNG not supported");
      if (bit_depth != 8) parse_fail(path, pos, "only 8-bit depth supported");
      if (color_type != 2 && color_type != 6) {
        parse_fail(path, pos, "only RGB/RGBA color types supported");
      }
      if (width <= 0 || height <= 0) parse_fail(path, pos, "bad image dimensions");
      seen_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      if (!seen_ihdr) parse_fail(path, pos, "IDAT before IHDR");
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_iend = true;
    }
    pos += 12 + len;
  }
  if (!seen_ihdr) parse_fail(path, pos, "missing IHDR");
  if (idat.empty()) parse_fail(path, pos, "missing IDAT");

  const int channels = (color_type == 2) ? 3 : 4;
  const size_t stride = static_cast<size_t>(width) * static_cast<size_t>(channels);
  std::vector<unsigned char> raw(static_cast<size_t>(height) * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  const int rc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
  if (rc != Z_OK || raw_len != raw.size()) parse_fail(path, pos, "inflate failed");

  // de-filter scanlines
  std::vector<unsigned char> pixels(static_cast<size_t>(height) * stride);
  const int bpp = channels;
  for (int y = 0; y < height; ++y) {
    const unsigned char filter = raw[static_cast<size_t>(y) * (stride + 1)];
    const unsigned char* src = raw.data() + static_cast<size_t>(y) * (stride + 1) + 1;
    unsigned char* dst = pixels.data() + static_cast<size_t>(y) * stride;
    const unsigned char* up = y > 0 ? pixels.data() + static_cast<size_t>(y - 1) * stride : nullptr;
    for (size_t x = 0; x < stride; ++x) {
      const int a = x >= static_cast<size_t>(bpp) ? dst[x - static_cast<size_t>(bpp)] : 0;
      const int b = up ? up[x] : 0;
      const int c = (up && x >= static_cast<size_t>(bpp)) ? up[x - static_cast<size_t>(bpp)] : 0;
      int val = src[x];
      switch (filter) {
        case 0: break;
        case 1: val += a; break;
        case 2: val += b; break;
        case 3: val += (a + b) / 2; break;
        case 4: val += paeth(a, b, c); break;
        default: parse_fail(path, static_cast<size_t>(y), "unknown scanline filter");
      }
      dst[x] = static_cast<unsigned char>(val & 0xff);
    }
  }

  const std::int64_t plane = static_cast<std::int64_t>(height) * width;
  std::vector<real> out(static_cast<size_t>(3 * plane));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const unsigned char* px = pixels.data() + static_cast<size_t>(y) * stride +
                                static_cast<size_t>(x) * static_cast<size_t>(channels);
      for (int ch = 0; ch < 3; ++ch) {
        out[static_cast<size_t>(ch * plane + static_cast<std::int64_t>(y) * width + x)] =
            static_cast<real>(px[ch]) / real(255);
      }
    }
  }
  return Tensor::from({3, height, width}, std::move(out));
}

}  // namespace benet
