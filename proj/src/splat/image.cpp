#include "nsplat/splat/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include "nsplat/core/error.hpp"
#include "nsplat/kernels/kernels.hpp"

namespace nsplat::splat {

namespace {

void put_u32be(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

void put_chunk(std::string& out, const char type[4], const std::string& data) {
  put_u32be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.append(type, 4);
  out += data;
  const auto crc = crc32(
      0L, reinterpret_cast<const Bytef*>(out.data() + crc_start),
      static_cast<uInt>(out.size() - crc_start));
  put_u32be(out, static_cast<std::uint32_t>(crc));
}

void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

}  // namespace

void write_png(const RenderedImage& img, const std::string& path) {
  if (img.width < 1 || img.height < 1)
    throw_validation("cannot write an empty image");
  const int w = img.width, h = img.height;

  // Filter type 0 scanlines.
  std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (1 + 3 * w));
  std::size_t at = 0;
  for (int y = 0; y < h; ++y) {
    raw[at++] = 0;
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        raw[at++] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  }

  uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_size);
  if (compress2(comp.data(), &comp_size, raw.data(),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw_numeric("png deflate failed");

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(w));
  put_u32be(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // deflate
  ihdr.push_back(0);   // adaptive filtering
  ihdr.push_back(0);   // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT",
            std::string(reinterpret_cast<const char*>(comp.data()), comp_size));
  put_chunk(out, "IEND", "");

  std::ofstream file(path, std::ios::binary);
  if (!file) throw_validation("cannot write '" + path + "'");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

void write_f32_image(const RenderedImage& img, const std::string& path) {
  if (img.width < 1 || img.height < 1)
    throw_validation("cannot write an empty image");
  std::string out("IMGF", 4);
  put_u32le(out, static_cast<std::uint32_t>(img.width));
  put_u32le(out, static_cast<std::uint32_t>(img.height));
  put_u32le(out, 3);
  for (const double v : img.rgb) {
    const float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32le(out, u);
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw_validation("cannot write '" + path + "'");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

RenderedImage read_f32_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_validation("cannot open '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), "IMGF", 4) != 0)
    throw_validation("'" + path + "' is not an IMGF dump");
  const std::uint32_t w = get_u32le(buf.data() + 4);
  const std::uint32_t h = get_u32le(buf.data() + 8);
  const std::uint32_t ch = get_u32le(buf.data() + 12);
  if (ch != 3) throw_validation("'" + path + "': only 3-channel dumps supported");
  const std::size_t expect = 16 + 4ull * w * h * ch;
  if (w == 0 || h == 0 || buf.size() != expect)
    throw_validation("'" + path + "': payload size mismatch");

  RenderedImage img(static_cast<int>(w), static_cast<int>(h));
  const unsigned char* p = buf.data() + 16;
  for (std::size_t i = 0; i < img.rgb.size(); ++i, p += 4) {
    float f;
    const std::uint32_t u = get_u32le(p);
    std::memcpy(&f, &u, 4);
    img.rgb[i] = static_cast<double>(f);
  }
  return img;
}

double image_mse(const RenderedImage& a, const RenderedImage& b) {
  if (a.width != b.width || a.height != b.height)
    throw_validation("image sizes differ");
  std::vector<double> diff(a.rgb.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.rgb[i] - b.rgb[i];
  return kernels::sum_sq(diff.data(), diff.size()) /
         static_cast<double>(diff.size());
}

double image_psnr(const RenderedImage& a, const RenderedImage& b) {
  const double mse = image_mse(a, b);
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace nsplat::splat
