#include "core/pngdump.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "core/common.hpp"

namespace dar {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& payload) {
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
  put_u32(out, crc);
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, const torch::Tensor& image) {
  require(image.dim() == 2, ErrorCode::InvalidArgument, "png dump expects a [H, W] image");
  torch::Tensor img = image.to(torch::kFloat32).contiguous();
  const auto height = static_cast<std::uint32_t>(img.size(0));
  const auto width = static_cast<std::uint32_t>(img.size(1));
  const float* px = img.data_ptr<float>();

  // Raw scanlines with filter byte 0.
  std::vector<unsigned char> raw((static_cast<std::size_t>(width) + 1) * height);
  std::size_t pos = 0;
  for (std::uint32_t r = 0; r < height; ++r) {
    raw[pos++] = 0;
    for (std::uint32_t c = 0; c < width; ++c) {
      float v = px[r * width + c];
      v = std::min(1.0f, std::max(0.0f, v));
      raw[pos++] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  }

  uLongf compressed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(compressed_size);
  int rc = compress2(compressed.data(), &compressed_size, raw.data(),
                     static_cast<uLong>(raw.size()), Z_BEST_SPEED);
  require(rc == Z_OK, ErrorCode::Internal, "zlib compression failed");
  compressed.resize(compressed_size);

  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  put_u32(ihdr, width);
  put_u32(ihdr, height);
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", compressed);
  put_chunk(out, "IEND", {});

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  require(file.good(), ErrorCode::Io, "cannot write png: " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  require(file.good(), ErrorCode::Io, "png write failed: " + path.string());
}

}  // namespace dar
