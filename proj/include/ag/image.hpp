#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ag {

/// Interleaved 8-bit image, 1 or 3 channels.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image8&) const = default;
};

/// Depth map in meters. Values <= 0 or non-finite mean "no reading".
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 0.f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const DepthMap&) const = default;
};

/// Binary mask; nonzero = foreground.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  bool test(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y) { data[static_cast<std::size_t>(y) * width + x] = 1; }
  std::size_t count() const;
  bool empty_mask() const { return count() == 0; }
  bool operator==(const Mask&) const = default;
};

// PNG I/O (libpng). Writers are deterministic: same pixels, same bytes.
Image8 read_png_rgb8(const std::filesystem::path& path);
void write_png_rgb8(const std::filesystem::path& path, const Image8& img);

// 16-bit grayscale, used for millimeter depth maps.
std::vector<std::uint16_t> read_png_gray16(const std::filesystem::path& path, int& width, int& height);
void write_png_gray16(const std::filesystem::path& path, const std::vector<std::uint16_t>& pix,
                      int width, int height);

// Masks round-trip as 8-bit grayscale (0 / 255).
Mask read_png_mask(const std::filesystem::path& path);
void write_png_mask(const std::filesystem::path& path, const Mask& mask);

// Raw little-endian float32 depth, row-major; dimensions come from the manifest.
DepthMap read_depth_f32(const std::filesystem::path& path, int width, int height);
void write_depth_f32(const std::filesystem::path& path, const DepthMap& depth);

// In-memory PNG encode/decode, used for HTTP image attachments and replies.
std::vector<std::uint8_t> encode_png_rgb8(const Image8& img);
Image8 decode_png_rgb8(const std::vector<std::uint8_t>& bytes);

}  // namespace ag
