#include "ag/image.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ag/common.hpp"

namespace ag {

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : data) n += (v != 0);
  return n;
}

namespace {

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, &info);
    if (fp) std::fclose(fp);
  }
};

void open_read(PngReader& r, const std::filesystem::path& path) {
  r.fp = std::fopen(path.string().c_str(), "rb");
  if (!r.fp) throw IngestionError("cannot open image file: " + path.string());
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (!r.png || !r.info) throw IngestionError("libpng init failed");
  if (setjmp(png_jmpbuf(r.png))) throw ParseError("corrupt PNG: " + path.string());
  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);
}

void open_write(PngWriter& w, const std::filesystem::path& path) {
  w.fp = std::fopen(path.string().c_str(), "wb");
  if (!w.fp) throw IngestionError("cannot write image file: " + path.string());
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  if (!w.png || !w.info) throw IngestionError("libpng init failed");
  if (setjmp(png_jmpbuf(w.png))) throw IngestionError("PNG write failed: " + path.string());
  png_init_io(w.png, w.fp);
  // Fixed settings so output bytes depend only on pixel content.
  png_set_compression_level(w.png, 6);
  png_set_filter(w.png, 0, PNG_FILTER_NONE);
}

Image8 read_rgb8_impl(const std::filesystem::path& path) {
  PngReader r;
  open_read(r, path);
  if (setjmp(png_jmpbuf(r.png))) throw ParseError("corrupt PNG: " + path.string());

  png_uint_32 w = png_get_image_width(r.png, r.info);
  png_uint_32 h = png_get_image_height(r.png, r.info);
  int bit_depth = png_get_bit_depth(r.png, r.info);
  int color = png_get_color_type(r.png, r.info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(r.png);
  if (bit_depth == 16) png_set_strip_16(r.png);
  if (bit_depth < 8) png_set_packing(r.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(r.png);
  png_read_update_info(r.png, r.info);

  Image8 img(static_cast<int>(w), static_cast<int>(h), 3);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.data.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

}  // namespace

Image8 read_png_rgb8(const std::filesystem::path& path) { return read_rgb8_impl(path); }

void write_png_rgb8(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 3) throw ContractViolation("write_png_rgb8 expects 3 channels");
  PngWriter w;
  open_write(w, path);
  if (setjmp(png_jmpbuf(w.png))) throw IngestionError("PNG write failed: " + path.string());
  png_set_IHDR(w.png, w.info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(y) * img.width * 3);
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

std::vector<std::uint16_t> read_png_gray16(const std::filesystem::path& path, int& width, int& height) {
  PngReader r;
  open_read(r, path);
  if (setjmp(png_jmpbuf(r.png))) throw ParseError("corrupt PNG: " + path.string());

  png_uint_32 w = png_get_image_width(r.png, r.info);
  png_uint_32 h = png_get_image_height(r.png, r.info);
  int bit_depth = png_get_bit_depth(r.png, r.info);
  int color = png_get_color_type(r.png, r.info);
  if (color != PNG_COLOR_TYPE_GRAY || bit_depth != 16)
    throw IngestionError("expected 16-bit grayscale PNG: " + path.string());
  png_read_update_info(r.png, r.info);

  width = static_cast<int>(w);
  height = static_cast<int>(h);
  std::vector<std::uint16_t> pix(static_cast<std::size_t>(w) * h);
  std::vector<std::vector<png_byte>> raw(h, std::vector<png_byte>(w * 2));
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw[y].data();
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      pix[static_cast<std::size_t>(y) * w + x] =
          static_cast<std::uint16_t>((raw[y][2 * x] << 8) | raw[y][2 * x + 1]);  // PNG is big-endian
  return pix;
}

void write_png_gray16(const std::filesystem::path& path, const std::vector<std::uint16_t>& pix,
                      int width, int height) {
  if (pix.size() != static_cast<std::size_t>(width) * height)
    throw ContractViolation("write_png_gray16: size mismatch");
  PngWriter w;
  open_write(w, path);
  if (setjmp(png_jmpbuf(w.png))) throw IngestionError("PNG write failed: " + path.string());
  png_set_IHDR(w.png, w.info, width, height, 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<std::vector<png_byte>> raw(height, std::vector<png_byte>(width * 2));
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::uint16_t v = pix[static_cast<std::size_t>(y) * width + x];
      raw[y][2 * x] = static_cast<png_byte>(v >> 8);
      raw[y][2 * x + 1] = static_cast<png_byte>(v & 0xff);
    }
    rows[y] = raw[y].data();
  }
  png_write_image(w.png, rows.data());
  png_write_end(w.png, nullptr);
}

Mask read_png_mask(const std::filesystem::path& path) {
  Image8 img = read_rgb8_impl(path);
  Mask m(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (img.at(x, y, 0) != 0) m.set(x, y);
  return m;
}

void write_png_mask(const std::filesystem::path& path, const Mask& mask) {
  Image8 img(mask.width, mask.height, 3);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      std::uint8_t v = mask.test(x, y) ? 255 : 0;
      img.at(x, y, 0) = img.at(x, y, 1) = img.at(x, y, 2) = v;
    }
  write_png_rgb8(path, img);
}

DepthMap read_depth_f32(const std::filesystem::path& path, int width, int height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open depth file: " + path.string());
  DepthMap d(width, height);
  in.read(reinterpret_cast<char*>(d.data.data()),
          static_cast<std::streamsize>(d.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(d.data.size() * sizeof(float)))
    throw IngestionError("depth file truncated: " + path.string());
  return d;
}

void write_depth_f32(const std::filesystem::path& path, const DepthMap& depth) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write depth file: " + path.string());
  out.write(reinterpret_cast<const char*>(depth.data.data()),
            static_cast<std::streamsize>(depth.data.size() * sizeof(float)));
}

namespace {
void png_mem_write(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  buf->insert(buf->end(), data, data + len);
}
void png_mem_flush(png_structp) {}

struct MemReadState {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t len) {
  auto* st = static_cast<MemReadState*>(png_get_io_ptr(png));
  if (st->pos + len > st->size) png_error(png, "read past end of buffer");
  std::memcpy(out, st->data + st->pos, len);
  st->pos += len;
}
}  // namespace

std::vector<std::uint8_t> encode_png_rgb8(const Image8& img) {
  if (img.channels != 3) throw ContractViolation("encode_png_rgb8 expects 3 channels");
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw IngestionError("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IngestionError("in-memory PNG encode failed");
  }
  png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(y) * img.width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Image8 decode_png_rgb8(const std::vector<std::uint8_t>& bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw IngestionError("libpng init failed");
  MemReadState st{bytes.data(), bytes.size(), 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("corrupt in-memory PNG");
  }
  png_set_read_fn(png, &st, png_mem_read);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (bit_depth < 8) png_set_packing(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Image8 img(static_cast<int>(w), static_cast<int>(h), 3);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.data.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace ag
