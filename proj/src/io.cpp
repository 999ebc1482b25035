#include "univcd/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace univcd {
namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw IoError("raster container: truncated header");
  return v;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

void write_png_bytes(const std::filesystem::path& path, int height, int width, int channels,
                     const std::vector<std::uint8_t>& bytes) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw IoError("png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed compression settings keep output byte-identical across runs.
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
  }
  png_write_end(png, info);
}

// Decodes to 8-bit gray or RGB (alpha stripped, palettes expanded).
std::vector<std::uint8_t> read_png_bytes(const std::filesystem::path& path, int& height, int& width,
                                         int& channels) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw IoError("png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  channels = static_cast<int>(png_get_channels(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> bytes(stride * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return bytes;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_raster(std::ostream& out, const Raster& r) {
  out.write(kRasterMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(r.height()));
  put_u32(out, static_cast<std::uint32_t>(r.width()));
  put_u32(out, static_cast<std::uint32_t>(r.channels()));
  std::vector<float> buf(r.size());
  std::transform(r.values().begin(), r.values().end(), buf.begin(),
                 [](double v) { return static_cast<float>(v); });
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!out) throw IoError("raster container: write failed");
}

Raster read_raster(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kRasterMagic, 4) != 0) throw IoError("raster container: bad magic");
  const auto h = get_u32(in);
  const auto w = get_u32(in);
  const auto c = get_u32(in);
  if (h == 0 || w == 0 || c == 0) throw IoError("raster container: zero dimension");
  Raster r(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  std::vector<float> buf(r.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!in) throw IoError("raster container: truncated payload");
  std::copy(buf.begin(), buf.end(), r.values().begin());
  if (!r.all_finite()) throw IoError("raster container: non-finite values");
  return r;
}

void save_raster(const std::filesystem::path& path, const Raster& r) {
  std::ostringstream out(std::ios::binary);
  write_raster(out, r);
  write_file_atomic(path, out.str());
}

Raster load_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_raster(in);
}

void save_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> bytes(mask.pixel_count());
  auto v = mask.values();
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = v[i] ? 255 : 0;
  write_png_bytes(path, mask.height(), mask.width(), 1, bytes);
}

BinaryMask load_mask_png(const std::filesystem::path& path) {
  int h = 0, w = 0, c = 0;
  const auto bytes = read_png_bytes(path, h, w, c);
  BinaryMask mask(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* p = bytes.data() + (static_cast<std::size_t>(y) * w + x) * c;
      mask.set(y, x, std::any_of(p, p + c, [](std::uint8_t b) { return b != 0; }));
    }
  }
  return mask;
}

void save_png(const std::filesystem::path& path, const Raster& r) {
  if (r.channels() != 1 && r.channels() != 3) throw InvalidArgumentError("save_png: need 1 or 3 channels");
  std::vector<std::uint8_t> bytes(r.size());
  std::transform(r.values().begin(), r.values().end(), bytes.begin(), to_byte);
  write_png_bytes(path, r.height(), r.width(), r.channels(), bytes);
}

Raster load_png(const std::filesystem::path& path) {
  int h = 0, w = 0, c = 0;
  const auto bytes = read_png_bytes(path, h, w, c);
  const int out_c = c == 1 ? 1 : 3;
  Raster r(h, w, out_c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* p = bytes.data() + (static_cast<std::size_t>(y) * w + x) * c;
      double* o = r.pixel(y, x);
      for (int k = 0; k < out_c; ++k) o[k] = p[std::min(k, c - 1)] / 255.0;
    }
  }
  return r;
}

std::vector<std::uint8_t> load_png_labels(const std::filesystem::path& path, int& height, int& width) {
  int c = 0;
  const auto bytes = read_png_bytes(path, height, width, c);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(height) * width);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = bytes[i * c];
  return labels;
}

Raster load_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".uvcd") return load_raster(path);
  if (ext == ".png" || ext == ".PNG") return load_png(path);
  throw IoError("unsupported image format: " + path.string());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace univcd
