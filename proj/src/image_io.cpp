#include "canonprobe/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace canonprobe {

namespace {

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset;
};

void read_callback(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->bytes->size()) png_error(png, "truncated PNG data");
  std::memcpy(out, cursor->bytes->data() + cursor->offset, length);
  cursor->offset += length;
}

void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_callback(png_structp) {}

[[noreturn]] void error_callback(png_structp, png_const_charp message) {
  throw std::runtime_error(std::string("PNG error: ") + message);
}

void warning_callback(png_structp, png_const_charp) {}

}  // namespace

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

RasterImage decode_png(const std::vector<std::uint8_t>& bytes, const PngLoadOptions& options) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw std::runtime_error("not a PNG stream");

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }

  ReadCursor cursor{&bytes, 0};
  try {
    png_set_read_fn(png, &cursor, read_callback);
    png_read_info(png, info);

    const auto width = static_cast<int>(png_get_image_width(png, info));
    const auto height = static_cast<int>(png_get_image_height(png, info));
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    const bool has_alpha = channels == 2 || channels == 4;
    if (has_alpha && !options.flatten_alpha_to_white) {
      throw std::runtime_error("PNG has an alpha channel; enable flatten-to-white to load it");
    }

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> raw(rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const int color_channels = has_alpha ? channels - 1 : channels;
    std::vector<float> pixels(static_cast<std::size_t>(width) * height * color_channels);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::uint8_t* src = rows[y] + static_cast<std::size_t>(x) * channels;
        const float alpha = has_alpha ? src[channels - 1] / 255.0f : 1.0f;
        for (int c = 0; c < color_channels; ++c) {
          float v = src[c] / 255.0f;
          if (has_alpha) v = std::clamp(v * alpha + (1.0f - alpha), 0.0f, 1.0f);
          pixels[(static_cast<std::size_t>(y) * width + x) * color_channels + c] = v;
        }
      }
    }
    RasterImage img(width, height, color_channels, std::move(pixels));
    return options.force_rgb ? img.to_rgb() : img;
  } catch (...) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
}

RasterImage load_png(const std::filesystem::path& path, const PngLoadOptions& options) {
  try {
    return decode_png(read_file_bytes(path), options);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }

  std::vector<std::uint8_t> out;
  try {
    png_set_write_fn(png, &out, write_callback, flush_callback);
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    const int color_type = img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, img.width(), img.height(), 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const auto src = img.pixels();
    const std::size_t row_len = static_cast<std::size_t>(img.width()) * img.channels();
    std::vector<std::uint8_t> row(row_len);
    for (int y = 0; y < img.height(); ++y) {
      for (std::size_t i = 0; i < row_len; ++i) row[i] = to_byte(src[y * row_len + i]);
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

void save_png(const RasterImage& img, const std::filesystem::path& path) {
  write_file_bytes(path, encode_png(img));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace canonprobe
