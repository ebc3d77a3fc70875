#include "photoseq/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "photoseq/errors.hpp"

namespace photoseq {

namespace fs = std::filesystem;

Image::Image(int height, int width, double fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) {
    throw ArgumentError("image dimensions must be positive, got " + std::to_string(height) +
                        "x" + std::to_string(width));
  }
  data_.assign(static_cast<std::size_t>(height) * width * kChannels, fill);
}

double Image::min_value() const {
  return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double Image::max_value() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

bool Image::in_unit_range() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

void Image::require_unit_range(const char* what) const {
  if (!in_unit_range()) {
    throw ArgumentError(std::string(what) + ": pixel values outside [0,1]");
  }
}

Image Image::crop(int row, int col, int height, int width) const {
  if (row < 0 || col < 0 || height < 1 || width < 1 || row + height > height_ ||
      col + width > width_) {
    throw RangeError("crop window outside image bounds");
  }
  Image out(height, width);
  for (int r = 0; r < height; ++r) {
    const double* src = &data_[(static_cast<std::size_t>(row + r) * width_ + col) * kChannels];
    std::copy(src, src + static_cast<std::size_t>(width) * kChannels, &out.at(r, 0, 0));
  }
  return out;
}

Image Image::flipped_horizontal() const {
  Image out(height_, width_);
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c)
      for (int ch = 0; ch < kChannels; ++ch) out.at(r, width_ - 1 - c, ch) = at(r, c, ch);
  return out;
}

Image Image::rotated90(bool counter_clockwise) const {
  Image out(width_, height_);
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c)
      for (int ch = 0; ch < kChannels; ++ch) {
        if (counter_clockwise)
          out.at(width_ - 1 - c, r, ch) = at(r, c, ch);
        else
          out.at(c, height_ - 1 - r, ch) = at(r, c, ch);
      }
  return out;
}

void FrameClip::validate() const {
  if (frames.empty()) throw ArgumentError("clip has no frames");
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) {
      throw ArgumentError("clip '" + source_id + "' has frames of differing dimensions");
    }
  }
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": image shapes differ (" + std::to_string(a.height()) +
                     "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
  }
}

std::vector<double> luma(const Image& img) {
  std::vector<double> y(static_cast<std::size_t>(img.height()) * img.width());
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      y[static_cast<std::size_t>(r) * img.width() + c] =
          0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
  return y;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const fs::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open '" + path.string() + "' for reading");

  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("'" + path.string() + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialisation failed");
  }
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed to decode '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * height);
  rows.resize(height);
  for (int r = 0; r < height; ++r) rows[r] = buffer.data() + stride * r;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(height, width);
  auto values = img.values();
  if (out_depth == 16) {
    for (int r = 0; r < height; ++r) {
      const auto* row = reinterpret_cast<const std::uint16_t*>(rows[r]);
      for (int i = 0; i < width * 3; ++i)
        values[static_cast<std::size_t>(r) * width * 3 + i] = row[i] / 65535.0;
    }
  } else {
    for (int r = 0; r < height; ++r)
      for (int i = 0; i < width * 3; ++i)
        values[static_cast<std::size_t>(r) * width * 3 + i] = rows[r][i] / 255.0;
  }
  return img;
}

void write_png(const fs::path& path, const Image& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ArgumentError("PNG bit depth must be 8 or 16");
  if (img.empty()) throw ArgumentError("cannot write an empty image");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot open '" + path.string() + "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed");
  }
  const int width = img.width();
  const int height = img.height();
  const std::size_t bytes = bit_depth / 8;
  std::vector<png_byte> buffer(static_cast<std::size_t>(width) * 3 * bytes * height);
  std::vector<png_bytep> rows(height);
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  auto values = img.values();
  for (int r = 0; r < height; ++r) {
    rows[r] = buffer.data() + static_cast<std::size_t>(r) * width * 3 * bytes;
    for (int i = 0; i < width * 3; ++i) {
      const double v = std::clamp(values[static_cast<std::size_t>(r) * width * 3 + i], 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * scale));
      if (bit_depth == 16) {
        rows[r][2 * i] = static_cast<png_byte>(q >> 8);  // PNG is big-endian
        rows[r][2 * i + 1] = static_cast<png_byte>(q & 0xFF);
      } else {
        rows[r][i] = static_cast<png_byte>(q);
      }
    }
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to encode '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

FrameClip read_clip_dir(const fs::path& dir, double nominal_fps) {
  if (!fs::is_directory(dir)) throw DataError("clip directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("clip directory '" + dir.string() + "' has no PNG frames");
  FrameClip clip;
  clip.nominal_fps = nominal_fps;
  clip.source_id = dir.filename().string();
  clip.frames.reserve(files.size());
  for (const auto& f : files) clip.frames.push_back(read_png(f));
  for (const auto& f : clip.frames) {
    if (!f.same_shape(clip.frames.front())) {
      throw DataError("clip '" + dir.string() + "' mixes frame dimensions");
    }
  }
  return clip;
}

void write_clip_dir(const fs::path& dir, const FrameClip& clip, int bit_depth) {
  clip.validate();
  fs::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
    write_png(dir / name, clip.frames[i], bit_depth);
  }
}

}  // namespace photoseq
