#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace photoseq {

/// H x W x 3 image of linear intensities, stored interleaved (row, col, channel).
///
/// Pipeline images live in [0,1]; the same container also carries gradients
/// and differences, so the range is checked by `require_unit_range()` at the
/// points where the contract needs it rather than on every write.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int row, int col, int ch) {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * kChannels + ch];
  }
  double at(int row, int col, int ch) const {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * kChannels + ch];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  double min_value() const;
  double max_value() const;
  bool in_unit_range() const;
  /// Throws ArgumentError if any element falls outside [0,1].
  void require_unit_range(const char* what) const;

  Image crop(int row, int col, int height, int width) const;
  Image flipped_horizontal() const;
  /// Rotation by +90 degrees (counter-clockwise) or -90 (clockwise).
  Image rotated90(bool counter_clockwise) const;

  bool operator==(const Image& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Ordered frames of a video; all frames share dimensions.
struct FrameClip {
  std::vector<Image> frames;
  double nominal_fps = 240.0;
  std::string source_id;

  std::size_t size() const { return frames.size(); }
  int height() const { return frames.empty() ? 0 : frames.front().height(); }
  int width() const { return frames.empty() ? 0 : frames.front().width(); }
  /// Throws ArgumentError for empty or dimension-inconsistent clips.
  void validate() const;
};

/// Throws ShapeError when the two images differ in size.
void require_same_shape(const Image& a, const Image& b, const char* what);

/// Rec.601 luma of each pixel, row-major H*W values.
std::vector<double> luma(const Image& img);

// PNG I/O. Reading accepts 8/16-bit gray, gray+alpha, RGB, RGBA, palette.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img, int bit_depth = 8);

/// Loads every *.png in `dir` in lexicographic filename order.
FrameClip read_clip_dir(const std::filesystem::path& dir, double nominal_fps = 240.0);
void write_clip_dir(const std::filesystem::path& dir, const FrameClip& clip, int bit_depth = 8);

}  // namespace photoseq
