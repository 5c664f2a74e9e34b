#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace detcal {

/// Axis-aligned box in relative image coordinates, center/size encoded.
struct BoundingBox {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;

  double left() const noexcept { return cx - 0.5 * w; }
  double right() const noexcept { return cx + 0.5 * w; }
  double top() const noexcept { return cy - 0.5 * h; }
  double bottom() const noexcept { return cy + 0.5 * h; }
  double area() const noexcept { return w * h; }

  static BoundingBox from_corners(double x0, double y0, double x1, double y1);

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Throws ValidationError unless all fields are finite, w,h > 0 and cx,cy in [0,1].
void validate(const BoundingBox& box);

/// Clips the box corners into [-tolerance, 1 + tolerance] and re-derives the
/// center encoding. Returns true if any coordinate moved.
bool clip_box(BoundingBox& box, double tolerance = 0.0);

double box_iou(const BoundingBox& a, const BoundingBox& b) noexcept;

/// Row-major boolean grid.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t width, std::size_t height, bool fill = false);
  BinaryMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(std::size_t col, std::size_t row) const noexcept { return bits_[row * width_ + col] != 0; }
  void set(std::size_t col, std::size_t row, bool value) noexcept {
    bits_[row * width_ + col] = value ? 1 : 0;
  }
  bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }

  std::size_t count() const noexcept;
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// |a and b| / |a or b|; 0 when both are empty. Throws ValidationError on
/// a dimension mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Cells whose 4-neighbourhood changes value or leaves the grid.
std::vector<std::uint8_t> boundary_cells(const BinaryMask& mask);

/// Exact Euclidean distance (pixels) from every cell to the nearest boundary
/// cell, row-major. Separable squared-distance transform, O(width * height).
std::vector<double> distance_to_boundary(const BinaryMask& mask);

/// Run-length codec for mask bits: "<count>x<bit>;<count>x<bit>;...".
std::vector<std::uint8_t> decode_rle(std::string_view text, std::size_t expected_size);
std::string encode_rle(const std::vector<std::uint8_t>& bits);

}  // namespace detcal
