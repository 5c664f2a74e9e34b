#include "detcal/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "detcal/error.hpp"

namespace detcal {

BoundingBox BoundingBox::from_corners(double x0, double y0, double x1, double y1) {
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

void validate(const BoundingBox& box) {
  if (!std::isfinite(box.cx) || !std::isfinite(box.cy) || !std::isfinite(box.w) ||
      !std::isfinite(box.h)) {
    throw ValidationError("box has non-finite coordinates");
  }
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw ValidationError("box width and height must be positive");
  }
  if (box.cx < 0.0 || box.cx > 1.0 || box.cy < 0.0 || box.cy > 1.0) {
    throw ValidationError("box center must lie in [0,1]");
  }
}

bool clip_box(BoundingBox& box, double tolerance) {
  const double lo = -tolerance;
  const double hi = 1.0 + tolerance;
  const double x0 = std::clamp(box.left(), lo, hi);
  const double x1 = std::clamp(box.right(), lo, hi);
  const double y0 = std::clamp(box.top(), lo, hi);
  const double y1 = std::clamp(box.bottom(), lo, hi);
  if (x0 == box.left() && x1 == box.right() && y0 == box.top() && y1 == box.bottom()) {
    return false;
  }
  box = BoundingBox::from_corners(x0, y0, x1, y1);
  return true;
}

double box_iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double area_a = (a.right() - a.left()) * (a.bottom() - a.top());
  const double area_b = (b.right() - b.left()) * (b.bottom() - b.top());
  const double uni = area_a + area_b - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BinaryMask::BinaryMask(std::size_t width, std::size_t height, bool fill)
    : width_(width), height_(height), bits_(width * height, fill ? 1 : 0) {}

BinaryMask::BinaryMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  if (bits_.size() != width_ * height_) {
    throw ValidationError("mask has " + std::to_string(bits_.size()) + " bits, expected " +
                          std::to_string(width_ * height_));
  }
  for (auto& b : bits_) b = b != 0 ? 1 : 0;
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ValidationError("mask dimensions differ");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint8_t> boundary_cells(const BinaryMask& mask) {
  const std::size_t w = mask.width();
  const std::size_t h = mask.height();
  std::vector<std::uint8_t> out(w * h, 0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const bool v = mask.at(c, r);
      const bool edge = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
      const bool crosses = edge || mask.at(c - 1, r) != v || mask.at(c + 1, r) != v ||
                           mask.at(c, r - 1) != v || mask.at(c, r + 1) != v;
      out[r * w + c] = crosses ? 1 : 0;
    }
  }
  return out;
}

namespace {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher), in place on `f`
// sampled with `stride`.
void squared_distance_1d(double* f, std::size_t n, std::size_t stride, std::vector<double>& d,
                         std::vector<std::size_t>& v, std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  d.resize(n);
  v.resize(n);
  z.resize(n + 1);
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q * stride] < kInf) {
      first = q;
      break;
    }
  }
  if (first == n) return;  // no finite source on this line
  v[0] = first;
  z[0] = -kInf;
  z[1] = kInf;
  auto val = [&](std::size_t q) { return f[q * stride]; };
  for (std::size_t q = first + 1; q < n; ++q) {
    if (!(val(q) < kInf)) continue;
    const double fq = val(q) + static_cast<double>(q * q);
    auto intersect = [&](std::size_t p) {
      return (fq - (val(p) + static_cast<double>(p * p))) /
             (2.0 * (static_cast<double>(q) - static_cast<double>(p)));
    };
    double s = intersect(v[k]);
    // z[0] is -inf, so k never underflows.
    while (s <= z[k]) {
      --k;
      s = intersect(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + val(v[k]);
  }
  for (std::size_t q = 0; q < n; ++q) f[q * stride] = d[q];
}

}  // namespace

std::vector<double> distance_to_boundary(const BinaryMask& mask) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t w = mask.width();
  const std::size_t h = mask.height();
  const auto sources = boundary_cells(mask);
  std::vector<double> g(w * h);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = sources[i] ? 0.0 : kInf;

  std::vector<double> d;
  std::vector<std::size_t> v;
  std::vector<double> z;
  for (std::size_t c = 0; c < w; ++c) squared_distance_1d(g.data() + c, h, w, d, v, z);
  for (std::size_t r = 0; r < h; ++r) squared_distance_1d(g.data() + r * w, w, 1, d, v, z);
  for (auto& x : g) x = std::sqrt(x);
  return g;
}

std::vector<std::uint8_t> decode_rle(std::string_view text, std::size_t expected_size) {
  std::vector<std::uint8_t> bits;
  bits.reserve(expected_size);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(';', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view run = text.substr(pos, end - pos);
    pos = end + 1;
    if (run.empty()) continue;
    const std::size_t x = run.find('x');
    if (x == std::string_view::npos || x + 2 != run.size()) {
      throw ParseError("bad run-length token '" + std::string(run) + "'");
    }
    std::size_t count = 0;
    const auto [ptr, ec] = std::from_chars(run.data(), run.data() + x, count);
    if (ec != std::errc() || ptr != run.data() + x) {
      throw ParseError("bad run-length count in '" + std::string(run) + "'");
    }
    const char bit = run[x + 1];
    if (bit != '0' && bit != '1') {
      throw ParseError("run-length bit must be 0 or 1 in '" + std::string(run) + "'");
    }
    if (bits.size() + count > expected_size) {
      throw ValidationError("run-length data longer than width*height");
    }
    bits.insert(bits.end(), count, bit == '1' ? 1 : 0);
  }
  if (bits.size() != expected_size) {
    throw ValidationError("run-length data covers " + std::to_string(bits.size()) +
                          " cells, expected " + std::to_string(expected_size));
  }
  return bits;
}

std::string encode_rle(const std::vector<std::uint8_t>& bits) {
  std::string out;
  std::size_t i = 0;
  while (i < bits.size()) {
    const std::uint8_t b = bits[i] != 0 ? 1 : 0;
    std::size_t j = i;
    while (j < bits.size() && (bits[j] != 0 ? 1 : 0) == b) ++j;
    if (!out.empty()) out += ';';
    out += std::to_string(j - i);
    out += 'x';
    out += b ? '1' : '0';
    i = j;
  }
  return out;
}

}  // namespace detcal
