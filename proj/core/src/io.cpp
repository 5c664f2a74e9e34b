#include "detcal/io.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "detcal/error.hpp"

namespace detcal {

using nlohmann::json;

namespace {

void for_each_line(std::istream& in, ReadStats* stats,
                   const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", lineno);
    try {
      fn(obj, lineno);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
    if (stats) ++stats->lines;
  }
}

template <class T>
T required(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing key '") + key + "'", line);
  if constexpr (std::is_same_v<T, double>) {
    if (!it->is_number()) throw ParseError(std::string("'") + key + "' must be a number", line);
  } else if constexpr (std::is_same_v<T, int>) {
    if (!it->is_number_integer()) {
      throw ParseError(std::string("'") + key + "' must be an integer", line);
    }
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw ParseError(std::string("'") + key + "' must be a boolean", line);
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) throw ParseError(std::string("'") + key + "' must be a string", line);
  }
  return it->get<T>();
}

double probability(const json& obj, const char* key, std::size_t line) {
  const double v = required<double>(obj, key, line);
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
    throw ValidationError(std::string("'") + key + "' outside [0,1]", line);
  }
  return v;
}

BoundingBox read_box(const json& obj, std::size_t line, const ReadOptions& opts,
                     ReadStats* stats) {
  BoundingBox box{required<double>(obj, "cx", line), required<double>(obj, "cy", line),
                  required<double>(obj, "w", line), required<double>(obj, "h", line)};
  if (!std::isfinite(box.cx) || !std::isfinite(box.cy) || !std::isfinite(box.w) ||
      !std::isfinite(box.h)) {
    throw ValidationError("box has non-finite coordinates", line);
  }
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw ValidationError("box width and height must be positive", line);
  }
  if (clip_box(box, opts.clamp_tolerance) && stats) ++stats->clipped_boxes;
  try {
    validate(box);
  } catch (const ValidationError& e) {
    throw ValidationError(e.what(), line);
  }
  return box;
}

int class_id(const json& obj, std::size_t line) {
  const int c = required<int>(obj, "class_id", line);
  if (c < 0) throw ValidationError("class_id must be non-negative", line);
  return c;
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace

std::vector<DetectionRecord> read_detections(std::istream& in, const ReadOptions& opts,
                                             ReadStats* stats) {
  std::vector<DetectionRecord> out;
  for_each_line(in, stats, [&](const json& obj, std::size_t line) {
    DetectionRecord r;
    r.image_id = required<std::string>(obj, "image_id", line);
    r.class_id = class_id(obj, line);
    r.confidence = probability(obj, "confidence", line);
    r.box = read_box(obj, line, opts, stats);
    if (const auto it = obj.find("matched"); it != obj.end() && !it->is_null()) {
      r.matched = required<bool>(obj, "matched", line);
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<GroundTruthBox> read_ground_truth(std::istream& in, const ReadOptions& opts,
                                              ReadStats* stats) {
  std::vector<GroundTruthBox> out;
  for_each_line(in, stats, [&](const json& obj, std::size_t line) {
    GroundTruthBox g;
    g.image_id = required<std::string>(obj, "image_id", line);
    g.class_id = class_id(obj, line);
    g.box = read_box(obj, line, opts, stats);
    out.push_back(std::move(g));
  });
  return out;
}

std::vector<PixelRecord> read_pixels(std::istream& in, ReadStats* stats) {
  std::vector<PixelRecord> out;
  for_each_line(in, stats, [&](const json& obj, std::size_t line) {
    PixelRecord p;
    p.object_id = required<std::string>(obj, "object_id", line);
    p.class_id = class_id(obj, line);
    p.confidence = probability(obj, "confidence", line);
    p.x = probability(obj, "x", line);
    p.y = probability(obj, "y", line);
    p.d = probability(obj, "d", line);
    p.correct = required<bool>(obj, "correct", line);
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<MaskEntry> read_masks(std::istream& in, ReadStats* stats) {
  std::vector<MaskEntry> out;
  for_each_line(in, stats, [&](const json& obj, std::size_t line) {
    MaskEntry m;
    m.object_id = required<std::string>(obj, "object_id", line);
    m.class_id = class_id(obj, line);
    const int w = required<int>(obj, "width", line);
    const int h = required<int>(obj, "height", line);
    if (w <= 0 || h <= 0) throw ValidationError("mask width and height must be positive", line);
    const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    try {
      m.pred = BinaryMask(w, h, decode_rle(required<std::string>(obj, "pred_bits", line), n));
      m.gt = BinaryMask(w, h, decode_rle(required<std::string>(obj, "gt_bits", line), n));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line);
    } catch (const ValidationError& e) {
      throw ValidationError(e.what(), line);
    }
    const auto it = obj.find("confidences");
    if (it == obj.end()) throw ParseError("missing key 'confidences'", line);
    if (it->is_number()) {
      m.confidences = {it->get<double>()};
    } else if (it->is_array()) {
      m.confidences = it->get<std::vector<double>>();
      if (m.confidences.size() != n) {
        throw ValidationError("confidences must hold one value per cell", line);
      }
    } else {
      throw ParseError("'confidences' must be a number or an array", line);
    }
    for (const double c : m.confidences) {
      if (!std::isfinite(c) || c < 0.0 || c > 1.0) {
        throw ValidationError("confidence outside [0,1]", line);
      }
    }
    out.push_back(std::move(m));
  });
  return out;
}

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path,
                                             const ReadOptions& opts, ReadStats* stats) {
  auto in = open(path);
  return read_detections(in, opts, stats);
}

std::vector<GroundTruthBox> read_ground_truth(const std::filesystem::path& path,
                                              const ReadOptions& opts, ReadStats* stats) {
  auto in = open(path);
  return read_ground_truth(in, opts, stats);
}

std::vector<PixelRecord> read_pixels(const std::filesystem::path& path, ReadStats* stats) {
  auto in = open(path);
  return read_pixels(in, stats);
}

std::vector<MaskEntry> read_masks(const std::filesystem::path& path, ReadStats* stats) {
  auto in = open(path);
  return read_masks(in, stats);
}

void write_detections(std::ostream& out, std::span<const DetectionRecord> records) {
  for (const auto& r : records) {
    json obj{{"image_id", r.image_id}, {"class_id", r.class_id}, {"confidence", r.confidence},
             {"cx", r.box.cx},         {"cy", r.box.cy},         {"w", r.box.w},
             {"h", r.box.h}};
    if (r.matched) obj["matched"] = *r.matched;
    out << obj.dump() << '\n';
  }
}

void write_ground_truth(std::ostream& out, std::span<const GroundTruthBox> records) {
  for (const auto& g : records) {
    const json obj{{"image_id", g.image_id}, {"class_id", g.class_id}, {"cx", g.box.cx},
                   {"cy", g.box.cy},         {"w", g.box.w},           {"h", g.box.h}};
    out << obj.dump() << '\n';
  }
}

void write_pixels(std::ostream& out, std::span<const PixelRecord> records) {
  for (const auto& p : records) {
    const json obj{{"object_id", p.object_id}, {"class_id", p.class_id},
                   {"confidence", p.confidence}, {"x", p.x},
                   {"y", p.y},                   {"d", p.d},
                   {"correct", p.correct}};
    out << obj.dump() << '\n';
  }
}

void write_masks(std::ostream& out, std::span<const MaskEntry> entries) {
  for (const auto& m : entries) {
    json obj{{"object_id", m.object_id},
             {"class_id", m.class_id},
             {"width", m.pred.width()},
             {"height", m.pred.height()},
             {"pred_bits", encode_rle(m.pred.bits())},
             {"gt_bits", encode_rle(m.gt.bits())}};
    if (m.confidences.size() == 1) {
      obj["confidences"] = m.confidences.front();
    } else {
      obj["confidences"] = m.confidences;
    }
    out << obj.dump() << '\n';
  }
}

}  // namespace detcal
