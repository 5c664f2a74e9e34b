#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "detcal/geometry.hpp"
#include "detcal/records.hpp"

namespace detcal {

struct ReadOptions {
  /// Box corners may leave [0,1] by at most this much before being clipped.
  double clamp_tolerance = 0.0;
};

struct ReadStats {
  std::size_t lines = 0;
  std::size_t clipped_boxes = 0;
};

/// Paired prediction / ground-truth masks for one object (or one image).
struct MaskEntry {
  std::string object_id;
  int class_id = 1;
  BinaryMask pred;
  BinaryMask gt;
  std::vector<double> confidences;  // one per cell, or a single shared value
};

// JSON Lines readers. Blank lines are skipped; errors carry the 1-based line.
std::vector<DetectionRecord> read_detections(std::istream& in, const ReadOptions& opts = {},
                                             ReadStats* stats = nullptr);
std::vector<GroundTruthBox> read_ground_truth(std::istream& in, const ReadOptions& opts = {},
                                              ReadStats* stats = nullptr);
std::vector<PixelRecord> read_pixels(std::istream& in, ReadStats* stats = nullptr);
std::vector<MaskEntry> read_masks(std::istream& in, ReadStats* stats = nullptr);

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path,
                                             const ReadOptions& opts = {},
                                             ReadStats* stats = nullptr);
std::vector<GroundTruthBox> read_ground_truth(const std::filesystem::path& path,
                                              const ReadOptions& opts = {},
                                              ReadStats* stats = nullptr);
std::vector<PixelRecord> read_pixels(const std::filesystem::path& path, ReadStats* stats = nullptr);
std::vector<MaskEntry> read_masks(const std::filesystem::path& path, ReadStats* stats = nullptr);

void write_detections(std::ostream& out, std::span<const DetectionRecord> records);
void write_ground_truth(std::ostream& out, std::span<const GroundTruthBox> records);
void write_pixels(std::ostream& out, std::span<const PixelRecord> records);
void write_masks(std::ostream& out, std::span<const MaskEntry> entries);

}  // namespace detcal
