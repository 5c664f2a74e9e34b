#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "detcal/geometry.hpp"

namespace detcal {

/// One predicted box. `matched` is the correctness label M, filled by matching.
struct DetectionRecord {
  std::string image_id;
  int class_id = 1;
  double confidence = 0.0;
  BoundingBox box;
  std::optional<bool> matched;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct GroundTruthBox {
  std::string image_id;
  int class_id = 1;
  BoundingBox box;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

/// One mask pixel. x and y are relative to the predicted box (instance
/// segmentation) or to the image (semantic segmentation); d is the distance to
/// the nearest mask boundary relative to the frame diagonal.
struct PixelRecord {
  std::string object_id;
  int class_id = 1;
  double confidence = 0.0;
  double x = 0.5;
  double y = 0.5;
  double d = 0.0;
  bool correct = false;

  friend bool operator==(const PixelRecord&, const PixelRecord&) = default;
};

enum class MatchMode { box, mask };

struct MatchConfig {
  double iou_threshold = 0.5;
  double score_threshold = 0.3;
  MatchMode mode = MatchMode::box;

  void validate() const;
};

/// Greedy one-to-one matching per (image, class): predictions in descending
/// confidence take the unassigned ground truth with the highest IoU >= tau;
/// equal IoUs go to the earlier ground truth. Predictions with confidence below
/// the score threshold are dropped; the rest keep their input order.
std::vector<DetectionRecord> match_predictions(std::span<const DetectionRecord> preds,
                                               std::span<const GroundTruthBox> gts,
                                               const MatchConfig& cfg);

/// Mask-mode matching: identical assignment rule with mask IoU. `pred_masks`
/// and `gt_masks` run parallel to `preds` and `gts`.
std::vector<DetectionRecord> match_predictions(std::span<const DetectionRecord> preds,
                                               std::span<const BinaryMask> pred_masks,
                                               std::span<const GroundTruthBox> gts,
                                               std::span<const BinaryMask> gt_masks,
                                               const MatchConfig& cfg);

enum class PixelFrame { box, image };

/// One PixelRecord per cell. Coordinates are cell centers, (col + 0.5) / width.
/// `confidences` holds either one value per cell or a single value for all.
std::vector<PixelRecord> pixel_features(const BinaryMask& pred_mask, const BinaryMask& gt_mask,
                                        std::span<const double> confidences, PixelFrame frame,
                                        const std::string& object_id = {}, int class_id = 1);

}  // namespace detcal
