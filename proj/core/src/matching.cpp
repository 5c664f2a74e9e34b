#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <utility>

#include "detcal/error.hpp"
#include "detcal/records.hpp"

namespace detcal {

void MatchConfig::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ValidationError("IoU threshold must lie in (0,1]");
  }
  if (!(score_threshold >= 0.0 && score_threshold < 1.0)) {
    throw ValidationError("score threshold must lie in [0,1)");
  }
}

namespace {

using GroupKey = std::pair<std::string, int>;

std::vector<DetectionRecord> greedy_match(
    std::span<const DetectionRecord> preds, std::span<const GroundTruthBox> gts,
    const MatchConfig& cfg, const std::function<double(std::size_t, std::size_t)>& iou) {
  cfg.validate();

  std::map<GroupKey, std::vector<std::size_t>> gt_groups;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    gt_groups[{gts[g].image_id, gts[g].class_id}].push_back(g);
  }
  std::map<GroupKey, std::vector<std::size_t>> pred_groups;
  for (std::size_t p = 0; p < preds.size(); ++p) {
    if (preds[p].confidence < cfg.score_threshold) continue;
    pred_groups[{preds[p].image_id, preds[p].class_id}].push_back(p);
  }

  std::vector<std::optional<bool>> label(preds.size());
  for (auto& [key, members] : pred_groups) {
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return preds[a].confidence > preds[b].confidence;
    });
    const auto it = gt_groups.find(key);
    std::vector<std::size_t> candidates;
    if (it != gt_groups.end()) candidates = it->second;
    std::vector<bool> taken(candidates.size(), false);
    for (const std::size_t p : members) {
      std::size_t best = candidates.size();
      double best_iou = -1.0;
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (taken[c]) continue;
        const double v = iou(p, candidates[c]);
        if (v >= cfg.iou_threshold && v > best_iou) {
          best = c;
          best_iou = v;
        }
      }
      if (best < candidates.size()) {
        taken[best] = true;
        label[p] = true;
      } else {
        label[p] = false;
      }
    }
  }

  std::vector<DetectionRecord> out;
  out.reserve(preds.size());
  for (std::size_t p = 0; p < preds.size(); ++p) {
    if (!label[p]) continue;
    out.push_back(preds[p]);
    out.back().matched = *label[p];
  }
  return out;
}

}  // namespace

std::vector<DetectionRecord> match_predictions(std::span<const DetectionRecord> preds,
                                               std::span<const GroundTruthBox> gts,
                                               const MatchConfig& cfg) {
  if (cfg.mode != MatchMode::box) {
    throw ValidationError("mask matching needs prediction and ground-truth masks");
  }
  return greedy_match(preds, gts, cfg, [&](std::size_t p, std::size_t g) {
    return box_iou(preds[p].box, gts[g].box);
  });
}

std::vector<DetectionRecord> match_predictions(std::span<const DetectionRecord> preds,
                                               std::span<const BinaryMask> pred_masks,
                                               std::span<const GroundTruthBox> gts,
                                               std::span<const BinaryMask> gt_masks,
                                               const MatchConfig& cfg) {
  if (pred_masks.size() != preds.size() || gt_masks.size() != gts.size()) {
    throw ValidationError("mask lists must run parallel to their records");
  }
  return greedy_match(preds, gts, cfg, [&](std::size_t p, std::size_t g) {
    return mask_iou(pred_masks[p], gt_masks[g]);
  });
}

std::vector<PixelRecord> pixel_features(const BinaryMask& pred_mask, const BinaryMask& gt_mask,
                                        std::span<const double> confidences, PixelFrame frame,
                                        const std::string& object_id, int class_id) {
  (void)frame;  // both frames normalize by the grid; the caller picks the grid
  const std::size_t w = pred_mask.width();
  const std::size_t h = pred_mask.height();
  if (gt_mask.width() != w || gt_mask.height() != h) {
    throw ValidationError("prediction and ground-truth masks differ in size");
  }
  if (confidences.size() != w * h && confidences.size() != 1) {
    throw ValidationError("confidence grid has " + std::to_string(confidences.size()) +
                          " values, expected 1 or " + std::to_string(w * h));
  }
  for (const double c : confidences) {
    if (!(c >= 0.0 && c <= 1.0)) throw ValidationError("pixel confidence outside [0,1]");
  }

  const auto dist = distance_to_boundary(pred_mask);
  const double diagonal = std::hypot(static_cast<double>(w), static_cast<double>(h));
  std::vector<PixelRecord> out;
  out.reserve(w * h);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      PixelRecord rec;
      rec.object_id = object_id;
      rec.class_id = class_id;
      rec.confidence = confidences.size() == 1 ? confidences[0] : confidences[i];
      rec.x = (static_cast<double>(c) + 0.5) / static_cast<double>(w);
      rec.y = (static_cast<double>(r) + 0.5) / static_cast<double>(h);
      rec.d = std::min(1.0, dist[i] / diagonal);
      rec.correct = pred_mask[i] == gt_mask[i];
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace detcal
