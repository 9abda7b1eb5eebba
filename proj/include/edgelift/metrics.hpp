#pragma once

#include <map>
#include <string>
#include <vector>

#include "edgelift/geometry.hpp"

namespace edgelift {

struct MetricsConfig {
  std::vector<double> iou_thresholds{0.25, 0.5};
  double spa_threshold = 0.70;
  std::vector<std::string> classes;  // ordered; class_id indexes this list
};

// Per-class match tallies; summable across evaluation ticks.
struct MatchCounts {
  // class_id -> counters
  std::map<int, int> gt_total;
  std::map<int, int> pred_total;
  std::map<int, std::map<double, int>> detected_at;  // per IoU threshold
  std::map<int, int> spa_hits;
  std::map<int, double> matched_iou_sum;  // over all GT (unmatched add 0)

  MatchCounts& operator+=(const MatchCounts& other);
};

struct ClassMetrics {
  std::map<double, double> recall_at;  // IoU threshold -> recall
  double mspa = 0.0;
  double mean_iou = 0.0;  // mean matched IoU over GT, unmatched count as 0
  int gt_count = 0;
  int pred_count = 0;
};

struct MetricsReport {
  MetricsConfig config;
  std::map<int, ClassMetrics> per_class;
  ClassMetrics average;  // mean over classes with >= 1 GT
};

// Spatial position accuracy: normalized center-distance score,
// 1 - min(1, |c_pred - c_gt| / (|dims_gt| / 2)).
double spa(const Box3D& pred, const Box3D& gt);

// Greedy confidence-ordered matching of predictions to ground truth per class.
MatchCounts match_counts(const std::vector<Detection3D>& preds,
                         const std::vector<std::pair<int, Box3D>>& gts,
                         const MetricsConfig& cfg);

MetricsReport finalize_report(const MatchCounts& counts,
                              const MetricsConfig& cfg);

MetricsReport match_and_score(const std::vector<Detection3D>& preds,
                              const std::vector<std::pair<int, Box3D>>& gts,
                              const MetricsConfig& cfg);

enum class TableFormat { Csv, Markdown };

// Csv: long format "class,metric,threshold,value". Markdown: one table with
// class columns in config order followed by "average".
std::string report_table(const MetricsReport& report, TableFormat format);

}  // namespace edgelift
