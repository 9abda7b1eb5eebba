#include "edgelift/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace edgelift {

double spa(const Box3D& pred, const Box3D& gt) {
  const double dist = (pred.center - gt.center).norm();
  const double half_diag = 0.5 * gt.dims.norm();
  if (half_diag <= 0.0) return dist == 0.0 ? 1.0 : 0.0;
  return 1.0 - std::min(1.0, dist / half_diag);
}

MatchCounts& MatchCounts::operator+=(const MatchCounts& other) {
  for (const auto& [c, n] : other.gt_total) gt_total[c] += n;
  for (const auto& [c, n] : other.pred_total) pred_total[c] += n;
  for (const auto& [c, per_tau] : other.detected_at) {
    for (const auto& [tau, n] : per_tau) detected_at[c][tau] += n;
  }
  for (const auto& [c, n] : other.spa_hits) spa_hits[c] += n;
  for (const auto& [c, s] : other.matched_iou_sum) matched_iou_sum[c] += s;
  return *this;
}

MatchCounts match_counts(const std::vector<Detection3D>& preds,
                         const std::vector<std::pair<int, Box3D>>& gts,
                         const MetricsConfig& cfg) {
  MatchCounts counts;
  std::map<int, std::vector<const Box3D*>> gt_by_class;
  for (const auto& [cls, box] : gts) {
    gt_by_class[cls].push_back(&box);
    counts.gt_total[cls] += 1;
    counts.detected_at[cls];  // materialize row
  }
  std::map<int, std::vector<const Detection3D*>> pred_by_class;
  for (const auto& det : preds) {
    pred_by_class[det.class_id].push_back(&det);
    counts.pred_total[det.class_id] += 1;
  }

  for (auto& [cls, class_preds] : pred_by_class) {
    auto gt_it = gt_by_class.find(cls);
    if (gt_it == gt_by_class.end()) continue;
    const auto& class_gts = gt_it->second;
    std::vector<bool> gt_used(class_gts.size(), false);
    std::stable_sort(class_preds.begin(), class_preds.end(),
                     [](const Detection3D* a, const Detection3D* b) {
                       return a->confidence > b->confidence;
                     });
    for (const Detection3D* pred : class_preds) {
      double best_iou = 0.0;
      int best_gt = -1;
      for (std::size_t g = 0; g < class_gts.size(); ++g) {
        if (gt_used[g]) continue;
        const double iou = iou3d(pred->box, *class_gts[g]);
        if (iou > best_iou) {
          best_iou = iou;
          best_gt = static_cast<int>(g);
        }
      }
      if (best_gt < 0) continue;  // no overlapping unmatched GT
      gt_used[best_gt] = true;
      counts.matched_iou_sum[cls] += best_iou;
      for (double tau : cfg.iou_thresholds) {
        if (best_iou >= tau) counts.detected_at[cls][tau] += 1;
      }
      if (spa(pred->box, *class_gts[best_gt]) >= cfg.spa_threshold) {
        counts.spa_hits[cls] += 1;
      }
    }
  }
  return counts;
}

MetricsReport finalize_report(const MatchCounts& counts,
                              const MetricsConfig& cfg) {
  MetricsReport report;
  report.config = cfg;
  int classes_with_gt = 0;
  for (double tau : cfg.iou_thresholds) report.average.recall_at[tau] = 0.0;

  for (const auto& [cls, total] : counts.gt_total) {
    ClassMetrics m;
    m.gt_count = total;
    if (auto it = counts.pred_total.find(cls); it != counts.pred_total.end()) {
      m.pred_count = it->second;
    }
    const double denom = static_cast<double>(total);
    for (double tau : cfg.iou_thresholds) {
      int detected = 0;
      if (auto it = counts.detected_at.find(cls); it != counts.detected_at.end()) {
        if (auto jt = it->second.find(tau); jt != it->second.end()) {
          detected = jt->second;
        }
      }
      m.recall_at[tau] = denom > 0.0 ? detected / denom : 0.0;
    }
    int hits = 0;
    if (auto it = counts.spa_hits.find(cls); it != counts.spa_hits.end()) {
      hits = it->second;
    }
    m.mspa = denom > 0.0 ? hits / denom : 0.0;
    double iou_sum = 0.0;
    if (auto it = counts.matched_iou_sum.find(cls);
        it != counts.matched_iou_sum.end()) {
      iou_sum = it->second;
    }
    m.mean_iou = denom > 0.0 ? iou_sum / denom : 0.0;
    report.per_class[cls] = m;

    if (total > 0) {
      ++classes_with_gt;
      for (double tau : cfg.iou_thresholds) {
        report.average.recall_at[tau] += m.recall_at[tau];
      }
      report.average.mspa += m.mspa;
      report.average.mean_iou += m.mean_iou;
      report.average.gt_count += m.gt_count;
      report.average.pred_count += m.pred_count;
    }
  }
  // Classes with predictions but no GT still appear (with zero rates).
  for (const auto& [cls, n] : counts.pred_total) {
    if (report.per_class.count(cls)) continue;
    ClassMetrics m;
    m.pred_count = n;
    for (double tau : cfg.iou_thresholds) m.recall_at[tau] = 0.0;
    report.per_class[cls] = m;
  }
  if (classes_with_gt > 0) {
    for (auto& [tau, v] : report.average.recall_at) v /= classes_with_gt;
    report.average.mspa /= classes_with_gt;
    report.average.mean_iou /= classes_with_gt;
  }
  return report;
}

MetricsReport match_and_score(const std::vector<Detection3D>& preds,
                              const std::vector<std::pair<int, Box3D>>& gts,
                              const MetricsConfig& cfg) {
  return finalize_report(match_counts(preds, gts, cfg), cfg);
}

namespace {

std::string class_name(const MetricsConfig& cfg, int cls) {
  if (cls >= 0 && cls < static_cast<int>(cfg.classes.size())) {
    return cfg.classes[cls];
  }
  return "class" + std::to_string(cls);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::string report_table(const MetricsReport& report, TableFormat format) {
  const MetricsConfig& cfg = report.config;
  // Column order: classes in config order (those present), then "average".
  std::vector<std::pair<std::string, const ClassMetrics*>> columns;
  for (int cls = 0; cls < static_cast<int>(cfg.classes.size()); ++cls) {
    if (auto it = report.per_class.find(cls); it != report.per_class.end()) {
      columns.emplace_back(cfg.classes[cls], &it->second);
    }
  }
  for (const auto& [cls, m] : report.per_class) {
    if (cls < 0 || cls >= static_cast<int>(cfg.classes.size())) {
      columns.emplace_back(class_name(cfg, cls), &m);
    }
  }
  columns.emplace_back("average", &report.average);

  std::ostringstream os;
  if (format == TableFormat::Csv) {
    os << "class,metric,threshold,value\n";
    for (const auto& [name, m] : columns) {
      for (const auto& [tau, v] : m->recall_at) {
        os << name << ",iou_recall," << fmt(tau) << "," << fmt(v) << "\n";
      }
      os << name << ",mspa," << fmt(cfg.spa_threshold) << "," << fmt(m->mspa)
         << "\n";
      os << name << ",mean_iou,0," << fmt(m->mean_iou) << "\n";
      os << name << ",gt_count,0," << m->gt_count << "\n";
      os << name << ",pred_count,0," << m->pred_count << "\n";
    }
    return os.str();
  }

  os << "| metric |";
  for (const auto& [name, m] : columns) os << " " << name << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) os << "---|";
  os << "\n";
  for (double tau : cfg.iou_thresholds) {
    os << "| IoU@" << fmt(tau) << " |";
    for (const auto& [name, m] : columns) {
      const auto it = m->recall_at.find(tau);
      os << " " << fmt(it != m->recall_at.end() ? it->second : 0.0) << " |";
    }
    os << "\n";
  }
  os << "| mSPA@" << fmt(cfg.spa_threshold) << " |";
  for (const auto& [name, m] : columns) os << " " << fmt(m->mspa) << " |";
  os << "\n| mean IoU |";
  for (const auto& [name, m] : columns) os << " " << fmt(m->mean_iou) << " |";
  os << "\n";
  return os.str();
}

}  // namespace edgelift
