// Biometric verification metrics over liveness scores: AUC (Mann-Whitney,
// ties at half credit), ROC-convex-hull EER with interpolated threshold,
// FFR at a fixed FLR target, and HTER at an externally supplied threshold.
// Scores are liveness scores: bonafide (label 1) should score high.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace transrppg {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;  // bonafide = 1, mask = 0
  std::vector<std::string> subjects;

  void validate(bool need_both_classes = true) const {
    if (scores.size() != labels.size() ||
        (!subjects.empty() && subjects.size() != scores.size()))
      throw std::invalid_argument("ScoredSet: array lengths disagree");
    if (need_both_classes) {
      bool pos = false, neg = false;
      for (int l : labels) (l == 1 ? pos : neg) = true;
      if (!pos || !neg)
        throw std::invalid_argument("ScoredSet: both classes required for threshold metrics");
    }
  }
};

struct MetricsReport {
  double auc = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  bool has_hter = false;
  double hter = 0.0;
  double hter_threshold = 0.0;
  double ffr_at_flr_001 = 0.0;
  size_t n_bonafide = 0, n_mask = 0;
};

// Probability that a random bonafide outscores a random mask, ties counted
// 0.5 (Mann-Whitney); equals the trapezoidal ROC area.
inline double roc_auc(const ScoredSet& s) {
  s.validate();
  // average-rank formulation
  std::vector<size_t> idx(s.scores.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return s.scores[a] < s.scores[b]; });
  double rank_sum_pos = 0.0;
  size_t npos = 0, nneg = 0;
  for (int l : s.labels) (l == 1 ? npos : nneg)++;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based average rank
    for (size_t k = i; k < j; ++k)
      if (s.labels[idx[k]] == 1) rank_sum_pos += avg_rank;
    i = j;
  }
  return (rank_sum_pos - 0.5 * npos * (npos + 1)) / (static_cast<double>(npos) * nneg);
}

namespace detail {

struct RocPoint {
  double flr;  // false liveness rate: masks accepted as live (score >= threshold)
  double ffr;  // false fake rate: bonafide rejected (score < threshold)
  double threshold;
};

// Operating points swept from threshold -inf (accept all) to +inf (reject
// all); thresholds between distinct scores sit at score midpoints.
inline std::vector<RocPoint> roc_points(const ScoredSet& s) {
  std::vector<double> pos, neg;
  for (size_t i = 0; i < s.scores.size(); ++i)
    (s.labels[i] == 1 ? pos : neg).push_back(s.scores[i]);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> uniq = s.scores;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<double> thresholds;
  thresholds.push_back(uniq.front() - 1.0);
  for (size_t i = 0; i + 1 < uniq.size(); ++i)
    thresholds.push_back(0.5 * (uniq[i] + uniq[i + 1]));
  thresholds.push_back(uniq.back() + 1.0);
  std::vector<RocPoint> pts;
  pts.reserve(thresholds.size());
  for (double th : thresholds) {
    const auto nneg_accept = neg.end() - std::lower_bound(neg.begin(), neg.end(), th);
    const auto npos_reject = std::lower_bound(pos.begin(), pos.end(), th) - pos.begin();
    pts.push_back({static_cast<double>(nneg_accept) / std::max<size_t>(neg.size(), 1),
                   static_cast<double>(npos_reject) / std::max<size_t>(pos.size(), 1), th});
  }
  return pts;
}

}  // namespace detail

// EER located on the ROC convex hull: the crossing of the piecewise-linear
// hull with the equal-error line, interpolated between hull vertices.
inline std::pair<double, double> eer(const ScoredSet& s) {
  s.validate();
  auto pts = detail::roc_points(s);  // flr descending as threshold ascends
  // hull in (fpr=flr, tpr=1-ffr) space, built left to right
  struct HP { double fpr, tpr, threshold; };
  std::vector<HP> cand;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it)
    cand.push_back({it->flr, 1.0 - it->ffr, it->threshold});
  std::vector<HP> hull;
  for (const auto& p : cand) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull[hull.size() - 1];
      const double cross = (b.fpr - a.fpr) * (p.tpr - a.tpr) - (b.tpr - a.tpr) * (p.fpr - a.fpr);
      if (cross >= 0.0) hull.pop_back();
      else break;
    }
    hull.push_back(p);
  }
  // find the segment crossing tpr = 1 - fpr
  auto gap = [](const HP& p) { return p.tpr + p.fpr - 1.0; };
  for (size_t i = 0; i + 1 < hull.size(); ++i) {
    const double g0 = gap(hull[i]), g1 = gap(hull[i + 1]);
    if (g0 <= 0.0 && g1 >= 0.0) {
      const double t = (g1 - g0) > 0.0 ? -g0 / (g1 - g0) : 0.0;
      const double fpr = hull[i].fpr + t * (hull[i + 1].fpr - hull[i].fpr);
      const double th = hull[i].threshold + t * (hull[i + 1].threshold - hull[i].threshold);
      return {fpr, th};
    }
  }
  // degenerate: hull entirely on one side (cannot happen with both classes)
  return {0.5, hull.empty() ? 0.0 : hull.front().threshold};
}

// FFR at the smallest threshold whose FLR <= target, with linear
// interpolation between adjacent operating points straddling the target.
inline double ffr_at_flr(const ScoredSet& s, double flr_target = 0.01) {
  s.validate();
  auto pts = detail::roc_points(s);  // flr non-increasing along the sweep
  for (size_t i = 0; i + 1 < pts.size(); ++i) {
    if (pts[i].flr >= flr_target && pts[i + 1].flr <= flr_target) {
      if (pts[i].flr == pts[i + 1].flr) return std::min(pts[i].ffr, pts[i + 1].ffr);
      const double t = (pts[i].flr - flr_target) / (pts[i].flr - pts[i + 1].flr);
      return pts[i].ffr + t * (pts[i + 1].ffr - pts[i].ffr);
    }
  }
  return pts.back().flr <= flr_target ? pts.back().ffr : 1.0;
}

// (FAR + FRR)/2 at a fixed, externally supplied threshold; samples with
// score >= threshold are accepted as live.
inline double hter(const ScoredSet& s, double threshold) {
  s.validate();
  size_t npos = 0, nneg = 0, far = 0, frr = 0;
  for (size_t i = 0; i < s.scores.size(); ++i) {
    if (s.labels[i] == 1) {
      ++npos;
      if (s.scores[i] < threshold) ++frr;
    } else {
      ++nneg;
      if (s.scores[i] >= threshold) ++far;
    }
  }
  return 0.5 * (static_cast<double>(far) / nneg + static_cast<double>(frr) / npos);
}

inline MetricsReport compute_metrics(const ScoredSet& s, const double* hter_threshold = nullptr) {
  MetricsReport r;
  r.auc = roc_auc(s);
  auto [e, th] = eer(s);
  r.eer = e;
  r.eer_threshold = th;
  r.ffr_at_flr_001 = ffr_at_flr(s, 0.01);
  for (int l : s.labels) (l == 1 ? r.n_bonafide : r.n_mask)++;
  if (hter_threshold) {
    r.has_hter = true;
    r.hter_threshold = *hter_threshold;
    r.hter = hter(s, *hter_threshold);
  }
  return r;
}

inline std::string format_metrics_line(const MetricsReport& r) {
  char buf[160];
  if (r.has_hter)
    std::snprintf(buf, sizeof(buf), "auc=%.6f eer=%.6f hter=%.6f ffr_at_flr_0.01=%.6f",
                  r.auc, r.eer, r.hter, r.ffr_at_flr_001);
  else
    std::snprintf(buf, sizeof(buf), "auc=%.6f eer=%.6f hter=na ffr_at_flr_0.01=%.6f",
                  r.auc, r.eer, r.ffr_at_flr_001);
  return buf;
}

}  // namespace transrppg
