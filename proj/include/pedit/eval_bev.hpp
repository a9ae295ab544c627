#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "pedit/error.hpp"

namespace pedit {

struct BevDetection {
  std::string sample_id;
  double x = 0.0, y = 0.0;  // metres
  double score = 0.0;
};

struct BevGroundTruth {
  std::string sample_id;
  double x = 0.0, y = 0.0;
};

struct DetectionSet {
  std::vector<BevDetection> detections;
  std::vector<BevGroundTruth> ground_truth;

  void validate() const {
    for (const auto& d : detections) {
      if (!(d.score >= 0.0 && d.score <= 1.0))
        throw ValidationError("detection score outside [0, 1] in sample '" + d.sample_id + "'");
      if (!std::isfinite(d.x) || !std::isfinite(d.y))
        throw ValidationError("non-finite detection centre in sample '" + d.sample_id + "'");
    }
    for (const auto& g : ground_truth)
      if (!std::isfinite(g.x) || !std::isfinite(g.y))
        throw ValidationError("non-finite ground-truth centre in sample '" + g.sample_id + "'");
  }
};

inline constexpr std::array<double, 4> kBevThresholds{0.5, 1.0, 2.0, 4.0};

enum class ApConvention {
  Clipped,  // recall range [0.1, 1], rescaled by 1/0.9
  Voc101,   // mean of the envelope at r = 0, 0.01, ..., 1
};

struct MatchFlags {
  std::vector<std::uint8_t> tp;  // aligned with the input detections
  std::vector<std::uint8_t> fp;
};

struct ApResult {
  std::map<double, double> ap_per_threshold;
  double map_score = 0.0;
};

namespace detail {

/// Detection processing order: score descending, then sample id, then
/// position. Fully identical records are interchangeable, so the order is
/// a function of the multiset of detections alone.
inline std::vector<std::size_t> detection_order(const std::vector<BevDetection>& dets) {
  std::vector<std::size_t> idx(dets.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& da = dets[a];
    const auto& db = dets[b];
    return std::make_tuple(-da.score, std::cref(da.sample_id), da.x, da.y) <
           std::make_tuple(-db.score, std::cref(db.sample_id), db.x, db.y);
  });
  return idx;
}

}  // namespace detail

/// Greedy per-sample matching on BEV centre distance. Each detection, in
/// descending score, looks at its nearest still-unmatched ground truth of
/// the same sample and claims it when the distance is within `threshold`.
inline MatchFlags match_detections(const std::vector<BevDetection>& dets, const std::vector<BevGroundTruth>& gts,
                                   double threshold) {
  MatchFlags out;
  out.tp.assign(dets.size(), 0);
  out.fp.assign(dets.size(), 0);

  std::map<std::string, std::vector<std::size_t>> gt_by_sample;
  {
    std::vector<std::size_t> gidx(gts.size());
    std::iota(gidx.begin(), gidx.end(), std::size_t{0});
    std::stable_sort(gidx.begin(), gidx.end(), [&](std::size_t a, std::size_t b) {
      return std::tie(gts[a].x, gts[a].y) < std::tie(gts[b].x, gts[b].y);
    });
    for (std::size_t g : gidx) gt_by_sample[gts[g].sample_id].push_back(g);
  }
  std::vector<std::uint8_t> taken(gts.size(), 0);

  for (std::size_t i : detail::detection_order(dets)) {
    const auto& d = dets[i];
    auto it = gt_by_sample.find(d.sample_id);
    std::size_t best = gts.size();
    double best_dist = 0.0;
    if (it != gt_by_sample.end()) {
      for (std::size_t g : it->second) {
        if (taken[g]) continue;
        const double dist = std::hypot(d.x - gts[g].x, d.y - gts[g].y);
        if (best == gts.size() || dist < best_dist) {
          best = g;
          best_dist = dist;
        }
      }
    }
    if (best != gts.size() && best_dist <= threshold) {
      taken[best] = 1;
      out.tp[i] = 1;
    } else {
      out.fp[i] = 1;
    }
  }
  return out;
}

/// Area under the monotone precision envelope. Flags and scores are aligned;
/// ties in score keep the given order.
inline double average_precision(const std::vector<std::uint8_t>& tp, const std::vector<std::uint8_t>& fp,
                                const std::vector<double>& scores, std::size_t n_gt,
                                ApConvention convention = ApConvention::Clipped) {
  if (tp.size() != fp.size() || tp.size() != scores.size())
    throw ValidationError("average_precision: flag and score lengths differ");
  if (n_gt == 0 || tp.empty()) return 0.0;

  std::vector<std::size_t> idx(tp.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<double> recall, precision;
  recall.reserve(idx.size());
  precision.reserve(idx.size());
  std::size_t ctp = 0, cfp = 0;
  for (std::size_t i : idx) {
    ctp += tp[i] ? 1 : 0;
    cfp += fp[i] ? 1 : 0;
    if (ctp + cfp == 0) continue;
    recall.push_back(static_cast<double>(ctp) / static_cast<double>(n_gt));
    precision.push_back(static_cast<double>(ctp) / static_cast<double>(ctp + cfp));
  }
  if (recall.empty()) return 0.0;

  // envelope[k] = max precision over points k..end
  std::vector<double> envelope(precision);
  for (std::size_t k = envelope.size() - 1; k-- > 0;) envelope[k] = std::max(envelope[k], envelope[k + 1]);

  // p_interp(r) = max precision over points with recall >= r, 0 past the last recall
  auto p_interp = [&](double r) {
    auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it == recall.end()) return 0.0;
    return envelope[static_cast<std::size_t>(it - recall.begin())];
  };

  if (convention == ApConvention::Voc101) {
    double sum = 0.0;
    for (int k = 0; k <= 100; ++k) sum += p_interp(k / 100.0);
    return sum / 101.0;
  }

  constexpr double lo = 0.1, hi = 1.0;
  double area = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    if (recall[k] <= prev) continue;
    const double a = std::max(prev, lo), b = std::min(recall[k], hi);
    if (b > a) area += (b - a) * envelope[k];
    prev = recall[k];
  }
  return std::clamp(area / (hi - lo), 0.0, 1.0);
}

/// Mean over the four standard gates; every gate must be present.
inline double map_score(const std::map<double, double>& aps) {
  double sum = 0.0;
  for (double t : kBevThresholds) {
    auto it = aps.find(t);
    if (it == aps.end()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "map_score: missing AP for threshold %g m", t);
      throw ValidationError(buf);
    }
    sum += it->second;
  }
  return sum / static_cast<double>(kBevThresholds.size());
}

inline ApResult evaluate_bev(const DetectionSet& set, ApConvention convention = ApConvention::Clipped) {
  set.validate();
  std::vector<double> scores;
  scores.reserve(set.detections.size());
  std::vector<BevDetection> canonical;
  canonical.reserve(set.detections.size());
  for (std::size_t i : detail::detection_order(set.detections)) canonical.push_back(set.detections[i]);
  for (const auto& d : canonical) scores.push_back(d.score);

  ApResult r;
  for (double t : kBevThresholds) {
    const MatchFlags m = match_detections(canonical, set.ground_truth, t);
    r.ap_per_threshold[t] = average_precision(m.tp, m.fp, scores, set.ground_truth.size(), convention);
  }
  r.map_score = map_score(r.ap_per_threshold);
  return r;
}

namespace detail {

inline std::vector<std::vector<std::string>> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(f);
    if (fields.empty()) continue;
    fields.push_back(std::to_string(lineno));
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline double parse_number(const std::string& s, const std::string& path, const std::string& lineno) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !std::isfinite(v))
    throw ValidationError(path + ":" + lineno + ": bad number '" + s + "'");
  return v;
}

}  // namespace detail

/// Lines are `<sample_id> <x> <y> <score>`; `#` starts a comment.
inline std::vector<BevDetection> load_detections(const std::string& path) {
  std::vector<BevDetection> out;
  for (const auto& f : detail::read_records(path)) {
    const std::string& ln = f.back();
    if (f.size() != 5) throw ValidationError(path + ":" + ln + ": expected 'sample_id x y score'");
    BevDetection d{f[0], detail::parse_number(f[1], path, ln), detail::parse_number(f[2], path, ln),
                   detail::parse_number(f[3], path, ln)};
    if (d.score < 0.0 || d.score > 1.0) throw ValidationError(path + ":" + ln + ": score outside [0, 1]");
    out.push_back(std::move(d));
  }
  return out;
}

/// Lines are `<sample_id> <x> <y>`; `#` starts a comment.
inline std::vector<BevGroundTruth> load_ground_truth(const std::string& path) {
  std::vector<BevGroundTruth> out;
  for (const auto& f : detail::read_records(path)) {
    const std::string& ln = f.back();
    if (f.size() != 4) throw ValidationError(path + ":" + ln + ": expected 'sample_id x y'");
    out.push_back({f[0], detail::parse_number(f[1], path, ln), detail::parse_number(f[2], path, ln)});
  }
  return out;
}

inline void save_detections(const std::string& path, const std::vector<BevDetection>& dets) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "# sample_id x y score\n";
  out.precision(17);
  for (const auto& d : dets) out << d.sample_id << ' ' << d.x << ' ' << d.y << ' ' << d.score << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline void save_ground_truth(const std::string& path, const std::vector<BevGroundTruth>& gts) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "# sample_id x y\n";
  out.precision(17);
  for (const auto& g : gts) out << g.sample_id << ' ' << g.x << ' ' << g.y << '\n';
  if (!out) throw IoError("write failed: " + path);
}

/// One row per gate plus the mean, one column per named result.
inline std::string format_report(const std::vector<std::pair<std::string, ApResult>>& columns) {
  std::string s;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-12s", "metric");
  s += buf;
  for (const auto& [name, r] : columns) {
    std::snprintf(buf, sizeof buf, " | %14s", name.c_str());
    s += buf;
  }
  s += '\n';
  for (double t : kBevThresholds) {
    char label[32];
    std::snprintf(label, sizeof label, "AP_dist_%g", t);
    std::snprintf(buf, sizeof buf, "%-12s", label);
    s += buf;
    for (const auto& c : columns) {
      std::snprintf(buf, sizeof buf, " | %14.4f", c.second.ap_per_threshold.at(t));
      s += buf;
    }
    s += '\n';
  }
  std::snprintf(buf, sizeof buf, "%-12s", "mAP");
  s += buf;
  for (const auto& c : columns) {
    std::snprintf(buf, sizeof buf, " | %14.4f", c.second.map_score);
    s += buf;
  }
  s += '\n';
  return s;
}

}  // namespace pedit
