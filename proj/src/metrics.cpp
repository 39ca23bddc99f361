#include "glitchloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace glitchloc::eval {

using nlohmann::json;

double temporal_iou(double a_start, double a_end, double b_start, double b_end) {
  const double inter = std::max(0.0, std::min(a_end, b_end) - std::max(a_start, b_start));
  const double uni = std::max(a_end, b_end) - std::min(a_start, b_start);
  if (!(uni > 0.0)) return 0.0;
  return inter / uni;
}

namespace {

bool detection_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  if (a.start != b.start) return a.start < b.start;
  return a.end < b.end;
}

using GtIndex = std::unordered_map<std::string, std::vector<std::size_t>>;

GtIndex index_ground_truth(const std::vector<GroundTruthSegment>& gt) {
  GtIndex index;
  for (std::size_t i = 0; i < gt.size(); ++i) index[gt[i].video_id].push_back(i);
  return index;
}

// Greedy one-to-one matching in prediction order; each prediction takes the
// unmatched ground-truth segment of its video with the highest IoU >=
// threshold (ties by lowest ground-truth index).
std::vector<bool> match_predictions(const std::vector<Detection>& ranked,
                                    const std::vector<GroundTruthSegment>& gt,
                                    const GtIndex& index, double iou_threshold) {
  std::vector<bool> tp(ranked.size(), false);
  std::vector<bool> taken(gt.size(), false);
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    auto it = index.find(ranked[k].video_id);
    if (it == index.end()) continue;
    double best_iou = 0.0;
    std::size_t best = gt.size();
    for (std::size_t gi : it->second) {
      if (taken[gi]) continue;
      const double iou = temporal_iou(ranked[k].start, ranked[k].end, gt[gi].start, gt[gi].end);
      if (iou >= iou_threshold && iou > best_iou) {
        best_iou = iou;
        best = gi;
      }
    }
    if (best != gt.size()) {
      taken[best] = true;
      tp[k] = true;
    }
  }
  return tp;
}

}  // namespace

double average_precision(const std::vector<Detection>& predictions,
                         const std::vector<GroundTruthSegment>& ground_truth,
                         double iou_threshold) {
  if (ground_truth.empty()) return 0.0;
  std::vector<Detection> ranked = predictions;
  std::sort(ranked.begin(), ranked.end(), detection_order);
  const GtIndex index = index_ground_truth(ground_truth);
  const std::vector<bool> tp = match_predictions(ranked, ground_truth, index, iou_threshold);

  const double n_gt = static_cast<double>(ground_truth.size());
  std::vector<double> precision(ranked.size());
  std::vector<double> recall(ranked.size());
  long long tp_count = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (tp[k]) ++tp_count;
    precision[k] = static_cast<double>(tp_count) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp_count) / n_gt;
  }
  // Precision envelope from the right, integrated over recall steps.
  double ap = 0.0;
  double max_prec = 0.0;
  for (std::size_t k = ranked.size(); k-- > 0;) {
    max_prec = std::max(max_prec, precision[k]);
    const double prev_recall = k == 0 ? 0.0 : recall[k - 1];
    if (recall[k] > prev_recall) ap += (recall[k] - prev_recall) * max_prec;
  }
  return ap;
}

const std::vector<double>& recall_iou_thresholds() {
  static const std::vector<double> thresholds = [] {
    std::vector<double> t;
    for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
    return t;
  }();
  return thresholds;
}

double average_recall_at_n(const std::vector<Detection>& proposals,
                           const std::vector<GroundTruthSegment>& ground_truth, int n) {
  if (n < 1) throw std::invalid_argument("average_recall_at_n: N must be >= 1");
  if (ground_truth.empty()) return 0.0;
  // Top-N per video by (score desc, start asc, end asc).
  std::unordered_map<std::string, std::vector<Detection>> by_video;
  for (const auto& p : proposals) by_video[p.video_id].push_back(p);
  std::vector<Detection> kept;
  for (auto& [vid, list] : by_video) {
    (void)vid;
    std::sort(list.begin(), list.end(), detection_order);
    if (static_cast<int>(list.size()) > n) list.resize(static_cast<std::size_t>(n));
    kept.insert(kept.end(), list.begin(), list.end());
  }
  std::sort(kept.begin(), kept.end(), detection_order);
  const GtIndex index = index_ground_truth(ground_truth);
  const double n_gt = static_cast<double>(ground_truth.size());
  double sum = 0.0;
  for (double thr : recall_iou_thresholds()) {
    const std::vector<bool> tp = match_predictions(kept, ground_truth, index, thr);
    long long matched = 0;
    for (bool b : tp) matched += b ? 1 : 0;
    sum += static_cast<double>(matched) / n_gt;
  }
  return sum / static_cast<double>(recall_iou_thresholds().size());
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  long long n_pos = 0, n_neg = 0;
  for (int label : labels) {
    if (label == 1) {
      ++n_pos;
    } else if (label == 0) {
      ++n_neg;
    } else {
      throw std::invalid_argument("auc: labels must be 0 or 1");
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auc: both classes must be present");
  }
  // Rank-based Mann-Whitney with midranks for ties.
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

EvalReport make_report(const std::vector<Detection>& proposals,
                       const std::vector<GroundTruthSegment>& ground_truth,
                       const std::vector<double>& ap_thresholds, const std::vector<int>& ar_ns) {
  EvalReport report;
  report.empty_gt = ground_truth.empty();
  report.n_ground_truth = static_cast<long long>(ground_truth.size());
  report.n_proposals = static_cast<long long>(proposals.size());
  {
    std::unordered_map<std::string, bool> vids;
    for (const auto& p : proposals) vids[p.video_id] = true;
    for (const auto& g : ground_truth) vids[g.video_id] = true;
    report.n_videos = static_cast<long long>(vids.size());
  }
  for (double thr : ap_thresholds) {
    report.ap[thr] = average_precision(proposals, ground_truth, thr);
  }
  for (int n : ar_ns) report.ar[n] = average_recall_at_n(proposals, ground_truth, n);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  json ap = json::object();
  for (const auto& [thr, v] : report.ap) {
    std::ostringstream key;
    key << std::fixed << std::setprecision(2) << thr;
    ap[key.str()] = v;
  }
  json ar = json::object();
  for (const auto& [n, v] : report.ar) ar[std::to_string(n)] = v;
  j["ap"] = ap;
  j["ar"] = ar;
  if (report.auc.has_value()) {
    j["auc"] = *report.auc;
  } else {
    j["auc"] = nullptr;
  }
  j["empty_gt"] = report.empty_gt;
  j["n_videos"] = report.n_videos;
  j["n_ground_truth"] = report.n_ground_truth;
  j["n_proposals"] = report.n_proposals;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport report;
  for (const auto& [key, v] : j.at("ap").items()) report.ap[std::stod(key)] = v.get<double>();
  for (const auto& [key, v] : j.at("ar").items()) report.ar[std::stoi(key)] = v.get<double>();
  if (!j.at("auc").is_null()) report.auc = j.at("auc").get<double>();
  report.empty_gt = j.at("empty_gt").get<bool>();
  report.n_videos = j.at("n_videos").get<long long>();
  report.n_ground_truth = j.at("n_ground_truth").get<long long>();
  report.n_proposals = j.at("n_proposals").get<long long>();
  return report;
}

std::string render_table(const EvalReport& report, const std::string& title) {
  auto pct = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << std::setw(6) << 100.0 * v;
    return os.str();
  };
  auto ap_at = [&report](double thr) {
    auto it = report.ap.find(thr);
    return it == report.ap.end() ? 0.0 : it->second;
  };
  auto ar_at = [&report](int n) {
    auto it = report.ar.find(n);
    return it == report.ar.end() ? 0.0 : it->second;
  };
  std::ostringstream os;
  os << title << "\n";
  os << "AP@0.5  AP@0.75 AP@0.95 | AR@100 AR@50  AR@20  AR@10\n";
  os << pct(ap_at(0.5)) << "  " << pct(ap_at(0.75)) << "  " << pct(ap_at(0.95)) << " | "
     << pct(ar_at(100)) << " " << pct(ar_at(50)) << " " << pct(ar_at(20)) << " " << pct(ar_at(10))
     << "\n";
  return os.str();
}

}  // namespace glitchloc::eval
