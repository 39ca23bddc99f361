#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

// Evaluation protocol: temporal IoU, AP at fixed IoU thresholds, AR@N over
// an IoU sweep, and AUC for classification.
namespace glitchloc::eval {

/// Scored candidate segment; bounds are real numbers on a shared axis
/// (frames or seconds, as long as predictions and ground truth agree).
struct Detection {
  std::string video_id;
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;
};

struct GroundTruthSegment {
  std::string video_id;
  double start = 0.0;
  double end = 0.0;
};

/// Intersection length / union length over the real line.
double temporal_iou(double a_start, double a_end, double b_start, double b_end);

/// All-point interpolated AP with greedy score-ordered one-to-one matching.
/// Ties in score break by (video id, start, end). Empty ground truth gives
/// 0 with `empty_gt` flagged in the report diagnostics.
double average_precision(const std::vector<Detection>& predictions,
                         const std::vector<GroundTruthSegment>& ground_truth,
                         double iou_threshold);

/// Keeps the top-N proposals per video, computes corpus-level recall at
/// each IoU threshold in {0.5, 0.55, ..., 0.95}, and averages.
double average_recall_at_n(const std::vector<Detection>& proposals,
                           const std::vector<GroundTruthSegment>& ground_truth, int n);

const std::vector<double>& recall_iou_thresholds();

/// Mann-Whitney AUC: P(pos > neg) + 0.5 P(pos == neg). Requires both
/// classes present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct EvalReport {
  std::map<double, double> ap;  // IoU threshold -> AP
  std::map<int, double> ar;     // N -> AR@N
  std::optional<double> auc;
  bool empty_gt = false;
  long long n_videos = 0;
  long long n_ground_truth = 0;
  long long n_proposals = 0;
};

EvalReport make_report(const std::vector<Detection>& proposals,
                       const std::vector<GroundTruthSegment>& ground_truth,
                       const std::vector<double>& ap_thresholds, const std::vector<int>& ar_ns);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
/// Plain-text table: AP@0.5/0.75/0.95, AR@100/50/20/10, in percent.
std::string render_table(const EvalReport& report, const std::string& title);

}  // namespace glitchloc::eval
