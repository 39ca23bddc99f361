#pragma once

#include <string>
#include <vector>

#include "glitchloc/annotations.hpp"
#include "glitchloc/metrics.hpp"

// Inference path: boundary-map averaging, dense proposal extraction,
// Gaussian Soft-NMS, and the video-level classification score.
namespace glitchloc::post {

/// Candidate segment in frame units; [start_frame, end_frame).
struct Proposal {
  std::string video_id;
  int start_frame = 0;
  int end_frame = 0;
  double score = 0.0;
};

struct NmsConfig {
  double sigma = 0.25;        // Gaussian decay width
  double score_floor = 1e-3;  // termination threshold
  int max_output = 100;
};

/// Element-wise mean of the three maps.
data::BoundaryMap average_maps(const data::BoundaryMap& map_p, const data::BoundaryMap& map_c,
                               const data::BoundaryMap& map_pc);

/// Every cell (d, j) with d >= 1, j + d <= valid_length and score >=
/// min_score becomes proposal [j, j+d); sorted by score descending (ties:
/// earlier start, shorter duration), truncated to top_k.
std::vector<Proposal> extract_proposals(const data::BoundaryMap& map, int valid_length,
                                        const std::string& video_id, int top_k,
                                        double min_score);

/// Gaussian Soft-NMS: repeatedly select the max-score proposal, decay every
/// remaining score by exp(-IoU^2 / sigma) against it; stop below the score
/// floor or at max_output. Identical-extent duplicates are merged (max
/// score) first. Output keeps decayed scores.
std::vector<Proposal> soft_nms(std::vector<Proposal> proposals, const NmsConfig& cfg);

double proposal_iou(const Proposal& a, const Proposal& b);

/// Picks the grid entry maximizing AP@0.5 over the given per-video
/// proposal pools; ties break by grid order. `raw` holds pre-NMS proposals
/// per video.
NmsConfig tune_nms(const std::vector<std::vector<Proposal>>& raw,
                   const std::vector<eval::GroundTruthSegment>& ground_truth,
                   const std::vector<NmsConfig>& grid);

std::vector<NmsConfig> default_nms_grid();

/// Two-layer perceptron over pooled boundary-map statistics (per duration
/// row: max, mean, top-5 mean over valid cells).
struct VideoScoreHead {
  int d = 0;
  int hidden = 0;
  std::vector<double> w1;  // hidden x (3*d)
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;

  bool trained() const { return !w1.empty(); }
};

/// Pooled statistics feeding the head: 3*D values in [0,1].
std::vector<double> pool_map_stats(const data::BoundaryMap& map, int valid_length);

/// Sigmoid score in (0,1); throws if the head is untrained.
double video_score(const data::BoundaryMap& map, int valid_length, const VideoScoreHead& head);

/// Proposals as JSON-lines, one object per proposal with seconds converted
/// via fps.
std::string proposals_to_jsonl(const std::vector<Proposal>& proposals, double fps);

}  // namespace glitchloc::post
