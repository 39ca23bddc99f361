#include "glitchloc/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace glitchloc::post {

data::BoundaryMap average_maps(const data::BoundaryMap& map_p, const data::BoundaryMap& map_c,
                               const data::BoundaryMap& map_pc) {
  if (map_p.d != map_c.d || map_p.t != map_c.t || map_p.d != map_pc.d || map_p.t != map_pc.t) {
    throw std::invalid_argument("average_maps: map shapes differ");
  }
  data::BoundaryMap out;
  out.d = map_p.d;
  out.t = map_p.t;
  out.values.resize(map_p.values.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = (map_p.values[i] + map_c.values[i] + map_pc.values[i]) / 3.0;
  }
  return out;
}

std::vector<Proposal> extract_proposals(const data::BoundaryMap& map, int valid_length,
                                        const std::string& video_id, int top_k,
                                        double min_score) {
  if (top_k < 1) throw std::invalid_argument("extract_proposals: top_k must be >= 1");
  std::vector<Proposal> out;
  for (int dur = 1; dur < map.d; ++dur) {
    for (int j = 0; j + dur <= valid_length && j < map.t; ++j) {
      const double score = map.at(dur, j);
      if (score >= min_score) out.push_back({video_id, j, j + dur, score});
    }
  }
  std::sort(out.begin(), out.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.start_frame != b.start_frame) return a.start_frame < b.start_frame;
    return a.end_frame < b.end_frame;
  });
  if (static_cast<int>(out.size()) > top_k) out.resize(static_cast<std::size_t>(top_k));
  return out;
}

double proposal_iou(const Proposal& a, const Proposal& b) {
  return eval::temporal_iou(a.start_frame, a.end_frame, b.start_frame, b.end_frame);
}

std::vector<Proposal> soft_nms(std::vector<Proposal> proposals, const NmsConfig& cfg) {
  if (!(cfg.sigma > 0.0) || cfg.score_floor < 0.0 || cfg.score_floor >= 1.0 ||
      cfg.max_output < 1) {
    throw std::invalid_argument("soft_nms: invalid config");
  }
  // Merge identical extents, keeping the max score.
  std::map<std::pair<int, int>, Proposal> merged;
  for (const auto& p : proposals) {
    auto key = std::make_pair(p.start_frame, p.end_frame);
    auto it = merged.find(key);
    if (it == merged.end() || p.score > it->second.score) merged[key] = p;
  }
  std::vector<Proposal> pool;
  pool.reserve(merged.size());
  for (auto& [key, p] : merged) {
    (void)key;
    pool.push_back(p);
  }

  std::vector<Proposal> kept;
  while (!pool.empty() && static_cast<int>(kept.size()) < cfg.max_output) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const bool better = pool[i].score > pool[best].score ||
                          (pool[i].score == pool[best].score &&
                           (pool[i].start_frame < pool[best].start_frame ||
                            (pool[i].start_frame == pool[best].start_frame &&
                             pool[i].end_frame < pool[best].end_frame)));
      if (better) best = i;
    }
    if (pool[best].score < cfg.score_floor) break;
    const Proposal selected = pool[best];
    kept.push_back(selected);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    for (auto& p : pool) {
      const double iou = proposal_iou(selected, p);
      if (iou > 0.0) p.score *= std::exp(-(iou * iou) / cfg.sigma);
    }
  }
  return kept;
}

NmsConfig tune_nms(const std::vector<std::vector<Proposal>>& raw,
                   const std::vector<eval::GroundTruthSegment>& ground_truth,
                   const std::vector<NmsConfig>& grid) {
  if (grid.empty()) throw std::invalid_argument("tune_nms: empty grid");
  if (raw.empty()) throw std::invalid_argument("tune_nms: empty validation set");
  NmsConfig best = grid.front();
  double best_ap = -1.0;
  for (const auto& cfg : grid) {
    std::vector<eval::Detection> detections;
    for (const auto& video_proposals : raw) {
      for (const auto& p : soft_nms(video_proposals, cfg)) {
        detections.push_back({p.video_id, static_cast<double>(p.start_frame),
                              static_cast<double>(p.end_frame), p.score});
      }
    }
    const double ap = eval::average_precision(detections, ground_truth, 0.5);
    if (ap > best_ap) {
      best_ap = ap;
      best = cfg;
    }
  }
  return best;
}

std::vector<NmsConfig> default_nms_grid() {
  std::vector<NmsConfig> grid;
  for (double sigma : {0.05, 0.1, 0.25, 0.5, 1.0}) {
    for (double floor : {1e-4, 1e-3, 1e-2}) {
      grid.push_back({sigma, floor, 100});
    }
  }
  return grid;
}

std::vector<double> pool_map_stats(const data::BoundaryMap& map, int valid_length) {
  constexpr int kTop = 5;
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(3 * map.d));
  std::vector<double> row;
  for (int dur = 0; dur < map.d; ++dur) {
    row.clear();
    for (int j = 0; j < map.t; ++j) {
      if (j < valid_length && j + dur <= valid_length) row.push_back(map.at(dur, j));
    }
    if (row.empty()) {
      stats.insert(stats.end(), {0.0, 0.0, 0.0});
      continue;
    }
    std::sort(row.begin(), row.end(), std::greater<double>());
    double sum = 0.0;
    for (double v : row) sum += v;
    const int k = std::min<int>(kTop, static_cast<int>(row.size()));
    double top_sum = 0.0;
    for (int i = 0; i < k; ++i) top_sum += row[static_cast<std::size_t>(i)];
    stats.push_back(row.front());
    stats.push_back(sum / static_cast<double>(row.size()));
    stats.push_back(top_sum / static_cast<double>(k));
  }
  return stats;
}

double video_score(const data::BoundaryMap& map, int valid_length, const VideoScoreHead& head) {
  if (!head.trained()) throw std::runtime_error("video_score: head is untrained");
  if (head.d != map.d) throw std::invalid_argument("video_score: head trained for different D");
  const std::vector<double> f = pool_map_stats(map, valid_length);
  const int in_dim = 3 * head.d;
  double z2 = head.b2;
  for (int h = 0; h < head.hidden; ++h) {
    double z1 = head.b1[static_cast<std::size_t>(h)];
    for (int i = 0; i < in_dim; ++i) {
      z1 += head.w1[static_cast<std::size_t>(h) * in_dim + i] * f[static_cast<std::size_t>(i)];
    }
    z2 += head.w2[static_cast<std::size_t>(h)] * std::max(0.0, z1);
  }
  if (z2 >= 0.0) return 1.0 / (1.0 + std::exp(-z2));
  const double e = std::exp(z2);
  return e / (1.0 + e);
}

std::string proposals_to_jsonl(const std::vector<Proposal>& proposals, double fps) {
  std::ostringstream os;
  for (const auto& p : proposals) {
    nlohmann::json j;
    j["video_id"] = p.video_id;
    j["start_s"] = p.start_frame / fps;
    j["end_s"] = p.end_frame / fps;
    j["score"] = p.score;
    os << j.dump() << "\n";
  }
  return os.str();
}

}  // namespace glitchloc::post
