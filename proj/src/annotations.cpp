#include "glitchloc/annotations.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace glitchloc::data {

using nlohmann::json;

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  throw std::logic_error("unreachable split");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw std::runtime_error("unknown split name: " + name);
}

std::vector<const VideoRecord*> Dataset::split_records(Split s) const {
  std::vector<const VideoRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

long long Dataset::total_frames() const {
  long long sum = 0;
  for (const auto& r : records) sum += r.n_frames;
  return sum;
}

int segment_start_frame(double start_s, double fps) {
  return static_cast<int>(std::floor(start_s * fps));
}

int segment_end_frame(double end_s, double fps) {
  return static_cast<int>(std::ceil(end_s * fps));
}

void validate_record(const VideoRecord& rec) {
  auto fail = [&rec](const std::string& what) {
    throw std::runtime_error("record '" + rec.id + "': " + what);
  };
  if (rec.id.empty()) throw std::runtime_error("record with empty id");
  if (!(rec.fps > 0.0) || !std::isfinite(rec.fps)) fail("fps must be positive");
  if (rec.n_frames <= 0) fail("n_frames must be positive");
  const double dur = rec.duration_s();
  double prev_end = -1.0;
  for (const auto& seg : rec.fake_segments) {
    if (!std::isfinite(seg.start_s) || !std::isfinite(seg.end_s)) fail("non-finite segment bounds");
    if (seg.start_s < 0.0) fail("segment starts before 0");
    if (!(seg.end_s > seg.start_s)) fail("segment end must exceed start");
    if (seg.end_s > dur + 1e-9) fail("segment exceeds clip duration");
    if (seg.start_s < prev_end) fail("overlapping or unsorted fake segments");
    prev_end = seg.end_s;
  }
  const bool flagged = rec.modify_visual || rec.modify_audio;
  if (flagged != !rec.fake_segments.empty()) {
    fail("modification flags inconsistent with fake segments");
  }
}

namespace {

VideoRecord record_from_json(const json& j) {
  if (!j.is_object()) throw std::runtime_error("annotation entry is not an object");
  static const std::set<std::string> known = {"id",           "fps",          "n_frames",
                                              "modify_visual", "modify_audio", "fake_segments",
                                              "split",        "transcript_ops"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (known.count(key) == 0) throw std::runtime_error("unknown annotation key: " + key);
  }
  VideoRecord rec;
  rec.id = j.at("id").get<std::string>();
  rec.fps = j.at("fps").get<double>();
  rec.n_frames = j.at("n_frames").get<int>();
  rec.modify_visual = j.at("modify_visual").get<bool>();
  rec.modify_audio = j.at("modify_audio").get<bool>();
  for (const auto& seg : j.at("fake_segments")) {
    if (!seg.is_array() || seg.size() != 2) {
      throw std::runtime_error("record '" + rec.id + "': segment must be [start, end]");
    }
    rec.fake_segments.push_back({seg[0].get<double>(), seg[1].get<double>()});
  }
  rec.split = split_from_name(j.at("split").get<std::string>());
  if (j.contains("transcript_ops")) {
    std::vector<TranscriptOp> ops;
    for (const auto& op : j.at("transcript_ops")) {
      if (!op.is_array() || op.size() != 3) {
        throw std::runtime_error("record '" + rec.id + "': transcript op must be [index, original, replacement]");
      }
      ops.push_back({op[0].get<int>(), op[1].get<std::string>(), op[2].get<std::string>()});
    }
    rec.transcript_ops = std::move(ops);
  }
  validate_record(rec);
  return rec;
}

json record_to_json(const VideoRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["fps"] = rec.fps;
  j["n_frames"] = rec.n_frames;
  j["modify_visual"] = rec.modify_visual;
  j["modify_audio"] = rec.modify_audio;
  json segs = json::array();
  for (const auto& s : rec.fake_segments) segs.push_back({s.start_s, s.end_s});
  j["fake_segments"] = segs;
  j["split"] = split_name(rec.split);
  if (rec.transcript_ops.has_value()) {
    json ops = json::array();
    for (const auto& op : *rec.transcript_ops) {
      ops.push_back({op.token_index, op.original, op.replacement});
    }
    j["transcript_ops"] = ops;
  }
  return j;
}

}  // namespace

Dataset parse_annotations_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed annotation JSON: ") + e.what());
  }
  if (!root.is_array()) throw std::runtime_error("annotation file must be a JSON array");
  Dataset ds;
  for (const auto& entry : root) ds.records.push_back(record_from_json(entry));
  return ds;
}

std::string annotations_to_json(const Dataset& ds) {
  json root = json::array();
  for (const auto& rec : ds.records) root.push_back(record_to_json(rec));
  return root.dump(2) + "\n";
}

Dataset load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_annotations_json(buf.str());
}

void save_annotations(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write annotation file: " + path);
  out << annotations_to_json(ds);
  if (!out) throw std::runtime_error("write failed: " + path);
}

FrameLabels frame_labels(const VideoRecord& rec, bool modality_modified, int t_padded) {
  if (t_padded < rec.n_frames) {
    throw std::runtime_error("frame_labels: T=" + std::to_string(t_padded) +
                             " smaller than clip frames " + std::to_string(rec.n_frames));
  }
  FrameLabels labels;
  labels.valid_length = rec.n_frames;
  labels.values.assign(static_cast<std::size_t>(t_padded), 0.0);
  if (!modality_modified) return labels;
  for (const auto& seg : rec.fake_segments) {
    const int lo = std::max(0, segment_start_frame(seg.start_s, rec.fps));
    const int hi = std::min(rec.n_frames, segment_end_frame(seg.end_s, rec.fps));
    for (int k = lo; k < hi; ++k) labels.values[static_cast<std::size_t>(k)] = 1.0;
  }
  return labels;
}

BoundaryMap gt_boundary_map(const VideoRecord& rec, bool modality_modified, int d, int t_padded) {
  if (d < 1) throw std::runtime_error("gt_boundary_map: D must be >= 1");
  if (t_padded < rec.n_frames) {
    throw std::runtime_error("gt_boundary_map: T smaller than clip frames for record " + rec.id);
  }
  BoundaryMap map;
  map.d = d;
  map.t = t_padded;
  map.values.assign(static_cast<std::size_t>(d) * t_padded, 0.0);
  if (!modality_modified || rec.fake_segments.empty()) return map;

  std::vector<std::pair<int, int>> gt;
  gt.reserve(rec.fake_segments.size());
  for (const auto& seg : rec.fake_segments) {
    gt.emplace_back(segment_start_frame(seg.start_s, rec.fps),
                    segment_end_frame(seg.end_s, rec.fps));
  }
  for (int dur = 1; dur < d; ++dur) {
    for (int j = 0; j + dur <= rec.n_frames; ++j) {
      const int cand_lo = j;
      const int cand_hi = j + dur;
      double best = 0.0;
      for (const auto& [lo, hi] : gt) {
        const double inter = std::max(0, std::min(cand_hi, hi) - std::max(cand_lo, lo));
        const double uni = std::max(cand_hi, hi) - std::min(cand_lo, lo);
        if (uni > 0.0) best = std::max(best, inter / uni);
      }
      map.at(dur, j) = best;
    }
  }
  return map;
}

int contrastive_label(const VideoRecord& rec) {
  return (!rec.modify_visual && !rec.modify_audio) ? 1 : 0;
}

}  // namespace glitchloc::data
