#pragma once

#include <optional>
#include <string>
#include <tuple>
#include <vector>

// Clip annotations and the ground-truth structures derived from them:
// per-frame labels, dense boundary maps, and the contrastive label.
namespace glitchloc::data {

/// One manipulated time span, in seconds.
struct SegmentAnnotation {
  double start_s = 0.0;
  double end_s = 0.0;
};

struct TranscriptOp {
  int token_index = 0;
  std::string original;
  std::string replacement;
};

enum class Split { kTrain, kValidation, kTest };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct VideoRecord {
  std::string id;
  double fps = 0.0;
  int n_frames = 0;
  bool modify_visual = false;
  bool modify_audio = false;
  std::vector<SegmentAnnotation> fake_segments;  // sorted, non-overlapping
  Split split = Split::kTrain;
  std::optional<std::vector<TranscriptOp>> transcript_ops;

  bool is_fake() const { return modify_visual || modify_audio; }
  double duration_s() const { return n_frames / fps; }
};

struct Dataset {
  std::vector<VideoRecord> records;

  std::vector<const VideoRecord*> split_records(Split s) const;
  /// Sum of n_frames over all records.
  long long total_frames() const;
};

struct FrameLabels {
  std::vector<double> values;  // size T, entries in {0,1}; padding is 0
  int valid_length = 0;
};

/// D x T grid of segment confidences. Cell (d, j) scores the candidate
/// segment of frames [j, j+d); row 0 is the degenerate zero-duration row.
struct BoundaryMap {
  int d = 0;
  int t = 0;
  std::vector<double> values;  // row-major d*t

  double at(int dur, int start) const {
    return values[static_cast<std::size_t>(dur) * t + start];
  }
  double& at(int dur, int start) { return values[static_cast<std::size_t>(dur) * t + start]; }
};

// Second -> frame conversion: a segment [s, e) covers frames
// floor(s*fps) <= k < ceil(e*fps).
int segment_start_frame(double start_s, double fps);
int segment_end_frame(double end_s, double fps);

/// Throws std::runtime_error naming the record on any invariant violation.
void validate_record(const VideoRecord& rec);

Dataset load_annotations(const std::string& path);
void save_annotations(const Dataset& ds, const std::string& path);
Dataset parse_annotations_json(const std::string& text);
std::string annotations_to_json(const Dataset& ds);

/// Per-frame labels for one modality (eta = modify flag of that modality).
/// T >= rec.n_frames; if the modality is unmodified the labels are all zero.
FrameLabels frame_labels(const VideoRecord& rec, bool modality_modified, int t_padded);

/// Ground-truth boundary map for one modality: entry (d, j) is the max
/// temporal IoU between candidate [j, j+d) and any fake segment (frame
/// units); zero map when the modality is unmodified; cells whose segment
/// exceeds the clip (j + d > n_frames) are zero.
BoundaryMap gt_boundary_map(const VideoRecord& rec, bool modality_modified, int d, int t_padded);

/// 1 iff the clip is fully real (both modalities untouched).
int contrastive_label(const VideoRecord& rec);

}  // namespace glitchloc::data
