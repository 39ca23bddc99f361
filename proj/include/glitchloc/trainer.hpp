#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "glitchloc/annotations.hpp"
#include "glitchloc/losses.hpp"
#include "glitchloc/metrics.hpp"
#include "glitchloc/model.hpp"
#include "glitchloc/postproc.hpp"
#include "glitchloc/synthgen.hpp"

// End-to-end training: label generation, forward, the four losses, Adam
// updates, checkpointing, and the evaluation pipeline.
namespace glitchloc::train {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  loss::LossWeights weights;
  nn::ModelConfig model;
  std::uint64_t seed = 1;
  int checkpoint_interval = 0;  // epochs between mid-run snapshots; 0 = none
};

struct StepLog {
  int epoch = 0;
  int step = 0;  // within epoch
  loss::LossParts parts;
  double total = 0.0;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_ap50 = 0.0;
};

struct TrainLog {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
};

std::string train_log_to_jsonl(const TrainLog& log);

/// Reads clip files laid out by the generator (clips/<id>.glch).
class ClipStore {
 public:
  explicit ClipStore(std::string root_dir) : root_(std::move(root_dir)) {}
  gen::FeatureClip load(const data::VideoRecord& rec) const;
  std::string clip_path(const std::string& record_id) const;

 private:
  std::string root_;
};

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  long long t = 0;
};

/// Standard Adam with bias correction. Gradients missing from `grads`
/// are treated as zero.
void adam_step(std::map<std::string, ad::Array>& params,
               const std::map<std::string, std::vector<double>>& grads, AdamState& state,
               const TrainConfig& cfg);

struct EvalOptions {
  int extract_top_k = 100;
  double extract_min_score = 1e-4;
  std::vector<double> ap_thresholds = {0.5, 0.75, 0.95};
  std::vector<int> ar_ns = {100, 50, 20, 10};
  /// Aggregate frame scores into segments instead of decoding boundary
  /// maps (loss ablations without boundary terms).
  bool use_frame_pipeline = false;
  double frame_threshold = 0.5;
  int min_run_frames = 2;
};

struct TrainResult {
  nn::Model model;
  post::VideoScoreHead head;
  AdamState adam;
  TrainLog log;
  post::NmsConfig tuned_nms;
  int epochs_done = 0;
};

/// Runs the training procedure over the train split, validating AP@0.5
/// each epoch with a fixed default NMS config; tunes S-NMS and fits the
/// classification head at the end. Deterministic given (seed, config,
/// dataset). Optionally resumes from a checkpoint produced by
/// result_to_checkpoint.
TrainResult train(const data::Dataset& ds, const ClipStore& clips, const TrainConfig& cfg,
                  const std::optional<nn::CheckpointData>& resume_from = std::nullopt);

nn::CheckpointData result_to_checkpoint(const TrainResult& result);
post::VideoScoreHead head_from_checkpoint(const nn::CheckpointData& data);

/// Ground truth in frame units (same floor/ceil convention as the label
/// maps), restricted to the given records.
std::vector<eval::GroundTruthSegment> ground_truth_frames(
    const std::vector<const data::VideoRecord*>& records);

/// Full inference pipeline over one split: forward, map averaging,
/// proposal extraction, Soft-NMS, metrics; adds AUC when a trained head is
/// given.
eval::EvalReport evaluate(const nn::Model& model, const post::VideoScoreHead* head,
                          const data::Dataset& ds, data::Split split, const ClipStore& clips,
                          const post::NmsConfig& nms, const EvalOptions& opts);

/// Same pipeline with an arbitrary boundary-map source in place of the
/// model (e.g. ground-truth maps as a perfect-detector check).
eval::EvalReport evaluate_with_maps(
    const std::vector<const data::VideoRecord*>& records,
    const std::function<data::BoundaryMap(const data::VideoRecord&)>& map_source,
    const post::NmsConfig& nms, const EvalOptions& opts);

/// Per-video pre-NMS proposals for one split (inputs to tune_nms).
std::vector<std::vector<post::Proposal>> raw_proposals(const nn::Model& model,
                                                       const data::Dataset& ds,
                                                       data::Split split,
                                                       const ClipStore& clips,
                                                       const EvalOptions& opts);

/// Thresholded run-length grouping of per-frame scores (max over the two
/// modalities); runs shorter than min_run frames are dropped and a run's
/// score is its mean frame score.
std::vector<post::Proposal> proposals_from_frame_scores(const std::vector<double>& frame_v,
                                                        const std::vector<double>& frame_a,
                                                        int valid_length,
                                                        const std::string& video_id,
                                                        double threshold, int min_run);

/// Fits the two-layer classification head on the train split's averaged
/// fused maps (labels: clip has any manipulated modality).
post::VideoScoreHead train_video_score_head(const nn::Model& model, const data::Dataset& ds,
                                            const ClipStore& clips, std::uint64_t seed);

struct AblationRow {
  std::string name;
  loss::LossWeights weights;
};

/// The loss-combination rows of the ablation harness.
std::vector<AblationRow> ablation_rows();

}  // namespace glitchloc::train
