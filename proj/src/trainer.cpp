#include "glitchloc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "glitchloc/common.hpp"
#include "json.hpp"

namespace glitchloc::train {

using ad::Array;

std::string train_log_to_jsonl(const TrainLog& log) {
  std::ostringstream os;
  for (const auto& s : log.steps) {
    nlohmann::json j;
    j["epoch"] = s.epoch;
    j["step"] = s.step;
    j["l_c"] = s.parts.l_c;
    j["l_f"] = s.parts.l_f;
    j["l_b"] = s.parts.l_b;
    j["l_bm"] = s.parts.l_bm;
    j["total"] = s.total;
    os << j.dump() << "\n";
  }
  for (const auto& e : log.epochs) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["mean_loss"] = e.mean_loss;
    j["val_ap50"] = e.val_ap50;
    os << j.dump() << "\n";
  }
  return os.str();
}

std::string ClipStore::clip_path(const std::string& record_id) const {
  return (std::filesystem::path(root_) / "clips" / (record_id + ".glch")).string();
}

gen::FeatureClip ClipStore::load(const data::VideoRecord& rec) const {
  return gen::read_clip(clip_path(rec.id));
}

void adam_step(std::map<std::string, ad::Array>& params,
               const std::map<std::string, std::vector<double>>& grads, AdamState& state,
               const TrainConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [name, param] : params) {
    auto& values = param.mutable_values();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != values.size()) m.assign(values.size(), 0.0);
    if (v.size() != values.size()) v.assign(values.size(), 0.0);
    const std::vector<double>* g = nullptr;
    auto git = grads.find(name);
    if (git != grads.end()) {
      if (git->second.size() != values.size()) {
        throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
      }
      g = &git->second;
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = g == nullptr ? 0.0 : (*g)[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

namespace {

// Inputs and targets for one record, held as reusable constant arrays.
struct SampleCache {
  const data::VideoRecord* rec = nullptr;
  Array visual, audio;
  Array label_frame_v, label_frame_a;        // {1,T}
  Array label_map, label_map_v, label_map_a; // {D,T}
  int y_c = 0;
  int valid = 0;
};

Array map_to_array(const data::BoundaryMap& map) {
  return Array::constant({map.d, map.t}, map.values);
}

SampleCache make_cache(const data::VideoRecord& rec, const gen::FeatureClip& clip,
                       const nn::ModelConfig& mc) {
  if (clip.c_v != mc.c_v || clip.f_m != mc.f_m || clip.tau_a != mc.tau_a || clip.t != mc.t) {
    throw std::runtime_error("clip layout does not match model config for record " + rec.id);
  }
  SampleCache s;
  s.rec = &rec;
  s.valid = rec.n_frames;
  s.y_c = data::contrastive_label(rec);
  s.visual = Array::constant({mc.c_v, mc.t}, clip.visual);
  s.audio = Array::constant({mc.audio_rows(), mc.t}, clip.audio);
  const data::FrameLabels fv = data::frame_labels(rec, rec.modify_visual, mc.t);
  const data::FrameLabels fa = data::frame_labels(rec, rec.modify_audio, mc.t);
  s.label_frame_v = Array::constant({1, mc.t}, fv.values);
  s.label_frame_a = Array::constant({1, mc.t}, fa.values);
  s.label_map = map_to_array(data::gt_boundary_map(rec, rec.is_fake(), mc.d, mc.t));
  s.label_map_v = map_to_array(data::gt_boundary_map(rec, rec.modify_visual, mc.d, mc.t));
  s.label_map_a = map_to_array(data::gt_boundary_map(rec, rec.modify_audio, mc.d, mc.t));
  return s;
}

struct SamplePass {
  loss::LossParts sums;  // unnormalized per-sample sums
  ad::GradSink sink;
};

// Forward + per-sample loss graph + backward. Coefficients fold the batch
// normalizers and loss weights so the per-sample roots sum to the batch
// objective.
void run_sample(const nn::Model& model, const SampleCache& s, const loss::LossWeights& w,
                double coeff_b, double coeff_bm, double coeff_f, double coeff_c,
                SamplePass& out) {
  const nn::ModelOutputs o = model.forward(s.visual, s.audio);
  const Array c_sum = loss::contrastive_sum(o.z_v, o.z_a, s.y_c, w.delta, s.valid);
  const Array f_sum = ad::add(loss::frame_sum(o.frame_v, s.label_frame_v, s.valid),
                              loss::frame_sum(o.frame_a, s.label_frame_a, s.valid));
  const Array b_sum = ad::add(ad::add(loss::map_sse(o.fused.p, s.label_map, s.valid),
                                      loss::map_sse(o.fused.c, s.label_map, s.valid)),
                              loss::map_sse(o.fused.pc, s.label_map, s.valid));
  const Array bm_sum =
      ad::add(ad::add(ad::add(loss::map_sse(o.maps_v.p, s.label_map_v, s.valid),
                              loss::map_sse(o.maps_v.c, s.label_map_v, s.valid)),
                      ad::add(loss::map_sse(o.maps_v.pc, s.label_map_v, s.valid),
                              loss::map_sse(o.maps_a.p, s.label_map_a, s.valid))),
              ad::add(loss::map_sse(o.maps_a.c, s.label_map_a, s.valid),
                      loss::map_sse(o.maps_a.pc, s.label_map_a, s.valid)));
  out.sums.l_c = c_sum.scalar();
  out.sums.l_f = f_sum.scalar();
  out.sums.l_b = b_sum.scalar();
  out.sums.l_bm = bm_sum.scalar();

  std::vector<Array> terms;
  if (coeff_b != 0.0) terms.push_back(ad::mul_scalar(b_sum, coeff_b));
  if (coeff_bm != 0.0) terms.push_back(ad::mul_scalar(bm_sum, coeff_bm));
  if (coeff_f != 0.0) terms.push_back(ad::mul_scalar(f_sum, coeff_f));
  if (coeff_c != 0.0) terms.push_back(ad::mul_scalar(c_sum, coeff_c));
  if (terms.empty()) throw std::invalid_argument("train: all loss weights are zero");
  Array root = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) root = ad::add(root, terms[i]);
  ad::backward(root, out.sink);
}

data::BoundaryMap fused_average_map(const nn::ModelOutputs& o) {
  const int d = o.fused.p.dim(0);
  const int t = o.fused.p.dim(1);
  data::BoundaryMap map;
  map.d = d;
  map.t = t;
  map.values.resize(static_cast<std::size_t>(d) * t);
  const auto p = o.fused.p.values();
  const auto c = o.fused.c.values();
  const auto pc = o.fused.pc.values();
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    map.values[i] = (p[i] + c[i] + pc[i]) / 3.0;
  }
  return map;
}

std::vector<post::Proposal> infer_proposals_cached(const nn::Model& model, const SampleCache& s,
                                                   const EvalOptions& opts) {
  const nn::ModelOutputs o = model.forward(s.visual, s.audio);
  if (opts.use_frame_pipeline) {
    const auto fv = o.frame_v.values();
    const auto fa = o.frame_a.values();
    return proposals_from_frame_scores(std::vector<double>(fv.begin(), fv.end()),
                                       std::vector<double>(fa.begin(), fa.end()), s.valid,
                                       s.rec->id, opts.frame_threshold, opts.min_run_frames);
  }
  return post::extract_proposals(fused_average_map(o), s.valid, s.rec->id, opts.extract_top_k,
                                 opts.extract_min_score);
}

double validation_ap50(const nn::Model& model, const std::vector<SampleCache>& val_caches,
                       const std::vector<eval::GroundTruthSegment>& val_gt,
                       const post::NmsConfig& nms, const EvalOptions& opts) {
  std::vector<std::vector<post::Proposal>> per_video(val_caches.size());
  parallel_for(val_caches.size(), [&](std::size_t i) {
    per_video[i] = post::soft_nms(infer_proposals_cached(model, val_caches[i], opts), nms);
  });
  std::vector<eval::Detection> detections;
  for (const auto& props : per_video) {
    for (const auto& p : props) {
      detections.push_back({p.video_id, static_cast<double>(p.start_frame),
                            static_cast<double>(p.end_frame), p.score});
    }
  }
  return eval::average_precision(detections, val_gt, 0.5);
}

constexpr const char* kAdamPrefix = "adam.";
constexpr const char* kHeadPrefix = "clshead.";

}  // namespace

std::vector<eval::GroundTruthSegment> ground_truth_frames(
    const std::vector<const data::VideoRecord*>& records) {
  std::vector<eval::GroundTruthSegment> gt;
  for (const auto* rec : records) {
    for (const auto& seg : rec->fake_segments) {
      gt.push_back({rec->id,
                    static_cast<double>(data::segment_start_frame(seg.start_s, rec->fps)),
                    static_cast<double>(data::segment_end_frame(seg.end_s, rec->fps))});
    }
  }
  return gt;
}

std::vector<post::Proposal> proposals_from_frame_scores(const std::vector<double>& frame_v,
                                                        const std::vector<double>& frame_a,
                                                        int valid_length,
                                                        const std::string& video_id,
                                                        double threshold, int min_run) {
  std::vector<post::Proposal> out;
  int run_start = -1;
  double run_sum = 0.0;
  auto flush = [&](int end) {
    if (run_start < 0) return;
    const int len = end - run_start;
    if (len >= min_run) {
      out.push_back({video_id, run_start, end, run_sum / len});
    }
    run_start = -1;
    run_sum = 0.0;
  };
  for (int k = 0; k < valid_length; ++k) {
    const double score = std::max(frame_v[static_cast<std::size_t>(k)],
                                  frame_a[static_cast<std::size_t>(k)]);
    if (score >= threshold) {
      if (run_start < 0) run_start = k;
      run_sum += score;
    } else {
      flush(k);
    }
  }
  flush(valid_length);
  return out;
}

TrainResult train(const data::Dataset& ds, const ClipStore& clips, const TrainConfig& cfg,
                  const std::optional<nn::CheckpointData>& resume_from) {
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0)) {
    throw std::invalid_argument("train: invalid config");
  }
  const auto train_records = ds.split_records(data::Split::kTrain);
  const auto val_records = ds.split_records(data::Split::kValidation);
  if (train_records.empty() || val_records.empty()) {
    throw std::invalid_argument("train: dataset needs train and validation splits");
  }

  TrainResult result{nn::Model(cfg.model, cfg.seed), {}, {}, {}, post::NmsConfig{}, 0};
  int start_epoch = 0;
  if (resume_from.has_value()) {
    if (!(resume_from->config == cfg.model)) {
      throw std::runtime_error("train: resume checkpoint config mismatch");
    }
    result.model.load_arrays(resume_from->arrays);
    for (auto& [name, param] : result.model.params()) {
      auto mit = resume_from->arrays.find(std::string(kAdamPrefix) + "m." + name);
      auto vit = resume_from->arrays.find(std::string(kAdamPrefix) + "v." + name);
      if (mit != resume_from->arrays.end()) result.adam.m[name] = mit->second.second;
      if (vit != resume_from->arrays.end()) result.adam.v[name] = vit->second.second;
      (void)param;
    }
    auto tit = resume_from->arrays.find(std::string(kAdamPrefix) + "t");
    if (tit != resume_from->arrays.end()) {
      result.adam.t = static_cast<long long>(tit->second.second.at(0));
    }
    auto eit = resume_from->arrays.find("train.epochs_done");
    if (eit != resume_from->arrays.end()) {
      start_epoch = static_cast<int>(eit->second.second.at(0));
    }
  }

  std::vector<SampleCache> train_caches(train_records.size());
  parallel_for(train_records.size(), [&](std::size_t i) {
    train_caches[i] = make_cache(*train_records[i], clips.load(*train_records[i]), cfg.model);
  });
  std::vector<SampleCache> val_caches(val_records.size());
  parallel_for(val_records.size(), [&](std::size_t i) {
    val_caches[i] = make_cache(*val_records[i], clips.load(*val_records[i]), cfg.model);
  });
  const std::vector<eval::GroundTruthSegment> val_gt = ground_truth_frames(val_records);

  const post::NmsConfig val_nms{};  // fixed default during training
  const EvalOptions val_opts{};
  const loss::LossWeights& w = cfg.weights;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_caches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0xE90C000 + static_cast<std::uint64_t>(epoch)));
    rng_shuffle(shuffle_rng, order);

    double loss_sum = 0.0;
    int step = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const SampleCache*> batch;
      for (std::size_t k = pos; k < hi; ++k) batch.push_back(&train_caches[order[k]]);

      long long sum_t = 0;
      for (const auto* s : batch) sum_t += s->valid;
      const double coeff_b = w.lambda_b / (3.0 * cfg.model.d * static_cast<double>(sum_t));
      const double coeff_bm = w.lambda_bm / (2.0 * cfg.model.d * static_cast<double>(sum_t));
      const double coeff_f = w.lambda_f / (2.0 * static_cast<double>(sum_t));
      const double coeff_c = w.lambda_c / (cfg.model.c_f * static_cast<double>(sum_t));

      std::vector<SamplePass> passes(batch.size());
      parallel_for(batch.size(), [&](std::size_t i) {
        run_sample(result.model, *batch[i], w, coeff_b, coeff_bm, coeff_f, coeff_c, passes[i]);
      });

      // Deterministic reduction in batch order.
      std::map<std::string, std::vector<double>> grads;
      for (const auto& [name, param] : result.model.params()) {
        std::vector<double> g(param.size(), 0.0);
        for (auto& pass : passes) {
          const std::vector<double>* pg = pass.sink.find(*param.node());
          if (pg == nullptr) continue;
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*pg)[i];
        }
        grads.emplace(name, std::move(g));
      }

      loss::LossParts parts;
      const double norm_t = static_cast<double>(sum_t);
      for (const auto& pass : passes) {
        parts.l_c += pass.sums.l_c;
        parts.l_f += pass.sums.l_f;
        parts.l_b += pass.sums.l_b;
        parts.l_bm += pass.sums.l_bm;
      }
      parts.l_c /= cfg.model.c_f * norm_t;
      parts.l_f /= 2.0 * norm_t;
      parts.l_b /= 3.0 * cfg.model.d * norm_t;
      parts.l_bm /= 2.0 * cfg.model.d * norm_t;
      double total = 0.0;
      try {
        total = loss::total_loss(parts, w);
      } catch (const std::exception& e) {
        throw std::runtime_error("train: aborted at epoch " + std::to_string(epoch + 1) +
                                 " step " + std::to_string(step + 1) + ": " + e.what());
      }

      adam_step(result.model.params(), grads, result.adam, cfg);
      result.log.steps.push_back({epoch + 1, step + 1, parts, total});
      loss_sum += total;
      ++step;
    }

    EpochLog ep;
    ep.epoch = epoch + 1;
    ep.mean_loss = loss_sum / std::max(1, step);
    ep.val_ap50 = validation_ap50(result.model, val_caches, val_gt, val_nms, val_opts);
    result.log.epochs.push_back(ep);
    result.epochs_done = epoch + 1;
  }

  // Final S-NMS tuning over the validation split.
  std::vector<std::vector<post::Proposal>> raw(val_caches.size());
  parallel_for(val_caches.size(), [&](std::size_t i) {
    raw[i] = infer_proposals_cached(result.model, val_caches[i], val_opts);
  });
  result.tuned_nms = post::tune_nms(raw, val_gt, post::default_nms_grid());

  result.head = train_video_score_head(result.model, ds, clips, mix_seed(cfg.seed, 0xEAD));
  return result;
}

nn::CheckpointData result_to_checkpoint(const TrainResult& result) {
  nn::CheckpointData data;
  data.config = result.model.config();
  for (const auto& [name, param] : result.model.params()) {
    data.arrays.emplace(name, std::make_pair(param.shape(),
                                             std::vector<double>(param.values().begin(),
                                                                 param.values().end())));
    auto mit = result.adam.m.find(name);
    if (mit != result.adam.m.end()) {
      data.arrays.emplace(std::string(kAdamPrefix) + "m." + name,
                          std::make_pair(param.shape(), mit->second));
    }
    auto vit = result.adam.v.find(name);
    if (vit != result.adam.v.end()) {
      data.arrays.emplace(std::string(kAdamPrefix) + "v." + name,
                          std::make_pair(param.shape(), vit->second));
    }
  }
  data.arrays.emplace(std::string(kAdamPrefix) + "t",
                      std::make_pair(ad::Shape{1},
                                     std::vector<double>{static_cast<double>(result.adam.t)}));
  data.arrays.emplace("train.epochs_done",
                      std::make_pair(ad::Shape{1},
                                     std::vector<double>{static_cast<double>(result.epochs_done)}));
  if (result.head.trained()) {
    const int in_dim = 3 * result.head.d;
    data.arrays.emplace(std::string(kHeadPrefix) + "w1",
                        std::make_pair(ad::Shape{result.head.hidden, in_dim}, result.head.w1));
    data.arrays.emplace(std::string(kHeadPrefix) + "b1",
                        std::make_pair(ad::Shape{result.head.hidden}, result.head.b1));
    data.arrays.emplace(std::string(kHeadPrefix) + "w2",
                        std::make_pair(ad::Shape{result.head.hidden}, result.head.w2));
    data.arrays.emplace(std::string(kHeadPrefix) + "b2",
                        std::make_pair(ad::Shape{1}, std::vector<double>{result.head.b2}));
  }
  data.arrays.emplace("nms.sigma",
                      std::make_pair(ad::Shape{1}, std::vector<double>{result.tuned_nms.sigma}));
  data.arrays.emplace("nms.score_floor",
                      std::make_pair(ad::Shape{1},
                                     std::vector<double>{result.tuned_nms.score_floor}));
  data.arrays.emplace("nms.max_output",
                      std::make_pair(ad::Shape{1}, std::vector<double>{
                                                       static_cast<double>(result.tuned_nms.max_output)}));
  return data;
}

post::VideoScoreHead head_from_checkpoint(const nn::CheckpointData& data) {
  post::VideoScoreHead head;
  auto w1 = data.arrays.find(std::string(kHeadPrefix) + "w1");
  if (w1 == data.arrays.end()) return head;  // untrained
  head.hidden = w1->second.first.at(0);
  head.d = w1->second.first.at(1) / 3;
  head.w1 = w1->second.second;
  head.b1 = data.arrays.at(std::string(kHeadPrefix) + "b1").second;
  head.w2 = data.arrays.at(std::string(kHeadPrefix) + "w2").second;
  head.b2 = data.arrays.at(std::string(kHeadPrefix) + "b2").second.at(0);
  return head;
}

eval::EvalReport evaluate(const nn::Model& model, const post::VideoScoreHead* head,
                          const data::Dataset& ds, data::Split split, const ClipStore& clips,
                          const post::NmsConfig& nms, const EvalOptions& opts) {
  const auto records = ds.split_records(split);
  if (records.empty()) throw std::invalid_argument("evaluate: empty split");
  std::vector<SampleCache> caches(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    caches[i] = make_cache(*records[i], clips.load(*records[i]), model.config());
  });

  std::vector<std::vector<post::Proposal>> per_video(caches.size());
  std::vector<double> scores(caches.size(), 0.0);
  parallel_for(caches.size(), [&](std::size_t i) {
    per_video[i] = post::soft_nms(infer_proposals_cached(model, caches[i], opts), nms);
    if (head != nullptr && head->trained()) {
      const nn::ModelOutputs o = model.forward(caches[i].visual, caches[i].audio);
      scores[i] = post::video_score(fused_average_map(o), caches[i].valid, *head);
    }
  });

  std::vector<eval::Detection> detections;
  for (const auto& props : per_video) {
    for (const auto& p : props) {
      detections.push_back({p.video_id, static_cast<double>(p.start_frame),
                            static_cast<double>(p.end_frame), p.score});
    }
  }
  eval::EvalReport report =
      eval::make_report(detections, ground_truth_frames(records), opts.ap_thresholds, opts.ar_ns);
  report.n_videos = static_cast<long long>(records.size());
  if (head != nullptr && head->trained()) {
    std::vector<int> labels;
    labels.reserve(records.size());
    for (const auto* rec : records) labels.push_back(rec->is_fake() ? 1 : 0);
    report.auc = eval::auc(scores, labels);
  }
  return report;
}

eval::EvalReport evaluate_with_maps(
    const std::vector<const data::VideoRecord*>& records,
    const std::function<data::BoundaryMap(const data::VideoRecord&)>& map_source,
    const post::NmsConfig& nms, const EvalOptions& opts) {
  std::vector<eval::Detection> detections;
  for (const auto* rec : records) {
    const data::BoundaryMap map = map_source(*rec);
    const auto props = post::soft_nms(
        post::extract_proposals(map, rec->n_frames, rec->id, opts.extract_top_k,
                                opts.extract_min_score),
        nms);
    for (const auto& p : props) {
      detections.push_back({p.video_id, static_cast<double>(p.start_frame),
                            static_cast<double>(p.end_frame), p.score});
    }
  }
  eval::EvalReport report =
      eval::make_report(detections, ground_truth_frames(records), opts.ap_thresholds, opts.ar_ns);
  report.n_videos = static_cast<long long>(records.size());
  return report;
}

std::vector<std::vector<post::Proposal>> raw_proposals(const nn::Model& model,
                                                       const data::Dataset& ds,
                                                       data::Split split, const ClipStore& clips,
                                                       const EvalOptions& opts) {
  const auto records = ds.split_records(split);
  std::vector<std::vector<post::Proposal>> out(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const SampleCache cache = make_cache(*records[i], clips.load(*records[i]), model.config());
    out[i] = infer_proposals_cached(model, cache, opts);
  });
  return out;
}

post::VideoScoreHead train_video_score_head(const nn::Model& model, const data::Dataset& ds,
                                            const ClipStore& clips, std::uint64_t seed) {
  const auto records = ds.split_records(data::Split::kTrain);
  if (records.empty()) throw std::invalid_argument("train_video_score_head: empty train split");
  const int d = model.config().d;
  const int in_dim = 3 * d;
  const int hidden = 16;
  const int n = static_cast<int>(records.size());

  std::vector<double> features(static_cast<std::size_t>(in_dim) * n);
  std::vector<double> labels(static_cast<std::size_t>(n));
  parallel_for(records.size(), [&](std::size_t i) {
    const SampleCache cache = make_cache(*records[i], clips.load(*records[i]), model.config());
    const nn::ModelOutputs o = model.forward(cache.visual, cache.audio);
    const std::vector<double> f = pool_map_stats(fused_average_map(o), cache.valid);
    for (int r = 0; r < in_dim; ++r) {
      features[static_cast<std::size_t>(r) * n + static_cast<std::size_t>(i)] =
          f[static_cast<std::size_t>(r)];
    }
    labels[i] = records[i]->is_fake() ? 1.0 : 0.0;
  });

  std::mt19937_64 rng(mix_seed(seed, 0x4EAD));
  auto init = [&rng](int rows, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::vector<double> w(static_cast<std::size_t>(rows) * cols);
    for (double& v : w) v = rng_range(rng, -bound, bound);
    return w;
  };
  std::map<std::string, Array> params;
  params.emplace("w1", Array::param({hidden, in_dim}, init(hidden, in_dim)));
  params.emplace("b1", Array::param({hidden, 1}, std::vector<double>(hidden, 0.0)));
  params.emplace("w2", Array::param({1, hidden}, init(1, hidden)));
  params.emplace("b2", Array::param({1, 1}, {0.0}));

  const Array x = Array::constant({in_dim, n}, features);
  const Array y = Array::constant({1, n}, labels);

  TrainConfig adam_cfg;
  adam_cfg.lr = 1e-2;
  AdamState state;
  for (int iter = 0; iter < 400; ++iter) {
    const Array h = ad::relu(ad::add(ad::matmul(params.at("w1"), x),
                                     ad::tile_cols(params.at("b1"), n)));
    const Array logits = ad::add(ad::matmul(params.at("w2"), h),
                                 ad::tile_cols(params.at("b2"), n));
    const Array pred = ad::sigmoid(logits);
    const Array loss_value = ad::mean_all(ad::bce(pred, y));
    ad::GradSink sink;
    ad::backward(loss_value, sink);
    std::map<std::string, std::vector<double>> grads;
    for (const auto& [name, param] : params) {
      const std::vector<double>* g = sink.find(*param.node());
      grads.emplace(name, g == nullptr ? std::vector<double>(param.size(), 0.0) : *g);
    }
    adam_step(params, grads, state, adam_cfg);
  }

  post::VideoScoreHead head;
  head.d = d;
  head.hidden = hidden;
  const auto w1v = params.at("w1").values();
  head.w1.assign(w1v.begin(), w1v.end());
  const auto b1v = params.at("b1").values();
  head.b1.assign(b1v.begin(), b1v.end());
  const auto w2v = params.at("w2").values();
  head.w2.assign(w2v.begin(), w2v.end());
  head.b2 = params.at("b2").at(0);
  return head;
}

std::vector<AblationRow> ablation_rows() {
  auto weights = [](double c, double f, double b, double bm) {
    loss::LossWeights w;
    w.lambda_c = c;
    w.lambda_f = f;
    w.lambda_b = b;
    w.lambda_bm = bm;
    return w;
  };
  return {
      {"f", weights(0.0, 2.0, 0.0, 0.0)},
      {"c+f", weights(0.1, 2.0, 0.0, 0.0)},
      {"b", weights(0.0, 0.0, 1.0, 0.0)},
      {"bm+b", weights(0.0, 0.0, 1.0, 1.0)},
      {"f+bm+b", weights(0.0, 2.0, 1.0, 1.0)},
      {"c+f+bm+b", weights(0.1, 2.0, 1.0, 1.0)},
  };
}

}  // namespace glitchloc::train
