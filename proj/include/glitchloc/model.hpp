#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "glitchloc/autodiff.hpp"

// Desk-scale network: per-modality sequence encoders over precomputed
// features, frame classifiers, boundary modules producing position /
// channel / position-channel maps, and element-wise weighted fusion.
namespace glitchloc::nn {

struct ModelConfig {
  int c_f = 32;  // latent channels
  int t = 64;    // padded frames
  int d = 8;     // boundary map duration rows
  int c_v = 8;   // visual input channels
  int f_m = 16;  // mel bins
  int tau_a = 4; // audio temporal reshape factor
  int encoder_blocks = 2;
  int attn_heads = 2;
  int c_h = 32;  // boundary/fusion hidden width

  int audio_rows() const { return tau_a * f_m; }
  bool operator==(const ModelConfig&) const = default;
};

struct MapTriple {
  ad::Array p, c, pc;  // each {D,T}, entries in (0,1)
};

struct ModelOutputs {
  ad::Array z_v, z_a;          // {C_f,T}
  ad::Array frame_v, frame_a;  // {1,T}
  MapTriple maps_v, maps_a, fused;
};

/// (W_v*map_v + W_a*map_a) / (W_v + W_a), element-wise. Rejects a
/// non-positive weight sum.
ad::Array weighted_fuse(const ad::Array& map_v, const ad::Array& map_a, const ad::Array& w_v,
                        const ad::Array& w_a);

class Model {
 public:
  /// Fresh parameters: uniform fan-in init from the given seed.
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::map<std::string, ad::Array>& params() { return params_; }
  const std::map<std::string, ad::Array>& params() const { return params_; }

  /// visual {C_v,T}, audio {tau_a*F_m,T} -> all outputs. Throws on shape
  /// mismatch with the config.
  ModelOutputs forward(const ad::Array& visual, const ad::Array& audio) const;

  /// Fusion weights for one modality's map given both latent summaries;
  /// strictly positive (softplus + 1e-6). alpha is "p", "c" or "pc".
  ad::Array fusion_weights(const std::string& alpha, const ad::Array& map_m,
                           const ad::Array& z_v, const ad::Array& z_a) const;

  void load_arrays(const std::map<std::string, std::pair<ad::Shape, std::vector<double>>>& arrays);

 private:
  ad::Array p(const std::string& name) const;
  ad::Array encoder(const std::string& prefix, const ad::Array& x) const;
  ad::Array attention(const std::string& prefix, const ad::Array& x) const;
  ad::Array mlp(const std::string& prefix, const ad::Array& x) const;
  MapTriple boundary(const std::string& prefix, const ad::Array& z,
                     const ad::Array& frame_scores) const;

  ModelConfig cfg_;
  std::map<std::string, ad::Array> params_;
};

// Checkpoint container: magic "BTFD", version, config echo, then named
// f64 arrays (model parameters plus any extra state such as the
// classification head or optimizer moments).
struct CheckpointData {
  ModelConfig config;
  std::map<std::string, std::pair<ad::Shape, std::vector<double>>> arrays;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);
/// Rejects a checkpoint whose config echo differs from `expect`.
CheckpointData load_checkpoint(const std::string& path, const ModelConfig& expect);

}  // namespace glitchloc::nn
