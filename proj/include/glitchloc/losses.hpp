#pragma once

#include <vector>

#include "glitchloc/annotations.hpp"
#include "glitchloc/autodiff.hpp"

// The four training losses and the overall objective, with padding-aware
// masking. Normalizers use the total valid frame count of the samples
// passed in (the whole dataset when called over it).
namespace glitchloc::loss {

struct LossWeights {
  double lambda_c = 0.1;
  double lambda_f = 2.0;
  double lambda_b = 1.0;
  double lambda_bm = 1.0;
  double delta = 0.99;  // contrastive margin
};

/// One sample's tensors entering the losses. Latents are {C_f,T}; frame
/// scores and labels {1,T}; maps {D,T}.
struct SampleLossInputs {
  ad::Array z_v, z_a;
  ad::Array pred_frame_v, pred_frame_a;
  ad::Array label_frame_v, label_frame_a;
  ad::Array map_fused_p, map_fused_c, map_fused_pc;
  ad::Array map_v_p, map_v_c, map_v_pc;
  ad::Array map_a_p, map_a_c, map_a_pc;
  ad::Array label_map;    // Y^(b), from the record's segments
  ad::Array label_map_v;  // eta-weighted per-modality labels
  ad::Array label_map_a;
  int y_contrastive = 0;
  int valid_length = 0;
};

/// Mask constants used by the losses. Frame mask is {1,T}; map mask is
/// {D,T} with cell (d,k) counted iff k < t and k + d <= t.
ad::Array frame_mask(int t_padded, int valid_length);
ad::Array map_mask(int d, int t_padded, int valid_length);

// Per-sample unnormalized sums. The batch losses below divide by the
// shared normalizers; the trainer combines them with precomputed
// coefficients so each sample can run on its own graph.
ad::Array contrastive_sum(const ad::Array& z_v, const ad::Array& z_a, int y_contrastive,
                          double delta, int valid_length);
ad::Array frame_sum(const ad::Array& pred, const ad::Array& label, int valid_length);
ad::Array map_sse(const ad::Array& pred_map, const ad::Array& label_map, int valid_length);

// Batch losses per the stated formulas.
ad::Array contrastive_loss(const std::vector<SampleLossInputs>& batch, double delta,
                           int c_f);
ad::Array frame_loss(const std::vector<SampleLossInputs>& batch);
ad::Array boundary_loss(const std::vector<SampleLossInputs>& batch, int d);
ad::Array multimodal_boundary_loss(const std::vector<SampleLossInputs>& batch, int d);

struct LossParts {
  double l_c = 0.0;
  double l_f = 0.0;
  double l_b = 0.0;
  double l_bm = 0.0;
};

/// L = lambda_b*L_b + lambda_bm*L_bm + lambda_f*L_f + lambda_c*L_c.
/// Throws naming the offending part if any input is non-finite.
double total_loss(const LossParts& parts, const LossWeights& w);

/// Total valid frames of a batch.
long long sum_valid_frames(const std::vector<SampleLossInputs>& batch);

}  // namespace glitchloc::loss
