#include "glitchloc/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace glitchloc::loss {

using ad::Array;

Array frame_mask(int t_padded, int valid_length) {
  std::vector<double> m(static_cast<std::size_t>(t_padded), 0.0);
  for (int k = 0; k < valid_length && k < t_padded; ++k) m[static_cast<std::size_t>(k)] = 1.0;
  return Array::constant({1, t_padded}, std::move(m));
}

Array map_mask(int d, int t_padded, int valid_length) {
  std::vector<double> m(static_cast<std::size_t>(d) * t_padded, 0.0);
  for (int dur = 0; dur < d; ++dur) {
    for (int k = 0; k < t_padded; ++k) {
      if (k < valid_length && k + dur <= valid_length) {
        m[static_cast<std::size_t>(dur) * t_padded + k] = 1.0;
      }
    }
  }
  return Array::constant({d, t_padded}, std::move(m));
}

Array contrastive_sum(const Array& z_v, const Array& z_a, int y_contrastive, double delta,
                      int valid_length) {
  if (z_v.shape() != z_a.shape()) {
    throw std::invalid_argument("contrastive_sum: latent shapes differ");
  }
  const Array d = ad::l2norm_channels(ad::sub(z_v, z_a));  // {1,T}
  const Array mask = frame_mask(z_v.dim(1), valid_length);
  if (y_contrastive == 1) {
    return ad::sum_all(ad::mul(mask, ad::mul(d, d)));
  }
  const Array hinge = ad::relu(ad::add_scalar(ad::mul_scalar(d, -1.0), delta));
  return ad::sum_all(ad::mul(mask, ad::mul(hinge, hinge)));
}

Array frame_sum(const Array& pred, const Array& label, int valid_length) {
  const Array mask = frame_mask(pred.dim(1), valid_length);
  return ad::sum_all(ad::mul(mask, ad::bce(pred, label)));
}

Array map_sse(const Array& pred_map, const Array& label_map, int valid_length) {
  if (pred_map.shape() != label_map.shape()) {
    throw std::invalid_argument("map_sse: map shapes differ");
  }
  const Array mask = map_mask(pred_map.dim(0), pred_map.dim(1), valid_length);
  return ad::sum_all(ad::mul(mask, ad::squared_error(pred_map, label_map)));
}

long long sum_valid_frames(const std::vector<SampleLossInputs>& batch) {
  long long s = 0;
  for (const auto& b : batch) s += b.valid_length;
  return s;
}

namespace {

Array sum_terms(std::vector<Array> terms) {
  Array acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return acc;
}

}  // namespace

Array contrastive_loss(const std::vector<SampleLossInputs>& batch, double delta, int c_f) {
  std::vector<Array> terms;
  terms.reserve(batch.size());
  for (const auto& b : batch) {
    terms.push_back(contrastive_sum(b.z_v, b.z_a, b.y_contrastive, delta, b.valid_length));
  }
  const double norm = static_cast<double>(c_f) * static_cast<double>(sum_valid_frames(batch));
  return ad::mul_scalar(sum_terms(std::move(terms)), 1.0 / norm);
}

Array frame_loss(const std::vector<SampleLossInputs>& batch) {
  std::vector<Array> terms;
  terms.reserve(batch.size() * 2);
  for (const auto& b : batch) {
    terms.push_back(frame_sum(b.pred_frame_v, b.label_frame_v, b.valid_length));
    terms.push_back(frame_sum(b.pred_frame_a, b.label_frame_a, b.valid_length));
  }
  const double norm = 2.0 * static_cast<double>(sum_valid_frames(batch));
  return ad::mul_scalar(sum_terms(std::move(terms)), 1.0 / norm);
}

Array boundary_loss(const std::vector<SampleLossInputs>& batch, int d) {
  std::vector<Array> terms;
  terms.reserve(batch.size() * 3);
  for (const auto& b : batch) {
    terms.push_back(map_sse(b.map_fused_p, b.label_map, b.valid_length));
    terms.push_back(map_sse(b.map_fused_c, b.label_map, b.valid_length));
    terms.push_back(map_sse(b.map_fused_pc, b.label_map, b.valid_length));
  }
  const double norm = 3.0 * d * static_cast<double>(sum_valid_frames(batch));
  return ad::mul_scalar(sum_terms(std::move(terms)), 1.0 / norm);
}

Array multimodal_boundary_loss(const std::vector<SampleLossInputs>& batch, int d) {
  std::vector<Array> terms;
  terms.reserve(batch.size() * 6);
  for (const auto& b : batch) {
    terms.push_back(map_sse(b.map_v_p, b.label_map_v, b.valid_length));
    terms.push_back(map_sse(b.map_v_c, b.label_map_v, b.valid_length));
    terms.push_back(map_sse(b.map_v_pc, b.label_map_v, b.valid_length));
    terms.push_back(map_sse(b.map_a_p, b.label_map_a, b.valid_length));
    terms.push_back(map_sse(b.map_a_c, b.label_map_a, b.valid_length));
    terms.push_back(map_sse(b.map_a_pc, b.label_map_a, b.valid_length));
  }
  const double norm = 2.0 * d * static_cast<double>(sum_valid_frames(batch));
  return ad::mul_scalar(sum_terms(std::move(terms)), 1.0 / norm);
}

double total_loss(const LossParts& parts, const LossWeights& w) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("total_loss: non-finite part ") + name);
    }
  };
  check(parts.l_c, "L_c");
  check(parts.l_f, "L_f");
  check(parts.l_b, "L_b");
  check(parts.l_bm, "L_bm");
  return w.lambda_b * parts.l_b + w.lambda_bm * parts.l_bm + w.lambda_f * parts.l_f +
         w.lambda_c * parts.l_c;
}

}  // namespace glitchloc::loss
