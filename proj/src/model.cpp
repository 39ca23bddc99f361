#include "glitchloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "glitchloc/common.hpp"

namespace glitchloc::nn {

using ad::Array;

Array weighted_fuse(const Array& map_v, const Array& map_a, const Array& w_v,
                    const Array& w_a) {
  if (map_v.shape() != map_a.shape() || map_v.shape() != w_v.shape() ||
      map_v.shape() != w_a.shape()) {
    throw std::invalid_argument("weighted_fuse: all four arrays must share a shape");
  }
  const Array wsum = ad::add(w_v, w_a);
  for (double v : wsum.values()) {
    if (!(v > 0.0)) throw std::invalid_argument("weighted_fuse: non-positive weight sum");
  }
  return ad::div(ad::add(ad::mul(w_v, map_v), ad::mul(w_a, map_a)), wsum);
}

namespace {

struct ParamInit {
  std::map<std::string, Array>* params;
  std::mt19937_64 rng;

  void conv(const std::string& name, int out_ch, int in_ch, int k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * k));
    std::vector<double> w(static_cast<std::size_t>(out_ch) * in_ch * k);
    for (double& v : w) v = rng_range(rng, -bound, bound);
    params->emplace(name + ".w", Array::param({out_ch, in_ch, k}, std::move(w)));
    params->emplace(name + ".b",
                    Array::param({out_ch}, std::vector<double>(static_cast<std::size_t>(out_ch), 0.0)));
  }

  void attention(const std::string& prefix, int channels) {
    conv(prefix + ".q", channels, channels, 1);
    conv(prefix + ".k", channels, channels, 1);
    conv(prefix + ".v", channels, channels, 1);
    conv(prefix + ".o", channels, channels, 1);
  }
};

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.c_f < 1 || cfg_.t < 1 || cfg_.d < 1 || cfg_.d > cfg_.t || cfg_.c_v < 1 ||
      cfg_.f_m < 1 || cfg_.tau_a < 1 || cfg_.encoder_blocks < 1 || cfg_.attn_heads < 1 ||
      cfg_.c_h < 1) {
    throw std::invalid_argument("ModelConfig: all dimensions must be positive and D <= T");
  }
  if (cfg_.c_f % cfg_.attn_heads != 0 || cfg_.c_h % cfg_.attn_heads != 0) {
    throw std::invalid_argument("ModelConfig: head count must divide C_f and C_h");
  }
  ParamInit init{&params_, std::mt19937_64(mix_seed(seed, 0xB7FD))};
  for (const auto& [enc, in_ch] :
       std::vector<std::pair<std::string, int>>{{"enc_v", cfg_.c_v}, {"enc_a", cfg_.audio_rows()}}) {
    init.conv(enc + ".in", cfg_.c_f, in_ch, 3);
    for (int b = 0; b < cfg_.encoder_blocks; ++b) {
      const std::string blk = enc + ".b" + std::to_string(b);
      init.conv(blk + ".conv", cfg_.c_f, cfg_.c_f, 3);
      init.attention(blk + ".attn", cfg_.c_f);
      init.conv(blk + ".mlp.fc1", 2 * cfg_.c_f, cfg_.c_f, 1);
      init.conv(blk + ".mlp.fc2", cfg_.c_f, 2 * cfg_.c_f, 1);
    }
  }
  init.conv("cls_v", 1, cfg_.c_f, 1);
  init.conv("cls_a", 1, cfg_.c_f, 1);
  for (const std::string bnd : {"bnd_v", "bnd_a"}) {
    init.conv(bnd + ".stem", cfg_.c_h, cfg_.c_f + 1, 3);
    init.attention(bnd + ".pos", cfg_.c_h);
    init.conv(bnd + ".poshead", cfg_.d, cfg_.c_h, 3);
    init.conv(bnd + ".chanhead", cfg_.d, cfg_.c_h, 3);
    init.conv(bnd + ".pc", cfg_.d, 2 * cfg_.d, 1);
  }
  for (const std::string alpha : {"p", "c", "pc"}) {
    init.conv("fus_" + alpha + ".c1", cfg_.c_h, 3 * cfg_.d, 3);
    init.conv("fus_" + alpha + ".c2", cfg_.d, cfg_.c_h, 1);
  }
}

Array Model::p(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::logic_error("missing model parameter: " + name);
  return it->second;
}

Array Model::attention(const std::string& prefix, const Array& x) const {
  const int channels = x.dim(0);
  const int per_head = channels / cfg_.attn_heads;
  const Array q = ad::conv1d(x, p(prefix + ".q.w"), p(prefix + ".q.b"));
  const Array k = ad::conv1d(x, p(prefix + ".k.w"), p(prefix + ".k.b"));
  const Array v = ad::conv1d(x, p(prefix + ".v.w"), p(prefix + ".v.b"));
  std::vector<Array> heads;
  heads.reserve(static_cast<std::size_t>(cfg_.attn_heads));
  const double scale = 1.0 / std::sqrt(static_cast<double>(per_head));
  for (int h = 0; h < cfg_.attn_heads; ++h) {
    const int r0 = h * per_head;
    const int r1 = r0 + per_head;
    const Array qh = ad::slice_rows(q, r0, r1);
    const Array kh = ad::slice_rows(k, r0, r1);
    const Array vh = ad::slice_rows(v, r0, r1);
    const Array scores = ad::mul_scalar(ad::matmul(ad::transpose(qh), kh), scale);  // {T,T}
    const Array attn = ad::softmax(scores, 1);
    heads.push_back(ad::matmul(vh, ad::transpose(attn)));
  }
  const Array merged = ad::concat(heads, 0);
  return ad::conv1d(merged, p(prefix + ".o.w"), p(prefix + ".o.b"));
}

Array Model::mlp(const std::string& prefix, const Array& x) const {
  const Array h = ad::relu(ad::conv1d(x, p(prefix + ".fc1.w"), p(prefix + ".fc1.b")));
  return ad::conv1d(h, p(prefix + ".fc2.w"), p(prefix + ".fc2.b"));
}

Array Model::encoder(const std::string& prefix, const Array& x) const {
  Array h = ad::conv1d(x, p(prefix + ".in.w"), p(prefix + ".in.b"));
  for (int b = 0; b < cfg_.encoder_blocks; ++b) {
    const std::string blk = prefix + ".b" + std::to_string(b);
    h = ad::add(h, ad::conv1d(h, p(blk + ".conv.w"), p(blk + ".conv.b")));
    h = ad::layer_norm_channels(h);
    h = ad::add(h, attention(blk + ".attn", h));
    h = ad::add(h, mlp(blk + ".mlp", h));
  }
  return h;
}

namespace {

// Parameter-free channel affinity: softmax(x x^T / sqrt(T)) x.
Array channel_attention(const Array& x) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.dim(1)));
  const Array affinity = ad::softmax(ad::mul_scalar(ad::matmul(x, ad::transpose(x)), scale), 1);
  return ad::matmul(affinity, x);
}

}  // namespace

MapTriple Model::boundary(const std::string& prefix, const Array& z,
                          const Array& frame_scores) const {
  const Array input = ad::concat({z, frame_scores}, 0);  // {C_f+1, T}
  const Array h = ad::relu(ad::conv1d(input, p(prefix + ".stem.w"), p(prefix + ".stem.b")));
  const Array hp = ad::add(h, attention(prefix + ".pos", h));
  const Array map_p = ad::sigmoid(ad::conv1d(hp, p(prefix + ".poshead.w"), p(prefix + ".poshead.b")));
  const Array hc = ad::add(h, channel_attention(h));
  const Array map_c =
      ad::sigmoid(ad::conv1d(hc, p(prefix + ".chanhead.w"), p(prefix + ".chanhead.b")));
  const Array stacked = ad::concat({map_p, map_c}, 0);  // {2D, T}
  const Array map_pc = ad::sigmoid(ad::conv1d(stacked, p(prefix + ".pc.w"), p(prefix + ".pc.b")));
  return {map_p, map_c, map_pc};
}

Array Model::fusion_weights(const std::string& alpha, const Array& map_m, const Array& z_v,
                            const Array& z_a) const {
  const Array sum_v = ad::tile_rows(ad::mean_rows(z_v), cfg_.d);
  const Array sum_a = ad::tile_rows(ad::mean_rows(z_a), cfg_.d);
  const Array input = ad::concat({map_m, sum_v, sum_a}, 0);  // {3D, T}
  const std::string prefix = "fus_" + alpha;
  const Array h = ad::relu(ad::conv1d(input, p(prefix + ".c1.w"), p(prefix + ".c1.b")));
  const Array w = ad::softplus(ad::conv1d(h, p(prefix + ".c2.w"), p(prefix + ".c2.b")));
  return ad::add_scalar(w, 1e-6);
}

ModelOutputs Model::forward(const Array& visual, const Array& audio) const {
  if (visual.shape() != ad::Shape{cfg_.c_v, cfg_.t}) {
    throw std::invalid_argument("forward: visual input is " + ad::shape_str(visual.shape()) +
                                ", expected (" + std::to_string(cfg_.c_v) + "x" +
                                std::to_string(cfg_.t) + ")");
  }
  if (audio.shape() != ad::Shape{cfg_.audio_rows(), cfg_.t}) {
    throw std::invalid_argument("forward: audio input is " + ad::shape_str(audio.shape()) +
                                ", expected (" + std::to_string(cfg_.audio_rows()) + "x" +
                                std::to_string(cfg_.t) + ")");
  }
  ModelOutputs out;
  out.z_v = encoder("enc_v", visual);
  out.z_a = encoder("enc_a", audio);
  out.frame_v = ad::sigmoid(ad::conv1d(out.z_v, p("cls_v.w"), p("cls_v.b")));
  out.frame_a = ad::sigmoid(ad::conv1d(out.z_a, p("cls_a.w"), p("cls_a.b")));
  out.maps_v = boundary("bnd_v", out.z_v, out.frame_v);
  out.maps_a = boundary("bnd_a", out.z_a, out.frame_a);
  for (const std::string alpha : {"p", "c", "pc"}) {
    const Array& mv = alpha == "p" ? out.maps_v.p : alpha == "c" ? out.maps_v.c : out.maps_v.pc;
    const Array& ma = alpha == "p" ? out.maps_a.p : alpha == "c" ? out.maps_a.c : out.maps_a.pc;
    const Array wv = fusion_weights(alpha, mv, out.z_v, out.z_a);
    const Array wa = fusion_weights(alpha, ma, out.z_v, out.z_a);
    const Array fused = weighted_fuse(mv, ma, wv, wa);
    if (alpha == "p") {
      out.fused.p = fused;
    } else if (alpha == "c") {
      out.fused.c = fused;
    } else {
      out.fused.pc = fused;
    }
  }
  return out;
}

void Model::load_arrays(
    const std::map<std::string, std::pair<ad::Shape, std::vector<double>>>& arrays) {
  for (auto& [name, param] : params_) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw std::runtime_error("checkpoint missing parameter: " + name);
    if (it->second.first != param.shape()) {
      throw std::runtime_error("checkpoint parameter shape mismatch: " + name);
    }
    param.mutable_values() = it->second.second;
  }
}

// ---- checkpoint container -----------------------------------------------------

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint32_t> config_words(const ModelConfig& c) {
  return {static_cast<std::uint32_t>(c.c_f),   static_cast<std::uint32_t>(c.t),
          static_cast<std::uint32_t>(c.d),     static_cast<std::uint32_t>(c.c_v),
          static_cast<std::uint32_t>(c.f_m),   static_cast<std::uint32_t>(c.tau_a),
          static_cast<std::uint32_t>(c.encoder_blocks),
          static_cast<std::uint32_t>(c.attn_heads), static_cast<std::uint32_t>(c.c_h)};
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  std::vector<std::uint8_t> bytes;
  bytes.push_back('B');
  bytes.push_back('T');
  bytes.push_back('F');
  bytes.push_back('D');
  put_u32(bytes, kCheckpointVersion);
  for (std::uint32_t w : config_words(data.config)) put_u32(bytes, w);
  put_u32(bytes, static_cast<std::uint32_t>(data.arrays.size()));
  for (const auto& [name, entry] : data.arrays) {
    put_u32(bytes, static_cast<std::uint32_t>(name.size()));
    bytes.insert(bytes.end(), name.begin(), name.end());
    put_u32(bytes, static_cast<std::uint32_t>(entry.first.size()));
    for (int dim : entry.first) put_u32(bytes, static_cast<std::uint32_t>(dim));
    for (double v : entry.second) put_f64(bytes, v);
  }
  write_file_bytes(path, bytes);
}

CheckpointData load_checkpoint(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  std::size_t off = 0;
  auto need = [&](std::size_t n) {
    if (off + n > bytes.size()) throw std::runtime_error("truncated checkpoint: " + path);
  };
  need(8);
  if (bytes[0] != 'B' || bytes[1] != 'T' || bytes[2] != 'F' || bytes[3] != 'D') {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  off = 4;
  const std::uint32_t version = get_u32(&bytes[off]);
  off += 4;
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version: " + path);
  }
  CheckpointData data;
  need(9 * 4);
  std::uint32_t cw[9];
  for (auto& w : cw) {
    w = get_u32(&bytes[off]);
    off += 4;
  }
  data.config = ModelConfig{static_cast<int>(cw[0]), static_cast<int>(cw[1]),
                            static_cast<int>(cw[2]), static_cast<int>(cw[3]),
                            static_cast<int>(cw[4]), static_cast<int>(cw[5]),
                            static_cast<int>(cw[6]), static_cast<int>(cw[7]),
                            static_cast<int>(cw[8])};
  need(4);
  const std::uint32_t count = get_u32(&bytes[off]);
  off += 4;
  for (std::uint32_t i = 0; i < count; ++i) {
    need(4);
    const std::uint32_t name_len = get_u32(&bytes[off]);
    off += 4;
    need(name_len);
    std::string name(reinterpret_cast<const char*>(&bytes[off]), name_len);
    off += name_len;
    need(4);
    const std::uint32_t ndim = get_u32(&bytes[off]);
    off += 4;
    ad::Shape shape;
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      need(4);
      const std::uint32_t dim = get_u32(&bytes[off]);
      off += 4;
      shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    need(8 * n);
    std::vector<double> values(n);
    for (std::size_t k = 0; k < n; ++k, off += 8) values[k] = get_f64(&bytes[off]);
    data.arrays.emplace(std::move(name), std::make_pair(std::move(shape), std::move(values)));
  }
  if (off != bytes.size()) throw std::runtime_error("trailing bytes in checkpoint: " + path);
  return data;
}

CheckpointData load_checkpoint(const std::string& path, const ModelConfig& expect) {
  CheckpointData data = load_checkpoint(path);
  if (!(data.config == expect)) {
    throw std::runtime_error("checkpoint config mismatch: " + path);
  }
  return data;
}

}  // namespace glitchloc::nn
