#include "glitchloc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "glitchloc/common.hpp"
#include "json.hpp"

namespace glitchloc::gen {

using nlohmann::json;

double SentimentLexicon::word_valence(const std::string& w) const {
  auto it = valence.find(w);
  return it == valence.end() ? 0.0 : it->second;
}

SentimentLexicon SentimentLexicon::builtin() {
  SentimentLexicon lex;
  const std::vector<std::tuple<std::string, double, std::string, double>> pairs = {
      {"safe", 2, "dangerous", -2}, {"good", 2, "bad", -2},       {"happy", 3, "sad", -3},
      {"love", 3, "hate", -3},      {"strong", 1, "weak", -1},    {"clean", 2, "dirty", -2},
      {"calm", 2, "angry", -2},     {"win", 2, "lose", -2},       {"true", 1, "false", -1},
      {"rise", 1, "fall", -1},      {"friend", 2, "enemy", -2},   {"peace", 3, "war", -3},
      {"bright", 1, "dark", -1},    {"cheap", 1, "expensive", -1}, {"healthy", 2, "sick", -2},
      {"succeed", 2, "fail", -2},   {"kind", 2, "cruel", -2},     {"brave", 2, "afraid", -2},
  };
  for (const auto& [w, vw, a, va] : pairs) {
    lex.valence[w] = vw;
    lex.valence[a] = va;
    lex.antonyms[w].insert(a);
    lex.antonyms[a].insert(w);
  }
  lex.valence["awful"] = -3;
  lex.antonyms["good"].insert("awful");
  lex.antonyms["awful"].insert("good");
  return lex;
}

SentimentLexicon SentimentLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon file: " + path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed lexicon JSON: ") + e.what());
  }
  SentimentLexicon lex;
  for (const auto& [word, v] : root.at("valence").items()) {
    lex.valence[word] = v.get<double>();
  }
  for (const auto& [word, ants] : root.at("antonyms").items()) {
    for (const auto& a : ants) {
      const std::string antonym = a.get<std::string>();
      lex.antonyms[word].insert(antonym);
      lex.valence.try_emplace(antonym, 0.0);
    }
    lex.valence.try_emplace(word, 0.0);
  }
  return lex;
}

void SentimentLexicon::save(const std::string& path) const {
  json root;
  json val = json::object();
  for (const auto& [w, v] : valence) val[w] = v;
  json ants = json::object();
  for (const auto& [w, set] : antonyms) {
    json arr = json::array();
    for (const auto& a : set) arr.push_back(a);
    ants[w] = arr;
  }
  root["valence"] = val;
  root["antonyms"] = ants;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write lexicon file: " + path);
  out << root.dump(2) << "\n";
}

double ReplacementPlan::abs_total_delta() const {
  double s = 0.0;
  for (const auto& r : replacements) s += r.delta_s;
  return std::abs(s);
}

double sentiment_score(const Transcript& tr, const SentimentLexicon& lex) {
  double s = 0.0;
  for (const auto& tok : tr.tokens) s += lex.word_valence(tok.word);
  return s;
}

namespace {

// All (token, antonym) substitutions with nonzero sentiment change, in
// (token index, antonym) order.
std::vector<Replacement> candidate_replacements(const Transcript& tr,
                                                const SentimentLexicon& lex) {
  std::vector<Replacement> cands;
  for (int m = 0; m < static_cast<int>(tr.tokens.size()); ++m) {
    const std::string& word = tr.tokens[static_cast<std::size_t>(m)].word;
    auto it = lex.antonyms.find(word);
    if (it == lex.antonyms.end()) continue;
    for (const auto& antonym : it->second) {
      const double delta = lex.word_valence(antonym) - lex.word_valence(word);
      if (delta == 0.0) continue;
      cands.push_back({m, word, antonym, delta});
    }
  }
  return cands;
}

// Orders plans by |sum delta| desc, then size asc, then token indices,
// then antonyms. Assumes both plans list replacements in token order.
bool plan_better(const ReplacementPlan& a, const ReplacementPlan& b) {
  const double da = a.abs_total_delta();
  const double db = b.abs_total_delta();
  if (da != db) return da > db;
  if (a.replacements.size() != b.replacements.size()) {
    return a.replacements.size() < b.replacements.size();
  }
  for (std::size_t i = 0; i < a.replacements.size(); ++i) {
    if (a.replacements[i].token_index != b.replacements[i].token_index) {
      return a.replacements[i].token_index < b.replacements[i].token_index;
    }
  }
  for (std::size_t i = 0; i < a.replacements.size(); ++i) {
    if (a.replacements[i].replacement != b.replacements[i].replacement) {
      return a.replacements[i].replacement < b.replacements[i].replacement;
    }
  }
  return false;
}

void enumerate_plans(const std::vector<Replacement>& cands, std::size_t from, int budget,
                     ReplacementPlan& current, ReplacementPlan& best) {
  if (!current.replacements.empty() && plan_better(current, best)) best = current;
  if (budget == 0) return;
  for (std::size_t i = from; i < cands.size(); ++i) {
    if (!current.replacements.empty() &&
        current.replacements.back().token_index == cands[i].token_index) {
      continue;  // one substitution per token
    }
    current.replacements.push_back(cands[i]);
    enumerate_plans(cands, i + 1, budget - 1, current, best);
    current.replacements.pop_back();
  }
}

}  // namespace

std::optional<Replacement> best_single_replacement(const Transcript& tr,
                                                   const SentimentLexicon& lex) {
  ReplacementPlan plan = select_replacements(tr, lex, 1);
  if (plan.replacements.empty()) return std::nullopt;
  return plan.replacements.front();
}

ReplacementPlan select_replacements(const Transcript& tr, const SentimentLexicon& lex,
                                    int max_replacements) {
  if (max_replacements < 1) {
    throw std::invalid_argument("select_replacements: budget must be >= 1");
  }
  const std::vector<Replacement> cands = candidate_replacements(tr, lex);
  ReplacementPlan best;
  ReplacementPlan current;
  enumerate_plans(cands, 0, max_replacements, current, best);
  return best;
}

int replacement_budget(double duration_s) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("replacement_budget: duration must be > 0");
  return duration_s < 10.0 ? 1 : 2;
}

// ---- clip synthesis ---------------------------------------------------------

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// Smooth base process: a few low-frequency sinusoids per channel.
void fill_base_signal(std::vector<double>& out, int rows, int t_total, int n_valid,
                      std::uint64_t seed) {
  for (int c = 0; c < rows; ++c) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
    double amp[4], freq[4], phase[4];
    for (int k = 0; k < 4; ++k) {
      amp[k] = rng_range(rng, 0.25, 1.0);
      freq[k] = rng_range(rng, 0.5, 5.0);
      phase[k] = rng_range(rng, 0.0, kTau);
    }
    double* row = &out[static_cast<std::size_t>(c) * t_total];
    for (int t = 0; t < n_valid; ++t) {
      double v = 0.0;
      for (int k = 0; k < 4; ++k) {
        v += amp[k] * std::sin(kTau * freq[k] * (t + 0.5) / n_valid + phase[k]);
      }
      row[t] = v;
    }
  }
}

double rms_over(const std::vector<double>& values, int rows, int t_total, int lo, int hi) {
  double s = 0.0;
  long long count = 0;
  for (int c = 0; c < rows; ++c) {
    const double* row = &values[static_cast<std::size_t>(c) * t_total];
    for (int t = lo; t < hi; ++t) {
      s += row[t] * row[t];
      ++count;
    }
  }
  return count == 0 ? 0.0 : std::sqrt(s / static_cast<double>(count));
}

// Adds a band-limited pattern over [fs, fe), scaled so its RMS matches the
// base signal's RMS over the neighboring real frames times `amplitude`.
void perturb_segment(std::vector<double>& values, int rows, int t_total, int n_valid, int fs,
                     int fe, double amplitude, std::uint64_t seed) {
  const int len = fe - fs;
  const int nb_lo = std::max(0, fs - len);
  const int nb_hi = std::min(n_valid, fe + len);
  // Neighbor window excludes the segment itself.
  double nb_sum = 0.0;
  long long nb_count = 0;
  for (int c = 0; c < rows; ++c) {
    const double* row = &values[static_cast<std::size_t>(c) * t_total];
    for (int t = nb_lo; t < fs; ++t) {
      nb_sum += row[t] * row[t];
      ++nb_count;
    }
    for (int t = fe; t < nb_hi; ++t) {
      nb_sum += row[t] * row[t];
      ++nb_count;
    }
  }
  const double neighbor_rms =
      nb_count == 0 ? rms_over(values, rows, t_total, 0, n_valid)
                    : std::sqrt(nb_sum / static_cast<double>(nb_count));

  std::vector<double> pattern(static_cast<std::size_t>(rows) * len, 0.0);
  for (int c = 0; c < rows; ++c) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
    double amp[3], freq[3], phase[3];
    for (int k = 0; k < 3; ++k) {
      amp[k] = rng_range(rng, 0.5, 1.0);
      freq[k] = rng_range(rng, 0.25, 0.45);  // cycles per frame, near Nyquist
      phase[k] = rng_range(rng, 0.0, kTau);
    }
    for (int t = 0; t < len; ++t) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(kTau * freq[k] * (fs + t) + phase[k]);
      pattern[static_cast<std::size_t>(c) * len + t] = v;
    }
  }
  double p_sum = 0.0;
  for (double v : pattern) p_sum += v * v;
  const double pattern_rms = std::sqrt(p_sum / static_cast<double>(pattern.size()));
  if (pattern_rms <= 0.0) return;
  const double scale = amplitude * neighbor_rms / pattern_rms;
  for (int c = 0; c < rows; ++c) {
    double* row = &values[static_cast<std::size_t>(c) * t_total];
    for (int t = 0; t < len; ++t) row[fs + t] += scale * pattern[static_cast<std::size_t>(c) * len + t];
  }
}

}  // namespace

FeatureClip synthesize_clip(const data::VideoRecord& rec, const GeneratorConfig& cfg) {
  if (rec.n_frames > cfg.t_padded) {
    throw std::runtime_error("synthesize_clip: record " + rec.id + " has " +
                             std::to_string(rec.n_frames) + " frames, padded T is " +
                             std::to_string(cfg.t_padded));
  }
  FeatureClip clip;
  clip.c_v = cfg.c_v;
  clip.f_m = cfg.f_m;
  clip.tau_a = cfg.tau_a;
  clip.t = cfg.t_padded;
  clip.visual.assign(static_cast<std::size_t>(cfg.c_v) * cfg.t_padded, 0.0);
  clip.audio.assign(static_cast<std::size_t>(cfg.tau_a * cfg.f_m) * cfg.t_padded, 0.0);

  const std::uint64_t identity = mix_seed(cfg.seed, hash_str(rec.id));
  fill_base_signal(clip.visual, cfg.c_v, cfg.t_padded, rec.n_frames, mix_seed(identity, 1));
  fill_base_signal(clip.audio, clip.audio_rows(), cfg.t_padded, rec.n_frames,
                   mix_seed(identity, 2));

  int seg_index = 0;
  for (const auto& seg : rec.fake_segments) {
    const int fs = data::segment_start_frame(seg.start_s, rec.fps);
    const int fe = data::segment_end_frame(seg.end_s, rec.fps);
    if (fs < 0 || fe > rec.n_frames || fs >= fe) {
      throw std::runtime_error("synthesize_clip: segment outside clip in record " + rec.id);
    }
    if (rec.modify_visual) {
      perturb_segment(clip.visual, cfg.c_v, cfg.t_padded, rec.n_frames, fs, fe,
                      cfg.perturb_base_amplitude,
                      mix_seed(identity, 100 + static_cast<std::uint64_t>(seg_index) * 2));
    }
    if (rec.modify_audio) {
      perturb_segment(clip.audio, clip.audio_rows(), cfg.t_padded, rec.n_frames, fs, fe,
                      cfg.perturb_base_amplitude,
                      mix_seed(identity, 101 + static_cast<std::uint64_t>(seg_index) * 2));
    }
    ++seg_index;
  }
  return clip;
}

// ---- dataset generation -----------------------------------------------------

namespace {

enum class Category { kReal = 0, kVisualOnly = 1, kAudioOnly = 2, kBoth = 3 };

// Segment lengths in frames at fps 4: 90% stay under 1 s, everything under
// 1.6 s, matching the target length profile.
int draw_segment_frames(std::mt19937_64& rng) {
  const double u = rng_unit(rng);
  if (u < 0.32) return 1;
  if (u < 0.66) return 2;
  if (u < 0.90) return 3;
  if (u < 0.95) return 4;
  if (u < 0.98) return 5;
  return 6;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {
      "the",  "a",     "and",  "of",   "to",    "we",   "they",  "it",   "is",
      "are",  "was",   "on",   "in",   "at",    "very", "really", "just", "people",
      "time", "world", "thing", "way", "today", "said", "about"};
  return words;
}

std::vector<std::string> sentiment_pool(const SentimentLexicon& lex) {
  std::vector<std::string> pool;
  for (const auto& [word, ants] : lex.antonyms) {
    if (!ants.empty()) pool.push_back(word);
  }
  return pool;
}

struct BuiltTranscript {
  Transcript transcript;
  std::vector<int> sentiment_token_indices;
};

// Tokens tile the clip from t=0 on the frame grid; a few sentiment words
// (the manipulation candidates) are separated by filler runs.
BuiltTranscript build_transcript(std::mt19937_64& rng, int n_frames, double fps,
                                 const std::vector<std::string>& sentiments) {
  BuiltTranscript out;
  const int n_sent = n_frames < 44 ? 2 : 3;
  int cursor = 0;
  auto push_token = [&](const std::string& word, int frames) {
    out.transcript.tokens.push_back(
        {word, cursor / fps, (cursor + frames) / fps});
    cursor += frames;
  };
  for (int s = 0; s < n_sent; ++s) {
    const int n_fill = rng_int(rng, 1, 2);
    for (int f = 0; f < n_fill; ++f) {
      push_token(filler_words()[static_cast<std::size_t>(
                     rng_int(rng, 0, static_cast<int>(filler_words().size()) - 1))],
                 rng_int(rng, 1, 3));
    }
    out.sentiment_token_indices.push_back(static_cast<int>(out.transcript.tokens.size()));
    push_token(sentiments[static_cast<std::size_t>(
                   rng_int(rng, 0, static_cast<int>(sentiments.size()) - 1))],
               draw_segment_frames(rng));
  }
  // Trailing fillers up to the clip end.
  while (true) {
    const int len = rng_int(rng, 1, 3);
    if (cursor + len > n_frames) break;
    push_token(filler_words()[static_cast<std::size_t>(
                   rng_int(rng, 0, static_cast<int>(filler_words().size()) - 1))],
               len);
  }
  if (cursor > n_frames) {
    throw std::logic_error("generated transcript exceeds clip length");
  }
  return out;
}

std::string record_id(data::Split split, int index) {
  std::ostringstream os;
  os << data::split_name(split) << "_";
  os.width(5);
  os.fill('0');
  os << index;
  return os.str();
}

}  // namespace

GeneratedDataset generate_dataset(const GeneratorConfig& cfg, const SentimentLexicon& lex,
                                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (cfg.n_train < 0 || cfg.n_validation < 0 || cfg.n_test < 0 || cfg.fps <= 0.0 ||
      cfg.min_frames < 1 || cfg.max_frames < cfg.min_frames || cfg.max_frames > cfg.t_padded ||
      cfg.c_v < 1 || cfg.f_m < 1 || cfg.tau_a < 1 || cfg.d_max < 2) {
    throw std::invalid_argument("generate_dataset: invalid generator config");
  }
  const std::vector<std::string> sentiments = sentiment_pool(lex);
  if (sentiments.empty()) {
    throw std::runtime_error("generate_dataset: lexicon has no words with antonyms");
  }
  fs::create_directories(fs::path(out_dir) / "clips");

  GeneratedDataset result;
  const std::vector<std::pair<data::Split, int>> splits = {
      {data::Split::kTrain, cfg.n_train},
      {data::Split::kValidation, cfg.n_validation},
      {data::Split::kTest, cfg.n_test}};

  for (const auto& [split, count] : splits) {
    // Balanced categories, deterministically shuffled.
    std::vector<Category> cats;
    cats.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) cats.push_back(static_cast<Category>(i % 4));
    std::mt19937_64 cat_rng(
        mix_seed(cfg.seed, 0xCA70000 + static_cast<std::uint64_t>(split)));
    rng_shuffle(cat_rng, cats);

    for (int i = 0; i < count; ++i) {
      data::VideoRecord rec;
      rec.id = record_id(split, i);
      rec.fps = cfg.fps;
      rec.split = split;
      std::mt19937_64 rng(mix_seed(cfg.seed, hash_str(rec.id)));
      rec.n_frames = rng_int(rng, cfg.min_frames, cfg.max_frames);

      const Category cat = cats[static_cast<std::size_t>(i)];
      if (cat != Category::kReal) {
        const BuiltTranscript built =
            build_transcript(rng, rec.n_frames, cfg.fps, sentiments);
        const int budget = replacement_budget(rec.n_frames / cfg.fps);
        const ReplacementPlan plan = select_replacements(built.transcript, lex, budget);
        if (plan.replacements.empty()) {
          throw std::logic_error("generated transcript produced no replacement candidates");
        }
        rec.modify_visual = cat == Category::kVisualOnly || cat == Category::kBoth;
        rec.modify_audio = cat == Category::kAudioOnly || cat == Category::kBoth;
        std::vector<data::TranscriptOp> ops;
        for (const auto& r : plan.replacements) {
          const Token& tok = built.transcript.tokens[static_cast<std::size_t>(r.token_index)];
          rec.fake_segments.push_back({tok.start_s, tok.end_s});
          ops.push_back({r.token_index, r.original, r.replacement});
        }
        std::sort(rec.fake_segments.begin(), rec.fake_segments.end(),
                  [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
        rec.transcript_ops = std::move(ops);
      }
      data::validate_record(rec);

      const FeatureClip clip = synthesize_clip(rec, cfg);
      const std::string rel = "clips/" + rec.id + ".glch";
      write_clip((fs::path(out_dir) / rel).string(), clip);
      result.clip_files.push_back(rel);
      result.dataset.records.push_back(std::move(rec));
    }
  }
  data::save_annotations(result.dataset, (fs::path(out_dir) / "manifest.json").string());
  return result;
}

// ---- clip container ----------------------------------------------------------

namespace {
constexpr std::uint32_t kClipVersion = 1;
}

void write_clip(const std::string& path, const FeatureClip& clip) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(24 + 8 * (clip.visual.size() + clip.audio.size()));
  bytes.push_back('G');
  bytes.push_back('L');
  bytes.push_back('C');
  bytes.push_back('H');
  put_u32(bytes, kClipVersion);
  put_u32(bytes, static_cast<std::uint32_t>(clip.c_v));
  put_u32(bytes, static_cast<std::uint32_t>(clip.f_m));
  put_u32(bytes, static_cast<std::uint32_t>(clip.tau_a));
  put_u32(bytes, static_cast<std::uint32_t>(clip.t));
  for (double v : clip.visual) put_f64(bytes, v);
  for (double v : clip.audio) put_f64(bytes, v);
  write_file_bytes(path, bytes);
}

FeatureClip read_clip(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 24 || bytes[0] != 'G' || bytes[1] != 'L' || bytes[2] != 'C' ||
      bytes[3] != 'H') {
    throw std::runtime_error("not a clip file: " + path);
  }
  const std::uint32_t version = get_u32(&bytes[4]);
  if (version != kClipVersion) {
    throw std::runtime_error("unsupported clip version " + std::to_string(version) + ": " + path);
  }
  FeatureClip clip;
  clip.c_v = static_cast<int>(get_u32(&bytes[8]));
  clip.f_m = static_cast<int>(get_u32(&bytes[12]));
  clip.tau_a = static_cast<int>(get_u32(&bytes[16]));
  clip.t = static_cast<int>(get_u32(&bytes[20]));
  if (clip.c_v < 1 || clip.f_m < 1 || clip.tau_a < 1 || clip.t < 1) {
    throw std::runtime_error("corrupt clip header: " + path);
  }
  const std::size_t n_vis = static_cast<std::size_t>(clip.c_v) * clip.t;
  const std::size_t n_aud = static_cast<std::size_t>(clip.tau_a * clip.f_m) * clip.t;
  if (bytes.size() != 24 + 8 * (n_vis + n_aud)) {
    throw std::runtime_error("clip payload size mismatch: " + path);
  }
  clip.visual.resize(n_vis);
  clip.audio.resize(n_aud);
  std::size_t off = 24;
  for (std::size_t i = 0; i < n_vis; ++i, off += 8) clip.visual[i] = get_f64(&bytes[off]);
  for (std::size_t i = 0; i < n_aud; ++i, off += 8) clip.audio[i] = get_f64(&bytes[off]);
  return clip;
}

}  // namespace glitchloc::gen
