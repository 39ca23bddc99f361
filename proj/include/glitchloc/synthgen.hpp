#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "glitchloc/annotations.hpp"

// Content-driven manipulation: lexicon-scored transcripts, antonym
// replacement selection, and synthesis of labeled feature clips.
namespace glitchloc::gen {

struct Token {
  std::string word;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct Transcript {
  std::vector<Token> tokens;  // non-overlapping, sorted by start
};

/// Valence map plus antonym sets. Every antonym of a listed word has a
/// valence entry (missing ones are inserted as 0 on load).
struct SentimentLexicon {
  std::map<std::string, double> valence;
  std::map<std::string, std::set<std::string>> antonyms;

  static SentimentLexicon builtin();
  static SentimentLexicon load(const std::string& path);
  void save(const std::string& path) const;

  double word_valence(const std::string& w) const;
};

struct Replacement {
  int token_index = 0;
  std::string original;
  std::string replacement;
  double delta_s = 0.0;  // S(D') - S(D) for this single substitution
};

struct ReplacementPlan {
  std::vector<Replacement> replacements;  // distinct token indices, sorted

  double abs_total_delta() const;
};

struct GeneratorConfig {
  int n_train = 500;
  int n_validation = 100;
  int n_test = 100;
  double fps = 4.0;
  int min_frames = 32;  // clip length range, frames
  int max_frames = 64;
  int c_v = 8;    // visual channels
  int f_m = 16;   // mel bins
  int tau_a = 4;  // temporal reshape factor of the audio layout
  int t_padded = 64;
  int d_max = 8;
  double perturb_base_amplitude = 1.0;
  std::uint64_t seed = 1;
};

struct FeatureClip {
  int c_v = 0;
  int f_m = 0;
  int tau_a = 0;
  int t = 0;
  std::vector<double> visual;  // c_v x t row-major
  std::vector<double> audio;   // (tau_a*f_m) x t row-major

  int audio_rows() const { return tau_a * f_m; }
};

/// Sum of valences of tokens present in the lexicon; unknown tokens are 0.
double sentiment_score(const Transcript& tr, const SentimentLexicon& lex);

/// The single (token, antonym) substitution maximizing |S(D) - S(D')|.
/// Absent when no token has antonyms or the best |delta| is 0. Ties break
/// by lowest token index, then lexicographically smallest antonym.
std::optional<Replacement> best_single_replacement(const Transcript& tr,
                                                   const SentimentLexicon& lex);

/// The set of at most max_replacements substitutions (distinct tokens)
/// maximizing |sum of deltas|; zero-delta candidates are skipped. Ties
/// break by fewer replacements, then lowest token indices, then
/// lexicographically smallest antonyms.
ReplacementPlan select_replacements(const Transcript& tr, const SentimentLexicon& lex,
                                    int max_replacements);

/// 1 replacement for clips shorter than 10 s, else 2.
int replacement_budget(double duration_s);

/// Deterministic feature synthesis for one record. Base signals are smooth
/// seeded processes; each fake segment adds a band-limited perturbation to
/// the manipulated modality, RMS-matched to the neighboring real signal.
FeatureClip synthesize_clip(const data::VideoRecord& rec, const GeneratorConfig& cfg);

struct GeneratedDataset {
  data::Dataset dataset;
  std::vector<std::string> clip_files;  // relative to out_dir, record order
};

/// Emits manifest.json plus one clip file per record under out_dir.
/// Categories (real / visual-only / audio-only / both) are balanced.
GeneratedDataset generate_dataset(const GeneratorConfig& cfg, const SentimentLexicon& lex,
                                  const std::string& out_dir);

// Clip container: magic "GLCH", version, C_v, F_m, tau_a, T as u32 LE,
// then row-major f64 LE values, visual block first.
void write_clip(const std::string& path, const FeatureClip& clip);
FeatureClip read_clip(const std::string& path);

}  // namespace glitchloc::gen
