#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sonograin/constants.hpp"
#include "sonograin/error.hpp"
#include "sonograin/sha256.hpp"
#include "sonograin/trace.hpp"
#include "sonograin/vec2.hpp"
#include "sonograin/wav.hpp"

namespace sonograin {

// One 480-sample window of the source clip with its annotations.
// ratio stays 0 until filter_outliers assigns loudness / |velocity|^2.
struct Fragment {
  std::size_t index = 0;
  Vec2 velocity;
  double loudness = 0.0;
  double ratio = 0.0;

  friend bool operator==(const Fragment&, const Fragment&) = default;
};

struct PrepParams {
  double p_lo = 5.0;
  double p_hi = 95.0;
  double v_min = 1.0;

  friend bool operator==(const PrepParams&, const PrepParams&) = default;

  void validate() const {
    if (!(0.0 <= p_lo && p_lo < p_hi && p_hi <= 100.0))
      throw InputError("percentiles must satisfy 0 <= p_lo < p_hi <= 100");
    if (!(v_min > 0.0)) throw InputError("v_min must be positive");
  }
};

inline constexpr std::size_t kDefaultMinFragments = 25;

struct Corpus {
  std::vector<Fragment> fragments;
  double mean_ratio = 0.0;
  PrepParams params;

  // Source clip. audio_path is where the WAV lives on disk (empty for in-memory corpora).
  std::filesystem::path audio_path;
  std::string audio_sha256;
  std::shared_ptr<const AudioClip> audio;

  std::size_t size() const { return fragments.size(); }

  // Whole 480-sample windows available in the source clip, retained or not.
  std::size_t clip_fragment_count() const { return audio ? audio->frames() / kHop : 0; }

  const AudioClip& clip() const {
    if (!audio) throw std::logic_error("corpus has no audio attached");
    return *audio;
  }
};

/// RMS over every sample of every channel; each channel must hold exactly one fragment.
template <class Channels>
double rms_loudness(const Channels& channels) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& ch : channels) {
    if (std::size(ch) != kHop) throw std::invalid_argument("rms window must be 480 samples per channel");
    for (auto s : ch) {
      const double v = static_cast<double>(s);
      sum += v * v;
    }
    count += kHop;
  }
  return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

using WarningSink = std::function<void(const std::string&)>;

inline void warn_to_stderr(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

/// Splits the clip into 480-sample fragments paired with trace samples, truncating to the shorter input.
inline std::vector<Fragment> segment(const AudioClip& clip, const VelocityTrace& trace,
                                     const WarningSink& warn = warn_to_stderr) {
  if (clip.sample_rate != kSampleRate) throw InputError("clip sample rate must be 48000");
  if (clip.frames() == 0 || trace.empty()) throw BuildError("segment: empty clip or trace");
  const std::size_t audio_windows = clip.frames() / kHop;
  const std::size_t count = std::min(audio_windows, trace.size());
  if (count == 0) throw BuildError("segment: clip shorter than one fragment");

  if (audio_windows > count && warn)
    warn("audio longer than trace; ignoring " + std::to_string(clip.frames() - count * kHop) +
         " trailing audio samples");
  else if (clip.frames() % kHop != 0 && warn)
    warn("dropping trailing partial fragment of " + std::to_string(clip.frames() % kHop) + " samples");
  if (trace.size() > count && warn)
    warn("trace longer than audio; ignoring " + std::to_string(trace.size() - count) + " trailing velocity samples");

  std::vector<Fragment> out(count);
  std::vector<std::span<const float>> window(clip.channel_count());
  for (std::size_t j = 0; j < count; ++j) {
    for (std::size_t c = 0; c < clip.channel_count(); ++c)
      window[c] = clip.channel(c).subspan(j * kHop, kHop);
    out[j] = Fragment{j, trace.samples[j], rms_loudness(window), 0.0};
  }
  return out;
}

/// Linear-interpolation percentile (rank = p/100 * (N-1)) over an ascending-sorted population.
inline double percentile_linear(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty population");
  const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct FilterStats {
  std::size_t total = 0;
  std::size_t dropped_velocity = 0;
  std::size_t dropped_percentile = 0;
  std::size_t retained = 0;
  double lo_value = 0.0;
  double hi_value = 0.0;
};

/// Drops slow fragments, then fragments whose loudness/speed^2 ratio falls outside [p_lo, p_hi].
/// The returned corpus carries no audio; attach it before synthesis.
inline Corpus filter_outliers(std::span<const Fragment> fragments, const PrepParams& params,
                              std::size_t min_retained = kDefaultMinFragments, FilterStats* stats = nullptr) {
  params.validate();
  FilterStats local;
  local.total = fragments.size();

  std::vector<Fragment> moving;
  moving.reserve(fragments.size());
  for (const Fragment& f : fragments) {
    if (f.velocity.norm() < params.v_min) continue;
    Fragment g = f;
    g.ratio = g.loudness / g.velocity.squared_norm();
    moving.push_back(g);
  }
  local.dropped_velocity = fragments.size() - moving.size();
  if (moving.empty()) throw BuildError("no fragment reaches v_min; nothing to annotate");

  std::vector<double> ratios;
  ratios.reserve(moving.size());
  for (const Fragment& f : moving) ratios.push_back(f.ratio);
  std::sort(ratios.begin(), ratios.end());
  local.lo_value = percentile_linear(ratios, params.p_lo);
  local.hi_value = percentile_linear(ratios, params.p_hi);

  Corpus corpus;
  corpus.params = params;
  double sum = 0.0;
  for (const Fragment& f : moving) {
    if (f.ratio < local.lo_value || f.ratio > local.hi_value) continue;
    corpus.fragments.push_back(f);
    sum += f.ratio;
  }
  local.retained = corpus.fragments.size();
  local.dropped_percentile = moving.size() - local.retained;
  if (stats) *stats = local;

  if (corpus.fragments.size() < min_retained)
    throw BuildError("only " + std::to_string(corpus.fragments.size()) + " fragments retained, need at least " +
                     std::to_string(min_retained));
  corpus.mean_ratio = sum / static_cast<double>(corpus.fragments.size());
  if (!(corpus.mean_ratio > 0.0) || !std::isfinite(corpus.mean_ratio))
    throw BuildError("mean loudness ratio is not positive; is the recording silent?");
  return corpus;
}

/// Full preparation: load WAV, segment against the trace, filter, attach the clip.
inline Corpus prepare_corpus(const std::filesystem::path& audio_path, const VelocityTrace& trace,
                             const PrepParams& params, std::size_t min_retained = kDefaultMinFragments,
                             FilterStats* stats = nullptr, const WarningSink& warn = warn_to_stderr) {
  auto clip = std::make_shared<const AudioClip>(load_audio(audio_path));
  auto fragments = segment(*clip, trace, warn);
  Corpus corpus = filter_outliers(fragments, params, min_retained, stats);
  corpus.audio = std::move(clip);
  corpus.audio_path = audio_path;
  corpus.audio_sha256 = sha256_file(audio_path);
  return corpus;
}

inline constexpr int kCorpusFormatVersion = 1;

/// Writes the corpus manifest. The audio file must already exist at corpus.audio_path.
inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (corpus.audio_path.empty()) throw InputError("corpus has no audio file to reference");
  if (!fs::exists(corpus.audio_path)) throw InputError("audio file missing: " + corpus.audio_path.string());

  const fs::path manifest_dir = fs::absolute(path).parent_path();
  const fs::path audio_rel = fs::proximate(fs::absolute(corpus.audio_path), manifest_dir);
  const std::string digest = sha256_file(corpus.audio_path);
  if (!corpus.audio_sha256.empty() && corpus.audio_sha256 != digest)
    throw InputError("audio file changed since the corpus was built: " + corpus.audio_path.string());

  nlohmann::json j;
  j["format_version"] = kCorpusFormatVersion;
  j["audio_path"] = audio_rel.generic_string();
  j["audio_sha256"] = digest;
  j["audio_frames"] = corpus.audio ? corpus.audio->frames() : load_audio(corpus.audio_path).frames();
  j["sample_rate"] = kSampleRate;
  j["fragment_length"] = kHop;
  j["mean_ratio"] = corpus.mean_ratio;
  j["params"] = {{"p_lo", corpus.params.p_lo}, {"p_hi", corpus.params.p_hi}, {"v_min", corpus.params.v_min}};
  auto& frags = j["fragments"] = nlohmann::json::array();
  for (const Fragment& f : corpus.fragments)
    frags.push_back({{"index", f.index},
                     {"vx", f.velocity.x},
                     {"vy", f.velocity.y},
                     {"loudness", f.loudness},
                     {"ratio", f.ratio}});

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw InputError("write failed: " + path.string());
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": invalid JSON: " + e.what());
  }

  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCorpusFormatVersion)
      throw InputError("unsupported corpus format_version " + std::to_string(version));
    if (j.at("sample_rate").get<int>() != kSampleRate) throw InputError("corpus sample_rate must be 48000");
    if (j.at("fragment_length").get<std::size_t>() != kHop) throw InputError("corpus fragment_length must be 480");

    Corpus corpus;
    corpus.mean_ratio = j.at("mean_ratio").get<double>();
    const auto& p = j.at("params");
    corpus.params = {p.at("p_lo").get<double>(), p.at("p_hi").get<double>(), p.at("v_min").get<double>()};
    corpus.params.validate();
    for (const auto& f : j.at("fragments"))
      corpus.fragments.push_back({f.at("index").get<std::size_t>(),
                                  {f.at("vx").get<double>(), f.at("vy").get<double>()},
                                  f.at("loudness").get<double>(),
                                  f.at("ratio").get<double>()});

    corpus.audio_path = fs::absolute(path).parent_path() / fs::path(j.at("audio_path").get<std::string>());
    if (!fs::exists(corpus.audio_path))
      throw InputError("referenced audio file missing: " + corpus.audio_path.string());
    corpus.audio_sha256 = j.at("audio_sha256").get<std::string>();
    if (sha256_file(corpus.audio_path) != corpus.audio_sha256)
      throw InputError("audio digest mismatch for " + corpus.audio_path.string());
    auto clip = std::make_shared<const AudioClip>(load_audio(corpus.audio_path));
    if (j.contains("audio_frames") && j["audio_frames"].get<std::size_t>() != clip->frames())
      throw InputError("audio length differs from manifest: " + corpus.audio_path.string());
    corpus.audio = std::move(clip);

    if (!(corpus.mean_ratio > 0.0)) throw InputError("corpus mean_ratio must be positive");
    const std::size_t windows = corpus.clip_fragment_count();
    for (std::size_t i = 0; i < corpus.fragments.size(); ++i) {
      const Fragment& f = corpus.fragments[i];
      if (f.index >= windows) throw InputError("fragment index " + std::to_string(f.index) + " outside the clip");
      if (i > 0 && f.index <= corpus.fragments[i - 1].index)
        throw InputError("fragment indices must be strictly increasing");
    }
    if (corpus.fragments.empty()) throw InputError("corpus has no fragments");
    return corpus;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": malformed corpus: " + e.what());
  }
}

}  // namespace sonograin
