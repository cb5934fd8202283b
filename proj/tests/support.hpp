#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "sonograin/sonograin.hpp"

namespace sgtest {

namespace fs = std::filesystem;
using namespace sonograin;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("sonograin-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// Low-passed white noise (two cascaded 8-tap box filters), scaled to the given peak.
inline AudioClip band_limited_noise(std::size_t frames, std::uint64_t seed, float peak = 0.5f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  AudioClip clip = AudioClip::silent(2, frames);
  for (auto& ch : clip.channels) {
    std::vector<double> x(frames + 16);
    for (double& v : x) v = uni(rng);
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<double> y(x.size(), 0.0);
      for (std::size_t i = 7; i < x.size(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < 8; ++k) s += x[i - k];
        y[i] = s / 8.0;
      }
      x.swap(y);
    }
    double m = 0.0;
    for (std::size_t i = 0; i < frames; ++i) m = std::max(m, std::abs(x[i + 16]));
    for (std::size_t i = 0; i < frames; ++i) ch[i] = static_cast<float>(x[i + 16] / m * peak);
  }
  return clip;
}

// Slow speed triangle 0 -> vmax -> 0 with a slowly turning direction.
inline VelocityTrace sweep_trace(std::size_t n, double vmax, std::size_t period, double offset = 0.0) {
  VelocityTrace t;
  t.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double phase = std::fmod(static_cast<double>(i) / static_cast<double>(period) + offset, 1.0);
    const double speed = vmax * (phase < 0.5 ? 2.0 * phase : 2.0 - 2.0 * phase);
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / 1700.0;
    t.samples[i] = {speed * std::cos(angle), speed * std::sin(angle)};
  }
  return t;
}

// Clip whose fragment j is noise with RMS exactly c * |v_j|^2 (before float rounding).
inline AudioClip loudness_matched_clip(const VelocityTrace& trace, double c, std::uint64_t seed) {
  AudioClip clip = band_limited_noise(trace.size() * kHop, seed, 1.0f);
  for (std::size_t j = 0; j < trace.size(); ++j) {
    double sum = 0.0;
    for (const auto& ch : clip.channels)
      for (std::size_t i = 0; i < kHop; ++i) sum += double(ch[j * kHop + i]) * ch[j * kHop + i];
    const double rms = std::sqrt(sum / (2.0 * kHop));
    const double target = c * trace.samples[j].squared_norm();
    for (auto& ch : clip.channels)
      for (std::size_t i = 0; i < kHop; ++i)
        ch[j * kHop + i] = static_cast<float>(ch[j * kHop + i] * (rms > 0 ? target / rms : 0.0));
  }
  return clip;
}

// Writes the clip (float32, lossless) next to a corpus built from it.
struct Fixture {
  std::unique_ptr<TempDir> dir = std::make_unique<TempDir>();
  fs::path wav;
  Corpus corpus;
  std::shared_ptr<const Material> material;
};

inline Fixture make_fixture(const AudioClip& clip, const VelocityTrace& trace, PrepParams params = {},
                            std::size_t min_fragments = kDefaultMinFragments) {
  Fixture f;
  f.wav = *f.dir / "source.wav";
  write_wav(f.wav, clip, SampleFormat::Float32);
  f.corpus = prepare_corpus(f.wav, trace, params, min_fragments, nullptr, {});
  f.material = Material::make(f.corpus);
  return f;
}

// Noise corpus with a smooth velocity sweep: the default synthesis fixture.
inline Fixture noise_fixture(std::size_t fragments = 2000, std::uint64_t seed = 7) {
  return make_fixture(band_limited_noise(fragments * kHop, seed), sweep_trace(fragments, 300.0, 800));
}

// ---- independent oracles -------------------------------------------------

// Percentile by the "(1-g) * x[j] + g * x[j+1]" form with j, g from integer/fraction split.
inline double oracle_percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
  const double j = std::floor(h);
  const double g = h - j;
  const auto ji = static_cast<std::size_t>(j);
  if (ji + 1 >= values.size()) return values.back();
  if (g == 0.0) return values[ji];
  return (1.0 - g) * values[ji] + g * values[ji + 1];
}

struct OracleNeighbor {
  std::size_t id;
  double distance;
};

// Linear scan over every fragment with the closed-form distance.
inline std::vector<OracleNeighbor> oracle_knn(const Corpus& corpus, Vec2 v_in, std::size_t k) {
  std::vector<OracleNeighbor> all;
  for (const auto& f : corpus.fragments) all.push_back({f.index, distance(v_in, f, corpus.mean_ratio)});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  });
  all.resize(std::min(k, all.size()));
  return all;
}

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double block_rms(const HopBlock& b) {
  double s = 0.0;
  for (const auto& ch : b)
    for (float x : ch) s += double(x) * x;
  return std::sqrt(s / (2.0 * kHop));
}

inline std::vector<unsigned char> read_bytes(const fs::path& p) { return detail::read_file_bytes(p); }

}  // namespace sgtest
