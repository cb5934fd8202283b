#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sonograin/constants.hpp"
#include "sonograin/corpus.hpp"
#include "sonograin/crossfade.hpp"
#include "sonograin/index.hpp"
#include "sonograin/rng.hpp"
#include "sonograin/trace.hpp"
#include "sonograin/wav.hpp"

namespace sonograin {

struct SynthParams {
  std::size_t k = 25;           // neighbours retrieved per selection
  std::size_t n = 28;           // neighbour fragments added around the selected one
  std::size_t freeze_hops = 5;  // hops a selection is held before re-selection
  std::size_t fade_len = 480;   // crossfade length in samples
  double v_silence = 1.0;       // mm/s; slower input ramps to silence

  void validate() const {
    if (k < 1) throw InputError("k must be at least 1");
    if (n % 2 != 0) throw InputError("n must be even");
    if (freeze_hops < 1) throw InputError("freeze_hops must be at least 1");
    if (fade_len < 1 || fade_len > kHop) throw InputError("fade_len must be in [1, 480]");
    if (!(v_silence >= 0.0)) throw InputError("v_silence must be non-negative");
  }
};

// A contiguous window of the source clip, in samples.
struct Grain {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t center_fragment = 0;

  friend bool operator==(const Grain&, const Grain&) = default;
};

/// Extends fragment j to source fragments [j - n/2, j + n/2], clamped to the clip.
/// Neighbours are taken by clip position whether or not they survived filtering.
inline Grain build_grain(const Corpus& corpus, std::size_t fragment_id, std::size_t n) {
  const std::size_t windows = corpus.clip_fragment_count();
  if (fragment_id >= windows) throw std::out_of_range("fragment id outside the clip");
  const std::size_t half = n / 2;
  const std::size_t first = fragment_id >= half ? fragment_id - half : 0;
  const std::size_t last = std::min(windows - 1, fragment_id + half);
  return {first * kHop, (last - first + 1) * kHop, fragment_id};
}

// A corpus ready for synthesis: fragments, their index, and the source peak.
// Immutable once built and shared by every session that plays this material.
struct Material {
  Corpus corpus;
  GrainIndex index;
  float peak = 0.0f;

  static std::shared_ptr<const Material> make(Corpus corpus) {
    if (!corpus.audio) throw BuildError("corpus has no audio attached");
    if (corpus.audio->channel_count() != 2) throw BuildError("material audio must be stereo");
    auto m = std::make_shared<Material>();
    m->index = GrainIndex::embed(corpus);
    m->peak = corpus.audio->peak();
    m->corpus = std::move(corpus);
    return m;
  }
};

using HopBlock = std::array<std::array<float, kHop>, 2>;

// Scheduler state of one synthesis stream. The crossfade finishes inside the hop that
// starts it, so the outgoing grain needs no state beyond its position (active + cursor).
struct SynthState {
  std::optional<Grain> active;
  std::size_t cursor = 0;
  std::size_t freeze_remaining = 0;
  SplitMix64 rng;
  bool silent = true;
};

class Synthesizer {
 public:
  struct Stats {
    std::uint64_t hops = 0;
    std::uint64_t selections = 0;
  };

  Synthesizer(std::shared_ptr<const Material> material, SynthParams params, std::uint64_t seed)
      : material_(std::move(material)), params_(params), envelope_(params.fade_len) {
    if (!material_) throw std::invalid_argument("synthesizer needs a material");
    params_.validate();
    state_.rng = SplitMix64(seed);
    neighbors_.reserve(params_.k);
  }

  const SynthState& state() const { return state_; }
  const SynthParams& params() const { return params_; }
  const Stats& stats() const { return stats_; }
  const Material& material() const { return *material_; }
  bool last_hop_selected() const { return last_hop_selected_; }

  /// Retrieves the k nearest fragments (or uses a precomputed result for this query),
  /// draws one uniformly with the stream's RNG and makes its grain active.
  Grain select_grain(Vec2 v_in, const std::vector<Neighbor>* precomputed = nullptr) {
    const std::vector<Neighbor>* candidates = precomputed;
    if (!candidates) {
      material_->index.knn(v_in, params_.k, neighbors_);
      candidates = &neighbors_;
    }
    if (candidates->empty()) throw std::logic_error("empty neighbour set");
    const std::size_t pick = static_cast<std::size_t>(state_.rng.below(candidates->size()));
    const Grain grain = build_grain(material_->corpus, (*candidates)[pick].id, params_.n);
    state_.active = grain;
    state_.cursor = 0;
    state_.freeze_remaining = params_.freeze_hops;
    ++stats_.selections;
    return grain;
  }

  /// Produces the next 480 stereo samples for query velocity v_in.
  void process_hop(Vec2 v_in, HopBlock& out, const std::vector<Neighbor>* precomputed = nullptr) {
    ++stats_.hops;
    last_hop_selected_ = false;
    const std::size_t fade = params_.fade_len;

    if (v_in.norm() < params_.v_silence) {
      for (auto& ch : out) ch.fill(0.0f);
      if (!state_.silent && state_.active) {
        const std::size_t from = state_.active->start + state_.cursor;
        for (std::size_t c = 0; c < 2; ++c) {
          read_source(c, from, std::span(scratch_[c]).first(fade));
          for (std::size_t t = 0; t < fade; ++t)
            out[c][t] = static_cast<float>(scratch_[c][t] * (1.0 - static_cast<double>(t) / static_cast<double>(fade)));
        }
      }
      state_.silent = true;
      state_.active.reset();
      state_.cursor = 0;
      state_.freeze_remaining = 0;
      return;
    }

    const bool reselect = state_.silent || !state_.active || state_.freeze_remaining == 0 ||
                          state_.active->length - state_.cursor < kHop + fade;
    if (reselect) {
      std::optional<std::size_t> outgoing;
      if (!state_.silent && state_.active) outgoing = state_.active->start + state_.cursor;
      const Grain grain = select_grain(v_in, precomputed);
      last_hop_selected_ = true;

      std::array<std::span<const float>, 2> from, to;
      for (std::size_t c = 0; c < 2; ++c) {
        auto buf = std::span(scratch_[c]).first(fade);
        if (outgoing)
          read_source(c, *outgoing, buf);
        else
          std::fill(buf.begin(), buf.end(), 0.0f);
        from[c] = buf;
        to[c] = material_->corpus.clip().channel(c).subspan(grain.start, kHop);
      }
      std::array<std::span<const float>, 2> to_fade{to[0].first(fade), to[1].first(fade)};
      const double r = fade_correlation(from, to_fade);
      for (std::size_t c = 0; c < 2; ++c) crossfade_channel(from[c], to[c], envelope_, r, out[c]);
      state_.cursor = kHop;
      state_.silent = false;
    } else {
      --state_.freeze_remaining;
      for (std::size_t c = 0; c < 2; ++c)
        read_source(c, state_.active->start + state_.cursor, out[c]);
      state_.cursor += kHop;
    }

    // Ceiling at the source peak; only a crossfade of correlated peaks can reach it.
    const float peak = material_->peak;
    for (auto& ch : out)
      for (float& s : ch) s = std::clamp(s, -peak, peak);
  }

  HopBlock process_hop(Vec2 v_in) {
    HopBlock out;
    process_hop(v_in, out);
    return out;
  }

 private:
  // Source samples starting at `from`; zeros past the end of the clip.
  void read_source(std::size_t c, std::size_t from, std::span<float> dst) const {
    const auto src = material_->corpus.clip().channel(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = from + i < src.size() ? src[from + i] : 0.0f;
  }

  std::shared_ptr<const Material> material_;
  SynthParams params_;
  FadeEnvelope envelope_;
  SynthState state_;
  Stats stats_;
  bool last_hop_selected_ = false;
  std::vector<Neighbor> neighbors_;
  HopBlock scratch_{};
};

/// Replays a velocity trace through a fresh synthesizer, one hop per trace sample.
/// With threads > 1 the neighbour queries are computed ahead in parallel; the output
/// does not depend on the thread count.
inline AudioClip render_offline(std::shared_ptr<const Material> material, const VelocityTrace& trace,
                                std::uint64_t seed, const SynthParams& params = {}, unsigned threads = 1) {
  if (trace.empty()) throw InputError("render: empty trace");
  Synthesizer synth(material, params, seed);
  AudioClip out = AudioClip::silent(2, trace.size() * kHop);
  HopBlock block;

  constexpr std::size_t kBatch = 4096;
  std::vector<std::vector<Neighbor>> ahead;
  threads = std::max(1u, threads);
  for (std::size_t base = 0; base < trace.size(); base += kBatch) {
    const std::size_t count = std::min(kBatch, trace.size() - base);
    if (threads > 1) {
      ahead.assign(count, {});
      auto work = [&](std::size_t worker) {
        for (std::size_t i = worker; i < count; i += threads) {
          const Vec2 v = trace.samples[base + i];
          if (v.norm() >= params.v_silence) material->index.knn(v, params.k, ahead[i]);
        }
      };
      std::vector<std::jthread> pool;
      for (unsigned w = 1; w < threads; ++w) pool.emplace_back(work, w);
      work(0);
    }
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t hop = base + i;
      synth.process_hop(trace.samples[hop], block, threads > 1 ? &ahead[i] : nullptr);
      for (std::size_t c = 0; c < 2; ++c)
        std::copy(block[c].begin(), block[c].end(), out.channels[c].begin() + static_cast<std::ptrdiff_t>(hop * kHop));
    }
  }
  return out;
}

}  // namespace sonograin
