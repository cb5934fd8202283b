#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace sonograin {

// Equal-power pair over a fade of length L: w_out(t) = cos(pi t / 2L), w_in(t) = sin(pi t / 2L).
struct FadeEnvelope {
  std::vector<double> out;
  std::vector<double> in;

  explicit FadeEnvelope(std::size_t length) : out(length), in(length) {
    if (length == 0) throw std::invalid_argument("fade length must be positive");
    for (std::size_t t = 0; t < length; ++t) {
      const double phase = std::numbers::pi * static_cast<double>(t) / (2.0 * static_cast<double>(length));
      out[t] = std::cos(phase);
      in[t] = std::sin(phase);
    }
  }

  std::size_t size() const { return out.size(); }
};

/// Normalized correlation of two equally long multichannel segments, clamped to [0, 1].
/// Silent segments count as uncorrelated.
template <class Channels>
double fade_correlation(const Channels& outgoing, const Channels& incoming) {
  double cross = 0.0, e_out = 0.0, e_in = 0.0;
  for (std::size_t c = 0; c < std::size(outgoing); ++c) {
    const auto& a = outgoing[c];
    const auto& b = incoming[c];
    for (std::size_t i = 0; i < std::size(a); ++i) {
      cross += static_cast<double>(a[i]) * b[i];
      e_out += static_cast<double>(a[i]) * a[i];
      e_in += static_cast<double>(b[i]) * b[i];
    }
  }
  if (e_out <= 0.0 || e_in <= 0.0) return 0.0;
  return std::clamp(cross / std::sqrt(e_out * e_in), 0.0, 1.0);
}

/// Crossfades one channel: out[t] = (w_out a[t] + w_in b[t]) / g(t) for t < L, then b[t].
///
/// g(t) = sqrt(w_out^2 + w_in^2 + 2 r w_out w_in) keeps the output power constant for
/// inputs with correlation r: for decorrelated grains (r = 0) this is the plain
/// equal-power fade, for identical inputs (r = 1) the output reproduces the input.
inline void crossfade_channel(std::span<const float> outgoing, std::span<const float> incoming,
                              const FadeEnvelope& env, double correlation, std::span<float> out) {
  const std::size_t fade = std::min(env.size(), out.size());
  for (std::size_t t = 0; t < fade; ++t) {
    const double wo = env.out[t], wi = env.in[t];
    const double gain = std::sqrt(wo * wo + wi * wi + 2.0 * correlation * wo * wi);
    out[t] = static_cast<float>((wo * outgoing[t] + wi * incoming[t]) / gain);
  }
  for (std::size_t t = fade; t < out.size(); ++t) out[t] = incoming[t];
}

}  // namespace sonograin
