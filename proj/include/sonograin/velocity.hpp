#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sonograin/constants.hpp"
#include "sonograin/error.hpp"
#include "sonograin/trace.hpp"
#include "sonograin/vec2.hpp"

namespace sonograin {

// Pointer trajectory -> 100 Hz velocity: resample onto the 10 ms grid, centered moving
// average, central differences. The batch functions and VelocityTracker share the
// per-sample kernels below so both produce bit-identical values.

namespace detail {

inline constexpr double kGridSnap = 1e-9;

inline double grid_time(double t0, std::size_t i) { return t0 + static_cast<double>(i) * kTraceStep; }

inline Vec2 interpolate(const PointerEvent& a, const PointerEvent& b, double t) {
  const double frac = (t - a.t) / (b.t - a.t);
  if (frac <= kGridSnap) return {a.x, a.y};
  if (frac >= 1.0 - kGridSnap) return {b.x, b.y};
  return {a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)};
}

// Mean of seq[lo..hi] inclusive, summed in index order.
template <class Seq>
Vec2 window_mean(const Seq& seq, std::size_t lo, std::size_t hi) {
  Vec2 sum;
  for (std::size_t i = lo; i <= hi; ++i) sum = sum + seq[i];
  return sum / static_cast<double>(hi - lo + 1);
}

inline Vec2 central_difference(Vec2 prev, Vec2 next) { return (next - prev) / (2.0 * kTraceStep); }
inline Vec2 forward_difference(Vec2 a, Vec2 b) { return (b - a) / kTraceStep; }

}  // namespace detail

/// Linear interpolation of positions onto t_first + i * 0.01 for every grid point within the span.
inline std::vector<Vec2> resample_positions(std::span<const PointerEvent> events) {
  if (events.size() < 2) throw InputError("need at least two pointer events");
  for (std::size_t i = 1; i < events.size(); ++i)
    if (!(events[i].t > events[i - 1].t)) throw InputError("pointer timestamps must be strictly increasing");
  const double t0 = events.front().t;
  const double span_s = events.back().t - t0;
  if (span_s < 2.0 * kTraceStep - detail::kGridSnap) throw InputError("pointer events must span at least 0.02 s");

  std::vector<Vec2> out;
  std::size_t seg = 0;
  for (std::size_t i = 0;; ++i) {
    const double t = detail::grid_time(t0, i);
    if (t > events.back().t + detail::kGridSnap) break;
    while (seg + 2 < events.size() && events[seg + 1].t < t) ++seg;
    out.push_back(detail::interpolate(events[seg], events[seg + 1], t));
  }
  return out;
}

/// Centered moving average with an odd window, truncated at the edges.
inline std::vector<Vec2> smooth_positions(std::span<const Vec2> positions, std::size_t window = 3) {
  if (window == 0 || window % 2 == 0) throw InputError("smoothing window must be odd and positive");
  const std::size_t half = window / 2;
  std::vector<Vec2> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(positions.size() - 1, i + half);
    out[i] = window == 1 ? positions[i] : detail::window_mean(positions, lo, hi);
  }
  return out;
}

/// Central differences inside, one-sided first differences at both ends.
inline VelocityTrace differentiate(std::span<const Vec2> positions) {
  if (positions.size() < 3) throw InputError("need at least three positions to differentiate");
  VelocityTrace trace;
  const std::size_t n = positions.size();
  trace.samples.resize(n);
  trace.samples[0] = detail::forward_difference(positions[0], positions[1]);
  for (std::size_t i = 1; i + 1 < n; ++i)
    trace.samples[i] = detail::central_difference(positions[i - 1], positions[i + 1]);
  trace.samples[n - 1] = detail::forward_difference(positions[n - 2], positions[n - 1]);
  return trace;
}

inline VelocityTrace velocity_from_positions(std::span<const PointerEvent> events, std::size_t window = 3) {
  const auto grid = resample_positions(events);
  const auto smooth = smooth_positions(grid, window);
  return differentiate(smooth);
}

/// Streaming form of velocity_from_positions.
///
/// Velocity sample i is published once the positions it depends on are final, i.e.
/// after grid point i + 1 + window/2 has been resampled. Published values equal the
/// batch pipeline's sample i for any event sequence that extends the current one.
class VelocityTracker {
 public:
  explicit VelocityTracker(std::size_t window = 3) : half_(window / 2), window_(window) {
    if (window == 0 || window % 2 == 0) throw InputError("smoothing window must be odd and positive");
  }

  /// Returns false (and ignores the event) if its timestamp does not advance.
  bool push(const PointerEvent& e) {
    if (last_ && !(e.t > last_->t)) return false;
    if (!last_) t0_ = e.t;
    if (last_) {
      for (;;) {
        const double t = detail::grid_time(t0_, grid_count_);
        if (t > e.t + detail::kGridSnap) break;
        append_position(detail::interpolate(*last_, e, t));
      }
    } else {
      append_position({e.x, e.y});
    }
    last_ = e;
    return true;
  }

  // Newest published velocity sample and its grid index.
  std::optional<Vec2> latest() const { return latest_; }
  std::optional<std::size_t> latest_index() const {
    return latest_ ? std::optional<std::size_t>(published_ - 1) : std::nullopt;
  }
  std::size_t published() const { return published_; }

 private:
  void append_position(Vec2 p) {
    positions_.push_back(p);
    ++grid_count_;
    // Smoothed sample s is final once position s + half exists.
    while (smoothed_count_ + half_ < grid_count_) {
      const std::size_t i = smoothed_count_;
      const std::size_t lo = i >= half_ ? i - half_ : 0;
      smoothed_.push_back(window_ == 1 ? pos(i) : mean(lo, i + half_));
      ++smoothed_count_;
    }
    // Velocity v is final once smoothed sample v + 1 exists.
    while (published_ + 1 < smoothed_count_) {
      const std::size_t i = published_;
      latest_ = i == 0 ? detail::forward_difference(smooth(0), smooth(1))
                       : detail::central_difference(smooth(i - 1), smooth(i + 1));
      ++published_;
    }
    trim();
  }

  Vec2 pos(std::size_t i) const { return positions_[i - pos_base_]; }
  Vec2 smooth(std::size_t i) const { return smoothed_[i - smooth_base_]; }

  Vec2 mean(std::size_t lo, std::size_t hi) const {
    struct View {
      const VelocityTracker* self;
      Vec2 operator[](std::size_t i) const { return self->pos(i); }
    };
    return detail::window_mean(View{this}, lo, hi);
  }

  void trim() {
    // Keep what the next smoothing window and central difference can still touch.
    while (pos_base_ + window_ + 1 < smoothed_count_ && !positions_.empty()) {
      positions_.pop_front();
      ++pos_base_;
    }
    while (smooth_base_ + 2 < published_ && !smoothed_.empty()) {
      smoothed_.pop_front();
      ++smooth_base_;
    }
  }

  std::size_t half_;
  std::size_t window_;
  std::optional<PointerEvent> last_;
  double t0_ = 0.0;
  std::size_t grid_count_ = 0;
  std::deque<Vec2> positions_;
  std::size_t pos_base_ = 0;
  std::deque<Vec2> smoothed_;
  std::size_t smooth_base_ = 0;
  std::size_t smoothed_count_ = 0;
  std::size_t published_ = 0;
  std::optional<Vec2> latest_;
};

}  // namespace sonograin
