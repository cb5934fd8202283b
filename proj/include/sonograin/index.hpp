#pragma once

#include <cmath>
#include <vector>

#include "sonograin/corpus.hpp"
#include "sonograin/error.hpp"
#include "sonograin/kdtree.hpp"
#include "sonograin/vec2.hpp"

namespace sonograin {

// Fragments embed as (vx, vy, loudness / mean_ratio); queries as (vx, vy, |v|^2).
// Both third coordinates are in mm^2/s^2, so the retrieval distance is plain 3D Euclidean.
struct FeaturePoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline FeaturePoint embed_fragment(const Fragment& f, double mean_ratio) {
  return {f.velocity.x, f.velocity.y, f.loudness / mean_ratio};
}

inline FeaturePoint embed_query(Vec2 v_in) { return {v_in.x, v_in.y, v_in.squared_norm()}; }

/// Velocity-loudness retrieval distance with the loudness term squared:
/// sqrt(|v_in - v_j|^2 + (|v_in|^2 - a_j / mean_ratio)^2).
inline double distance(Vec2 v_in, const Fragment& fragment, double mean_ratio) {
  const double dx = v_in.x - fragment.velocity.x;
  const double dy = v_in.y - fragment.velocity.y;
  const double dz = v_in.squared_norm() - fragment.loudness / mean_ratio;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

using Neighbor = KdTree<3>::Neighbor;

class GrainIndex {
 public:
  GrainIndex() = default;

  static GrainIndex embed(const Corpus& corpus) {
    if (corpus.fragments.empty()) throw BuildError("cannot index an empty corpus");
    if (!(corpus.mean_ratio > 0.0)) throw BuildError("corpus mean_ratio must be positive");
    std::vector<KdTree<3>::Point> points;
    std::vector<std::size_t> ids;
    points.reserve(corpus.size());
    ids.reserve(corpus.size());
    for (const Fragment& f : corpus.fragments) {
      const FeaturePoint p = embed_fragment(f, corpus.mean_ratio);
      points.push_back({p.x, p.y, p.z});
      ids.push_back(f.index);
    }
    GrainIndex index;
    index.tree_ = KdTree<3>(std::move(points), std::move(ids));
    return index;
  }

  std::size_t size() const { return tree_.size(); }
  std::size_t depth() const { return tree_.depth(); }

  /// The min(k, size) fragments closest to v_in, ascending by distance then fragment index.
  std::vector<Neighbor> knn(Vec2 v_in, std::size_t k) const { return tree_.knn(to_point(v_in), k); }

  void knn(Vec2 v_in, std::size_t k, std::vector<Neighbor>& out) const { tree_.knn(to_point(v_in), k, out); }

 private:
  static KdTree<3>::Point to_point(Vec2 v) {
    const FeaturePoint q = embed_query(v);
    return {q.x, q.y, q.z};
  }

  KdTree<3> tree_;
};

}  // namespace sonograin
