#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace sonograin {

/// Exact k-nearest-neighbour search over Euclidean points in Dim dimensions.
///
/// Nodes split at the median of the axis with the widest spread; leaves hold at most
/// kLeafSize points. Construction orders points by (coordinate, id) so the tree shape
/// is a pure function of the input. Queries return the k smallest distances, ties
/// broken by the smaller id.
template <std::size_t Dim, class Scalar = double>
class KdTree {
 public:
  using Point = std::array<Scalar, Dim>;

  struct Neighbor {
    std::size_t id;
    Scalar distance;

    friend bool operator<(const Neighbor& a, const Neighbor& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
    }
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
  };

  static constexpr std::size_t kLeafSize = 16;

  KdTree() = default;

  KdTree(std::vector<Point> points, std::vector<std::size_t> ids)
      : points_(std::move(points)), ids_(std::move(ids)) {
    if (points_.size() != ids_.size()) throw std::invalid_argument("points and ids differ in length");
    if (points_.empty()) return;
    std::vector<std::uint32_t> order(points_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    depth_ = 0;
    build(order, 0, order.size(), 1);

    // Store points in leaf order for cache-friendly scans.
    std::vector<Point> p(points_.size());
    std::vector<std::size_t> id(ids_.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      p[i] = points_[order[i]];
      id[i] = ids_[order[i]];
    }
    points_ = std::move(p);
    ids_ = std::move(id);
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  // Levels on the longest root-to-leaf path; a single leaf has depth 1.
  std::size_t depth() const { return depth_; }

  /// Writes the min(k, size) nearest neighbours into out, ascending by (distance, id).
  /// out is reused as heap storage, so repeated queries do not allocate once it has grown.
  void knn(const Point& query, std::size_t k, std::vector<Neighbor>& out) const {
    out.clear();
    if (k == 0 || nodes_.empty()) return;
    k = std::min(k, points_.size());
    search(0, query, k, out);
    std::sort_heap(out.begin(), out.end());
  }

  std::vector<Neighbor> knn(const Point& query, std::size_t k) const {
    std::vector<Neighbor> out;
    out.reserve(std::min(k, points_.size()));
    knn(query, k, out);
    return out;
  }

  static Scalar euclidean(const Point& a, const Point& b) {
    Scalar sum = 0;
    for (std::size_t d = 0; d < Dim; ++d) {
      const Scalar diff = a[d] - b[d];
      sum += diff * diff;
    }
    return std::sqrt(sum);
  }

 private:
  struct Node {
    std::uint32_t begin = 0, end = 0;
    std::int32_t axis = -1;  // -1 marks a leaf
    Scalar split = 0;
    std::uint32_t left = 0, right = 0;
  };

  std::uint32_t build(std::vector<std::uint32_t>& order, std::size_t begin, std::size_t end, std::size_t level) {
    const auto self = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(end)});
    depth_ = std::max(depth_, level);
    if (end - begin <= kLeafSize) return self;

    Point lo, hi;
    lo.fill(std::numeric_limits<Scalar>::infinity());
    hi.fill(-std::numeric_limits<Scalar>::infinity());
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t d = 0; d < Dim; ++d) {
        lo[d] = std::min(lo[d], points_[order[i]][d]);
        hi[d] = std::max(hi[d], points_[order[i]][d]);
      }
    std::size_t axis = 0;
    for (std::size_t d = 1; d < Dim; ++d)
      if (hi[d] - lo[d] > hi[axis] - lo[axis]) axis = d;

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const Scalar ca = points_[a][axis], cb = points_[b][axis];
                       return ca < cb || (ca == cb && ids_[a] < ids_[b]);
                     });
    const Scalar split = points_[order[mid]][axis];
    const std::uint32_t left = build(order, begin, mid, level + 1);
    const std::uint32_t right = build(order, mid, end, level + 1);
    Node& n = nodes_[self];
    n.axis = static_cast<std::int32_t>(axis);
    n.split = split;
    n.left = left;
    n.right = right;
    return self;
  }

  void offer(std::vector<Neighbor>& heap, std::size_t k, Neighbor candidate) const {
    if (heap.size() < k) {
      heap.push_back(candidate);
      std::push_heap(heap.begin(), heap.end());
    } else if (candidate < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = candidate;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search(std::uint32_t index, const Point& query, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[index];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i)
        offer(heap, k, {ids_[i], euclidean(query, points_[i])});
      return;
    }
    const Scalar diff = query[static_cast<std::size_t>(node.axis)] - node.split;
    const std::uint32_t near = diff < 0 ? node.left : node.right;
    const std::uint32_t far = diff < 0 ? node.right : node.left;
    search(near, query, k, heap);
    // Every point across the plane is at least |diff| away. Equal distances are still
    // visited because a smaller id there may win the tie.
    if (heap.size() < k || std::sqrt(diff * diff) <= heap.front().distance) search(far, query, k, heap);
  }

  std::vector<Point> points_;
  std::vector<std::size_t> ids_;
  std::vector<Node> nodes_;
  std::size_t depth_ = 0;
};

}  // namespace sonograin
