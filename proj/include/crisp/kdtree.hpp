#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Core>

namespace crisp {

/// Static 3-D k-d tree, rebuilt from scratch per cloud. Self-contained:
/// build() copies the points into leaf order so queries touch contiguous
/// memory and the tree stays valid if the source vector moves.
class KdTree3 {
 public:
  static constexpr int kLeafSize = 16;

  KdTree3() = default;

  void build(const std::vector<Eigen::Vector3d>& points) {
    const int n = static_cast<int>(points.size());
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.clear();
    nodes_.reserve(2 * (n / kLeafSize + 2));
    if (n > 0) build_node(points, 0, n);
    pts_.resize(n);
    for (int i = 0; i < n; ++i) pts_[i] = points[order_[i]];
  }

  std::size_t size() const { return pts_.size(); }

  /// Indices (into the original point array) of all points with
  /// |p - query| <= radius. Appends to out after clearing it.
  void radius_search(const Eigen::Vector3d& query, double radius,
                     std::vector<int>& out) const {
    out.clear();
    if (nodes_.empty()) return;
    search_node(0, query, radius * radius, out);
  }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;    // bounding box
    std::int32_t axis = -1;    // -1 marks a leaf
    std::int32_t begin = 0;    // leaf: range into pts_/order_
    std::int32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
  };

  int build_node(const std::vector<Eigen::Vector3d>& points, int begin,
                 int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Eigen::Vector3d lo = points[order_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points[order_[i]]);
      hi = hi.cwiseMax(points[order_[i]]);
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (end - begin <= kLeafSize) {
      nodes_[id].begin = begin;
      nodes_[id].end = end;
      return id;
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid,
                     order_.begin() + end, [&](int a, int b) {
                       return points[a][axis] < points[b][axis];
                     });
    nodes_[id].axis = axis;
    const int left = build_node(points, begin, mid);
    const int right = build_node(points, mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search_node(int id, const Eigen::Vector3d& q, double r2,
                   std::vector<int>& out) const {
    const Node& node = nodes_[id];
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double d = std::max({node.lo[a] - q[a], q[a] - node.hi[a], 0.0});
      d2 += d * d;
    }
    if (d2 > r2) return;
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        if ((pts_[i] - q).squaredNorm() <= r2) out.push_back(order_[i]);
      }
      return;
    }
    search_node(node.left, q, r2, out);
    search_node(node.right, q, r2, out);
  }

  std::vector<Eigen::Vector3d> pts_;  // leaf order
  std::vector<int> order_;            // leaf order -> original index
  std::vector<Node> nodes_;
};

}  // namespace crisp
