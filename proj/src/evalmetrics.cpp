// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/evalmetrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace splatlab {

namespace {

constexpr std::uint32_t kLeafSize = 8;

struct Best {
    std::size_t index = std::numeric_limits<std::size_t>::max();
    double dist2      = std::numeric_limits<double>::infinity();

    void offer(std::size_t i, double d2) {
        if (d2 < dist2 || (d2 == dist2 && i < index)) {
            index = i;
            dist2 = d2;
        }
    }
};

struct CellHash {
    std::size_t operator()(const std::array<std::int64_t, 3> &c) const {
        std::uint64_t h = 1469598103934665603ull;
        for (auto v : c) {
            h ^= static_cast<std::uint64_t>(v);
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

double
mean_nearest_distance(const std::vector<Vec3> &queries, const KdTree &tree) {
    std::vector<double> d(queries.size());
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = std::sqrt(tree.nearest(queries[i]).second);
    double sum = 0.0;
    for (double v : d) sum += v;
    return sum / static_cast<double>(queries.size());
}

} // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    for (const auto &p : points_) require(p.allFinite(), "KdTree: non-finite point");
    require(points_.size() < std::numeric_limits<std::uint32_t>::max(), "KdTree: too many points");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
}

int
KdTree::build(std::uint32_t begin, std::uint32_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (std::uint32_t i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    if (hi(axis) == lo(axis)) return id; // all points coincide

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double pa = points_[a](axis), pb = points_[b](axis);
                         return pa < pb || (pa == pb && a < b);
                     });
    const double split = points_[order_[mid]](axis);
    const int left     = build(begin, mid);
    const int right    = build(mid, end);
    nodes_[id].axis    = axis;
    nodes_[id].split   = split;
    nodes_[id].left    = left;
    nodes_[id].right   = right;
    return id;
}

std::pair<std::size_t, double>
KdTree::nearest(const Vec3 &query) const {
    require(!points_.empty(), "KdTree::nearest: empty tree");
    Best best;
    // Explicit stack of (node, lower bound on squared distance).
    std::vector<std::pair<int, double>> stack{{0, 0.0}};
    while (!stack.empty()) {
        const auto [id, bound] = stack.back();
        stack.pop_back();
        if (bound > best.dist2) continue;
        const Node &node = nodes_[id];
        if (node.axis < 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                best.offer(order_[i], (points_[order_[i]] - query).squaredNorm());
            }
            continue;
        }
        const double diff = query(node.axis) - node.split;
        const int near = diff < 0 ? node.left : node.right;
        const int far  = diff < 0 ? node.right : node.left;
        stack.emplace_back(far, diff * diff);
        stack.emplace_back(near, 0.0);
    }
    return {best.index, best.dist2};
}

std::vector<std::pair<std::size_t, double>>
KdTree::k_nearest(const Vec3 &query, std::size_t k) const {
    std::vector<std::pair<std::size_t, double>> heap; // max-heap on (dist2, index)
    auto worse = [](const std::pair<std::size_t, double> &a, const std::pair<std::size_t, double> &b) {
        return a.second < b.second || (a.second == b.second && a.first < b.first);
    };
    if (k == 0 || points_.empty()) return heap;
    std::vector<std::pair<int, double>> stack{{0, 0.0}};
    while (!stack.empty()) {
        const auto [id, bound] = stack.back();
        stack.pop_back();
        if (heap.size() == k && bound > heap.front().second) continue;
        const Node &node = nodes_[id];
        if (node.axis < 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const std::pair<std::size_t, double> cand{order_[i], (points_[order_[i]] - query).squaredNorm()};
                if (heap.size() < k) {
                    heap.push_back(cand);
                    std::push_heap(heap.begin(), heap.end(), worse);
                } else if (worse(cand, heap.front())) {
                    std::pop_heap(heap.begin(), heap.end(), worse);
                    heap.back() = cand;
                    std::push_heap(heap.begin(), heap.end(), worse);
                }
            }
            continue;
        }
        const double diff = query(node.axis) - node.split;
        stack.emplace_back(diff < 0 ? node.right : node.left, diff * diff);
        stack.emplace_back(diff < 0 ? node.left : node.right, 0.0);
    }
    std::sort_heap(heap.begin(), heap.end(), worse);
    return heap;
}

PointCloud
fuse_depth(const std::vector<Camera> &cameras,
           const std::vector<Image> &depths,
           const std::vector<Image> &acc_alphas,
           double threshold,
           double cell_size,
           const std::vector<Image> &colors) {
    require(cameras.size() == depths.size() && cameras.size() == acc_alphas.size(),
            "fuse_depth: view and map counts differ");
    require(colors.empty() || colors.size() == cameras.size(), "fuse_depth: color count differs");
    require(cell_size >= 0.0, "fuse_depth: negative cell size");

    PointCloud cloud;
    std::unordered_set<std::array<std::int64_t, 3>, CellHash> occupied;
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const Camera &cam = cameras[v];
        const Image &d = depths[v], &a = acc_alphas[v];
        require(d.width == cam.width && d.height == cam.height && d.channels == 1 && a.same_shape(d),
                "fuse_depth: map shape does not match camera");
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                const double z = d.at(x, y);
                if (!(a.at(x, y) > threshold) || !(z > 0.0) || !std::isfinite(z)) continue;
                const Vec3 p = cam.to_world(cam.backproject(x + 0.5, y + 0.5, z));
                if (cell_size > 0.0) {
                    const std::array<std::int64_t, 3> cell{static_cast<std::int64_t>(std::floor(p.x() / cell_size)),
                                                           static_cast<std::int64_t>(std::floor(p.y() / cell_size)),
                                                           static_cast<std::int64_t>(std::floor(p.z() / cell_size))};
                    if (!occupied.insert(cell).second) continue;
                }
                cloud.points.push_back(p);
                if (!colors.empty()) cloud.colors.push_back(colors[v].rgb(x, y));
            }
        }
    }
    if (cloud.points.empty()) {
        throw NumericalError("fuse_depth: no pixel above the alpha threshold (degenerate reconstruction)");
    }
    return cloud;
}

ChamferResult
chamfer(const PointCloud &reconstruction, const PointCloud &reference) {
    require(!reconstruction.points.empty() && !reference.points.empty(), "chamfer: empty point cloud");
    const KdTree ref_tree(reference.points), rec_tree(reconstruction.points);
    ChamferResult r;
    r.d_to_s = mean_nearest_distance(reconstruction.points, ref_tree);
    r.s_to_d = mean_nearest_distance(reference.points, rec_tree);
    r.mean   = 0.5 * (r.d_to_s + r.s_to_d);
    return r;
}

double
psnr(const Image &image, const Image &gt) {
    require(image.same_shape(gt), "psnr: shape mismatch");
    require(!image.empty(), "psnr: empty image");
    double sum = 0.0;
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        require(image[i] >= 0.0 && image[i] <= 1.0 && gt[i] >= 0.0 && gt[i] <= 1.0,
                "psnr: values must lie in [0, 1]");
        const double e = image[i] - gt[i];
        sum += e * e;
    }
    const double mse = sum / static_cast<double>(image.data.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

ReconstructionMetrics
evaluate_reconstruction(const std::vector<GaussianPrimitive> &prims,
                        const Dataset &dataset,
                        const RenderOptions &options,
                        double cell_size,
                        double acc_threshold) {
    require(!dataset.cameras.empty() && dataset.gt.size() == dataset.cameras.size(),
            "evaluate_reconstruction: dataset has no views");
    std::vector<Image> depths, accs, gt_depths, gt_hits;
    ReconstructionMetrics m;
    for (std::size_t v = 0; v < dataset.cameras.size(); ++v) {
        RenderOutputs r = render(prims, dataset.cameras[v], {}, options);
        // Displayed colors are clamped to the valid range before scoring.
        for (double &c : r.color.data) c = std::clamp(c, 0.0, 1.0);
        m.psnr_per_view.push_back(psnr(r.color, dataset.gt[v].color));
        depths.push_back(std::move(r.depth));
        accs.push_back(std::move(r.acc_alpha));
        gt_depths.push_back(dataset.gt[v].depth);
        gt_hits.push_back(dataset.gt[v].hit);
    }
    m.mean_psnr = std::accumulate(m.psnr_per_view.begin(), m.psnr_per_view.end(), 0.0) /
                  static_cast<double>(m.psnr_per_view.size());
    const PointCloud rec = fuse_depth(dataset.cameras, depths, accs, acc_threshold, cell_size);
    const PointCloud ref = fuse_depth(dataset.cameras, gt_depths, gt_hits, 0.5, cell_size);
    m.chamfer               = chamfer(rec, ref);
    m.reconstruction_points = rec.points.size();
    m.reference_points      = ref.points.size();
    return m;
}

} // namespace splatlab
