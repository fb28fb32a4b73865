#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "exitbound/errors.hpp"
#include "exitbound/geometry.hpp"

namespace exitbound {

enum class NodeKind : std::uint8_t { Interior, Boundary, Exterior };

/// Uniform tensor grid over the bounding box of a region.
///
/// Interval and box faces coincide with grid lines. For a ball, the grid
/// nodes outside Q that neighbor an interior node along an axis are the
/// boundary nodes, and every interior node stores the exact distance to the
/// sphere along each axis direction (its Shortley-Weller arms, at most h).
class Grid {
public:
    static constexpr std::size_t kDefaultNodeCap = 8'000'000;

    Grid(Region region, std::size_t resolution, std::size_t node_cap = kDefaultNodeCap)
        : region_(std::move(region)), n_(region_.dim()), resolution_(resolution) {
        if (resolution < 8) throw InputError("grid resolution must be at least 8 nodes per axis");
        std::size_t total = 1;
        for (std::size_t j = 0; j < n_; ++j) {
            if (total > node_cap / resolution) throw InputError("grid node count exceeds the configured cap");
            total *= resolution;
        }
        auto [lo, hi] = region_.bounding_box();
        lo_ = lo;
        hi_ = hi;
        h_.resize(n_);
        for (std::size_t j = 0; j < n_; ++j) h_[j] = (hi_[j] - lo_[j]) / static_cast<double>(resolution - 1);
        stride_.resize(n_);
        std::size_t s = 1;
        for (std::size_t j = 0; j < n_; ++j) {
            stride_[j] = s;
            s *= resolution;
        }
        node_count_ = total;
        classify();
    }

    [[nodiscard]] const Region& region() const noexcept { return region_; }
    [[nodiscard]] std::size_t dim() const noexcept { return n_; }
    [[nodiscard]] std::size_t resolution() const noexcept { return resolution_; }
    [[nodiscard]] std::size_t node_count() const noexcept { return node_count_; }
    [[nodiscard]] std::size_t interior_count() const noexcept { return row_to_node_.size(); }
    [[nodiscard]] std::span<const double> spacing() const noexcept { return h_; }
    [[nodiscard]] double max_spacing() const noexcept { return *std::max_element(h_.begin(), h_.end()); }
    [[nodiscard]] std::span<const double> lower() const noexcept { return lo_; }
    [[nodiscard]] std::span<const double> upper() const noexcept { return hi_; }
    [[nodiscard]] std::size_t stride(std::size_t axis) const noexcept { return stride_[axis]; }

    [[nodiscard]] NodeKind kind(std::size_t node) const noexcept { return kinds_[node]; }
    /// Equation row of an interior node, or -1.
    [[nodiscard]] std::int64_t row(std::size_t node) const noexcept { return node_to_row_[node]; }
    [[nodiscard]] std::size_t node_of_row(std::size_t r) const noexcept { return row_to_node_[r]; }

    [[nodiscard]] std::size_t axis_index(std::size_t node, std::size_t axis) const noexcept {
        return (node / stride_[axis]) % resolution_;
    }

    [[nodiscard]] double coordinate(std::size_t axis, std::size_t i) const noexcept {
        if (i + 1 == resolution_) return hi_[axis];
        return lo_[axis] + static_cast<double>(i) * h_[axis];
    }

    void coordinates(std::size_t node, std::span<double> out) const noexcept {
        for (std::size_t j = 0; j < n_; ++j) out[j] = coordinate(j, axis_index(node, j));
    }

    [[nodiscard]] Vec coordinates(std::size_t node) const {
        Vec p(n_);
        coordinates(node, p);
        return p;
    }

    /// Distance from interior node to its neighbor value location along
    /// axis in direction sign: h, or the shorter arm to the boundary.
    [[nodiscard]] double arm(std::size_t node, std::size_t axis, int sign) const noexcept {
        const auto r = static_cast<std::size_t>(node_to_row_[node]);
        return arms_[(r * n_ + axis) * 2 + (sign > 0 ? 1 : 0)];
    }

    /// Node index of the axis neighbor (caller guarantees it exists).
    [[nodiscard]] std::size_t neighbor(std::size_t node, std::size_t axis, int sign) const noexcept {
        return sign > 0 ? node + stride_[axis] : node - stride_[axis];
    }

private:
    void classify() {
        kinds_.assign(node_count_, NodeKind::Exterior);
        node_to_row_.assign(node_count_, -1);
        std::vector<double> p(n_);
        const bool ball = region_.is_ball();
        for (std::size_t node = 0; node < node_count_; ++node) {
            bool on_edge = false;
            for (std::size_t j = 0; j < n_; ++j) {
                const std::size_t i = axis_index(node, j);
                on_edge = on_edge || i == 0 || i + 1 == resolution_;
            }
            if (!ball) {
                kinds_[node] = on_edge ? NodeKind::Boundary : NodeKind::Interior;
                continue;
            }
            coordinates(node, p);
            if (!on_edge && region_.contains_unchecked(p)) kinds_[node] = NodeKind::Interior;
        }
        for (std::size_t node = 0; node < node_count_; ++node) {
            if (kinds_[node] != NodeKind::Interior) continue;
            node_to_row_[node] = static_cast<std::int64_t>(row_to_node_.size());
            row_to_node_.push_back(node);
        }
        arms_.assign(row_to_node_.size() * n_ * 2, 0.0);
        for (std::size_t r = 0; r < row_to_node_.size(); ++r) {
            const std::size_t node = row_to_node_[r];
            coordinates(node, p);
            for (std::size_t j = 0; j < n_; ++j) {
                for (int sign : {-1, 1}) {
                    const std::size_t nb = neighbor(node, j, sign);
                    double a = h_[j];
                    if (ball && kinds_[nb] != NodeKind::Interior) {
                        kinds_[nb] = NodeKind::Boundary;
                        a = std::min(h_[j], region_.axis_distance(p, j, sign));
                    }
                    arms_[(r * n_ + j) * 2 + (sign > 0 ? 1 : 0)] = a;
                }
            }
        }
    }

    Region region_;
    std::size_t n_;
    std::size_t resolution_;
    std::size_t node_count_ = 0;
    Vec lo_, hi_, h_;
    std::vector<std::size_t> stride_;
    std::vector<NodeKind> kinds_;
    std::vector<std::int64_t> node_to_row_;
    std::vector<std::size_t> row_to_node_;
    std::vector<double> arms_;
};

}  // namespace exitbound
