#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "exitbound/errors.hpp"

namespace exitbound {

using Vec = std::vector<double>;

struct Interval {
    double lo;
    double hi;
};

struct Box {
    Vec lo;
    Vec hi;
};

struct Ball {
    Vec center;
    double radius;
};

/// Bounded open region Q in R^n. Membership is strict, so a point on the
/// boundary counts as having left the region.
///
/// Immutable after construction.
class Region {
public:
    explicit Region(Interval iv) : shape_(iv), dim_(1) {
        if (!(iv.lo < iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi)) {
            throw InputError("interval requires finite lo < hi");
        }
    }

    explicit Region(Box box) : dim_(box.lo.size()) {
        if (box.lo.empty() || box.lo.size() != box.hi.size()) {
            throw InputError("box lo/hi must be nonempty and of equal dimension");
        }
        for (std::size_t j = 0; j < box.lo.size(); ++j) {
            if (!(box.lo[j] < box.hi[j]) || !std::isfinite(box.lo[j]) || !std::isfinite(box.hi[j])) {
                throw InputError("box requires finite lo < hi in every coordinate");
            }
        }
        shape_ = std::move(box);
    }

    explicit Region(Ball ball) : dim_(ball.center.size()) {
        if (ball.center.size() < 2) {
            throw InputError("ball requires dimension >= 2 (use an interval in 1D)");
        }
        if (!(ball.radius > 0.0) || !std::isfinite(ball.radius)) {
            throw InputError("ball radius must be positive and finite");
        }
        shape_ = std::move(ball);
    }

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }

    [[nodiscard]] std::string kind() const {
        switch (shape_.index()) {
            case 0: return "interval";
            case 1: return "box";
            default: return "ball";
        }
    }

    [[nodiscard]] bool is_ball() const noexcept { return std::holds_alternative<Ball>(shape_); }
    [[nodiscard]] const Ball* as_ball() const noexcept { return std::get_if<Ball>(&shape_); }
    [[nodiscard]] const Interval* as_interval() const noexcept { return std::get_if<Interval>(&shape_); }
    [[nodiscard]] const Box* as_box() const noexcept { return std::get_if<Box>(&shape_); }

    /// Axis-aligned bounding box as (lo, hi).
    [[nodiscard]] std::pair<Vec, Vec> bounding_box() const {
        if (const auto* iv = as_interval()) return {{iv->lo}, {iv->hi}};
        if (const auto* box = as_box()) return {box->lo, box->hi};
        const auto& b = std::get<Ball>(shape_);
        Vec lo(dim_), hi(dim_);
        for (std::size_t j = 0; j < dim_; ++j) {
            lo[j] = b.center[j] - b.radius;
            hi[j] = b.center[j] + b.radius;
        }
        return {lo, hi};
    }

    /// True iff the point lies strictly inside Q.
    [[nodiscard]] bool contains(std::span<const double> p) const {
        check_dim(p);
        return contains_unchecked(p);
    }

    /// True iff the point lies in the closure of Q.
    [[nodiscard]] bool in_closure(std::span<const double> p) const {
        check_dim(p);
        if (const auto* iv = as_interval()) return iv->lo <= p[0] && p[0] <= iv->hi;
        if (const auto* box = as_box()) {
            for (std::size_t j = 0; j < dim_; ++j) {
                if (p[j] < box->lo[j] || p[j] > box->hi[j]) return false;
            }
            return true;
        }
        const auto& b = std::get<Ball>(shape_);
        return squared_radius(b, p) <= b.radius * b.radius;
    }

    /// Euclidean distance from p to the boundary of Q, for p inside or outside.
    [[nodiscard]] double boundary_distance(std::span<const double> p) const {
        check_dim(p);
        if (const auto* iv = as_interval()) {
            if (p[0] <= iv->lo) return iv->lo - p[0];
            if (p[0] >= iv->hi) return p[0] - iv->hi;
            return std::min(p[0] - iv->lo, iv->hi - p[0]);
        }
        if (const auto* box = as_box()) {
            double outside2 = 0.0;
            double inside = std::numeric_limits<double>::infinity();
            bool is_outside = false;
            for (std::size_t j = 0; j < dim_; ++j) {
                const double below = box->lo[j] - p[j];
                const double above = p[j] - box->hi[j];
                const double excess = std::max({below, above, 0.0});
                if (excess > 0.0 || below == 0.0 || above == 0.0) is_outside = true;
                outside2 += excess * excess;
                inside = std::min({inside, -below, -above});
            }
            return is_outside ? std::sqrt(outside2) : inside;
        }
        const auto& b = std::get<Ball>(shape_);
        return std::abs(std::sqrt(squared_radius(b, p)) - b.radius);
    }

    /// Fraction s in [0, 1] along the segment from `from` (inside) to `to`
    /// (not inside) at which the segment first meets the boundary.
    [[nodiscard]] double segment_exit_fraction(std::span<const double> from, std::span<const double> to) const {
        if (const auto* iv = as_interval()) {
            const double dx = to[0] - from[0];
            if (dx == 0.0) return 1.0;
            const double face = dx > 0.0 ? iv->hi : iv->lo;
            return std::clamp((face - from[0]) / dx, 0.0, 1.0);
        }
        if (const auto* box = as_box()) {
            double s = 1.0;
            for (std::size_t j = 0; j < dim_; ++j) {
                const double dx = to[j] - from[j];
                if (dx > 0.0 && to[j] >= box->hi[j]) s = std::min(s, (box->hi[j] - from[j]) / dx);
                if (dx < 0.0 && to[j] <= box->lo[j]) s = std::min(s, (box->lo[j] - from[j]) / dx);
            }
            return std::clamp(s, 0.0, 1.0);
        }
        // |from - c + s (to - from)|^2 = r^2, take the root in [0, 1].
        const auto& b = std::get<Ball>(shape_);
        double aa = 0.0, bb = 0.0, cc = -b.radius * b.radius;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double u = from[j] - b.center[j];
            const double dx = to[j] - from[j];
            aa += dx * dx;
            bb += 2.0 * u * dx;
            cc += u * u;
        }
        if (aa == 0.0) return 1.0;
        const double disc = std::max(bb * bb - 4.0 * aa * cc, 0.0);
        const double q = -0.5 * (bb + std::copysign(std::sqrt(disc), bb));
        // Roots q/aa and cc/q; the exit root is the nonnegative one.
        double s = 1.0;
        for (double root : {q / aa, q != 0.0 ? cc / q : 1.0}) {
            if (root >= 0.0) s = std::min(s, root);
        }
        return std::clamp(s, 0.0, 1.0);
    }

    /// Distance from an interior point to the boundary moving along axis
    /// `axis` in direction `sign` (+1 or -1). Infinite if the ray never leaves.
    [[nodiscard]] double axis_distance(std::span<const double> p, std::size_t axis, int sign) const {
        if (const auto* iv = as_interval()) return sign > 0 ? iv->hi - p[0] : p[0] - iv->lo;
        if (const auto* box = as_box()) return sign > 0 ? box->hi[axis] - p[axis] : p[axis] - box->lo[axis];
        const auto& b = std::get<Ball>(shape_);
        double off_axis2 = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            if (j == axis) continue;
            const double u = p[j] - b.center[j];
            off_axis2 += u * u;
        }
        const double half_chord2 = b.radius * b.radius - off_axis2;
        if (half_chord2 <= 0.0) return 0.0;
        const double half_chord = std::sqrt(half_chord2);
        const double u = p[axis] - b.center[axis];
        return sign > 0 ? half_chord - u : half_chord + u;
    }

    /// Nearest point of the boundary to p, for p at or just across it.
    void snap_to_boundary(std::span<double> p) const {
        if (const auto* iv = as_interval()) {
            p[0] = (p[0] - iv->lo < iv->hi - p[0]) ? iv->lo : iv->hi;
            return;
        }
        if (const auto* box = as_box()) {
            std::size_t best = 0;
            double best_gap = std::numeric_limits<double>::infinity();
            double face = 0.0;
            for (std::size_t j = 0; j < dim_; ++j) {
                p[j] = std::clamp(p[j], box->lo[j], box->hi[j]);
                for (double f : {box->lo[j], box->hi[j]}) {
                    if (std::abs(p[j] - f) < best_gap) {
                        best_gap = std::abs(p[j] - f);
                        best = j;
                        face = f;
                    }
                }
            }
            p[best] = face;
            return;
        }
        const auto& b = std::get<Ball>(shape_);
        const double r = std::sqrt(squared_radius(b, p));
        if (r == 0.0) {
            p[0] = b.center[0] + b.radius;
            return;
        }
        std::size_t major = 0;
        for (std::size_t j = 0; j < dim_; ++j) {
            p[j] = b.center[j] + (p[j] - b.center[j]) * (b.radius / r);
            if (std::abs(p[j] - b.center[j]) > std::abs(p[major] - b.center[major])) major = j;
        }
        // Rounding may leave the projection strictly inside.
        const double outward = p[major] >= b.center[major] ? std::numeric_limits<double>::infinity()
                                                            : -std::numeric_limits<double>::infinity();
        while (contains_unchecked(p)) p[major] = std::nextafter(p[major], outward);
    }

    [[nodiscard]] bool contains_unchecked(std::span<const double> p) const {
        if (const auto* iv = as_interval()) return iv->lo < p[0] && p[0] < iv->hi;
        if (const auto* box = as_box()) {
            for (std::size_t j = 0; j < dim_; ++j) {
                if (!(box->lo[j] < p[j] && p[j] < box->hi[j])) return false;
            }
            return true;
        }
        const auto& b = std::get<Ball>(shape_);
        return squared_radius(b, p) < b.radius * b.radius;
    }

private:
    static double squared_radius(const Ball& b, std::span<const double> p) {
        double r2 = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double u = p[j] - b.center[j];
            r2 += u * u;
        }
        return r2;
    }

    void check_dim(std::span<const double> p) const {
        if (p.size() != dim_) {
            throw InputError("point has dimension " + std::to_string(p.size()) + ", region has dimension " +
                             std::to_string(dim_));
        }
    }

    std::variant<Interval, Box, Ball> shape_;
    std::size_t dim_;
};

}  // namespace exitbound
