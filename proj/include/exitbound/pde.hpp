#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "exitbound/diffusion.hpp"
#include "exitbound/errors.hpp"
#include "exitbound/geometry.hpp"
#include "exitbound/grid.hpp"

namespace exitbound {

namespace detail {

inline std::string format_point(std::span<const double> p) {
    std::ostringstream os;
    os.precision(17);
    os << "(";
    for (std::size_t j = 0; j < p.size(); ++j) os << (j ? ", " : "") << p[j];
    os << ")";
    return os.str();
}

}  // namespace detail

/// Sparse system A v = rhs for the interior unknowns of L v = -1, v = 0 on
/// the boundary.
struct LinearSystem {
    std::shared_ptr<const Grid> grid;
    Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;
    Eigen::VectorXd rhs;
    /// Interior nodes where at least one axis used upwind drift.
    std::size_t upwind_nodes = 0;
};

/// Discretizes L v = sum_j f_j dv/dy_j + 1/2 sum_jk b_jk d2v/dy_j dy_k = -1.
///
/// Second derivatives use 3-point stencils (Shortley-Weller arms next to a
/// curved boundary), cross derivatives the 4-point diagonal stencil, and the
/// drift is centered unless |f_j| h > b_jj, where it switches to upwind.
inline LinearSystem assemble(std::shared_ptr<const Grid> grid, const DiffusionSpec& spec) {
    const std::size_t n = grid->dim();
    if (spec.n() != n) throw InputError("grid and diffusion differ in dimension");
    const std::size_t rows = grid->interior_count();
    const auto h = grid->spacing();

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(rows * (1 + 2 * n + 2 * n * (n - 1)));
    LinearSystem sys;
    sys.rhs = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(rows), -1.0);

    std::vector<double> p(n), f(n), b(n * n), scratch(n * spec.d());
    std::vector<double> row_coeffs;
    auto couple = [&](std::size_t row, std::size_t node, double c) {
        const auto col = grid->row(node);
        if (col >= 0 && c != 0.0) {
            triplets.emplace_back(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col), c);
        }
    };

    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t node = grid->node_of_row(r);
        grid->coordinates(node, p);
        try {
            spec.drift(p, f);
            spec.covariance(p, b, scratch);
        } catch (const DomainError& e) {
            throw DomainError(std::string(e.what()) + " at node " + detail::format_point(p));
        }

        double diag = 0.0;
        bool upwinded = false;
        for (std::size_t j = 0; j < n; ++j) {
            const double hm = grid->arm(node, j, -1);
            const double hp = grid->arm(node, j, +1);
            const double bjj = b[j * n + j];
            // 1/2 b_jj * 2/(hm+hp) * [(u+ - u0)/hp - (u0 - u-)/hm]
            double cm = bjj / (hm * (hm + hp));
            double cp = bjj / (hp * (hm + hp));
            double c0 = -(cm + cp);
            if (std::abs(f[j]) * h[j] > bjj) {
                upwinded = true;
                if (f[j] > 0.0) {
                    cp += f[j] / hp;
                    c0 -= f[j] / hp;
                } else {
                    cm -= f[j] / hm;
                    c0 += f[j] / hm;
                }
            } else {
                cp += f[j] * hm / (hp * (hm + hp));
                cm -= f[j] * hp / (hm * (hm + hp));
                c0 += f[j] * (hp - hm) / (hp * hm);
            }
            diag += c0;
            couple(r, grid->neighbor(node, j, -1), cm);
            couple(r, grid->neighbor(node, j, +1), cp);
        }
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = j + 1; k < n; ++k) {
                const double bjk = b[j * n + k];
                if (bjk == 0.0) continue;
                const double c = bjk / (4.0 * h[j] * h[k]);
                for (int sj : {-1, 1}) {
                    for (int sk : {-1, 1}) {
                        const std::size_t diag_node = grid->neighbor(grid->neighbor(node, j, sj), k, sk);
                        couple(r, diag_node, sj * sk * c);
                    }
                }
            }
        }
        triplets.emplace_back(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r), diag);
        if (upwinded) ++sys.upwind_nodes;
    }

    sys.matrix.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rows));
    sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
    sys.matrix.makeCompressed();
    sys.grid = std::move(grid);
    return sys;
}

struct SolverOptions {
    std::size_t direct_limit = 200'000;
    double tolerance = 1e-10;
    std::size_t max_iterations = 20'000;
};

/// Grid-sampled solution v of the mean-exit-time problem and its gradient.
class MeanExitField {
public:
    MeanExitField(std::shared_ptr<const Grid> grid, std::vector<double> values, double residual,
                  std::size_t iterations, std::size_t upwind_nodes)
        : grid_(std::move(grid)), values_(std::move(values)), residual_(residual), iterations_(iterations),
          upwind_nodes_(upwind_nodes) {
        compute_gradients();
    }

    [[nodiscard]] const Grid& grid() const noexcept { return *grid_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] double value(std::size_t node) const noexcept { return values_[node]; }
    [[nodiscard]] bool has_gradient(std::size_t node) const noexcept { return has_grad_[node] != 0; }
    [[nodiscard]] std::span<const double> gradient(std::size_t node) const noexcept {
        return std::span<const double>(grads_).subspan(node * grid_->dim(), grid_->dim());
    }
    [[nodiscard]] double residual() const noexcept { return residual_; }
    [[nodiscard]] std::size_t iterations() const noexcept { return iterations_; }
    [[nodiscard]] std::size_t upwind_nodes() const noexcept { return upwind_nodes_; }
    [[nodiscard]] double spacing() const noexcept { return grid_->max_spacing(); }

    /// Largest nodal value.
    [[nodiscard]] double max_value() const noexcept { return *std::max_element(values_.begin(), values_.end()); }
    [[nodiscard]] double min_value() const noexcept { return *std::min_element(values_.begin(), values_.end()); }

    /// Multilinear interpolation of v on the grid cell containing p.
    [[nodiscard]] double interpolate(std::span<const double> p) const {
        return interpolate_with([this](std::size_t node) { return values_[node]; }, p);
    }

    /// Multilinear interpolation of one gradient component (diagnostics only).
    [[nodiscard]] double interpolate_gradient(std::span<const double> p, std::size_t axis) const {
        return interpolate_with([this, axis](std::size_t node) { return grads_[node * grid_->dim() + axis]; }, p);
    }

private:
    template <typename NodeValue>
    double interpolate_with(NodeValue&& at, std::span<const double> p) const {
        const std::size_t n = grid_->dim();
        if (p.size() != n) throw InputError("interpolation point has the wrong dimension");
        std::size_t base = 0;
        std::vector<double> frac(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double lo = grid_->lower()[j];
            const double hi = grid_->upper()[j];
            if (!(p[j] >= lo && p[j] <= hi)) {
                throw InputError("interpolation query " + detail::format_point(p) + " outside grid hull");
            }
            const double t = (p[j] - lo) / grid_->spacing()[j];
            auto i = static_cast<std::size_t>(std::floor(t));
            i = std::min(i, grid_->resolution() - 2);
            frac[j] = std::clamp(t - static_cast<double>(i), 0.0, 1.0);
            base += i * grid_->stride(j);
        }
        double acc = 0.0;
        for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
            double w = 1.0;
            std::size_t node = base;
            for (std::size_t j = 0; j < n; ++j) {
                if (corner & (std::size_t{1} << j)) {
                    w *= frac[j];
                    node += grid_->stride(j);
                } else {
                    w *= 1.0 - frac[j];
                }
            }
            if (w != 0.0) acc += w * at(node);
        }
        return acc;
    }

    void compute_gradients() {
        const Grid& g = *grid_;
        const std::size_t n = g.dim();
        const std::size_t res = g.resolution();
        const bool ball = g.region().is_ball();
        grads_.assign(g.node_count() * n, 0.0);
        has_grad_.assign(g.node_count(), 0);
        for (std::size_t node = 0; node < g.node_count(); ++node) {
            const NodeKind kind = g.kind(node);
            if (kind == NodeKind::Exterior || (ball && kind == NodeKind::Boundary)) continue;
            has_grad_[node] = 1;
            for (std::size_t j = 0; j < n; ++j) {
                const double h = g.spacing()[j];
                const double u0 = values_[node];
                double grad = 0.0;
                if (kind == NodeKind::Interior) {
                    // Three-point derivative with (possibly unequal) arms; the
                    // boundary value at a short arm is zero.
                    const double hm = g.arm(node, j, -1);
                    const double hp = g.arm(node, j, +1);
                    const std::size_t nm = g.neighbor(node, j, -1);
                    const std::size_t np = g.neighbor(node, j, +1);
                    const double um = g.kind(nm) == NodeKind::Interior ? values_[nm] : 0.0;
                    const double up = g.kind(np) == NodeKind::Interior ? values_[np] : 0.0;
                    grad = (hm * hm * (up - u0) + hp * hp * (u0 - um)) / (hm * hp * (hm + hp));
                } else {
                    const std::size_t i = g.axis_index(node, j);
                    const std::size_t s = g.stride(j);
                    if (i == 0) {
                        grad = (-3.0 * u0 + 4.0 * values_[node + s] - values_[node + 2 * s]) / (2.0 * h);
                    } else if (i + 1 == res) {
                        grad = (3.0 * u0 - 4.0 * values_[node - s] + values_[node - 2 * s]) / (2.0 * h);
                    } else {
                        grad = (values_[node + s] - values_[node - s]) / (2.0 * h);
                    }
                }
                grads_[node * n + j] = grad;
            }
        }
    }

    std::shared_ptr<const Grid> grid_;
    std::vector<double> values_;
    std::vector<double> grads_;
    std::vector<unsigned char> has_grad_;
    double residual_;
    std::size_t iterations_;
    std::size_t upwind_nodes_;
};

/// Solves the assembled system; boundary and exterior nodes are set to 0.
inline MeanExitField solve_dirichlet(const LinearSystem& sys, const SolverOptions& opts = {}) {
    const auto rows = sys.matrix.rows();
    Eigen::VectorXd v;
    std::size_t iterations = 0;
    if (rows == 0) throw NumericalError("grid has no interior nodes");
    if (static_cast<std::size_t>(rows) <= opts.direct_limit) {
        Eigen::SparseMatrix<double> colmajor = sys.matrix;
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
        lu.analyzePattern(colmajor);
        lu.factorize(colmajor);
        if (lu.info() != Eigen::Success) throw NumericalError("sparse LU factorization failed: singular system");
        v = lu.solve(sys.rhs);
        if (lu.info() != Eigen::Success) throw NumericalError("sparse LU solve failed");
    } else {
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double, Eigen::RowMajor>, Eigen::DiagonalPreconditioner<double>> it;
        it.setTolerance(opts.tolerance);
        it.setMaxIterations(static_cast<Eigen::Index>(opts.max_iterations));
        it.compute(sys.matrix);
        v = it.solve(sys.rhs);
        iterations = static_cast<std::size_t>(it.iterations());
    }
    const double residual = (sys.matrix * v - sys.rhs).norm() / sys.rhs.norm();
    if (!std::isfinite(residual) || residual > opts.tolerance) {
        std::ostringstream os;
        os << "linear solve did not reach relative residual " << opts.tolerance << " (achieved " << residual << ")";
        throw NumericalError(os.str());
    }
    const Grid& g = *sys.grid;
    std::vector<double> values(g.node_count(), 0.0);
    for (std::size_t r = 0; r < g.interior_count(); ++r) values[g.node_of_row(r)] = v[static_cast<Eigen::Index>(r)];
    return MeanExitField(sys.grid, std::move(values), residual, iterations, sys.upwind_nodes);
}

/// Builds the grid, assembles and solves in one call.
inline MeanExitField solve_mean_exit_time(const Region& region, const DiffusionSpec& spec, std::size_t resolution,
                                          const SolverOptions& opts = {}) {
    auto grid = std::make_shared<const Grid>(region, resolution);
    return solve_dirichlet(assemble(grid, spec), opts);
}

/// Max over nodes of |dv/dy|.
inline double sup_grad_norm(const MeanExitField& field) {
    const Grid& g = field.grid();
    double best = 0.0;
    for (std::size_t node = 0; node < g.node_count(); ++node) {
        if (!field.has_gradient(node)) continue;
        double s = 0.0;
        for (double c : field.gradient(node)) s += c * c;
        best = std::max(best, std::sqrt(s));
    }
    return best;
}

/// Sup of |dv/dy| at the working resolution and at half the resolution.
struct SupReport {
    double fine = 0.0;
    double coarse = 0.0;
    double h_fine = 0.0;
    double h_coarse = 0.0;
};

/// Resolution of the next coarser nested grid (spacing doubled).
inline std::size_t coarser_resolution(std::size_t resolution) { return (resolution - 1) / 2 + 1; }

struct EllipticityReport {
    double min_eigenvalue = std::numeric_limits<double>::infinity();
    Vec argmin;
    std::size_t samples = 0;
    double threshold = 0.0;
    bool pass = false;
};

/// Smallest eigenvalue of a symmetric n x n matrix in row-major layout.
inline double min_symmetric_eigenvalue(std::span<const double> m, std::size_t n) {
    if (n == 1) return m[0];
    if (n == 2) {
        const double mean = 0.5 * (m[0] + m[3]);
        const double half_diff = 0.5 * (m[0] - m[3]);
        return mean - std::hypot(half_diff, m[1]);
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = m[j * n + k];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Radical inverse of `index` in `base` (Halton coordinate).
inline double radical_inverse(std::size_t index, std::size_t base) {
    double inv = 1.0 / static_cast<double>(base), f = inv, r = 0.0;
    while (index > 0) {
        r += f * static_cast<double>(index % base);
        index /= base;
        f *= inv;
    }
    return r;
}

/// Minimum eigenvalue of b = beta beta^T over Halton sample points in Q.
inline EllipticityReport check_ellipticity(const DiffusionSpec& spec, const Region& region, std::size_t n_samples,
                                           double lambda_min) {
    if (n_samples < 100) throw InputError("ellipticity check needs at least 100 samples");
    if (!(lambda_min > 0.0)) throw InputError("ellipticity threshold must be positive");
    const std::size_t n = region.dim();
    if (spec.n() != n) throw InputError("diffusion and region differ in dimension");
    static constexpr std::size_t kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    if (n > std::size(kPrimes)) throw InputError("ellipticity sampling supports at most 12 dimensions");
    auto [lo, hi] = region.bounding_box();
    EllipticityReport rep;
    rep.threshold = lambda_min;
    std::vector<double> p(n), b(n * n), scratch(n * spec.d());
    for (std::size_t index = 1; rep.samples < n_samples && index < 1000 * n_samples; ++index) {
        for (std::size_t j = 0; j < n; ++j) p[j] = lo[j] + (hi[j] - lo[j]) * radical_inverse(index, kPrimes[j]);
        if (!region.contains_unchecked(p)) continue;
        try {
            spec.covariance(p, b, scratch);
        } catch (const DomainError& e) {
            throw DomainError(std::string(e.what()) + " at sample point " + detail::format_point(p));
        }
        const double lam = min_symmetric_eigenvalue(b, n);
        if (lam < rep.min_eigenvalue) {
            rep.min_eigenvalue = lam;
            rep.argmin = p;
        }
        ++rep.samples;
    }
    rep.pass = rep.min_eigenvalue >= lambda_min;
    return rep;
}

}  // namespace exitbound
