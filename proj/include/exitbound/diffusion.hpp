#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "exitbound/errors.hpp"
#include "exitbound/expr.hpp"

namespace exitbound {

/// Homogeneous Ito diffusion dy = f(y) dt + beta(y) dw in R^n driven by a
/// d-dimensional Wiener process.
class DiffusionSpec {
public:
    DiffusionSpec(std::size_t n, std::size_t d, std::vector<Expr> drift, std::vector<Expr> diffusion,
                  std::string label = {})
        : n_(n), d_(d), drift_(std::move(drift)), diffusion_(std::move(diffusion)), label_(std::move(label)) {
        if (n_ == 0 || d_ == 0) throw InputError("diffusion needs n >= 1 and d >= 1");
        if (drift_.size() != n_) throw InputError("drift must have n = " + std::to_string(n_) + " components");
        if (diffusion_.size() != n_ * d_) {
            throw InputError("diffusion must be an n x d = " + std::to_string(n_) + " x " + std::to_string(d_) +
                             " matrix");
        }
        for (const auto& e : drift_) check_dim(e);
        for (const auto& e : diffusion_) check_dim(e);
        constant_drift_ = true;
        constant_diffusion_ = true;
        for (const auto& e : drift_) constant_drift_ = constant_drift_ && e.is_constant();
        for (const auto& e : diffusion_) constant_diffusion_ = constant_diffusion_ && e.is_constant();
    }

    /// Parses drift strings (n) and diffusion rows (n rows of d strings).
    static DiffusionSpec from_strings(const std::vector<std::string>& drift,
                                      const std::vector<std::vector<std::string>>& diffusion,
                                      std::string label = {}) {
        const std::size_t n = drift.size();
        if (n == 0) throw InputError("drift must have at least one component");
        if (diffusion.size() != n) throw InputError("diffusion must have one row per drift component");
        const std::size_t d = diffusion.front().size();
        std::vector<Expr> f, beta;
        for (const auto& s : drift) f.push_back(Expr::parse(s, n));
        for (const auto& row : diffusion) {
            if (row.size() != d || d == 0) throw InputError("diffusion rows must all have the same nonzero length");
            for (const auto& s : row) beta.push_back(Expr::parse(s, n));
        }
        return DiffusionSpec(n, d, std::move(f), std::move(beta), std::move(label));
    }

    [[nodiscard]] std::size_t n() const noexcept { return n_; }
    [[nodiscard]] std::size_t d() const noexcept { return d_; }
    [[nodiscard]] const std::string& label() const noexcept { return label_; }
    [[nodiscard]] bool constant_drift() const noexcept { return constant_drift_; }
    [[nodiscard]] bool constant_diffusion() const noexcept { return constant_diffusion_; }
    [[nodiscard]] const Expr& drift_expr(std::size_t j) const { return drift_[j]; }
    [[nodiscard]] const Expr& diffusion_expr(std::size_t j, std::size_t k) const { return diffusion_[j * d_ + k]; }

    void drift(std::span<const double> y, std::span<double> out) const {
        for (std::size_t j = 0; j < n_; ++j) out[j] = drift_[j].eval(y);
    }

    /// beta(y) in row-major n x d layout.
    void diffusion(std::span<const double> y, std::span<double> out) const {
        for (std::size_t i = 0; i < diffusion_.size(); ++i) out[i] = diffusion_[i].eval(y);
    }

    /// b = beta beta^T in row-major n x n layout; `scratch` holds n*d values.
    void covariance(std::span<const double> y, std::span<double> out, std::span<double> scratch) const {
        diffusion(y, scratch);
        for (std::size_t j = 0; j < n_; ++j) {
            for (std::size_t k = 0; k <= j; ++k) {
                double s = 0.0;
                for (std::size_t m = 0; m < d_; ++m) s += scratch[j * d_ + m] * scratch[k * d_ + m];
                out[j * n_ + k] = s;
                out[k * n_ + j] = s;
            }
        }
    }

    [[nodiscard]] std::vector<double> covariance(std::span<const double> y) const {
        std::vector<double> out(n_ * n_), scratch(n_ * d_);
        covariance(y, out, scratch);
        return out;
    }

private:
    void check_dim(const Expr& e) const {
        if (e.dim() != n_) throw InputError("coefficient expression parsed for the wrong dimension");
    }

    std::size_t n_;
    std::size_t d_;
    std::vector<Expr> drift_;
    std::vector<Expr> diffusion_;
    std::string label_;
    bool constant_drift_ = false;
    bool constant_diffusion_ = false;
};

}  // namespace exitbound
