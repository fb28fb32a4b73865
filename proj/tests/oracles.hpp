#pragma once

// Independent reference solutions used only by the tests.

#include <cmath>
#include <functional>
#include <vector>

namespace exitbound::oracle {

/// Composite Simpson rule on [a, b] with `panels` (even) subintervals.
inline double simpson(const std::function<double(double)>& g, double a, double b, int panels = 2000) {
    const double h = (b - a) / panels;
    double s = g(a) + g(b);
    for (int i = 1; i < panels; ++i) s += g(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Mean exit time of the 1D diffusion dy = f dt + sigma dw from (lo, hi),
/// from the scale-function representation
///   v(x) = C S(x) - int_lo^x s(y) int_lo^y 2 / (sigma^2 s(z)) dz dy,
///   s(y) = exp(-int_lo^y 2 f / sigma^2),  S(x) = int_lo^x s,
/// with C fixed by v(hi) = 0. Tabulated on a fine trapezoid grid.
class MeanExitTime1D {
public:
    MeanExitTime1D(std::function<double(double)> drift, double sigma, double lo, double hi, int cells = 200000)
        : lo_(lo), h_((hi - lo) / cells), values_(static_cast<std::size_t>(cells) + 1) {
        const double s2 = sigma * sigma;
        std::vector<double> phi(values_.size()), s(values_.size()), inner(values_.size()), scale(values_.size()),
            outer(values_.size());
        phi[0] = 0.0;
        for (int i = 1; i <= cells; ++i) {
            const double x0 = lo + (i - 1) * h_, x1 = lo + i * h_, xm = 0.5 * (x0 + x1);
            // Simpson on each cell for the drift integral.
            phi[i] = phi[i - 1] + h_ / 6.0 * (2.0 * drift(x0) + 8.0 * drift(xm) + 2.0 * drift(x1)) / s2;
        }
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::exp(-phi[i]);
        inner[0] = 0.0;
        scale[0] = 0.0;
        outer[0] = 0.0;
        for (std::size_t i = 1; i < s.size(); ++i) {
            inner[i] = inner[i - 1] + 0.5 * h_ * (2.0 / (s2 * s[i - 1]) + 2.0 / (s2 * s[i]));
            scale[i] = scale[i - 1] + 0.5 * h_ * (s[i - 1] + s[i]);
            outer[i] = outer[i - 1] + 0.5 * h_ * (s[i - 1] * inner[i - 1] + s[i] * inner[i]);
        }
        const double c = outer.back() / scale.back();
        for (std::size_t i = 0; i < s.size(); ++i) values_[i] = c * scale[i] - outer[i];
    }

    [[nodiscard]] double operator()(double x) const {
        const double t = (x - lo_) / h_;
        auto i = static_cast<std::size_t>(t);
        if (i + 1 >= values_.size()) return values_.back();
        const double w = t - static_cast<double>(i);
        return (1.0 - w) * values_[i] + w * values_[i + 1];
    }

private:
    double lo_;
    double h_;
    std::vector<double> values_;
};

/// Mean exit time of standard Brownian motion with constant drift mu from (0, 1).
inline double constant_drift_exit_time(double mu, double x) {
    return ((1.0 - std::exp(-2.0 * mu * x)) / (1.0 - std::exp(-2.0 * mu)) - x) / mu;
}

/// Mean exit time from the unit disk of dy = -y dt + dw (2D):
///   v(r) = int_r^1 (exp(s^2) - 1) / s ds,
/// tabulated by cellwise Simpson and interpolated linearly.
class DiskOuExitTime {
public:
    explicit DiskOuExitTime(int cells = 100000) : h_(1.0 / cells), table_(static_cast<std::size_t>(cells) + 1) {
        auto g = [](double s) { return s == 0.0 ? 0.0 : std::expm1(s * s) / s; };
        table_.back() = 0.0;
        for (int i = cells - 1; i >= 0; --i) {
            const double a = i * h_, b = a + h_;
            table_[i] = table_[i + 1] + simpson(g, a, b, 2);
        }
    }

    [[nodiscard]] double operator()(double r) const {
        const double t = r / h_;
        auto i = static_cast<std::size_t>(t);
        if (i + 1 >= table_.size()) return table_.back();
        const double w = t - static_cast<double>(i);
        return (1.0 - w) * table_[i] + w * table_[i + 1];
    }

private:
    double h_;
    std::vector<double> table_;
};

}  // namespace exitbound::oracle
