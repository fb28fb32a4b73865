#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace exitbound {

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }

    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    std::size_t count = 0;
};

/// Sample mean and standard error (n-1 denominator), two passes with
/// compensated sums.
inline MeanSe mean_and_se(std::span<const double> xs) noexcept {
    MeanSe r;
    r.count = xs.size();
    if (xs.empty()) return r;
    CompensatedSum s;
    for (double x : xs) s.add(x);
    r.mean = s.value() / static_cast<double>(xs.size());
    if (xs.size() < 2) return r;
    CompensatedSum ss;
    for (double x : xs) {
        const double d = x - r.mean;
        ss.add(d * d);
    }
    const double var = ss.value() / static_cast<double>(xs.size() - 1);
    r.se = std::sqrt(var / static_cast<double>(xs.size()));
    return r;
}

/// Least-squares slope of log(err) against log(step).
inline double fitted_order(std::span<const double> steps, std::span<const double> errors) noexcept {
    const std::size_t n = steps.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(steps[i]);
        my += std::log(errors[i]);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(steps[i]) - mx;
        sxy += dx * (std::log(errors[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

}  // namespace exitbound
