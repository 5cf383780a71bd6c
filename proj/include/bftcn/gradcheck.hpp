#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "bftcn/errors.hpp"

namespace bftcn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    bool passed = false;
};

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Denominator floor for the relative error, so entries that are zero
    /// analytically are judged on absolute error.
    double scale_floor = 1e-6;
};

/// Compare an analytic gradient of f at x against central differences.
/// f is evaluated on a scratch copy of x; only the listed coordinates are
/// checked (all of them when `indices` is empty).
inline GradCheckReport gradient_check(const std::function<double(std::span<const double>)>& f,
                                      std::span<const double> x, std::span<const double> analytic,
                                      GradCheckOptions opts = {}, std::span<const std::size_t> indices = {}) {
    if (x.size() != analytic.size()) throw ShapeError("gradient_check: gradient size differs from input size");
    std::vector<double> probe(x.begin(), x.end());
    GradCheckReport report;

    auto check_one = [&](std::size_t i) {
        const double orig = probe[i];
        probe[i] = orig + opts.step;
        const double up = f(probe);
        probe[i] = orig - opts.step;
        const double down = f(probe);
        probe[i] = orig;
        const double numeric = (up - down) / (2.0 * opts.step);
        if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
            throw NumericError("gradient_check: non-finite value at index " + std::to_string(i));
        }
        const double abs_err = std::abs(numeric - analytic[i]);
        const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), opts.scale_floor});
        const double rel = abs_err / scale;
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (rel > report.max_rel_error || report.checked == 0) {
            report.max_rel_error = std::max(report.max_rel_error, rel);
            if (rel >= report.max_rel_error) report.worst_index = i;
        }
        ++report.checked;
    };

    if (indices.empty()) {
        for (std::size_t i = 0; i < x.size(); ++i) check_one(i);
    } else {
        for (std::size_t i : indices) check_one(i);
    }
    report.passed = report.max_rel_error < opts.tolerance;
    return report;
}

}  // namespace bftcn
