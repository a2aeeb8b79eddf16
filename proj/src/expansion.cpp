#include "atvr/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace atvr {

ExpansionFit fit_min_slope(const std::vector<std::pair<double, double>>& points, double zero_tol) {
    ExpansionFit fit;
    for (const auto& [x, y] : points) {
        if (x <= zero_tol) {
            ++fit.excluded_count;
            continue;
        }
        fit.points.push_back({x, y});
        fit.slope = std::max(fit.slope, y / x);
    }
    if (fit.points.empty())
        throw std::invalid_argument("fit_min_slope: no points above the zero threshold");
    return fit;
}

namespace {

// sqrt-n factor from Holder: n^(1/2 - 1/p), with p = inf giving sqrt(n).
double holder_factor(Norm p, double n) {
    switch (p) {
        case Norm::l1: return 1.0;  // handled separately by the formulas
        case Norm::l2: return 1.0;
        case Norm::linf: return std::sqrt(n);
    }
    throw std::logic_error("holder_factor: bad enum");
}

void check_formula(const SlopeFormula& f, bool same_norm) {
    if (f.eps1 <= 0.0) throw std::invalid_argument("slope formula: eps1 must be positive");
    if (f.eps2 < 0.0) throw std::invalid_argument("slope formula: eps2 must be nonnegative");
    if (f.condition_bound < 1.0)
        throw std::invalid_argument("slope formula: condition bound must be >= 1");
    if (f.n == 0) throw std::invalid_argument("slope formula: n must be positive");
    if (same_norm && f.eps2 < f.eps1)
        throw std::invalid_argument("slope formula: same-norm case needs eps2 >= eps1");
}

}  // namespace

double theoretical_slope_same_norm(const SlopeFormula& f) {
    if (f.p != f.q) throw std::invalid_argument("theoretical_slope_same_norm: p != q");
    check_formula(f, true);
    const double n = static_cast<double>(f.n);
    const double ratio = f.condition_bound * f.eps2 / f.eps1;
    switch (f.p) {
        case Norm::l1: return std::sqrt(n) * ratio;
        case Norm::l2: return ratio;
        case Norm::linf: return holder_factor(Norm::linf, n) * ratio;
    }
    throw std::logic_error("theoretical_slope_same_norm: bad enum");
}

double theoretical_slope_cross_norm(const SlopeFormula& f) {
    check_formula(f, false);
    if (f.p == f.q) {
        SlopeFormula nested = f;
        nested.eps2 = std::max(f.eps1, f.eps2);
        return theoretical_slope_same_norm(nested);
    }
    const double n = static_cast<double>(f.n);
    const double B = f.condition_bound;
    const double e1 = f.eps1, e2 = f.eps2;
    const double hq = holder_factor(Norm::linf, n);  // n^(1/2 - 1/q) at q = inf

    if (f.p == Norm::l1 && f.q == Norm::l2) return std::sqrt(n) * B * std::max(e2, e1) / e1;
    if (f.p == Norm::l1 && f.q == Norm::linf) return std::sqrt(n) * B * std::max(hq * e2, e1) / e1;
    if (f.p == Norm::l2 && f.q == Norm::l1) return B * std::max(e2, e1) / e1;
    if (f.p == Norm::l2 && f.q == Norm::linf) return B * std::max(hq * e2, e1) / e1;
    if (f.p == Norm::linf && (f.q == Norm::l1 || f.q == Norm::l2))
        return B * std::max(e2, std::sqrt(n) * e1) / e1;
    throw std::invalid_argument("theoretical_slope_cross_norm: unsupported (p, q)");
}

double predict_target_loss(double source_loss, double source_variation, double rho, double sigma_g,
                           double slope) {
    if (source_loss < 0.0 || source_variation < 0.0 || rho < 0.0 || sigma_g < 0.0)
        throw std::invalid_argument("predict_target_loss: inputs must be nonnegative");
    if (slope < 1.0) throw std::invalid_argument("predict_target_loss: slope must be >= 1");
    return source_loss + rho * sigma_g * slope * source_variation;
}

}  // namespace atvr
