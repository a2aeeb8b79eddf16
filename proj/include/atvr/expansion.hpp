#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "atvr/threat_model.hpp"

namespace atvr {

/// rho for softmax cross entropy w.r.t. the l2 norm on logits:
/// ||softmax(z) - onehot(y)||_2 < sqrt(2) everywhere.
inline const double kSoftmaxCeLipschitz = 1.4142135623730951;

/// Minimum-slope linear fit y <= slope * x over (source, target) variation
/// pairs, clamped to slope >= 1.
struct ExpansionFit {
    double slope = 1.0;
    std::vector<std::pair<double, double>> points;  // retained points only
    std::size_t excluded_count = 0;                 // dropped near-zero-source points
};

ExpansionFit fit_min_slope(const std::vector<std::pair<double, double>>& points,
                           double zero_tol = 1e-8);

/// Inputs to the closed-form slopes for linear extractors with bounded
/// condition number. p is the source norm, q the extra target-member norm.
struct SlopeFormula {
    Norm p = Norm::l2;
    Norm q = Norm::l2;
    double eps1 = 0.0;  // source radius
    double eps2 = 0.0;  // target radius
    std::size_t n = 0;  // input dimension
    double condition_bound = 1.0;
};

/// Same-norm nested balls (eps2 >= eps1):
///   p=1: sqrt(n) B eps2/eps1, p=2: B eps2/eps1, p=inf: sqrt(n) B eps2/eps1.
double theoretical_slope_same_norm(const SlopeFormula& f);

/// Source lp(eps1) to the union lp(eps1) | lq(eps2); the six-case table.
/// p == q falls back to the same-norm slope at radius max(eps1, eps2).
double theoretical_slope_cross_norm(const SlopeFormula& f);

/// source_loss + rho * sigma_g * slope * source_variation.
double predict_target_loss(double source_loss, double source_variation, double rho, double sigma_g,
                           double slope);

}  // namespace atvr
