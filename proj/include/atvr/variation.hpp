#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "atvr/attack.hpp"
#include "atvr/dataset.hpp"
#include "atvr/model.hpp"
#include "atvr/threat_model.hpp"

namespace atvr {

enum class VariationMethod { pgd, exact_closed_form, vertex_enum, fast_lpv };

std::string variation_method_name(VariationMethod m);

/// A variation measurement: the value is always re-derivable from the
/// witnesses as ||h(x1) - h(x2)||_2. For unions, value is the max over the
/// member values and the witnesses come from the argmax member.
struct VariationEstimate {
    double value = 0.0;
    Vec x1;
    Vec x2;
    VariationMethod method = VariationMethod::pgd;
    std::size_t member_index = 0;          // argmax member for unions
    std::vector<double> member_values;     // filled for unions
    std::vector<double> witness_distances; // fast_lpv only: d(x1,x), d(x2,x)
};

/// Simultaneous projected gradient ascent on ||h(x1) - h(x2)||_2 with both
/// iterates random-initialized in the ball. keep_best returns the best pair
/// seen; otherwise the final iterates are reported.
VariationEstimate variation_pgd(const Model& m, const Vec& x, const Ball& ball,
                                const AttackConfig& cfg, RandomSource& rng);

/// Exact per-point variation of a linear extractor (anchor independent):
///   l2:   2 eps sigma_max(W)
///   l1:   2 eps max_j ||col_j(W)||_2
///   linf: 2 eps max over sign vectors of ||W s||_2 (enumerated, n <= 20)
/// Witnesses are reported around the origin. Throws std::domain_error for
/// linf with n > 20 (use variation_pgd instead).
VariationEstimate variation_exact_linear(const Matrix& W, const Ball& ball);

/// Spectral bounds for a linear extractor. The lower bound is absent when the
/// kernel of W is nontrivial (wide or rank-deficient W).
struct VariationBounds {
    std::optional<double> lower;
    double upper = 0.0;
};
VariationBounds variation_bounds(const Matrix& W, const Ball& ball);

/// Max over union members of the per-member estimate.
VariationEstimate union_variation(const Model& m, const Vec& x, const ThreatModel& tm,
                                  const AttackConfig& cfg, RandomSource& rng);
VariationEstimate union_variation_exact(const Matrix& W, const ThreatModel& tm);

/// Differentiable distance for Fast-LPV: value d(a, b) >= 0 with d(a, a) = 0,
/// and the gradient of d(a, b) in its first argument.
struct DistanceOracle {
    std::string name;
    std::function<double(const Vec&, const Vec&)> value;
    std::function<Vec(const Vec&, const Vec&)> grad_first;
};

DistanceOracle l2_distance();
/// ||P(a - b)||_2 for a fixed seeded random map P; a stand-in for perceptual
/// distances at desk scale.
DistanceOracle random_projection_distance(std::size_t n, std::size_t proj_dim, std::uint64_t seed);

/// Lagrangian-penalty variation under a pluggable distance: penalty weight
/// 10^(i/n), step size eps * 0.1^(i/n), gaussian 0.01 init, steps normalized
/// by the directional derivative of the distance. The constraint is soft, so
/// witnesses may exceed eps slightly; their distances are reported.
VariationEstimate fast_lpv(const Model& m, const DistanceOracle& dist, const Vec& x, double eps,
                           int steps, RandomSource& rng);

struct HausdorffConfig {
    int outer_steps = 60;
    int outer_restarts = 5;
    double outer_step_size = 0.0;  // 0: member eps / 9
    int inner_steps = 20;
    int inner_restarts = 5;
    int samples = 8;  // extra random outer starts evaluated without ascent
    std::uint64_t seed = 0;
};

/// Estimates max over x1 in target(x) of min over x2 in source(x) of
/// ||h(x1) - h(x2)||_2: PGD ascent on x1 with an inner projected descent
/// (anchor and the euclidean projection of x1 serve as inner candidates).
double hausdorff_estimate(const Model& m, const Vec& x, const ThreatModel& source,
                          const ThreatModel& target, const HausdorffConfig& cfg, RandomSource& rng);

struct DatasetVariation {
    double mean = 0.0;
    std::vector<VariationEstimate> per_sample;
};

/// Mean per-sample variation over a dataset. method pgd runs union_variation
/// per sample; the exact methods require a linear extractor and share the
/// anchor-independent value across samples.
DatasetVariation dataset_variation(const Model& m, const Dataset& data, const ThreatModel& tm,
                                   const AttackConfig& cfg, VariationMethod method,
                                   std::uint64_t seed, int threads = 1);

}  // namespace atvr
