#include "atvr/variation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace atvr {

std::string variation_method_name(VariationMethod m) {
    switch (m) {
        case VariationMethod::pgd: return "pgd";
        case VariationMethod::exact_closed_form: return "exact_closed_form";
        case VariationMethod::vertex_enum: return "vertex_enum";
        case VariationMethod::fast_lpv: return "fast_lpv";
    }
    throw std::logic_error("variation_method_name: bad enum");
}

namespace {

void ascent_step(Vec& x, const Vec& grad, Norm p, double step) {
    if (p == Norm::linf) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (grad[i] > 0.0)
                x[i] += step;
            else if (grad[i] < 0.0)
                x[i] -= step;
        }
        return;
    }
    const double gn = norm2(grad);
    if (gn <= 0.0) return;
    axpy(step / gn, grad, x);
}

void clip_to_box(Vec& x) {
    for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace

VariationEstimate variation_pgd(const Model& m, const Vec& x, const Ball& ball,
                                const AttackConfig& cfg, RandomSource& rng) {
    if (x.size() != m.input_dim()) throw std::invalid_argument("variation_pgd: dimension mismatch");
    VariationEstimate best;
    best.method = VariationMethod::pgd;
    if (ball.epsilon == 0.0) {
        best.x1 = x;
        best.x2 = x;
        return best;
    }
    const double step = cfg.step_size > 0.0 ? cfg.step_size : ball.epsilon / 9.0;
    best.value = -1.0;
    for (int r = 0; r < std::max(cfg.restarts, 1); ++r) {
        RandomSource rrng = rng.substream(static_cast<std::uint64_t>(r));
        Vec x1 = random_init(x, ball, rrng);
        Vec x2 = random_init(x, ball, rrng);
        if (cfg.clip_box) {
            clip_to_box(x1);
            clip_to_box(x2);
        }
        double v = 0.0;
        for (int s = 0; s < cfg.steps; ++s) {
            const VariationGrads g = variation_value_grads(m, x1, x2);
            v = g.value;
            if (!std::isfinite(v)) throw std::runtime_error("variation_pgd: non-finite objective");
            if (cfg.keep_best && v > best.value) {
                best.value = v;
                best.x1 = x1;
                best.x2 = x2;
            }
            ascent_step(x1, g.grad_x1, ball.p, step);
            ascent_step(x2, g.grad_x2, ball.p, step);
            x1 = project(x1, x, ball);
            x2 = project(x2, x, ball);
            if (cfg.clip_box) {
                clip_to_box(x1);
                clip_to_box(x2);
            }
        }
        // Final recompute, always a candidate.
        v = norm2(sub(extract_features(m, x1), extract_features(m, x2)));
        if (!std::isfinite(v)) throw std::runtime_error("variation_pgd: non-finite objective");
        if (v > best.value) {
            best.value = v;
            best.x1 = x1;
            best.x2 = x2;
        }
    }
    // Report the value recomputed from the stored witnesses.
    best.value = norm2(sub(extract_features(m, best.x1), extract_features(m, best.x2)));
    return best;
}

VariationEstimate variation_exact_linear(const Matrix& W, const Ball& ball) {
    if (W.empty()) throw std::invalid_argument("variation_exact_linear: empty matrix");
    const std::size_t n = W.cols();
    VariationEstimate out;
    if (ball.epsilon == 0.0) {
        out.method = ball.p == Norm::linf ? VariationMethod::vertex_enum
                                          : VariationMethod::exact_closed_form;
        out.x1.assign(n, 0.0);
        out.x2.assign(n, 0.0);
        return out;
    }
    switch (ball.p) {
        case Norm::l2: {
            const SvdResult svd = jacobi_svd(W);
            out.method = VariationMethod::exact_closed_form;
            out.value = 2.0 * ball.epsilon * svd.singular_values.front();
            out.x1.resize(n);
            out.x2.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double vi = svd.right_vectors(i, 0);
                out.x1[i] = ball.epsilon * vi;
                out.x2[i] = -ball.epsilon * vi;
            }
            return out;
        }
        case Norm::l1: {
            std::size_t best_col = 0;
            double best_norm = -1.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double cn = W.column_norm2(j);
                if (cn > best_norm) {
                    best_norm = cn;
                    best_col = j;
                }
            }
            out.method = VariationMethod::exact_closed_form;
            out.value = 2.0 * ball.epsilon * best_norm;
            out.x1.assign(n, 0.0);
            out.x2.assign(n, 0.0);
            out.x1[best_col] = ball.epsilon;
            out.x2[best_col] = -ball.epsilon;
            return out;
        }
        case Norm::linf: {
            if (n > 20)
                throw std::domain_error(
                    "variation_exact_linear: linf vertex enumeration limited to n <= 20; "
                    "use variation_pgd");
            // Gray-code walk over sign vectors with the first coordinate
            // pinned (s and -s give the same norm).
            const std::size_t d = W.rows();
            Vec s(n, 1.0);
            Vec ws(d, 0.0);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < n; ++j) ws[i] += W(i, j);
            Vec best_s = s;
            double best_sq = dot(ws, ws);
            const std::uint64_t count = n > 1 ? (1ULL << (n - 1)) : 1;
            std::uint64_t gray_prev = 0;
            for (std::uint64_t k = 1; k < count; ++k) {
                const std::uint64_t gray = k ^ (k >> 1);
                const std::uint64_t changed = gray ^ gray_prev;
                gray_prev = gray;
                std::size_t bit = 0;
                while (!((changed >> bit) & 1ULL)) ++bit;
                const std::size_t j = bit + 1;  // coordinate 0 stays +1
                const double delta = -2.0 * s[j];
                s[j] += delta;
                for (std::size_t i = 0; i < d; ++i) ws[i] += delta * W(i, j);
                const double sq = dot(ws, ws);
                if (sq > best_sq) {
                    best_sq = sq;
                    best_s = s;
                }
            }
            out.method = VariationMethod::vertex_enum;
            out.value = 2.0 * ball.epsilon * std::sqrt(best_sq);
            out.x1.resize(n);
            out.x2.resize(n);
            for (std::size_t j = 0; j < n; ++j) {
                out.x1[j] = ball.epsilon * best_s[j];
                out.x2[j] = -ball.epsilon * best_s[j];
            }
            return out;
        }
    }
    throw std::logic_error("variation_exact_linear: bad enum");
}

VariationBounds variation_bounds(const Matrix& W, const Ball& ball) {
    const SpectralStats stats = svd_spectrum(W);
    const double n = static_cast<double>(W.cols());
    VariationBounds out;
    switch (ball.p) {
        case Norm::l1:
        case Norm::l2:
            out.upper = 2.0 * ball.epsilon * stats.sigma_max;
            break;
        case Norm::linf:
            out.upper = 2.0 * ball.epsilon * std::sqrt(n) * stats.sigma_max;
            break;
    }
    // ||W delta|| >= sigma_min ||delta|| needs a trivial kernel.
    const bool kernel_trivial = W.cols() <= W.rows() && stats.sigma_min > 0.0;
    if (kernel_trivial) {
        if (ball.p == Norm::l1)
            out.lower = 2.0 * ball.epsilon * stats.sigma_min / std::sqrt(n);
        else
            out.lower = 2.0 * ball.epsilon * stats.sigma_min;
    }
    return out;
}

namespace {

VariationEstimate pick_union_max(std::vector<VariationEstimate> members) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < members.size(); ++i)
        if (members[i].value > members[best].value) best = i;
    VariationEstimate out = std::move(members[best]);
    out.member_index = best;
    return out;
}

}  // namespace

VariationEstimate union_variation(const Model& m, const Vec& x, const ThreatModel& tm,
                                  const AttackConfig& cfg, RandomSource& rng) {
    if (tm.members.empty()) throw std::invalid_argument("union_variation: empty threat model");
    std::vector<VariationEstimate> members;
    members.reserve(tm.members.size());
    std::vector<double> values;
    for (std::size_t i = 0; i < tm.members.size(); ++i) {
        RandomSource mrng = rng.substream(i);
        members.push_back(variation_pgd(m, x, tm.members[i], cfg, mrng));
        values.push_back(members.back().value);
    }
    VariationEstimate out = pick_union_max(std::move(members));
    if (values.size() > 1) out.member_values = std::move(values);
    return out;
}

VariationEstimate union_variation_exact(const Matrix& W, const ThreatModel& tm) {
    if (tm.members.empty()) throw std::invalid_argument("union_variation_exact: empty threat model");
    std::vector<VariationEstimate> members;
    std::vector<double> values;
    for (const Ball& b : tm.members) {
        members.push_back(variation_exact_linear(W, b));
        values.push_back(members.back().value);
    }
    VariationEstimate out = pick_union_max(std::move(members));
    if (values.size() > 1) out.member_values = std::move(values);
    return out;
}

DistanceOracle l2_distance() {
    DistanceOracle d;
    d.name = "l2";
    d.value = [](const Vec& a, const Vec& b) { return norm2(sub(a, b)); };
    d.grad_first = [](const Vec& a, const Vec& b) {
        Vec diff = sub(a, b);
        const double n = norm2(diff);
        if (n <= 0.0) return Vec(a.size(), 0.0);
        for (auto& v : diff) v /= n;
        return diff;
    };
    return d;
}

DistanceOracle random_projection_distance(std::size_t n, std::size_t proj_dim, std::uint64_t seed) {
    RandomSource rng(seed);
    auto proj = std::make_shared<Matrix>(proj_dim, n);
    for (auto& v : proj->data()) v = rng.normal() / std::sqrt(static_cast<double>(n));
    DistanceOracle d;
    d.name = "random_projection";
    d.value = [proj](const Vec& a, const Vec& b) { return norm2(proj->apply(sub(a, b))); };
    d.grad_first = [proj](const Vec& a, const Vec& b) {
        Vec r = proj->apply(sub(a, b));
        const double nr = norm2(r);
        if (nr <= 0.0) return Vec(a.size(), 0.0);
        for (auto& v : r) v /= nr;
        return proj->apply_transposed(r);
    };
    return d;
}

VariationEstimate fast_lpv(const Model& m, const DistanceOracle& dist, const Vec& x, double eps,
                           int steps, RandomSource& rng) {
    if (x.size() != m.input_dim()) throw std::invalid_argument("fast_lpv: dimension mismatch");
    if (steps <= 0) throw std::invalid_argument("fast_lpv: steps must be positive");

    auto checked_distance = [&](const Vec& a, const Vec& b) {
        const double v = dist.value(a, b);
        if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("fast_lpv: invalid distance");
        return v;
    };

    Vec x1 = x;
    Vec x2 = x;
    for (auto& v : x1) v += 0.01 * rng.normal();
    for (auto& v : x2) v += 0.01 * rng.normal();

    for (int i = 1; i <= steps; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(steps);
        const double tau = std::pow(10.0, frac);
        const double eta = eps * std::pow(0.1, frac);

        const VariationGrads vg = variation_value_grads(m, x1, x2);
        Vec g1 = vg.grad_x1;
        Vec g2 = vg.grad_x2;
        if (checked_distance(x1, x) > eps) axpy(-tau, dist.grad_first(x1, x), g1);
        if (checked_distance(x2, x) > eps) axpy(-tau, dist.grad_first(x2, x), g2);

        auto take_step = [&](Vec& xi, Vec& g) {
            const double gn = norm2(g);
            if (gn <= 1e-30) return;
            for (auto& v : g) v /= gn;
            Vec probe = xi;
            axpy(0.1, g, probe);
            const double slope = checked_distance(xi, probe) / 0.1;
            if (slope <= 1e-30) return;
            axpy(eta / slope, g, xi);
        };
        take_step(x1, g1);
        take_step(x2, g2);
    }

    VariationEstimate out;
    out.method = VariationMethod::fast_lpv;
    out.value = norm2(sub(extract_features(m, x1), extract_features(m, x2)));
    out.x1 = std::move(x1);
    out.x2 = std::move(x2);
    out.witness_distances = {checked_distance(out.x1, x), checked_distance(out.x2, x)};
    return out;
}

namespace {

struct InnerMin {
    double value = std::numeric_limits<double>::infinity();
    Vec x2;
};

// min over x2 in source(x) of ||h(x1) - h(x2)||, projected descent with the
// anchor and the euclidean projection of x1 as warm starts.
InnerMin inner_feature_min(const Model& m, const Vec& x1, const Vec& x, const ThreatModel& source,
                           const HausdorffConfig& cfg, RandomSource& rng) {
    InnerMin best;
    auto consider = [&](const Vec& x2) {
        const double v = norm2(sub(extract_features(m, x1), extract_features(m, x2)));
        if (v < best.value) {
            best.value = v;
            best.x2 = x2;
        }
    };
    for (std::size_t si = 0; si < source.members.size(); ++si) {
        const Ball& ball = source.members[si];
        RandomSource srng = rng.substream(si);
        consider(x);  // anchor is always feasible
        std::vector<Vec> starts;
        starts.push_back(project(x1, x, ball));
        for (int r = 1; r < std::max(cfg.inner_restarts, 1); ++r) {
            RandomSource rrng = srng.substream(static_cast<std::uint64_t>(r));
            starts.push_back(random_init(x, ball, rrng));
        }
        const double step0 = ball.epsilon > 0.0 ? ball.epsilon / 4.0 : 0.0;
        for (Vec x2 : starts) {
            consider(x2);
            if (step0 == 0.0) continue;
            double step = step0;
            for (int s = 0; s < cfg.inner_steps; ++s) {
                const VariationGrads g = variation_value_grads(m, x1, x2);
                const double gn = norm2(g.grad_x2);
                if (gn <= 1e-30) break;
                axpy(-step / gn, g.grad_x2, x2);
                x2 = project(x2, x, ball);
                consider(x2);
                step *= 0.85;
            }
        }
    }
    return best;
}

// A random point on the ball boundary; sidesteps the interior plateau where
// the inner minimum is zero and the ascent gradient vanishes.
Vec boundary_init(const Vec& anchor, const Ball& ball, RandomSource& rng) {
    Vec u = rng.normal_vec(anchor.size());
    Vec out = anchor;
    if (ball.p == Norm::linf) {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += u[i] >= 0.0 ? ball.epsilon : -ball.epsilon;
        return out;
    }
    const double un = ball_norm(u, ball.p);
    if (un > 0.0) axpy(ball.epsilon / un, u, out);
    return out;
}

}  // namespace

double hausdorff_estimate(const Model& m, const Vec& x, const ThreatModel& source,
                          const ThreatModel& target, const HausdorffConfig& cfg,
                          RandomSource& rng) {
    if (source.members.empty() || target.members.empty())
        throw std::invalid_argument("hausdorff_estimate: empty threat model");
    double best = 0.0;
    for (std::size_t ti = 0; ti < target.members.size(); ++ti) {
        const Ball& ball = target.members[ti];
        RandomSource trng = rng.substream(ti);
        const double step = cfg.outer_step_size > 0.0 ? cfg.outer_step_size : ball.epsilon / 9.0;
        for (int r = 0; r < std::max(cfg.outer_restarts, 1); ++r) {
            RandomSource rrng = trng.substream(static_cast<std::uint64_t>(r));
            Vec x1 = r % 2 == 0 ? boundary_init(x, ball, rrng) : random_init(x, ball, rrng);
            RandomSource irng = rrng.substream(1ULL << 32);
            for (int s = 0; s < cfg.outer_steps; ++s) {
                const InnerMin inner = inner_feature_min(m, x1, x, source, cfg, irng);
                best = std::max(best, inner.value);
                if (inner.value <= 0.0) {
                    // Danskin direction undefined; nudge via feature ascent
                    // against the anchor instead.
                    const VariationGrads g = variation_value_grads(m, x1, x);
                    if (norm2(g.grad_x1) <= 1e-30) break;
                    ascent_step(x1, g.grad_x1, ball.p, step);
                } else {
                    const VariationGrads g = variation_value_grads(m, x1, inner.x2);
                    ascent_step(x1, g.grad_x1, ball.p, step);
                }
                x1 = project(x1, x, ball);
            }
            const InnerMin final_inner = inner_feature_min(m, x1, x, source, cfg, irng);
            best = std::max(best, final_inner.value);
        }
        // Sampling refinement: plain random outer points.
        RandomSource samp = trng.substream(0xfadeULL);
        for (int s = 0; s < cfg.samples; ++s) {
            RandomSource srng = samp.substream(static_cast<std::uint64_t>(s));
            const Vec x1 = random_init(x, ball, srng);
            RandomSource irng = srng.substream(7);
            best = std::max(best, inner_feature_min(m, x1, x, source, cfg, irng).value);
        }
    }
    return best;
}

DatasetVariation dataset_variation(const Model& m, const Dataset& data, const ThreatModel& tm,
                                   const AttackConfig& cfg, VariationMethod method,
                                   std::uint64_t seed, int threads) {
    if (data.size() == 0) throw std::invalid_argument("dataset_variation: empty dataset");
    DatasetVariation out;
    out.per_sample.resize(data.size());

    if (method == VariationMethod::exact_closed_form || method == VariationMethod::vertex_enum) {
        if (!m.is_linear_extractor())
            throw std::invalid_argument("dataset_variation: exact methods need a linear extractor");
        // Anchor independent: compute once, shift witnesses per sample.
        const VariationEstimate base = union_variation_exact(m.linear().W, tm);
        for (std::size_t i = 0; i < data.size(); ++i) {
            VariationEstimate e = base;
            e.x1 = add(data.points[i], base.x1);
            e.x2 = add(data.points[i], base.x2);
            out.per_sample[i] = std::move(e);
        }
    } else if (method == VariationMethod::pgd) {
        RandomSource root(seed);
        parallel_for(data.size(), threads, [&](std::size_t i) {
            RandomSource srng = root.substream(i);
            out.per_sample[i] = union_variation(m, data.points[i], tm, cfg, srng);
        });
    } else {
        throw std::invalid_argument("dataset_variation: unsupported method");
    }

    double total = 0.0;
    for (const auto& e : out.per_sample) total += e.value;
    out.mean = total / static_cast<double>(data.size());
    return out;
}

}  // namespace atvr
