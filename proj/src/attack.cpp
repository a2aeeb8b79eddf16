#include "atvr/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace atvr {

namespace {

double softplus(double t) {
    // log(1 + e^t), stable for large |t|
    return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

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

// Clamping toward an in-box anchor never leaves the ball.
void clip_to_box(Vec& x) {
    for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
}

AttackResult attack_single_ball(const Model& m, const Vec& x, std::size_t y, const Ball& ball,
                                const AttackConfig& cfg, RandomSource& rng, double clean_loss) {
    if (cfg.steps <= 0 || ball.epsilon == 0.0) return AttackResult{x, clean_loss};
    const double step = cfg.step_size > 0.0 ? cfg.step_size : ball.epsilon / 9.0;

    AttackResult best{x, cfg.keep_best ? clean_loss : -std::numeric_limits<double>::infinity()};
    for (int r = 0; r < std::max(cfg.restarts, 1); ++r) {
        RandomSource rrng = rng.substream(static_cast<std::uint64_t>(r));
        Vec xa = random_init(x, ball, rrng);
        if (cfg.clip_box) clip_to_box(xa);
        double loss = ce_loss(forward(m, xa).logits, y).value;
        if (cfg.keep_best && loss > best.loss) best = {xa, loss};
        for (int s = 0; s < cfg.steps; ++s) {
            const Vec g = grad_input(m, xa, y);
            ascent_step(xa, g, ball.p, step);
            xa = project(xa, x, ball);
            if (cfg.clip_box) clip_to_box(xa);
            loss = ce_loss(forward(m, xa).logits, y).value;
            if (!std::isfinite(loss)) throw std::runtime_error("pgd_attack: non-finite loss");
            if (cfg.keep_best && loss > best.loss) best = {xa, loss};
        }
        if (!cfg.keep_best && loss > best.loss) best = {xa, loss};
    }
    return best;
}

}  // namespace

AttackResult pgd_attack(const Model& m, const Vec& x, std::size_t y, const ThreatModel& tm,
                        const AttackConfig& cfg, RandomSource& rng) {
    if (x.size() != m.input_dim()) throw std::invalid_argument("pgd_attack: dimension mismatch");
    if (y >= m.num_classes()) throw std::invalid_argument("pgd_attack: label out of range");
    if (tm.members.empty()) throw std::invalid_argument("pgd_attack: empty threat model");

    const double clean_loss = ce_loss(forward(m, x).logits, y).value;
    if (!std::isfinite(clean_loss)) throw std::runtime_error("pgd_attack: non-finite loss");

    AttackResult best{x, -std::numeric_limits<double>::infinity()};
    for (std::size_t mi = 0; mi < tm.members.size(); ++mi) {
        RandomSource mrng = rng.substream(mi);
        const AttackResult r =
            attack_single_ball(m, x, y, tm.members[mi], cfg, mrng, clean_loss);
        if (r.loss > best.loss) best = r;
    }
    return best;
}

AttackResult pgd_attack(const Model& m, const Vec& x, std::size_t y, const ThreatModel& tm,
                        const AttackConfig& cfg) {
    RandomSource rng(cfg.seed);
    return pgd_attack(m, x, y, tm, cfg, rng);
}

namespace {

// Effective logit map of a binary linear model: logits = M x + c.
void binary_linear_map(const Model& m, Matrix& M, Vec& c) {
    if (!m.is_linear_extractor())
        throw std::invalid_argument("exact_adv_loss_linear: extractor must be linear");
    if (m.num_classes() != 2)
        throw std::invalid_argument("exact_adv_loss_linear: model must be binary");
    const auto& ex = m.linear();
    if (m.identity_classifier) {
        M = ex.W;
        c = ex.b;
    } else {
        M = m.A.multiply(ex.W);
        c = add(m.A.apply(ex.b), m.b2);
    }
}

double dual_norm(const Vec& v, Norm p) {
    switch (p) {
        case Norm::linf: return norm1(v);
        case Norm::l2: return norm2(v);
        case Norm::l1: return norm_inf(v);
    }
    throw std::logic_error("dual_norm: bad enum");
}

}  // namespace

double exact_adv_margin_linear(const Model& m, const Vec& x, std::size_t y, const Ball& ball) {
    Matrix M;
    Vec c;
    binary_linear_map(m, M, c);
    if (x.size() != M.cols()) throw std::invalid_argument("exact_adv_margin_linear: dimension mismatch");
    if (y > 1) throw std::invalid_argument("exact_adv_margin_linear: label out of range");
    const std::size_t other = 1 - y;
    Vec w_diff(M.cols());
    for (std::size_t j = 0; j < M.cols(); ++j) w_diff[j] = M(y, j) - M(other, j);
    const double margin = dot(w_diff, x) + (c[y] - c[other]);
    return margin - ball.epsilon * dual_norm(w_diff, ball.p);
}

double exact_adv_loss_linear(const Model& m, const Vec& x, std::size_t y, const Ball& ball) {
    return softplus(-exact_adv_margin_linear(m, x, y, ball));
}

}  // namespace atvr
