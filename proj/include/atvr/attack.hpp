#pragma once

#include <cstdint>

#include "atvr/model.hpp"
#include "atvr/threat_model.hpp"

namespace atvr {

/// step_size 0 means epsilon/9 for the ball being attacked (10-step default).
/// clip_box additionally clamps every iterate to the [0, 1] data domain
/// (off by default; the variation algorithm itself never clips).
struct AttackConfig {
    int steps = 10;
    double step_size = 0.0;
    int restarts = 1;
    bool keep_best = true;
    bool clip_box = false;
    std::uint64_t seed = 0;
};

struct AttackResult {
    Vec x_adv;
    double loss = 0.0;
};

/// Loss-maximizing PGD inside the threat model: sign steps for linf members,
/// normalized-gradient steps for l1/l2. Union members are attacked
/// independently (substream per member index) and aggregated by max loss.
AttackResult pgd_attack(const Model& m, const Vec& x, std::size_t y, const ThreatModel& tm,
                        const AttackConfig& cfg, RandomSource& rng);
AttackResult pgd_attack(const Model& m, const Vec& x, std::size_t y, const ThreatModel& tm,
                        const AttackConfig& cfg);

/// Exact worst-case cross-entropy for a binary linear model over one ball,
/// via the dual-norm margin drop (cross entropy is monotone in the margin).
double exact_adv_loss_linear(const Model& m, const Vec& x, std::size_t y, const Ball& ball);

/// Worst-case margin mu* = mu(x) - eps * dual_norm(w_y - w_other); positive
/// means the model stays correct everywhere in the ball.
double exact_adv_margin_linear(const Model& m, const Vec& x, std::size_t y, const Ball& ball);

}  // namespace atvr
