#include "atvr/training.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace atvr {

namespace {

// Substream purposes per (epoch, sample); keeps attack draws independent of
// whether variation is computed.
constexpr std::uint64_t kAttackLane = 0;
constexpr std::uint64_t kVariationLane = 1;

std::uint64_t lane_index(std::size_t sample, std::uint64_t lane) {
    return static_cast<std::uint64_t>(sample) * 2ULL + lane;
}

struct SampleStats {
    ObjectiveTerm term;
    double clean_loss = 0.0;
    bool clean_correct = false;
    double adv_loss = 0.0;
    bool adv_correct = false;
    double variation = 0.0;
};

}  // namespace

TrainResult at_vr_train(const Model& init, const Dataset& data, const TrainConfig& cfg) {
    if (data.size() == 0) throw std::invalid_argument("at_vr_train: empty dataset");
    if (data.dim != init.input_dim()) throw std::invalid_argument("at_vr_train: dimension mismatch");
    if (cfg.lambda < 0.0) throw std::invalid_argument("at_vr_train: lambda must be nonnegative");
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("at_vr_train: bad learning rate");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
        throw std::invalid_argument("at_vr_train: momentum must be in [0, 1)");

    TrainResult result;
    result.model = init;
    Vec theta = parameters(result.model);
    Vec velocity(theta.size(), 0.0);
    RandomSource root(cfg.seed);

    const std::size_t total = data.size();
    const std::size_t batch =
        cfg.batch_size <= 0 ? total : std::min<std::size_t>(cfg.batch_size, total);
    const bool want_variation = cfg.lambda > 0.0 || cfg.log_variation;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        RandomSource erng = root.substream(static_cast<std::uint64_t>(epoch));
        EpochLog log;
        log.epoch = epoch;
        double var_total = 0.0;

        for (std::size_t start = 0; start < total; start += batch) {
            const std::size_t count = std::min(batch, total - start);
            std::vector<SampleStats> stats(count);
            const Model& snapshot = result.model;
            parallel_for(count, cfg.threads, [&](std::size_t k) {
                const std::size_t i = start + k;
                const Vec& x = data.points[i];
                const std::size_t y = data.labels[i];
                SampleStats& s = stats[k];

                const ForwardResult clean_fwd = forward(snapshot, x);
                s.clean_loss = ce_loss(clean_fwd.logits, y).value;
                s.clean_correct = predicted_class(clean_fwd.logits) == static_cast<int>(y);

                RandomSource arng = erng.substream(lane_index(i, kAttackLane));
                const AttackResult attack = pgd_attack(snapshot, x, y, cfg.source, cfg.attack, arng);
                s.adv_loss = attack.loss;
                s.adv_correct =
                    predicted_class(forward(snapshot, attack.x_adv).logits) == static_cast<int>(y);
                s.term.x = attack.x_adv;
                s.term.y = y;

                if (want_variation) {
                    RandomSource vrng = erng.substream(lane_index(i, kVariationLane));
                    VariationEstimate ve =
                        union_variation(snapshot, x, cfg.source, cfg.variation_cfg, vrng);
                    s.variation = ve.value;
                    s.term.witnesses = {std::move(ve.x1), std::move(ve.x2)};
                }
            });

            std::vector<ObjectiveTerm> terms;
            terms.reserve(count);
            for (auto& s : stats) {
                log.clean_loss += s.clean_loss;
                log.clean_acc += s.clean_correct ? 1.0 : 0.0;
                log.adv_loss += s.adv_loss;
                log.adv_acc += s.adv_correct ? 1.0 : 0.0;
                var_total += s.variation;
                terms.push_back(std::move(s.term));
            }

            const Vec grad = grad_params(result.model, terms, cfg.lambda);
            for (std::size_t j = 0; j < theta.size(); ++j) {
                velocity[j] = cfg.momentum * velocity[j] + grad[j];
                theta[j] -= cfg.learning_rate * velocity[j];
                if (!std::isfinite(theta[j]))
                    throw std::runtime_error("at_vr_train: non-finite parameters at epoch " +
                                             std::to_string(epoch));
            }
            set_parameters(result.model, theta);
        }

        const double inv = 1.0 / static_cast<double>(total);
        log.clean_loss *= inv;
        log.clean_acc *= inv;
        log.adv_loss *= inv;
        log.adv_acc *= inv;
        log.variation = want_variation ? var_total * inv : std::nan("");
        log.objective = log.adv_loss + cfg.lambda * (want_variation ? var_total * inv : 0.0);
        if (!std::isfinite(log.objective))
            throw std::runtime_error("at_vr_train: non-finite objective at epoch " +
                                     std::to_string(epoch));
        result.log.push_back(log);

        if (cfg.snapshot_every > 0 && (epoch + 1) % cfg.snapshot_every == 0)
            result.snapshots.push_back({epoch + 1, result.model});
    }
    return result;
}

std::string risk_method_name(RiskMethod m) {
    switch (m) {
        case RiskMethod::clean: return "clean";
        case RiskMethod::pgd: return "pgd";
        case RiskMethod::exact_linear: return "exact_linear";
    }
    throw std::logic_error("risk_method_name: bad enum");
}

RiskEstimate empirical_adv_risk(const Model& m, const Dataset& data, const ThreatModel& tm,
                                const AttackConfig& cfg, RiskMethod method, std::uint64_t seed,
                                int threads) {
    if (data.size() == 0) throw std::invalid_argument("empirical_adv_risk: empty dataset");
    RiskEstimate out;
    out.method = method;
    std::vector<double> losses(data.size(), 0.0);
    std::vector<double> correct(data.size(), 0.0);
    RandomSource root(seed);

    parallel_for(data.size(), threads, [&](std::size_t i) {
        const Vec& x = data.points[i];
        const std::size_t y = data.labels[i];
        switch (method) {
            case RiskMethod::clean: {
                const ForwardResult f = forward(m, x);
                losses[i] = ce_loss(f.logits, y).value;
                correct[i] = predicted_class(f.logits) == static_cast<int>(y) ? 1.0 : 0.0;
                break;
            }
            case RiskMethod::pgd: {
                RandomSource srng = root.substream(i);
                double worst = -1.0;
                bool ok = true;
                // Per-member attacks: a point is robust only if it survives
                // every member of the union.
                for (std::size_t mi = 0; mi < tm.members.size(); ++mi) {
                    RandomSource mrng = srng.substream(mi);
                    const ThreatModel single{{tm.members[mi]}};
                    const AttackResult r = pgd_attack(m, x, y, single, cfg, mrng);
                    worst = std::max(worst, r.loss);
                    ok = ok && predicted_class(forward(m, r.x_adv).logits) == static_cast<int>(y);
                }
                losses[i] = worst;
                correct[i] = ok ? 1.0 : 0.0;
                break;
            }
            case RiskMethod::exact_linear: {
                double worst = -std::numeric_limits<double>::infinity();
                double margin = std::numeric_limits<double>::infinity();
                for (const Ball& b : tm.members) {
                    worst = std::max(worst, exact_adv_loss_linear(m, x, y, b));
                    margin = std::min(margin, exact_adv_margin_linear(m, x, y, b));
                }
                losses[i] = worst;
                correct[i] = margin > 0.0 ? 1.0 : 0.0;
                break;
            }
        }
    });

    for (std::size_t i = 0; i < data.size(); ++i) {
        out.mean_loss += losses[i];
        out.accuracy += correct[i];
    }
    out.mean_loss /= static_cast<double>(data.size());
    out.accuracy /= static_cast<double>(data.size());
    return out;
}

std::vector<GapRow> gap_curve(const Model& m, const Dataset& data, const ThreatModel& source,
                              const std::vector<ThreatModel>& targets, const AttackConfig& cfg,
                              RiskMethod method, std::uint64_t seed, int threads) {
    const RiskEstimate src = empirical_adv_risk(m, data, source, cfg, method, seed, threads);
    std::vector<GapRow> rows;
    rows.reserve(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const RiskEstimate tgt =
            empirical_adv_risk(m, data, targets[t], cfg, method, seed + 1 + t, threads);
        GapRow row;
        row.label = describe(targets[t]);
        row.source_loss = src.mean_loss;
        row.target_loss = tgt.mean_loss;
        row.gap = tgt.mean_loss - src.mean_loss;
        row.target_accuracy = tgt.accuracy;
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace atvr
