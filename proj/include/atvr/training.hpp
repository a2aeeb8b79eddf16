#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atvr/attack.hpp"
#include "atvr/dataset.hpp"
#include "atvr/variation.hpp"

namespace atvr {

/// lambda = 0 reduces exactly to plain adversarial training: the variation
/// term contributes a zero gradient and the attack substreams do not depend
/// on lambda.
struct TrainConfig {
    double lambda = 0.0;
    int epochs = 200;
    int batch_size = 0;  // 0: full batch
    double learning_rate = 0.1;
    double momentum = 0.9;
    ThreatModel source = ThreatModel::ball(Norm::linf, 0.01);
    AttackConfig attack;
    AttackConfig variation_cfg;
    std::uint64_t seed = 0;
    bool log_variation = true;  // variation is measured for the log even when lambda = 0
    int snapshot_every = 0;     // 0: no snapshots
    int threads = 1;
};

struct EpochLog {
    int epoch = 0;
    double clean_loss = 0.0;
    double adv_loss = 0.0;
    double variation = 0.0;
    double objective = 0.0;
    double clean_acc = 0.0;
    double adv_acc = 0.0;
};

struct Snapshot {
    int epoch = 0;
    Model model;
};

struct TrainResult {
    Model model;
    std::vector<EpochLog> log;
    std::vector<Snapshot> snapshots;
};

/// SGD with momentum on mean[ max-loss CE + lambda * max ||h(x1) - h(x2)|| ]
/// over the source threat model. Adversarial points and variation witnesses
/// are recomputed per batch and frozen during the parameter step.
TrainResult at_vr_train(const Model& init, const Dataset& data, const TrainConfig& cfg);

enum class RiskMethod { clean, pgd, exact_linear };
std::string risk_method_name(RiskMethod m);

struct RiskEstimate {
    double mean_loss = 0.0;
    double accuracy = 0.0;
    RiskMethod method = RiskMethod::clean;
};

/// Mean worst-case loss and worst-case accuracy over the dataset. For unions
/// the loss is the max over members and a point counts as correct only if it
/// survives every member's attack.
RiskEstimate empirical_adv_risk(const Model& m, const Dataset& data, const ThreatModel& tm,
                                const AttackConfig& cfg, RiskMethod method, std::uint64_t seed,
                                int threads = 1);

struct GapRow {
    std::string label;
    double source_loss = 0.0;
    double target_loss = 0.0;
    double gap = 0.0;
    double target_accuracy = 0.0;
};

/// L_T - L_S per target, one shared evaluation method. Callers construct
/// targets that contain the source (e.g. source union a larger ball).
std::vector<GapRow> gap_curve(const Model& m, const Dataset& data, const ThreatModel& source,
                              const std::vector<ThreatModel>& targets, const AttackConfig& cfg,
                              RiskMethod method, std::uint64_t seed, int threads = 1);

}  // namespace atvr
