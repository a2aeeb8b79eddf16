#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "atvr/training.hpp"

using namespace atvr;

namespace {

Dataset two_blob_data(std::size_t n, double sigma, std::size_t per_class, std::uint64_t seed) {
    Dataset data;
    data.dim = n;
    RandomSource root(seed);
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const std::size_t label = i < per_class ? 0 : 1;
        RandomSource srng = root.substream(i);
        Vec x(n, 0.0);
        x[0] = label == 0 ? 0.25 : 0.75;
        for (auto& v : x) v = std::clamp(v + sigma * srng.normal(), 0.0, 1.0);
        data.points.push_back(std::move(x));
        data.labels.push_back(label);
    }
    return data;
}

TrainConfig small_config(double lambda, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.lambda = lambda;
    cfg.epochs = 25;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;
    cfg.source = ThreatModel::ball(Norm::linf, 0.01);
    cfg.attack.steps = 10;
    cfg.variation_cfg.steps = 10;
    cfg.seed = seed;
    return cfg;
}

// Independent plain adversarial training loop sharing the substream scheme;
// the lambda = 0 trajectory of at_vr_train must match it bit for bit.
Model plain_at_reference(const Model& init, const Dataset& data, const TrainConfig& cfg) {
    Model m = init;
    Vec theta = parameters(m);
    Vec velocity(theta.size(), 0.0);
    RandomSource root(cfg.seed);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        RandomSource erng = root.substream(epoch);
        std::vector<ObjectiveTerm> terms;
        for (std::size_t i = 0; i < data.size(); ++i) {
            RandomSource arng = erng.substream(i * 2);  // attack lane
            const AttackResult r =
                pgd_attack(m, data.points[i], data.labels[i], cfg.source, cfg.attack, arng);
            terms.push_back({r.x_adv, data.labels[i], std::nullopt});
        }
        const Vec grad = grad_params(m, terms, 0.0);
        for (std::size_t j = 0; j < theta.size(); ++j) {
            velocity[j] = cfg.momentum * velocity[j] + grad[j];
            theta[j] -= cfg.learning_rate * velocity[j];
        }
        set_parameters(m, theta);
    }
    return m;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("zero epochs returns the initial model") {
    const Dataset data = two_blob_data(6, 0.1, 10, 1);
    RandomSource rng(2);
    const Model init = random_linear_model(6, 3, 2, rng);
    TrainConfig cfg = small_config(0.0, 3);
    cfg.epochs = 0;
    const TrainResult r = at_vr_train(init, data, cfg);
    CHECK(parameters(r.model) == parameters(init));
    CHECK(r.log.empty());
}

TEST_CASE("lambda 0 reproduces the plain-AT reference trajectory bit for bit") {
    const Dataset data = two_blob_data(8, 0.12, 20, 4);
    RandomSource rng(5);
    const Model init = random_linear_model(8, 4, 2, rng);
    const TrainConfig cfg = small_config(0.0, 6);
    const TrainResult vr = at_vr_train(init, data, cfg);  // log_variation on
    const Model reference = plain_at_reference(init, data, cfg);
    CHECK(parameters(vr.model) == parameters(reference));
}

TEST_CASE("training is deterministic given the config seed") {
    const Dataset data = two_blob_data(6, 0.1, 15, 7);
    RandomSource rng(8);
    const Model init = random_linear_model(6, 3, 2, rng);
    const TrainConfig cfg = small_config(0.5, 9);
    const TrainResult a = at_vr_train(init, data, cfg);
    const TrainResult b = at_vr_train(init, data, cfg);
    CHECK(parameters(a.model) == parameters(b.model));
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].objective == b.log[i].objective);
        CHECK(a.log[i].variation == b.log[i].variation);
    }
    // threads must not change the result
    TrainConfig threaded = cfg;
    threaded.threads = 2;
    CHECK(parameters(at_vr_train(init, data, threaded).model) == parameters(a.model));
}

TEST_CASE("objective descends and accuracy rises on the gaussian blobs") {
    const Dataset data = two_blob_data(10, 0.125, 60, 11);
    RandomSource rng(12);
    const Model init = random_linear_model(10, 5, 2, rng);
    TrainConfig cfg = small_config(0.0, 13);
    cfg.epochs = 60;
    const TrainResult r = at_vr_train(init, data, cfg);
    CHECK(r.log.back().objective < r.log.front().objective);
    CHECK(r.log.back().clean_acc >= 0.95);
}

TEST_CASE("variation regularization shrinks the trained source variation") {
    const Dataset data = two_blob_data(10, 0.125, 60, 14);
    RandomSource rng(15);
    const Model init = random_linear_model(10, 5, 2, rng);
    TrainConfig plain = small_config(0.0, 16);
    plain.epochs = 60;
    TrainConfig reg = small_config(1.0, 16);
    reg.epochs = 60;
    const Model m0 = at_vr_train(init, data, plain).model;
    const Model m1 = at_vr_train(init, data, reg).model;
    const Ball source{Norm::linf, 0.01};
    const double v0 = variation_exact_linear(m0.linear().W, source).value;
    const double v1 = variation_exact_linear(m1.linear().W, source).value;
    CHECK(v1 < v0);
}

TEST_CASE("snapshots are taken at the configured cadence") {
    const Dataset data = two_blob_data(6, 0.1, 10, 17);
    RandomSource rng(18);
    const Model init = random_linear_model(6, 3, 2, rng);
    TrainConfig cfg = small_config(0.0, 19);
    cfg.epochs = 10;
    cfg.snapshot_every = 4;
    const TrainResult r = at_vr_train(init, data, cfg);
    REQUIRE(r.snapshots.size() == 2);
    CHECK(r.snapshots[0].epoch == 4);
    CHECK(r.snapshots[1].epoch == 8);
}

TEST_CASE("empirical risk: constant model, zero radius, exact accuracy") {
    const Dataset data = two_blob_data(5, 0.1, 20, 20);
    Model zero = make_linear_model(Matrix(2, 5, 0.0), Vec(2, 0.0), Matrix(2, 2, 0.0), Vec(2, 0.0));
    AttackConfig cfg;
    const RiskEstimate constant = empirical_adv_risk(
        zero, data, ThreatModel::ball(Norm::l2, 0.3), cfg, RiskMethod::pgd, 0);
    CHECK(constant.mean_loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    RandomSource rng(21);
    const Model m = random_linear_model(5, 3, 2, rng);
    const RiskEstimate clean =
        empirical_adv_risk(m, data, ThreatModel::ball(Norm::linf, 0.0), cfg, RiskMethod::clean, 0);
    const RiskEstimate eps0 =
        empirical_adv_risk(m, data, ThreatModel::ball(Norm::linf, 0.0), cfg, RiskMethod::pgd, 0);
    const RiskEstimate exact0 = empirical_adv_risk(m, data, ThreatModel::ball(Norm::linf, 0.0), cfg,
                                                   RiskMethod::exact_linear, 0);
    CHECK(eps0.mean_loss == doctest::Approx(clean.mean_loss).epsilon(1e-12));
    CHECK(exact0.mean_loss == doctest::Approx(clean.mean_loss).epsilon(1e-12));
    CHECK(eps0.accuracy == clean.accuracy);
    CHECK(exact0.accuracy == clean.accuracy);
}

TEST_CASE("pgd risk matches the exact oracle to 1e-4 with 10 restarts") {
    const Dataset data = two_blob_data(6, 0.15, 30, 22);
    RandomSource rng(23);
    const Model m = random_linear_model(6, 3, 2, rng);
    AttackConfig cfg;
    cfg.steps = 100;
    cfg.restarts = 10;
    for (Norm p : {Norm::linf, Norm::l2}) {
        const ThreatModel tm = ThreatModel::ball(p, 0.05);
        const RiskEstimate pgd = empirical_adv_risk(m, data, tm, cfg, RiskMethod::pgd, 3, 2);
        const RiskEstimate exact =
            empirical_adv_risk(m, data, tm, cfg, RiskMethod::exact_linear, 3);
        CHECK(std::abs(pgd.mean_loss - exact.mean_loss) < 1e-4);
        CHECK(pgd.mean_loss <= exact.mean_loss + 1e-9);
    }
}

TEST_CASE("gap curve: zero at the source, monotone along nested exact targets") {
    const Dataset data = two_blob_data(6, 0.15, 25, 24);
    RandomSource rng(25);
    const Model m = random_linear_model(6, 3, 2, rng);
    const ThreatModel source = ThreatModel::ball(Norm::linf, 0.01);
    std::vector<ThreatModel> targets{source};
    for (double eps : {0.02, 0.03, 0.05, 0.08})
        targets.push_back(ThreatModel::unite({source.members[0], Ball{Norm::linf, eps}}));
    AttackConfig cfg;
    const auto rows =
        gap_curve(m, data, source, targets, cfg, RiskMethod::exact_linear, 0);
    REQUIRE(rows.size() == targets.size());
    CHECK(rows[0].gap == doctest::Approx(0.0).epsilon(1e-15));
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].gap >= rows[i - 1].gap - 1e-12);
}

}  // TEST_SUITE
