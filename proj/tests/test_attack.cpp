#include <doctest.h>

#include <cmath>

#include "atvr/attack.hpp"

using namespace atvr;

namespace {

Model random_binary(std::size_t n, std::size_t d, std::uint64_t seed) {
    RandomSource rng(seed);
    return random_linear_model(n, d, 2, rng);
}

// Exhaustive grid oracle for the worst-case loss of any model over a 2-D
// ball; the grid includes the box corners / the circle boundary where the
// linear-margin maximum lives.
double grid_adv_loss_2d(const Model& m, const Vec& x, std::size_t y, const Ball& ball) {
    double worst = ce_loss(forward(m, x).logits, y).value;
    if (ball.p == Norm::linf) {
        const int k = 40;
        for (int i = 0; i <= k; ++i)
            for (int j = 0; j <= k; ++j) {
                const Vec pt{x[0] - ball.epsilon + 2.0 * ball.epsilon * i / k,
                             x[1] - ball.epsilon + 2.0 * ball.epsilon * j / k};
                worst = std::max(worst, ce_loss(forward(m, pt).logits, y).value);
            }
        return worst;
    }
    const int k = 20000;  // l2: maximum sits on the boundary circle
    for (int i = 0; i < k; ++i) {
        const double theta = 2.0 * M_PI * i / k;
        const Vec pt{x[0] + ball.epsilon * std::cos(theta), x[1] + ball.epsilon * std::sin(theta)};
        worst = std::max(worst, ce_loss(forward(m, pt).logits, y).value);
    }
    return worst;
}

}  // namespace

TEST_SUITE("attack") {

TEST_CASE("zero steps or zero radius return the clean point") {
    const Model m = random_binary(3, 2, 1);
    const Vec x{0.2, -0.1, 0.4};
    const double clean = ce_loss(forward(m, x).logits, 0).value;

    AttackConfig cfg;
    cfg.steps = 0;
    RandomSource rng(5);
    const AttackResult r0 = pgd_attack(m, x, 0, ThreatModel::ball(Norm::linf, 0.1), cfg, rng);
    CHECK(r0.x_adv == x);
    CHECK(r0.loss == clean);

    cfg.steps = 10;
    const AttackResult r1 = pgd_attack(m, x, 0, ThreatModel::ball(Norm::l2, 0.0), cfg, rng);
    CHECK(r1.x_adv == x);
    CHECK(r1.loss == clean);
}

TEST_CASE("a constant model is unaffected by the attack") {
    Model zero = make_linear_model(Matrix(2, 2, 0.0), Vec(2, 0.0), Matrix(2, 2, 0.0), Vec(2, 0.0));
    const Vec x{0.3, 0.7};
    RandomSource rng(9);
    const AttackResult r = pgd_attack(zero, x, 1, ThreatModel::ball(Norm::linf, 0.5),
                                      AttackConfig{}, rng);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("exact oracle: zero radius and the frozen margin instance") {
    const Model m = random_binary(4, 3, 3);
    RandomSource rng(11);
    const Vec x = rng.normal_vec(4);
    const double clean = ce_loss(forward(m, x).logits, 1).value;
    CHECK(exact_adv_loss_linear(m, x, 1, Ball{Norm::linf, 0.0}) == doctest::Approx(clean).epsilon(1e-12));

    // W = I, rows of A differing by (1, 0), clean margin 1, linf eps = 0.1:
    // worst margin 0.9, loss = log(1 + e^-0.9).
    Matrix A(2, 2, 0.0);
    A(0, 0) = 1.0;
    Model frozen = make_linear_model(Matrix::identity(2), Vec(2, 0.0), A, Vec(2, 0.0));
    const double loss = exact_adv_loss_linear(frozen, {1.0, 0.3}, 0, Ball{Norm::linf, 0.1});
    CHECK(exact_adv_margin_linear(frozen, {1.0, 0.3}, 0, Ball{Norm::linf, 0.1}) ==
          doctest::Approx(0.9).epsilon(1e-12));
    CHECK(loss == doctest::Approx(0.341153).epsilon(1e-5));
}

TEST_CASE("exact oracle agrees with the exhaustive 2-D grid") {
    for (int trial = 0; trial < 10; ++trial) {
        const Model m = random_binary(2, 2, 100 + trial);
        RandomSource rng(200 + trial);
        const Vec x = rng.normal_vec(2);
        const std::size_t y = trial % 2;
        for (Norm p : {Norm::linf, Norm::l2}) {
            const Ball ball{p, 0.25};
            const double exact = exact_adv_loss_linear(m, x, y, ball);
            const double grid = grid_adv_loss_2d(m, x, y, ball);
            CHECK(exact == doctest::Approx(grid).epsilon(1e-4));
            CHECK(exact >= grid - 1e-9);  // the grid can never beat the true max
        }
    }
}

TEST_CASE("exact adversarial loss is nondecreasing in the radius") {
    const Model m = random_binary(5, 2, 7);
    RandomSource rng(13);
    const Vec x = rng.normal_vec(5);
    for (Norm p : {Norm::l1, Norm::l2, Norm::linf}) {
        double prev = -1.0;
        for (double eps : {0.0, 0.01, 0.05, 0.1, 0.5, 2.0}) {
            const double loss = exact_adv_loss_linear(m, x, 0, Ball{p, eps});
            CHECK(loss >= prev);
            prev = loss;
        }
    }
}

TEST_CASE("pgd reaches the exact worst case on linf and never exceeds it") {
    AttackConfig cfg;
    cfg.steps = 30;
    cfg.restarts = 2;
    for (int trial = 0; trial < 20; ++trial) {
        const Model m = random_binary(6, 3, 300 + trial);
        RandomSource rng(400 + trial);
        const Vec x = rng.normal_vec(6);
        const std::size_t y = trial % 2;
        const Ball ball{Norm::linf, 0.1};
        RandomSource arng(trial);
        const AttackResult r = pgd_attack(m, x, y, ThreatModel{{ball}}, cfg, arng);
        const double exact = exact_adv_loss_linear(m, x, y, ball);
        CHECK(r.loss == doctest::Approx(exact).epsilon(1e-6));
        CHECK(exact >= r.loss - 1e-9);
        CHECK(contains(r.x_adv, x, ball, 1e-9));
    }
}

TEST_CASE("oracle dominance holds for every norm") {
    AttackConfig cfg;
    cfg.steps = 40;
    cfg.restarts = 3;
    for (int trial = 0; trial < 10; ++trial) {
        const Model m = random_binary(4, 2, 500 + trial);
        RandomSource rng(600 + trial);
        const Vec x = rng.normal_vec(4);
        for (Norm p : {Norm::l1, Norm::l2, Norm::linf}) {
            const Ball ball{p, 0.2};
            RandomSource arng(trial * 3 + static_cast<int>(p));
            const AttackResult r = pgd_attack(m, x, 0, ThreatModel{{ball}}, cfg, arng);
            CHECK(exact_adv_loss_linear(m, x, 0, ball) >= r.loss - 1e-9);
            CHECK(contains(r.x_adv, x, ball, 1e-9));
        }
    }
}

TEST_CASE("keep_best loss is nondecreasing in steps at fixed seed") {
    const Model m = random_binary(5, 3, 21);
    RandomSource rng(22);
    const Vec x = rng.normal_vec(5);
    const ThreatModel tm = ThreatModel::ball(Norm::l2, 0.3);
    double prev = -1.0;
    for (int steps = 0; steps <= 12; ++steps) {
        AttackConfig cfg;
        cfg.steps = steps;
        RandomSource arng(77);
        const AttackResult r = pgd_attack(m, x, 0, tm, cfg, arng);
        CHECK(r.loss >= prev);
        prev = r.loss;
    }
}

TEST_CASE("union attack aggregates member losses by max") {
    const Model m = random_binary(4, 2, 31);
    RandomSource rng(32);
    const Vec x = rng.normal_vec(4);
    AttackConfig cfg;
    cfg.steps = 25;
    cfg.restarts = 2;
    const Ball small{Norm::linf, 0.05};
    const Ball large{Norm::l2, 0.4};
    RandomSource r1(55);
    const AttackResult united =
        pgd_attack(m, x, 0, ThreatModel::unite({small, large}), cfg, r1);
    const double exact_max = std::max(exact_adv_loss_linear(m, x, 0, small),
                                      exact_adv_loss_linear(m, x, 0, large));
    CHECK(united.loss <= exact_max + 1e-9);
    CHECK(united.loss == doctest::Approx(exact_max).epsilon(0.01));
    CHECK(contains(united.x_adv, x, ThreatModel::unite({small, large}), 1e-9));
}

TEST_CASE("clip_box keeps every iterate inside the data domain") {
    const Model m = random_binary(4, 2, 71);
    const Vec x{0.02, 0.98, 0.5, 0.01};  // near the box faces
    AttackConfig cfg;
    cfg.steps = 20;
    cfg.restarts = 3;
    cfg.clip_box = true;
    const Ball ball{Norm::linf, 0.1};
    RandomSource rng(72);
    const AttackResult r = pgd_attack(m, x, 0, ThreatModel{{ball}}, cfg, rng);
    for (double v : r.x_adv) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(contains(r.x_adv, x, ball, 1e-9));
}

TEST_CASE("exact oracle rejects unsupported models") {
    RandomSource rng(61);
    const Model multi = random_linear_model(3, 3, 4, rng);
    CHECK_THROWS_AS(exact_adv_loss_linear(multi, {0.1, 0.2, 0.3}, 0, Ball{Norm::l2, 0.1}),
                    std::invalid_argument);
    const Model mlp = random_mlp1_model(3, 4, 2, 2, Activation::tanh_act, rng);
    CHECK_THROWS_AS(exact_adv_loss_linear(mlp, {0.1, 0.2, 0.3}, 0, Ball{Norm::l2, 0.1}),
                    std::invalid_argument);
}

}  // TEST_SUITE
