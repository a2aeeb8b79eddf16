#include <doctest.h>

#include <stdexcept>

#include "atvr/threat_model.hpp"

using namespace atvr;

namespace {

// Sampling oracle for projection minimality: no random feasible point may be
// closer to v than the projection.
void check_projection_minimality(const Ball& ball, RandomSource& rng, int points) {
    const std::size_t n = 6;
    const Vec anchor = rng.normal_vec(n);
    const Vec v = rng.normal_vec(n);
    const Vec w = project(v, anchor, ball);
    REQUIRE(contains(w, anchor, ball, 1e-12));
    const double dw = norm2(sub(v, w));
    for (int i = 0; i < points; ++i) {
        const Vec u = random_init(anchor, ball, rng);
        CHECK(dw <= norm2(sub(v, u)) + 1e-10);
    }
}

}  // namespace

TEST_SUITE("threat_model") {

TEST_CASE("linf projection clips coordinates") {
    const Vec v{0.3, -0.2};
    const Vec anchor{0.0, 0.0};
    const Vec w = project(v, anchor, Ball{Norm::linf, 0.1});
    CHECK(w[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("l2 projection rescales radially") {
    const Vec w = project({3.0, 4.0}, {0.0, 0.0}, Ball{Norm::l2, 1.0});
    CHECK(w[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("l1 projection matches the KKT solution on the frozen instance") {
    // (2,1) onto the l1 ball of radius 1: theta = 1, soft threshold -> (1, 0).
    const Vec w = project({2.0, 1.0}, {0.0, 0.0}, Ball{Norm::l1, 1.0});
    CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("projection is idempotent bit-exactly and keeps interior points") {
    RandomSource rng(77);
    for (Norm p : {Norm::l1, Norm::l2, Norm::linf}) {
        for (int trial = 0; trial < 200; ++trial) {
            const Ball ball{p, rng.uniform(0.0, 2.0)};
            const Vec anchor = rng.normal_vec(5);
            const Vec v = rng.normal_vec(5);
            const Vec once = project(v, anchor, ball);
            const Vec twice = project(once, anchor, ball);
            CHECK(once == twice);
            CHECK(ball_norm(sub(once, anchor), ball.p) <= ball.epsilon + 1e-12);
            if (contains(v, anchor, ball, 0.0)) CHECK(project(v, anchor, ball) == v);
        }
    }
}

TEST_CASE("l1 projection minimality against sampled ball points") {
    RandomSource rng(13);
    check_projection_minimality(Ball{Norm::l1, 0.7}, rng, 1000);
    check_projection_minimality(Ball{Norm::l2, 0.9}, rng, 200);
    check_projection_minimality(Ball{Norm::linf, 0.4}, rng, 200);
}

TEST_CASE("contains handles unions and the anchor") {
    const ThreatModel tm = ThreatModel::unite({Ball{Norm::linf, 0.1}, Ball{Norm::l2, 0.5}});
    const Vec anchor{0.0, 0.0};
    CHECK(contains(anchor, anchor, tm, 0.0));
    CHECK(contains({0.0, 0.3}, anchor, tm, 0.0));   // via the l2 member
    CHECK(!contains({0.2, 0.2}, anchor, ThreatModel::ball(Norm::linf, 0.1), 0.0));
    CHECK_THROWS_AS(contains({0.0}, anchor, tm, 0.0), std::invalid_argument);
}

TEST_CASE("subset law: smaller radius implies containment in larger ball") {
    RandomSource rng(29);
    for (Norm p : {Norm::l1, Norm::l2, Norm::linf}) {
        const double e1 = rng.uniform(0.1, 0.5);
        const double e2 = e1 + rng.uniform(0.0, 1.0);
        const Vec anchor = rng.normal_vec(7);
        for (int trial = 0; trial < 100; ++trial) {
            RandomSource sub = rng.substream(trial);
            const Vec pt = random_init(anchor, Ball{p, e1}, sub);
            CHECK(contains(pt, anchor, Ball{p, e2}, 0.0));
        }
    }
}

TEST_CASE("random_init: zero radius returns the anchor, fixed seed repeats") {
    RandomSource rng(42);
    const Vec anchor{0.5, -1.0, 2.0};
    CHECK(random_init(anchor, Ball{Norm::l2, 0.0}, rng) == anchor);

    RandomSource r1(42), r2(42);
    const Ball ball{Norm::l1, 0.3};
    CHECK(random_init(anchor, ball, r1) == random_init(anchor, ball, r2));

    for (int trial = 0; trial < 100; ++trial)
        CHECK(contains(random_init(anchor, Ball{Norm::linf, 0.2}, rng), anchor,
                       Ball{Norm::linf, 0.2}, 0.0));
}

TEST_CASE("projection rejects dimension mismatch") {
    CHECK_THROWS_AS(project({1.0, 2.0}, {0.0}, Ball{Norm::l2, 1.0}), std::invalid_argument);
}

TEST_CASE("threat model json round trip") {
    const ThreatModel tm = ThreatModel::unite({Ball{Norm::linf, 0.0313725}, Ball{Norm::l2, 0.5}});
    const nlohmann::json j = tm;
    const ThreatModel back = j.get<ThreatModel>();
    REQUIRE(back.members.size() == 2);
    CHECK(back.members[0].p == Norm::linf);
    CHECK(back.members[0].epsilon == tm.members[0].epsilon);
    CHECK(back.members[1].p == Norm::l2);

    const nlohmann::json single = nlohmann::json::parse(R"({"p": "inf", "eps": 0.05})");
    const ThreatModel one = single.get<ThreatModel>();
    CHECK(one.members.size() == 1);
    CHECK(describe(one) == "linf(0.05)");
    CHECK_THROWS(nlohmann::json::parse(R"({"p": "7", "eps": 0.1})").get<ThreatModel>());
}

}  // TEST_SUITE
