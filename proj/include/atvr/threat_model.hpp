#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "atvr/numerics.hpp"

namespace atvr {

enum class Norm { l1, l2, linf };

std::string norm_name(Norm p);
Norm norm_from_name(const std::string& name);

/// An lp ball of radius epsilon around an anchor supplied at call time.
struct Ball {
    Norm p = Norm::linf;
    double epsilon = 0.0;
};

/// A neighborhood function N(x): a single ball or a finite union of balls.
/// The anchor x is always a member (epsilon >= 0).
struct ThreatModel {
    std::vector<Ball> members;

    static ThreatModel ball(Norm p, double epsilon) { return ThreatModel{{Ball{p, epsilon}}}; }
    static ThreatModel unite(std::vector<Ball> balls) { return ThreatModel{std::move(balls)}; }

    bool is_union() const { return members.size() > 1; }
};

/// Exact Euclidean projection of v onto the ball around anchor: coordinate
/// clip for linf, radial rescale for l2, sort-and-threshold for l1.
/// Idempotent bit-exactly.
Vec project(const Vec& v, const Vec& anchor, const Ball& ball);

bool contains(const Vec& v, const Vec& anchor, const Ball& ball, double tol);
bool contains(const Vec& v, const Vec& anchor, const ThreatModel& tm, double tol);

/// anchor + coordinatewise U(-eps, eps), projected into the ball.
Vec random_init(const Vec& anchor, const Ball& ball, RandomSource& rng);

double ball_norm(const Vec& v, Norm p);

/// Short label such as "linf(0.05)" or "union[linf(0.01),l2(0.5)]".
std::string describe(const Ball& ball);
std::string describe(const ThreatModel& tm);

void to_json(nlohmann::json& j, const Ball& ball);
void from_json(const nlohmann::json& j, Ball& ball);
void to_json(nlohmann::json& j, const ThreatModel& tm);
void from_json(const nlohmann::json& j, ThreatModel& tm);

}  // namespace atvr
