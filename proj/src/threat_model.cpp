#include "atvr/threat_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace atvr {

std::string norm_name(Norm p) {
    switch (p) {
        case Norm::l1: return "1";
        case Norm::l2: return "2";
        case Norm::linf: return "inf";
    }
    throw std::logic_error("norm_name: bad enum");
}

Norm norm_from_name(const std::string& name) {
    if (name == "1") return Norm::l1;
    if (name == "2") return Norm::l2;
    if (name == "inf") return Norm::linf;
    throw std::invalid_argument("unknown norm '" + name + "' (expected \"1\", \"2\" or \"inf\")");
}

double ball_norm(const Vec& v, Norm p) {
    switch (p) {
        case Norm::l1: return norm1(v);
        case Norm::l2: return norm2(v);
        case Norm::linf: return norm_inf(v);
    }
    throw std::logic_error("ball_norm: bad enum");
}

namespace {

// Relative slack so that re-projecting an already projected point is a no-op
// at the bit level despite rounding in the norm computation.
constexpr double kInsideSlack = 1e-12;

Vec project_l1(const Vec& v, const Vec& anchor, double eps) {
    Vec d = sub(v, anchor);
    if (norm1(d) <= eps * (1.0 + kInsideSlack)) return v;
    // Sort-and-threshold projection of |d| onto the simplex of radius eps.
    const std::size_t n = d.size();
    Vec mag(n);
    for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(d[i]);
    Vec sorted = mag;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        cumsum += sorted[k];
        const double cand = (cumsum - eps) / static_cast<double>(k + 1);
        if (sorted[k] - cand > 0.0) theta = cand;
    }
    Vec out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double shrunk = std::max(mag[i] - theta, 0.0);
        out[i] = anchor[i] + std::copysign(shrunk, d[i]);
    }
    return out;
}

}  // namespace

Vec project(const Vec& v, const Vec& anchor, const Ball& ball) {
    if (v.size() != anchor.size()) throw std::invalid_argument("project: dimension mismatch");
    if (ball.epsilon < 0.0) throw std::invalid_argument("project: negative radius");
    switch (ball.p) {
        case Norm::linf: {
            // Interior coordinates pass through untouched so that the
            // projection is a bit-exact no-op on already feasible points.
            Vec out(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double d = v[i] - anchor[i];
                if (d > ball.epsilon)
                    out[i] = anchor[i] + ball.epsilon;
                else if (d < -ball.epsilon)
                    out[i] = anchor[i] - ball.epsilon;
                else
                    out[i] = v[i];
            }
            return out;
        }
        case Norm::l2: {
            Vec d = sub(v, anchor);
            const double nd = norm2(d);
            if (nd <= ball.epsilon * (1.0 + kInsideSlack)) return v;
            const double scale = ball.epsilon / nd;
            Vec out(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = anchor[i] + d[i] * scale;
            return out;
        }
        case Norm::l1:
            return project_l1(v, anchor, ball.epsilon);
    }
    throw std::logic_error("project: bad enum");
}

bool contains(const Vec& v, const Vec& anchor, const Ball& ball, double tol) {
    if (v.size() != anchor.size()) throw std::invalid_argument("contains: dimension mismatch");
    return ball_norm(sub(v, anchor), ball.p) <= ball.epsilon + tol;
}

bool contains(const Vec& v, const Vec& anchor, const ThreatModel& tm, double tol) {
    if (tm.members.empty()) throw std::invalid_argument("contains: empty threat model");
    return std::any_of(tm.members.begin(), tm.members.end(),
                       [&](const Ball& b) { return contains(v, anchor, b, tol); });
}

Vec random_init(const Vec& anchor, const Ball& ball, RandomSource& rng) {
    Vec u = rng.uniform_vec(anchor.size(), -ball.epsilon, ball.epsilon);
    Vec candidate = add(anchor, u);
    return project(candidate, anchor, ball);
}

std::string describe(const Ball& ball) {
    std::ostringstream oss;
    oss << "l" << norm_name(ball.p) << "(" << ball.epsilon << ")";
    return oss.str();
}

std::string describe(const ThreatModel& tm) {
    if (!tm.is_union()) return describe(tm.members.front());
    std::ostringstream oss;
    oss << "union[";
    for (std::size_t i = 0; i < tm.members.size(); ++i) {
        if (i) oss << ",";
        oss << describe(tm.members[i]);
    }
    oss << "]";
    return oss.str();
}

void to_json(nlohmann::json& j, const Ball& ball) {
    j = nlohmann::json{{"p", norm_name(ball.p)}, {"eps", ball.epsilon}};
}

void from_json(const nlohmann::json& j, Ball& ball) {
    ball.p = norm_from_name(j.at("p").get<std::string>());
    ball.epsilon = j.at("eps").get<double>();
    if (ball.epsilon < 0.0) throw std::invalid_argument("ball radius must be nonnegative");
}

void to_json(nlohmann::json& j, const ThreatModel& tm) {
    if (!tm.is_union()) {
        to_json(j, tm.members.front());
        return;
    }
    j = nlohmann::json{{"union", tm.members}};
}

void from_json(const nlohmann::json& j, ThreatModel& tm) {
    tm.members.clear();
    if (j.contains("union")) {
        for (const auto& item : j.at("union")) tm.members.push_back(item.get<Ball>());
    } else {
        tm.members.push_back(j.get<Ball>());
    }
    if (tm.members.empty()) throw std::invalid_argument("threat model must have at least one ball");
}

}  // namespace atvr
