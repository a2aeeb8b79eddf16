#include "atvr/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace atvr {

namespace {

double activate(Activation act, double u) {
    return act == Activation::tanh_act ? std::tanh(u) : std::max(u, 0.0);
}

double activate_deriv(Activation act, double u) {
    if (act == Activation::tanh_act) {
        const double t = std::tanh(u);
        return 1.0 - t * t;
    }
    return u > 0.0 ? 1.0 : 0.0;
}

struct Trace {
    Vec features;
    Vec hidden_pre;  // mlp1 only
};

Trace extract_with_trace(const Model& m, const Vec& x) {
    Trace t;
    if (m.is_linear_extractor()) {
        const auto& ex = m.linear();
        t.features = ex.W.apply(x);
        axpy(1.0, ex.b, t.features);
    } else {
        const auto& ex = std::get<Mlp1Extractor>(m.extractor);
        t.hidden_pre = ex.W1.apply(x);
        axpy(1.0, ex.b1, t.hidden_pre);
        Vec act(t.hidden_pre.size());
        for (std::size_t i = 0; i < act.size(); ++i) act[i] = activate(ex.act, t.hidden_pre[i]);
        t.features = ex.W2.apply(act);
        axpy(1.0, ex.b2, t.features);
    }
    return t;
}

// Pulls a feature-space cotangent back to the input.
Vec extractor_input_vjp(const Model& m, const Trace& t, const Vec& cot) {
    if (m.is_linear_extractor()) return m.linear().W.apply_transposed(cot);
    const auto& ex = std::get<Mlp1Extractor>(m.extractor);
    Vec g_act = ex.W2.apply_transposed(cot);
    for (std::size_t i = 0; i < g_act.size(); ++i) g_act[i] *= activate_deriv(ex.act, t.hidden_pre[i]);
    return ex.W1.apply_transposed(g_act);
}

struct ParamLayout {
    std::size_t extractor_size = 0;
    std::size_t classifier_offset = 0;
    std::size_t total = 0;
};

ParamLayout layout_of(const Model& m) {
    ParamLayout l;
    if (m.is_linear_extractor()) {
        const auto& ex = m.linear();
        l.extractor_size = ex.W.rows() * ex.W.cols() + ex.b.size();
    } else {
        const auto& ex = std::get<Mlp1Extractor>(m.extractor);
        l.extractor_size = ex.W1.rows() * ex.W1.cols() + ex.b1.size() +
                           ex.W2.rows() * ex.W2.cols() + ex.b2.size();
    }
    l.classifier_offset = l.extractor_size;
    l.total = l.extractor_size;
    if (!m.identity_classifier) l.total += m.A.rows() * m.A.cols() + m.b2.size();
    return l;
}

// Accumulates weight * d(features . cot)/d(extractor params) into flat[0..).
void extractor_param_vjp(const Model& m, const Vec& x, const Trace& t, const Vec& cot,
                         double weight, Vec& flat) {
    if (m.is_linear_extractor()) {
        const auto& ex = m.linear();
        const std::size_t d = ex.W.rows(), n = ex.W.cols();
        for (std::size_t i = 0; i < d; ++i) {
            const double gi = weight * cot[i];
            double* row = flat.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += gi * x[j];
        }
        for (std::size_t i = 0; i < d; ++i) flat[d * n + i] += weight * cot[i];
        return;
    }
    const auto& ex = std::get<Mlp1Extractor>(m.extractor);
    const std::size_t h = ex.W1.rows(), n = ex.W1.cols(), d = ex.W2.rows();
    Vec act(h);
    for (std::size_t i = 0; i < h; ++i) act[i] = activate(ex.act, t.hidden_pre[i]);
    Vec g_act = ex.W2.apply_transposed(cot);
    Vec g_pre(h);
    for (std::size_t i = 0; i < h; ++i) g_pre[i] = g_act[i] * activate_deriv(ex.act, t.hidden_pre[i]);

    std::size_t off = 0;
    for (std::size_t i = 0; i < h; ++i) {
        const double gi = weight * g_pre[i];
        double* row = flat.data() + off + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += gi * x[j];
    }
    off += h * n;
    for (std::size_t i = 0; i < h; ++i) flat[off + i] += weight * g_pre[i];
    off += h;
    for (std::size_t i = 0; i < d; ++i) {
        const double gi = weight * cot[i];
        double* row = flat.data() + off + i * h;
        for (std::size_t j = 0; j < h; ++j) row[j] += gi * act[j];
    }
    off += d * h;
    for (std::size_t i = 0; i < d; ++i) flat[off + i] += weight * cot[i];
}

}  // namespace

std::size_t Model::input_dim() const {
    return is_linear_extractor() ? linear().W.cols() : std::get<Mlp1Extractor>(extractor).W1.cols();
}

std::size_t Model::feature_dim() const {
    return is_linear_extractor() ? linear().W.rows() : std::get<Mlp1Extractor>(extractor).W2.rows();
}

std::size_t Model::num_classes() const { return identity_classifier ? feature_dim() : A.rows(); }

Model make_linear_model(Matrix W, Vec b1, Matrix A, Vec b2) {
    if (W.rows() != b1.size()) throw std::invalid_argument("model: W/b1 shape mismatch");
    if (A.cols() != W.rows() || A.rows() != b2.size())
        throw std::invalid_argument("model: classifier shape mismatch");
    Model m;
    m.extractor = LinearExtractor{std::move(W), std::move(b1)};
    m.identity_classifier = false;
    m.A = std::move(A);
    m.b2 = std::move(b2);
    return m;
}

Model make_linear_logit_model(Matrix W, Vec b1) {
    if (W.rows() != b1.size()) throw std::invalid_argument("model: W/b1 shape mismatch");
    Model m;
    m.extractor = LinearExtractor{std::move(W), std::move(b1)};
    m.identity_classifier = true;
    return m;
}

Model make_mlp1_model(Matrix W1, Vec b1, Matrix W2, Vec b2m, Activation act, Matrix A, Vec b2) {
    if (W1.rows() != b1.size() || W2.cols() != W1.rows() || W2.rows() != b2m.size())
        throw std::invalid_argument("model: mlp shape mismatch");
    if (A.cols() != W2.rows() || A.rows() != b2.size())
        throw std::invalid_argument("model: classifier shape mismatch");
    Model m;
    m.extractor = Mlp1Extractor{std::move(W1), std::move(b1), std::move(W2), std::move(b2m), act};
    m.identity_classifier = false;
    m.A = std::move(A);
    m.b2 = std::move(b2);
    return m;
}

Model make_mlp1_logit_model(Matrix W1, Vec b1, Matrix W2, Vec b2m, Activation act) {
    if (W1.rows() != b1.size() || W2.cols() != W1.rows() || W2.rows() != b2m.size())
        throw std::invalid_argument("model: mlp shape mismatch");
    Model m;
    m.extractor = Mlp1Extractor{std::move(W1), std::move(b1), std::move(W2), std::move(b2m), act};
    m.identity_classifier = true;
    return m;
}

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, double scale, RandomSource& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = scale * rng.normal();
    return m;
}

}  // namespace

Model random_linear_model(std::size_t n, std::size_t d, std::size_t classes, RandomSource& rng) {
    const double s1 = 1.0 / std::sqrt(static_cast<double>(n));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(d));
    Matrix W = random_matrix(d, n, s1, rng);
    Vec b1(d, 0.0);
    Matrix A = random_matrix(classes, d, s2, rng);
    Vec b2(classes, 0.0);
    return make_linear_model(std::move(W), std::move(b1), std::move(A), std::move(b2));
}

Model random_mlp1_model(std::size_t n, std::size_t hidden, std::size_t d, std::size_t classes,
                        Activation act, RandomSource& rng) {
    const double s1 = 1.0 / std::sqrt(static_cast<double>(n));
    const double sh = 1.0 / std::sqrt(static_cast<double>(hidden));
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    // Draw in a fixed order; argument evaluation order is unspecified.
    Matrix W1 = random_matrix(hidden, n, s1, rng);
    Matrix W2 = random_matrix(d, hidden, sh, rng);
    Matrix A = random_matrix(classes, d, sd, rng);
    return make_mlp1_model(std::move(W1), Vec(hidden, 0.0), std::move(W2), Vec(d, 0.0), act,
                           std::move(A), Vec(classes, 0.0));
}

Vec extract_features(const Model& m, const Vec& x) {
    if (x.size() != m.input_dim()) throw std::invalid_argument("extract_features: dimension mismatch");
    return extract_with_trace(m, x).features;
}

ForwardResult forward(const Model& m, const Vec& x) {
    if (x.size() != m.input_dim()) throw std::invalid_argument("forward: dimension mismatch");
    ForwardResult out;
    out.features = extract_with_trace(m, x).features;
    if (m.identity_classifier) {
        out.logits = out.features;
    } else {
        out.logits = m.A.apply(out.features);
        axpy(1.0, m.b2, out.logits);
    }
    return out;
}

Vec softmax(const Vec& logits) {
    const double zmax = *std::max_element(logits.begin(), logits.end());
    Vec p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - zmax);
        total += p[i];
    }
    for (auto& v : p) v /= total;
    return p;
}

LossValue ce_loss(const Vec& logits, std::size_t y) {
    if (logits.size() < 2) throw std::invalid_argument("ce_loss: need at least two classes");
    if (y >= logits.size()) throw std::invalid_argument("ce_loss: label out of range");
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double z : logits) total += std::exp(z - zmax);
    LossValue out;
    out.value = std::log(total) - (logits[y] - zmax);
    out.grad_logits = softmax(logits);
    out.grad_logits[y] -= 1.0;
    return out;
}

int predicted_class(const Vec& logits) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

Vec grad_input(const Model& m, const Vec& x, std::size_t y) {
    if (x.size() != m.input_dim()) throw std::invalid_argument("grad_input: dimension mismatch");
    const Trace t = extract_with_trace(m, x);
    Vec logits = m.identity_classifier ? t.features : add(m.A.apply(t.features), m.b2);
    const LossValue loss = ce_loss(logits, y);
    const Vec g_feat =
        m.identity_classifier ? loss.grad_logits : m.A.apply_transposed(loss.grad_logits);
    return extractor_input_vjp(m, t, g_feat);
}

Vec feature_input_vjp(const Model& m, const Vec& x, const Vec& cotangent) {
    const Trace t = extract_with_trace(m, x);
    return extractor_input_vjp(m, t, cotangent);
}

VariationGrads variation_value_grads(const Model& m, const Vec& x1, const Vec& x2) {
    const Trace t1 = extract_with_trace(m, x1);
    const Trace t2 = extract_with_trace(m, x2);
    Vec r = sub(t1.features, t2.features);
    VariationGrads out;
    out.value = norm2(r);
    if (out.value <= 0.0) {
        out.grad_x1.assign(x1.size(), 0.0);
        out.grad_x2.assign(x2.size(), 0.0);
        return out;
    }
    Vec cot = r;
    for (auto& v : cot) v /= out.value;
    out.grad_x1 = extractor_input_vjp(m, t1, cot);
    out.grad_x2 = extractor_input_vjp(m, t2, cot);
    for (auto& v : out.grad_x2) v = -v;
    return out;
}

double classifier_lipschitz(const Model& m) {
    if (m.identity_classifier) return 1.0;
    return svd_spectrum(m.A).sigma_max;
}

std::size_t parameter_count(const Model& m) { return layout_of(m).total; }

Vec parameters(const Model& m) {
    Vec theta;
    theta.reserve(parameter_count(m));
    auto push_matrix = [&](const Matrix& mat) {
        theta.insert(theta.end(), mat.data().begin(), mat.data().end());
    };
    auto push_vec = [&](const Vec& v) { theta.insert(theta.end(), v.begin(), v.end()); };
    if (m.is_linear_extractor()) {
        push_matrix(m.linear().W);
        push_vec(m.linear().b);
    } else {
        const auto& ex = std::get<Mlp1Extractor>(m.extractor);
        push_matrix(ex.W1);
        push_vec(ex.b1);
        push_matrix(ex.W2);
        push_vec(ex.b2);
    }
    if (!m.identity_classifier) {
        push_matrix(m.A);
        push_vec(m.b2);
    }
    return theta;
}

void set_parameters(Model& m, const Vec& theta) {
    if (theta.size() != parameter_count(m))
        throw std::invalid_argument("set_parameters: size mismatch");
    std::size_t off = 0;
    auto pull_matrix = [&](Matrix& mat) {
        std::copy(theta.begin() + off, theta.begin() + off + mat.data().size(), mat.data().begin());
        off += mat.data().size();
    };
    auto pull_vec = [&](Vec& v) {
        std::copy(theta.begin() + off, theta.begin() + off + v.size(), v.begin());
        off += v.size();
    };
    if (m.is_linear_extractor()) {
        auto& ex = std::get<LinearExtractor>(m.extractor);
        pull_matrix(ex.W);
        pull_vec(ex.b);
    } else {
        auto& ex = std::get<Mlp1Extractor>(m.extractor);
        pull_matrix(ex.W1);
        pull_vec(ex.b1);
        pull_matrix(ex.W2);
        pull_vec(ex.b2);
    }
    if (!m.identity_classifier) {
        pull_matrix(m.A);
        pull_vec(m.b2);
    }
}

double objective_value(const Model& m, const std::vector<ObjectiveTerm>& batch, double lambda) {
    if (batch.empty()) throw std::invalid_argument("objective_value: empty batch");
    double total = 0.0;
    for (const auto& term : batch) {
        total += ce_loss(forward(m, term.x).logits, term.y).value;
        if (term.witnesses && lambda != 0.0) {
            const Vec f1 = extract_features(m, term.witnesses->first);
            const Vec f2 = extract_features(m, term.witnesses->second);
            total += lambda * norm2(sub(f1, f2));
        }
    }
    return total / static_cast<double>(batch.size());
}

Vec grad_params(const Model& m, const std::vector<ObjectiveTerm>& batch, double lambda) {
    if (batch.empty()) throw std::invalid_argument("grad_params: empty batch");
    const ParamLayout layout = layout_of(m);
    Vec grad(layout.total, 0.0);
    const double w = 1.0 / static_cast<double>(batch.size());
    const std::size_t k = m.num_classes();
    const std::size_t d = m.feature_dim();
    for (const auto& term : batch) {
        const Trace t = extract_with_trace(m, term.x);
        Vec logits = m.identity_classifier ? t.features : add(m.A.apply(t.features), m.b2);
        const LossValue loss = ce_loss(logits, term.y);
        Vec g_feat;
        if (m.identity_classifier) {
            g_feat = loss.grad_logits;
        } else {
            for (std::size_t i = 0; i < k; ++i) {
                const double gi = w * loss.grad_logits[i];
                double* row = grad.data() + layout.classifier_offset + i * d;
                for (std::size_t j = 0; j < d; ++j) row[j] += gi * t.features[j];
            }
            for (std::size_t i = 0; i < k; ++i)
                grad[layout.classifier_offset + k * d + i] += w * loss.grad_logits[i];
            g_feat = m.A.apply_transposed(loss.grad_logits);
        }
        extractor_param_vjp(m, term.x, t, g_feat, w, grad);

        if (term.witnesses && lambda != 0.0) {
            const Trace t1 = extract_with_trace(m, term.witnesses->first);
            const Trace t2 = extract_with_trace(m, term.witnesses->second);
            Vec r = sub(t1.features, t2.features);
            const double v = norm2(r);
            if (v > 0.0) {
                for (auto& c : r) c /= v;
                extractor_param_vjp(m, term.witnesses->first, t1, r, w * lambda, grad);
                extractor_param_vjp(m, term.witnesses->second, t2, r, -w * lambda, grad);
            }
        }
    }
    return grad;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) { return m.data(); }

Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    const auto flat = j.get<Vec>();
    if (flat.size() != rows * cols) throw std::runtime_error("model schema error: bad matrix size");
    m.data() = flat;
    return m;
}

Vec vec_from_json(const nlohmann::json& j, std::size_t size) {
    auto v = j.get<Vec>();
    if (v.size() != size) throw std::runtime_error("model schema error: bad vector size");
    return v;
}

}  // namespace

void save_model(const Model& m, const std::string& path, std::uint64_t seed, int epoch) {
    nlohmann::json j;
    j["identity_classifier"] = m.identity_classifier;
    j["seed"] = seed;
    j["epoch"] = epoch;
    nlohmann::json dims;
    dims["n"] = m.input_dim();
    dims["d"] = m.feature_dim();
    dims["k"] = m.num_classes();
    nlohmann::json params;
    if (m.is_linear_extractor()) {
        j["kind"] = "linear";
        params["W"] = matrix_to_json(m.linear().W);
        params["b1"] = m.linear().b;
    } else {
        const auto& ex = std::get<Mlp1Extractor>(m.extractor);
        j["kind"] = "mlp1";
        j["activation"] = ex.act == Activation::tanh_act ? "tanh" : "relu";
        dims["hidden"] = ex.W1.rows();
        params["W1"] = matrix_to_json(ex.W1);
        params["b1"] = ex.b1;
        params["W2"] = matrix_to_json(ex.W2);
        params["b2m"] = ex.b2;
    }
    if (!m.identity_classifier) {
        params["A"] = matrix_to_json(m.A);
        params["b2"] = m.b2;
    }
    j["dims"] = dims;
    j["parameters"] = params;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out << j.dump(2) << "\n";
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("model schema error: ") + e.what());
    }
    try {
        const std::string kind = j.at("kind").get<std::string>();
        const auto& dims = j.at("dims");
        const std::size_t n = dims.at("n").get<std::size_t>();
        const std::size_t d = dims.at("d").get<std::size_t>();
        const std::size_t k = dims.at("k").get<std::size_t>();
        const bool identity = j.at("identity_classifier").get<bool>();
        const auto& params = j.at("parameters");
        Model m;
        if (kind == "linear") {
            m.extractor = LinearExtractor{matrix_from_json(params.at("W"), d, n),
                                          vec_from_json(params.at("b1"), d)};
        } else if (kind == "mlp1") {
            const std::size_t hidden = dims.at("hidden").get<std::size_t>();
            const std::string act = j.at("activation").get<std::string>();
            m.extractor = Mlp1Extractor{
                matrix_from_json(params.at("W1"), hidden, n), vec_from_json(params.at("b1"), hidden),
                matrix_from_json(params.at("W2"), d, hidden), vec_from_json(params.at("b2m"), d),
                act == "tanh" ? Activation::tanh_act : Activation::relu};
        } else {
            throw std::runtime_error("model schema error: unknown kind '" + kind + "'");
        }
        m.identity_classifier = identity;
        if (!identity) {
            m.A = matrix_from_json(params.at("A"), k, d);
            m.b2 = vec_from_json(params.at("b2"), k);
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("model schema error: ") + e.what());
    }
}

}  // namespace atvr
