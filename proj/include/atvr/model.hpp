#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "atvr/numerics.hpp"

namespace atvr {

enum class Activation { tanh_act, relu };

struct LinearExtractor {
    Matrix W;  // d x n
    Vec b;     // d
};

struct Mlp1Extractor {
    Matrix W1;  // hidden x n
    Vec b1;     // hidden
    Matrix W2;  // d x hidden
    Vec b2;     // d
    Activation act = Activation::tanh_act;
};

/// f = g . h: feature extractor h (linear or one-hidden-layer MLP) followed
/// by a linear classifier g(z) = A z + b2, or the identity (logit-level
/// features, K = d).
struct Model {
    std::variant<LinearExtractor, Mlp1Extractor> extractor;
    bool identity_classifier = true;
    Matrix A;  // K x d, unused when identity_classifier
    Vec b2;    // K

    std::size_t input_dim() const;
    std::size_t feature_dim() const;
    std::size_t num_classes() const;
    bool is_linear_extractor() const { return std::holds_alternative<LinearExtractor>(extractor); }
    const LinearExtractor& linear() const { return std::get<LinearExtractor>(extractor); }
};

Model make_linear_model(Matrix W, Vec b1, Matrix A, Vec b2);
Model make_linear_logit_model(Matrix W, Vec b1);
Model make_mlp1_model(Matrix W1, Vec b1, Matrix W2, Vec b2m, Activation act, Matrix A, Vec b2);
Model make_mlp1_logit_model(Matrix W1, Vec b1, Matrix W2, Vec b2m, Activation act);

/// Random init with 1/sqrt(fan_in)-scaled normal weights.
Model random_linear_model(std::size_t n, std::size_t d, std::size_t classes, RandomSource& rng);
Model random_mlp1_model(std::size_t n, std::size_t hidden, std::size_t d, std::size_t classes,
                        Activation act, RandomSource& rng);

struct ForwardResult {
    Vec features;
    Vec logits;
};

Vec extract_features(const Model& m, const Vec& x);
ForwardResult forward(const Model& m, const Vec& x);

struct LossValue {
    double value = 0.0;
    Vec grad_logits;  // softmax - onehot
};

Vec softmax(const Vec& logits);
LossValue ce_loss(const Vec& logits, std::size_t y);
int predicted_class(const Vec& logits);

/// d ce_loss(f(x), y) / d x.
Vec grad_input(const Model& m, const Vec& x, std::size_t y);

/// J_h(x)^T cotangent (feature-space cotangent pulled back to the input).
Vec feature_input_vjp(const Model& m, const Vec& x, const Vec& cotangent);

/// value = ||h(x1) - h(x2)||_2 together with its input gradients; the
/// gradient is the zero subgradient when the value vanishes.
struct VariationGrads {
    double value = 0.0;
    Vec grad_x1;
    Vec grad_x2;
};
VariationGrads variation_value_grads(const Model& m, const Vec& x1, const Vec& x2);

/// sigma_max of the classifier map; 1 for the identity classifier.
double classifier_lipschitz(const Model& m);

// --- flat parameter view (extractor params first, then classifier) ---
std::size_t parameter_count(const Model& m);
Vec parameters(const Model& m);
void set_parameters(Model& m, const Vec& theta);

/// One summand of the AT-VR objective: cross-entropy at x (an adversarial or
/// clean point) plus, when witnesses are present, lambda * ||h(x1) - h(x2)||.
struct ObjectiveTerm {
    Vec x;
    std::size_t y = 0;
    std::optional<std::pair<Vec, Vec>> witnesses;
};

double objective_value(const Model& m, const std::vector<ObjectiveTerm>& batch, double lambda);
/// Mean gradient of the objective over the batch w.r.t. the flat parameters;
/// witnesses are treated as fixed points (no gradient flows into them).
Vec grad_params(const Model& m, const std::vector<ObjectiveTerm>& batch, double lambda);

void save_model(const Model& m, const std::string& path, std::uint64_t seed = 0, int epoch = 0);
Model load_model(const std::string& path);

}  // namespace atvr
