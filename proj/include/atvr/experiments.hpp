#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "atvr/dataset.hpp"
#include "atvr/training.hpp"
#include "atvr/variation.hpp"

namespace atvr {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Bad or missing configuration; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Two isotropic gaussians with means (0.25, 0, ...) and (0.75, 0, ...),
/// clipped coordinatewise to [0, 1].
struct GaussianSpec {
    std::size_t n = 25;
    double sigma = 0.125;
    std::size_t samples_per_class = 1000;
    std::uint64_t seed = 0;
};

Dataset gen_gaussian(const GaussianSpec& spec);

struct RunContext {
    std::string out_dir = ".";
    int threads = 1;
    bool has_seed_override = false;
    std::uint64_t seed_override = 0;
};

// Each run_* consumes one JSON config document, writes its CSV/JSON/SVG
// artifacts plus a manifest into out_dir, and returns the report JSON.
nlohmann::json run_gen_data(const nlohmann::json& config, const RunContext& ctx);
nlohmann::json run_train(const nlohmann::json& config, const RunContext& ctx);
nlohmann::json run_eval(const nlohmann::json& config, const RunContext& ctx);
nlohmann::json run_variation_report(const nlohmann::json& config, const RunContext& ctx);
nlohmann::json run_expansion_study(const nlohmann::json& config, const RunContext& ctx);
nlohmann::json run_gap_study(const nlohmann::json& config, const RunContext& ctx);
nlohmann::json run_hausdorff(const nlohmann::json& config, const RunContext& ctx);
nlohmann::json run_verify_bounds(const nlohmann::json& config, const RunContext& ctx);
nlohmann::json run_predict_loss(const nlohmann::json& config, const RunContext& ctx);

}  // namespace atvr
