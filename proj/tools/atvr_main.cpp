#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "atvr/experiments.hpp"
#include "atvr/io.hpp"

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string out_dir = ".";
    int threads = 1;
    bool has_seed = false;
    std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, GlobalOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config document for this run")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out-dir", opts.out_dir, "directory for CSV/JSON/SVG outputs");
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--threads", opts.threads, "worker threads for per-sample maps");
}

int dispatch(const std::string& name, const GlobalOpts& opts) {
    nlohmann::json config;
    try {
        config = atvr::read_json(opts.config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    atvr::RunContext ctx;
    ctx.out_dir = opts.out_dir;
    ctx.threads = opts.threads;
    ctx.has_seed_override = opts.has_seed;
    ctx.seed_override = opts.seed;

    try {
        nlohmann::json report;
        if (name == "gen-data")
            report = atvr::run_gen_data(config, ctx);
        else if (name == "train")
            report = atvr::run_train(config, ctx);
        else if (name == "eval")
            report = atvr::run_eval(config, ctx);
        else if (name == "variation")
            report = atvr::run_variation_report(config, ctx);
        else if (name == "expansion")
            report = atvr::run_expansion_study(config, ctx);
        else if (name == "gap")
            report = atvr::run_gap_study(config, ctx);
        else if (name == "hausdorff")
            report = atvr::run_hausdorff(config, ctx);
        else if (name == "verify-bounds")
            report = atvr::run_verify_bounds(config, ctx);
        else if (name == "predict-loss")
            report = atvr::run_predict_loss(config, ctx);
        std::cout << report.dump(2) << "\n";
        if (name == "verify-bounds" && !report.value("pass", false)) return 1;
        return 0;
    } catch (const atvr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial training with variation regularization, desk-scale experiments"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands{
        {"gen-data", "generate the clipped two-gaussian dataset"},
        {"train", "run AT-VR training and emit the log and checkpoint"},
        {"eval", "empirical adversarial risk of a checkpoint"},
        {"variation", "per-sample variation report"},
        {"expansion", "expansion-function scatter and minimum-slope fit"},
        {"gap", "generalization-gap curves over a lambda grid"},
        {"hausdorff", "directed hausdorff distance estimates"},
        {"verify-bounds", "machine-checkable bound and sandwich report"},
        {"predict-loss", "bound-based target loss prediction"},
    };

    std::map<std::string, GlobalOpts> opts;
    for (const auto& [name, help] : commands) {
        CLI::App* cmd = app.add_subcommand(name, help);
        add_common(cmd, opts[name]);
    }

    CLI11_PARSE(app, argc, argv);

    for (auto& [name, o] : opts) {
        CLI::App* cmd = app.get_subcommand(name);
        if (cmd->parsed()) {
            o.has_seed = cmd->count("--seed") > 0;
            return dispatch(name, o);
        }
    }
    return 0;
}
