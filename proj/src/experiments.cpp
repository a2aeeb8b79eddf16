#include "atvr/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>

#include "atvr/expansion.hpp"
#include "atvr/io.hpp"

namespace atvr {

namespace fs = std::filesystem;
using nlohmann::json;

Dataset gen_gaussian(const GaussianSpec& spec) {
    if (spec.n == 0 || spec.samples_per_class == 0 || spec.sigma <= 0.0)
        throw ConfigError("gen_gaussian: invalid spec");
    Dataset data;
    data.dim = spec.n;
    RandomSource root(spec.seed);
    const std::size_t total = 2 * spec.samples_per_class;
    data.points.reserve(total);
    data.labels.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t label = i < spec.samples_per_class ? 0 : 1;
        RandomSource srng = root.substream(i);
        Vec x(spec.n, 0.0);
        x[0] = label == 0 ? 0.25 : 0.75;
        for (auto& v : x) v = std::clamp(v + spec.sigma * srng.normal(), 0.0, 1.0);
        data.points.push_back(std::move(x));
        data.labels.push_back(label);
    }
    return data;
}

namespace {

// --- config helpers -------------------------------------------------------

template <typename T>
T require(const json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("missing config key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad config key '" + key + "': " + e.what());
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad config key '" + key + "': " + e.what());
    }
}

ThreatModel threat_model_from(const json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("missing threat model '" + key + "'");
    try {
        return j.at(key).get<ThreatModel>();
    } catch (const std::exception& e) {
        throw ConfigError("bad threat model '" + key + "': " + e.what());
    }
}

AttackConfig attack_from(const json& j, const std::string& key, AttackConfig defaults = {}) {
    AttackConfig cfg = defaults;
    if (!j.contains(key)) return cfg;
    const json& a = j.at(key);
    cfg.steps = get_or<int>(a, "steps", cfg.steps);
    cfg.step_size = get_or<double>(a, "step_size", cfg.step_size);
    cfg.restarts = get_or<int>(a, "restarts", cfg.restarts);
    cfg.keep_best = get_or<bool>(a, "keep_best", cfg.keep_best);
    cfg.clip_box = get_or<bool>(a, "clip_box", cfg.clip_box);
    return cfg;
}

std::uint64_t effective_seed(const json& config, const RunContext& ctx) {
    return ctx.has_seed_override ? ctx.seed_override : get_or<std::uint64_t>(config, "seed", 0);
}

std::string out_path(const RunContext& ctx, const std::string& name) {
    fs::create_directories(ctx.out_dir);
    return (fs::path(ctx.out_dir) / name).string();
}

void write_manifest(const RunContext& ctx, const std::string& experiment, const json& config,
                    std::uint64_t seed, const std::vector<std::string>& outputs) {
    json manifest;
    manifest["experiment"] = experiment;
    manifest["version"] = kLibraryVersion;
    manifest["seed"] = seed;
    manifest["config"] = config;
    manifest["outputs"] = outputs;
    write_json(out_path(ctx, experiment + ".manifest.json"), manifest);
}

Model model_from_config(const json& spec, std::size_t input_dim) {
    const std::string kind = get_or<std::string>(spec, "kind", "linear");
    const std::size_t d = require<std::size_t>(spec, "d");
    const std::size_t classes = get_or<std::size_t>(spec, "classes", 2);
    const bool identity = get_or<bool>(spec, "identity_classifier", false);
    RandomSource rng(get_or<std::uint64_t>(spec, "init_seed", 0));
    if (kind == "linear") {
        if (identity) {
            Model m = random_linear_model(input_dim, d, d, rng);
            return make_linear_logit_model(m.linear().W, m.linear().b);
        }
        return random_linear_model(input_dim, d, classes, rng);
    }
    if (kind == "mlp1") {
        const std::size_t hidden = require<std::size_t>(spec, "hidden");
        const std::string act = get_or<std::string>(spec, "activation", "tanh");
        Model m = random_mlp1_model(input_dim, hidden, d, classes,
                                    act == "relu" ? Activation::relu : Activation::tanh_act, rng);
        if (!identity) return m;
        const auto& ex = std::get<Mlp1Extractor>(m.extractor);
        return make_mlp1_logit_model(ex.W1, ex.b1, ex.W2, ex.b2, ex.act);
    }
    throw ConfigError("unknown model kind '" + kind + "'");
}

TrainConfig train_config_from(const json& j, const RunContext& ctx, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.lambda = get_or<double>(j, "lambda", 0.0);
    cfg.epochs = get_or<int>(j, "epochs", 200);
    cfg.batch_size = get_or<int>(j, "batch_size", 0);
    cfg.learning_rate = get_or<double>(j, "learning_rate", 0.1);
    cfg.momentum = get_or<double>(j, "momentum", 0.9);
    cfg.source = threat_model_from(j, "source");
    cfg.attack = attack_from(j, "attack");
    cfg.variation_cfg = attack_from(j, "variation");
    cfg.seed = seed;
    cfg.log_variation = get_or<bool>(j, "log_variation", true);
    cfg.snapshot_every = get_or<int>(j, "snapshot_every", 0);
    cfg.threads = ctx.threads;
    return cfg;
}

CsvWriter train_log_csv(const std::vector<EpochLog>& log) {
    CsvWriter csv({"epoch", "clean_loss", "adv_loss", "variation", "objective", "clean_acc",
                   "adv_acc"});
    for (const auto& row : log)
        csv.add_row(std::vector<double>{static_cast<double>(row.epoch), row.clean_loss,
                                        row.adv_loss, row.variation, row.objective, row.clean_acc,
                                        row.adv_acc});
    return csv;
}

RiskMethod risk_method_from(const std::string& name, const Model& m) {
    if (name == "clean") return RiskMethod::clean;
    if (name == "pgd") return RiskMethod::pgd;
    if (name == "exact_linear") return RiskMethod::exact_linear;
    if (name == "auto")
        return m.is_linear_extractor() && m.num_classes() == 2 ? RiskMethod::exact_linear
                                                               : RiskMethod::pgd;
    throw ConfigError("unknown risk method '" + name + "'");
}

// Exact variation when available for this member, PGD otherwise.
VariationEstimate member_variation_auto(const Model& m, const Ball& ball, const Vec& anchor,
                                        const AttackConfig& cfg, RandomSource& rng) {
    if (m.is_linear_extractor() && (ball.p != Norm::linf || m.input_dim() <= 20)) {
        VariationEstimate e = variation_exact_linear(m.linear().W, ball);
        e.x1 = add(anchor, e.x1);
        e.x2 = add(anchor, e.x2);
        return e;
    }
    return variation_pgd(m, anchor, ball, cfg, rng);
}

VariationEstimate union_variation_auto(const Model& m, const ThreatModel& tm, const Vec& anchor,
                                       const AttackConfig& cfg, RandomSource& rng) {
    std::vector<VariationEstimate> members;
    std::vector<double> values;
    for (std::size_t i = 0; i < tm.members.size(); ++i) {
        RandomSource mrng = rng.substream(i);
        members.push_back(member_variation_auto(m, tm.members[i], anchor, cfg, mrng));
        values.push_back(members.back().value);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < members.size(); ++i)
        if (members[i].value > members[best].value) best = i;
    VariationEstimate out = std::move(members[best]);
    out.member_index = best;
    if (values.size() > 1) out.member_values = std::move(values);
    return out;
}

}  // namespace

// --- gen-data --------------------------------------------------------------

json run_gen_data(const json& config, const RunContext& ctx) {
    GaussianSpec spec;
    spec.n = require<std::size_t>(config, "n");
    spec.sigma = require<double>(config, "sigma");
    spec.samples_per_class = require<std::size_t>(config, "samples_per_class");
    spec.seed = effective_seed(config, ctx);
    const std::string out = get_or<std::string>(config, "out", "gaussian_data.json");

    const Dataset data = gen_gaussian(spec);
    save_dataset(data, out_path(ctx, out));
    write_manifest(ctx, "gen-data", config, spec.seed, {out});

    json report;
    report["out"] = out;
    report["samples"] = data.size();
    report["dim"] = data.dim;
    return report;
}

// --- train -------------------------------------------------------------------

json run_train(const json& config, const RunContext& ctx) {
    const Dataset data = load_dataset(require<std::string>(config, "data"));
    const std::uint64_t seed = effective_seed(config, ctx);
    const Model init = model_from_config(config.contains("model") ? config.at("model") : json::object(),
                                         data.dim);
    const TrainConfig cfg = train_config_from(config, ctx, seed);

    const TrainResult result = at_vr_train(init, data, cfg);

    const std::string log_name = get_or<std::string>(config, "log_csv", "train_log.csv");
    const std::string model_name = get_or<std::string>(config, "out_model", "model.json");
    train_log_csv(result.log).write(out_path(ctx, log_name));
    save_model(result.model, out_path(ctx, model_name), seed, cfg.epochs);
    std::vector<std::string> outputs{log_name, model_name};
    for (const auto& snap : result.snapshots) {
        const std::string name = "model_epoch_" + std::to_string(snap.epoch) + ".json";
        save_model(snap.model, out_path(ctx, name), seed, snap.epoch);
        outputs.push_back(name);
    }
    write_manifest(ctx, "train", config, seed, outputs);

    json report;
    report["model"] = model_name;
    report["log"] = log_name;
    if (!result.log.empty()) {
        const EpochLog& last = result.log.back();
        report["final"] = {{"epoch", last.epoch},         {"clean_loss", last.clean_loss},
                           {"adv_loss", last.adv_loss},   {"variation", last.variation},
                           {"objective", last.objective}, {"clean_acc", last.clean_acc},
                           {"adv_acc", last.adv_acc}};
    }
    return report;
}

// --- eval --------------------------------------------------------------------

json run_eval(const json& config, const RunContext& ctx) {
    const Model m = load_model(require<std::string>(config, "model"));
    const Dataset data = load_dataset(require<std::string>(config, "data"));
    const ThreatModel tm = threat_model_from(config, "tm");
    const AttackConfig attack = attack_from(config, "attack", [] {
        AttackConfig a;
        a.restarts = 10;
        return a;
    }());
    const std::uint64_t seed = effective_seed(config, ctx);
    const RiskMethod method = risk_method_from(get_or<std::string>(config, "method", "auto"), m);

    const RiskEstimate risk = empirical_adv_risk(m, data, tm, attack, method, seed, ctx.threads);

    const std::string out = get_or<std::string>(config, "out_csv", "eval.csv");
    CsvWriter csv({"tm", "method", "mean_loss", "accuracy"});
    csv.add_row(std::vector<std::string>{describe(tm), risk_method_name(method),
                                         CsvWriter::format_double(risk.mean_loss),
                                         CsvWriter::format_double(risk.accuracy)});
    csv.write(out_path(ctx, out));
    write_manifest(ctx, "eval", config, seed, {out});

    json report;
    report["tm"] = describe(tm);
    report["method"] = risk_method_name(method);
    report["mean_loss"] = risk.mean_loss;
    report["accuracy"] = risk.accuracy;
    return report;
}

// --- variation ---------------------------------------------------------------

json run_variation_report(const json& config, const RunContext& ctx) {
    const Model m = load_model(require<std::string>(config, "model"));
    const Dataset data = load_dataset(require<std::string>(config, "data"));
    const std::uint64_t seed = effective_seed(config, ctx);
    const std::string method = get_or<std::string>(config, "method", "auto");
    const AttackConfig attack = attack_from(config, "attack", [] {
        AttackConfig a;
        a.steps = 100;
        a.restarts = 10;
        return a;
    }());
    const std::string out = get_or<std::string>(config, "out_csv", "variation.csv");

    CsvWriter csv({"sample_id", "method", "p", "eps", "value", "witness_norm1", "witness_norm2"});
    double mean = 0.0;

    if (method == "fast_lpv") {
        const double eps = require<double>(config, "eps");
        const int steps = get_or<int>(config, "steps", 50);
        const std::string dist_name = get_or<std::string>(config, "distance", "l2");
        DistanceOracle dist;
        if (dist_name == "l2") {
            dist = l2_distance();
        } else if (dist_name == "random_projection") {
            dist = random_projection_distance(data.dim, get_or<std::size_t>(config, "proj_dim", 8),
                                              get_or<std::uint64_t>(config, "dist_seed", 0));
        } else {
            throw ConfigError("unknown distance '" + dist_name + "'");
        }
        RandomSource root(seed);
        std::vector<VariationEstimate> results(data.size());
        parallel_for(data.size(), ctx.threads, [&](std::size_t i) {
            RandomSource srng = root.substream(i);
            results[i] = fast_lpv(m, dist, data.points[i], eps, steps, srng);
        });
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& e = results[i];
            mean += e.value;
            csv.add_row(std::vector<std::string>{
                std::to_string(i), variation_method_name(e.method), dist.name,
                CsvWriter::format_double(eps), CsvWriter::format_double(e.value),
                CsvWriter::format_double(e.witness_distances[0]),
                CsvWriter::format_double(e.witness_distances[1])});
        }
    } else {
        const ThreatModel tm = threat_model_from(config, "tm");
        RandomSource root(seed);
        std::vector<VariationEstimate> results(data.size());
        parallel_for(data.size(), ctx.threads, [&](std::size_t i) {
            RandomSource srng = root.substream(i);
            if (method == "pgd")
                results[i] = union_variation(m, data.points[i], tm, attack, srng);
            else if (method == "auto" || method == "exact")
                results[i] = union_variation_auto(m, tm, data.points[i], attack, srng);
            else
                throw ConfigError("unknown variation method '" + method + "'");
        });
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& e = results[i];
            const Ball& member = tm.members[e.member_index];
            mean += e.value;
            csv.add_row(std::vector<std::string>{
                std::to_string(i), variation_method_name(e.method), norm_name(member.p),
                CsvWriter::format_double(member.epsilon), CsvWriter::format_double(e.value),
                CsvWriter::format_double(ball_norm(sub(e.x1, data.points[i]), member.p)),
                CsvWriter::format_double(ball_norm(sub(e.x2, data.points[i]), member.p))});
        }
    }
    mean /= static_cast<double>(data.size());
    csv.write(out_path(ctx, out));
    write_manifest(ctx, "variation", config, seed, {out});

    json report;
    report["out"] = out;
    report["mean_variation"] = mean;
    report["samples"] = data.size();
    return report;
}

// --- expansion ----------------------------------------------------------------

namespace {

Matrix standard_normal_matrix(std::size_t rows, std::size_t cols, RandomSource& rng) {
    Matrix w(rows, cols);
    for (auto& v : w.data()) v = rng.normal();
    return w;
}

std::optional<double> expansion_theory_slope(const ThreatModel& source, const ThreatModel& target,
                                             std::size_t n, double condition_bound) {
    if (source.is_union()) return std::nullopt;
    const Ball& s = source.members.front();
    // Pick the target member that is not the source copy; same-norm targets
    // use the nested-ball slope.
    const Ball* other = nullptr;
    for (const Ball& b : target.members) {
        if (b.p == s.p && b.epsilon == s.epsilon) continue;
        if (other) return std::nullopt;
        other = &b;
    }
    if (!other) return std::nullopt;
    SlopeFormula f{s.p, other->p, s.epsilon, other->epsilon, n, condition_bound};
    return theoretical_slope_cross_norm(f);
}

}  // namespace

json run_expansion_study(const json& config, const RunContext& ctx) {
    const std::uint64_t seed = effective_seed(config, ctx);
    const ThreatModel source = threat_model_from(config, "source");
    const ThreatModel target = threat_model_from(config, "target");
    const AttackConfig attack = attack_from(config, "variation", [] {
        AttackConfig a;
        a.steps = 60;
        a.restarts = 8;
        return a;
    }());
    const std::string mode = get_or<std::string>(config, "mode", "random-normal");

    std::vector<Model> models;
    if (mode == "random-normal") {
        const std::size_t n = require<std::size_t>(config, "n");
        const std::size_t d = get_or<std::size_t>(config, "d", 5);
        const std::size_t count = get_or<std::size_t>(config, "num_models", 100);
        RandomSource root(seed);
        for (std::size_t k = 0; k < count; ++k) {
            RandomSource mrng = root.substream(k);
            Matrix w = standard_normal_matrix(d, n, mrng);
            Vec b(d);
            for (auto& v : b) v = mrng.normal();
            models.push_back(make_linear_logit_model(std::move(w), std::move(b)));
        }
    } else if (mode == "training-trajectory") {
        const Dataset data = load_dataset(require<std::string>(config, "data"));
        const json train_spec = require<json>(config, "train");
        const Model init = model_from_config(
            train_spec.contains("model") ? train_spec.at("model") : json::object(), data.dim);
        TrainConfig cfg = train_config_from(train_spec, ctx, seed);
        if (cfg.snapshot_every <= 0) cfg.snapshot_every = 10;
        const TrainResult result = at_vr_train(init, data, cfg);
        for (const auto& snap : result.snapshots) models.push_back(snap.model);
        models.push_back(result.model);
    } else {
        throw ConfigError("unknown expansion mode '" + mode + "'");
    }
    if (models.empty()) throw ConfigError("expansion study: no models");

    const std::size_t n = models.front().input_dim();
    const Vec anchor(n, 0.0);
    std::vector<std::pair<double, double>> points(models.size());
    std::vector<std::string> source_methods(models.size()), target_methods(models.size());
    RandomSource vroot = RandomSource(seed).substream(0x5eedULL);
    double condition_bound = 1.0;
    for (std::size_t k = 0; k < models.size(); ++k) {
        RandomSource mrng = vroot.substream(k);
        RandomSource srng = mrng.substream(0);
        RandomSource trng = mrng.substream(1);
        const VariationEstimate sv = union_variation_auto(models[k], source, anchor, attack, srng);
        const VariationEstimate tv = union_variation_auto(models[k], target, anchor, attack, trng);
        points[k] = {sv.value, tv.value};
        source_methods[k] = variation_method_name(sv.method);
        target_methods[k] = variation_method_name(tv.method);
        if (models[k].is_linear_extractor()) {
            const double cond = svd_spectrum(models[k].linear().W).condition_number;
            if (std::isfinite(cond)) condition_bound = std::max(condition_bound, cond);
        }
    }

    const double zero_tol = get_or<double>(config, "zero_tol", 1e-8);
    const ExpansionFit fit = fit_min_slope(points, zero_tol);
    const std::optional<double> theory = expansion_theory_slope(source, target, n, condition_bound);

    const std::string csv_name = get_or<std::string>(config, "out_csv", "expansion.csv");
    CsvWriter csv({"model_id", "source_var", "target_var", "source_method", "target_method"});
    for (std::size_t k = 0; k < models.size(); ++k)
        csv.add_row(std::vector<std::string>{
            std::to_string(k), CsvWriter::format_double(points[k].first),
            CsvWriter::format_double(points[k].second), source_methods[k], target_methods[k]});
    csv.write(out_path(ctx, csv_name));

    json fit_json;
    fit_json["slope"] = fit.slope;
    fit_json["excluded_count"] = fit.excluded_count;
    fit_json["points_retained"] = fit.points.size();
    fit_json["condition_bound_measured"] = condition_bound;
    if (theory) fit_json["theoretical_slope"] = *theory;
    fit_json["source"] = describe(source);
    fit_json["target"] = describe(target);
    const std::string fit_name = get_or<std::string>(config, "out_fit", "expansion_fit.json");
    write_json(out_path(ctx, fit_name), fit_json);

    const std::string svg_name = get_or<std::string>(config, "out_svg", "expansion.svg");
    double max_x = 0.0;
    for (const auto& [x, y] : points) max_x = std::max(max_x, x);
    PlotSeries scatter{"models", points, false, "#888888"};
    PlotSeries line{"min slope " + CsvWriter::format_double(fit.slope),
                    {{0.0, 0.0}, {max_x, fit.slope * max_x}},
                    true,
                    "#4477aa"};
    write_svg_plot(out_path(ctx, svg_name),
                   "source " + describe(source) + " vs target " + describe(target),
                   {scatter, line});

    write_manifest(ctx, "expansion", config, seed, {csv_name, fit_name, svg_name});
    return fit_json;
}

// --- gap study ----------------------------------------------------------------

json run_gap_study(const json& config, const RunContext& ctx) {
    const std::uint64_t seed = effective_seed(config, ctx);
    Dataset data;
    if (config.contains("data")) {
        data = load_dataset(require<std::string>(config, "data"));
    } else if (config.contains("gaussian")) {
        const json& g = config.at("gaussian");
        GaussianSpec spec;
        spec.n = require<std::size_t>(g, "n");
        spec.sigma = require<double>(g, "sigma");
        spec.samples_per_class = require<std::size_t>(g, "samples_per_class");
        spec.seed = get_or<std::uint64_t>(g, "seed", seed);
        data = gen_gaussian(spec);
    } else {
        throw ConfigError("gap study: provide 'data' or 'gaussian'");
    }

    const json train_spec = require<json>(config, "train");
    const Model init = model_from_config(
        train_spec.contains("model") ? train_spec.at("model") : json::object(), data.dim);
    const std::vector<double> lambdas = require<std::vector<double>>(config, "lambdas");
    if (lambdas.empty()) throw ConfigError("gap study: empty lambda grid");

    const ThreatModel source = threat_model_from(train_spec, "source");
    const json& targets_spec = config.contains("targets") ? config.at("targets") : json::object();
    const std::vector<std::string> norms =
        get_or<std::vector<std::string>>(targets_spec, "norms", {"inf", "2"});
    const std::vector<double> eps_grid =
        get_or<std::vector<double>>(targets_spec, "eps", {0.01, 0.02, 0.03, 0.04, 0.05});

    const json& eval_spec = config.contains("eval") ? config.at("eval") : json::object();
    const std::string eval_set = require<std::string>(eval_spec, "set");  // explicit choice
    Dataset eval_data;
    if (eval_set == "train") {
        eval_data = data;
    } else if (eval_set == "separate") {
        GaussianSpec spec;
        const json& g = require<json>(eval_spec, "gaussian");
        spec.n = data.dim;
        spec.sigma = require<double>(g, "sigma");
        spec.samples_per_class = require<std::size_t>(g, "samples_per_class");
        spec.seed = require<std::uint64_t>(g, "seed");
        eval_data = gen_gaussian(spec);
    } else {
        throw ConfigError("gap study: eval.set must be 'train' or 'separate'");
    }
    const AttackConfig eval_attack = attack_from(eval_spec, "attack", [] {
        AttackConfig a;
        a.restarts = 10;
        return a;
    }());
    const std::string eval_method_name = get_or<std::string>(eval_spec, "method", "auto");
    const std::uint64_t eval_seed = get_or<std::uint64_t>(eval_spec, "seed", seed + 1000);

    CsvWriter gap_csv({"lambda", "target_p", "target_eps", "source_loss", "target_loss", "gap",
                       "target_acc"});
    CsvWriter summary_csv({"lambda", "clean_loss", "clean_acc", "source_loss", "source_acc"});
    std::vector<std::string> outputs;
    std::map<std::string, PlotSeries> series;

    for (const double lambda : lambdas) {
        TrainConfig cfg = train_config_from(train_spec, ctx, seed);
        cfg.lambda = lambda;
        const TrainResult result = at_vr_train(init, data, cfg);
        const Model& m = result.model;
        const RiskMethod method = risk_method_from(eval_method_name, m);

        const std::string lam = CsvWriter::format_double(lambda);
        const std::string log_name = "train_log_lambda_" + lam + ".csv";
        const std::string model_name = "model_lambda_" + lam + ".json";
        train_log_csv(result.log).write(out_path(ctx, log_name));
        save_model(m, out_path(ctx, model_name), seed, cfg.epochs);
        outputs.push_back(log_name);
        outputs.push_back(model_name);

        const RiskEstimate clean = empirical_adv_risk(m, eval_data, source, eval_attack,
                                                      RiskMethod::clean, eval_seed, ctx.threads);
        const RiskEstimate src_risk =
            empirical_adv_risk(m, eval_data, source, eval_attack, method, eval_seed, ctx.threads);
        summary_csv.add_row(std::vector<double>{lambda, clean.mean_loss, clean.accuracy,
                                                src_risk.mean_loss, src_risk.accuracy});

        for (const std::string& pname : norms) {
            const Norm p = norm_from_name(pname);
            std::vector<ThreatModel> targets;
            for (const double eps : eps_grid) {
                std::vector<Ball> members = source.members;
                members.push_back(Ball{p, eps});
                targets.push_back(ThreatModel::unite(std::move(members)));
            }
            const auto rows = gap_curve(m, eval_data, source, targets, eval_attack, method,
                                        eval_seed, ctx.threads);
            for (std::size_t t = 0; t < rows.size(); ++t) {
                gap_csv.add_row(std::vector<std::string>{
                    lam, pname, CsvWriter::format_double(eps_grid[t]),
                    CsvWriter::format_double(rows[t].source_loss),
                    CsvWriter::format_double(rows[t].target_loss),
                    CsvWriter::format_double(rows[t].gap),
                    CsvWriter::format_double(rows[t].target_accuracy)});
                series["lambda=" + lam + " l" + pname].points.push_back(
                    {eps_grid[t], rows[t].gap});
            }
        }
    }

    const std::string gap_name = get_or<std::string>(config, "out_csv", "gap.csv");
    const std::string summary_name = get_or<std::string>(config, "out_summary", "gap_summary.csv");
    const std::string svg_name = get_or<std::string>(config, "out_svg", "gap.svg");
    gap_csv.write(out_path(ctx, gap_name));
    summary_csv.write(out_path(ctx, summary_name));
    std::vector<PlotSeries> plot;
    const std::vector<std::string> palette{"#4477aa", "#ee6677", "#228833", "#ccbb44",
                                           "#66ccee", "#aa3377"};
    std::size_t color = 0;
    for (auto& [label, s] : series) {
        s.label = label;
        s.draw_line = true;
        s.color = palette[color++ % palette.size()];
        plot.push_back(s);
    }
    write_svg_plot(out_path(ctx, svg_name), "threat model generalization gap", plot);
    outputs.push_back(gap_name);
    outputs.push_back(summary_name);
    outputs.push_back(svg_name);
    write_manifest(ctx, "gap", config, seed, outputs);

    json report;
    report["out"] = gap_name;
    report["summary"] = summary_name;
    report["lambdas"] = lambdas;
    report["eval_set"] = eval_set;
    return report;
}

// --- hausdorff ------------------------------------------------------------------

json run_hausdorff(const json& config, const RunContext& ctx) {
    const Model m = load_model(require<std::string>(config, "model"));
    const Dataset data = load_dataset(require<std::string>(config, "data"));
    const ThreatModel source = threat_model_from(config, "source");
    const ThreatModel target = threat_model_from(config, "target");
    const std::uint64_t seed = effective_seed(config, ctx);
    HausdorffConfig hcfg;
    if (config.contains("hausdorff")) {
        const json& h = config.at("hausdorff");
        hcfg.outer_steps = get_or<int>(h, "outer_steps", hcfg.outer_steps);
        hcfg.outer_restarts = get_or<int>(h, "outer_restarts", hcfg.outer_restarts);
        hcfg.outer_step_size = get_or<double>(h, "outer_step_size", hcfg.outer_step_size);
        hcfg.inner_steps = get_or<int>(h, "inner_steps", hcfg.inner_steps);
        hcfg.inner_restarts = get_or<int>(h, "inner_restarts", hcfg.inner_restarts);
        hcfg.samples = get_or<int>(h, "samples", hcfg.samples);
    }
    const std::size_t limit =
        std::min<std::size_t>(data.size(), get_or<std::size_t>(config, "anchors", data.size()));

    RandomSource root(seed);
    std::vector<double> values(limit, 0.0);
    parallel_for(limit, ctx.threads, [&](std::size_t i) {
        RandomSource srng = root.substream(i);
        values[i] = hausdorff_estimate(m, data.points[i], source, target, hcfg, srng);
    });

    const std::string out = get_or<std::string>(config, "out_csv", "hausdorff.csv");
    CsvWriter csv({"sample_id", "value"});
    double mean = 0.0, max_v = 0.0;
    for (std::size_t i = 0; i < limit; ++i) {
        csv.add_row(std::vector<std::string>{std::to_string(i),
                                             CsvWriter::format_double(values[i])});
        mean += values[i];
        max_v = std::max(max_v, values[i]);
    }
    mean /= static_cast<double>(limit);
    csv.write(out_path(ctx, out));
    write_manifest(ctx, "hausdorff", config, seed, {out});

    json report;
    report["out"] = out;
    report["anchors"] = limit;
    report["mean"] = mean;
    report["max"] = max_v;
    return report;
}

// --- verify-bounds ---------------------------------------------------------------

namespace {

struct CheckResult {
    std::string name;
    std::size_t instances = 0;
    std::vector<std::string> violations;
};

json check_to_json(const CheckResult& c) {
    json j;
    j["name"] = c.name;
    j["instances"] = c.instances;
    j["violations"] = c.violations;
    j["pass"] = c.violations.empty();
    return j;
}

}  // namespace

json run_verify_bounds(const json& config, const RunContext& ctx) {
    const std::uint64_t seed = effective_seed(config, ctx);
    const std::size_t num_models = get_or<std::size_t>(config, "num_models", 100);
    const std::size_t n = get_or<std::size_t>(config, "n", 10);
    const std::size_t d = get_or<std::size_t>(config, "d", 4);
    if (n > 20) throw ConfigError("verify-bounds: n must be <= 20 for the exact linf oracle");
    const double eps_source = get_or<double>(config, "eps_source", 0.01);
    const std::vector<double> eps_targets =
        get_or<std::vector<double>>(config, "eps_targets", {0.01, 0.03, 0.05});
    const bool corrupt = get_or<bool>(config, "corrupt_sigma_max", false);
    const double model_scale = get_or<double>(config, "model_scale", 1.0);

    GaussianSpec dspec;
    dspec.n = n;
    dspec.sigma = get_or<double>(config, "data_sigma", 0.125);
    dspec.samples_per_class = get_or<std::size_t>(config, "data_samples_per_class", 50);
    dspec.seed = seed + 17;
    const Dataset data = gen_gaussian(dspec);

    RandomSource root(seed);
    std::vector<Model> models;
    for (std::size_t k = 0; k < num_models; ++k) {
        RandomSource mrng = root.substream(k);
        Model m = random_linear_model(n, d, 2, mrng);
        if (model_scale != 1.0) {
            Vec theta = parameters(m);
            for (auto& v : theta) v *= model_scale;
            set_parameters(m, theta);
        }
        models.push_back(std::move(m));
    }

    const std::vector<Norm> norms{Norm::linf, Norm::l2};
    const AttackConfig dummy;

    // 1. bound soundness: exact L_T - exact L_S <= sqrt(2) sigma_G V_exact(T).
    // The corrupt switch halves every spectral statistic the checker feeds
    // into the bound (sigma_G and the sigma_max behind the closed-form
    // variation); a working checker must then report violations.
    CheckResult bound{"bound_soundness"};
    for (std::size_t k = 0; k < models.size(); ++k) {
        const Model& m = models[k];
        const double sigma_g = classifier_lipschitz(m) * (corrupt ? 0.5 : 1.0);
        for (const Norm ps : norms) {
            const RiskEstimate ls = empirical_adv_risk(m, data, ThreatModel::ball(ps, eps_source),
                                                       dummy, RiskMethod::exact_linear, 0);
            for (const Norm pt : norms) {
                for (const double et : eps_targets) {
                    if (et < eps_source) continue;
                    const Ball target{pt, et};
                    const RiskEstimate lt = empirical_adv_risk(
                        m, data, ThreatModel{{target}}, dummy, RiskMethod::exact_linear, 0);
                    const double vt = variation_exact_linear(m.linear().W, target).value *
                                      (corrupt ? 0.5 : 1.0);
                    ++bound.instances;
                    if (lt.mean_loss - ls.mean_loss >
                        kSoftmaxCeLipschitz * sigma_g * vt + 1e-9) {
                        bound.violations.push_back("model " + std::to_string(k) + " " +
                                                   describe(Ball{ps, eps_source}) + " -> " +
                                                   describe(target));
                    }
                }
            }
        }
    }

    // 2. spectral sandwich on full-column-rank extractors
    CheckResult sandwich{"spectral_sandwich"};
    {
        const std::size_t sn = get_or<std::size_t>(config, "sandwich_n", 8);
        const std::size_t sd = get_or<std::size_t>(config, "sandwich_d", 14);
        const double eps = get_or<double>(config, "sandwich_eps", 0.02);
        RandomSource srng = root.substream(0xabcdULL);
        for (std::size_t k = 0; k < num_models; ++k) {
            RandomSource mrng = srng.substream(k);
            const Matrix w = standard_normal_matrix(sd, sn, mrng);
            for (const Norm p : {Norm::l1, Norm::l2, Norm::linf}) {
                const Ball ball{p, eps};
                const VariationBounds b = variation_bounds(w, ball);
                const double exact = variation_exact_linear(w, ball).value;
                const double slack = 1e-9 * (1.0 + b.upper);
                ++sandwich.instances;
                if (!b.lower || *b.lower > exact + slack || exact > b.upper + slack)
                    sandwich.violations.push_back("seed " + std::to_string(k) + " " +
                                                  describe(ball));
            }
        }
    }

    // 3. hausdorff-based bound dominated by the variation-based bound, plus
    //    the nested-box geometry reference
    CheckResult hausdorff{"hausdorff_domination"};
    {
        const std::size_t h_models = get_or<std::size_t>(config, "hausdorff_models", 10);
        const std::size_t h_anchors = get_or<std::size_t>(config, "hausdorff_anchors", 3);
        HausdorffConfig hcfg;
        hcfg.outer_steps = 30;
        hcfg.outer_restarts = 3;
        hcfg.inner_restarts = 3;
        hcfg.samples = 4;
        RandomSource hroot = root.substream(0x4a5ULL);
        for (std::size_t k = 0; k < std::min(h_models, models.size()); ++k) {
            const Model& m = models[k];
            for (const Norm ps : norms) {
                for (const Norm pt : norms) {
                    const double et = eps_targets.back();
                    const ThreatModel source = ThreatModel::ball(ps, eps_source);
                    const ThreatModel target = ThreatModel::ball(pt, et);
                    const double vt = variation_exact_linear(m.linear().W, target.members[0]).value;
                    for (std::size_t a = 0; a < std::min<std::size_t>(h_anchors, data.size()); ++a) {
                        RandomSource arng = hroot.substream(k * 1000 + a * 10 +
                                                            static_cast<std::uint64_t>(ps) * 2 +
                                                            static_cast<std::uint64_t>(pt));
                        const double h =
                            hausdorff_estimate(m, data.points[a], source, target, hcfg, arng);
                        ++hausdorff.instances;
                        if (h > vt + 1e-6)
                            hausdorff.violations.push_back(
                                "model " + std::to_string(k) + " anchor " + std::to_string(a) +
                                " " + describe(source.members[0]) + " -> " +
                                describe(target.members[0]));
                    }
                }
            }
        }
        // identity-feature nested boxes: H ~= (e2 - e1) sqrt(n)
        const std::size_t id_n = get_or<std::size_t>(config, "identity_n", 9);
        const Model id_model =
            make_linear_logit_model(Matrix::identity(id_n), Vec(id_n, 0.0));
        const double e1 = 0.01, e2 = 0.05;
        RandomSource irng = root.substream(0x1dULL);
        const double h = hausdorff_estimate(id_model, Vec(id_n, 0.5),
                                            ThreatModel::ball(Norm::linf, e1),
                                            ThreatModel::ball(Norm::linf, e2), HausdorffConfig{},
                                            irng);
        const double expected = (e2 - e1) * std::sqrt(static_cast<double>(id_n));
        ++hausdorff.instances;
        if (std::abs(h - expected) > 0.05 * expected)
            hausdorff.violations.push_back("identity nested boxes: estimate " +
                                           CsvWriter::format_double(h) + " vs " +
                                           CsvWriter::format_double(expected));
    }

    // 4. fitted slope dominated by the closed-form slope at the measured B
    CheckResult expansion{"expansion_dominance"};
    {
        struct Family {
            Norm ps;
            double es;
            Norm pt;
            double et;
        };
        const std::vector<Family> families{{Norm::l2, 0.01, Norm::linf, 0.05},
                                           {Norm::linf, 0.01, Norm::l2, 0.05},
                                           {Norm::l1, 0.01, Norm::l2, 0.03},
                                           {Norm::l2, 0.01, Norm::l2, 0.05}};
        const std::size_t fam_models = get_or<std::size_t>(config, "expansion_models", 50);
        RandomSource eroot = root.substream(0xe1ULL);
        for (std::size_t fi = 0; fi < families.size(); ++fi) {
            const Family& fam = families[fi];
            std::vector<std::pair<double, double>> pts;
            double max_cond = 1.0;
            for (std::size_t k = 0; k < fam_models; ++k) {
                RandomSource mrng = eroot.substream(fi * 10000 + k);
                const Matrix w = standard_normal_matrix(d, n, mrng);
                pts.push_back({variation_exact_linear(w, Ball{fam.ps, fam.es}).value,
                               variation_exact_linear(w, Ball{fam.pt, fam.et}).value});
                const double cond = svd_spectrum(w).condition_number;
                if (std::isfinite(cond)) max_cond = std::max(max_cond, cond);
            }
            const double fitted = fit_min_slope(pts).slope;
            const double theory = theoretical_slope_cross_norm(
                SlopeFormula{fam.ps, fam.pt, fam.es, fam.et, n, max_cond});
            ++expansion.instances;
            if (fitted > theory)
                expansion.violations.push_back("family " + std::to_string(fi) + ": fitted " +
                                               CsvWriter::format_double(fitted) + " > theory " +
                                               CsvWriter::format_double(theory));
        }
    }

    json report;
    report["checks"] =
        json::array({check_to_json(bound), check_to_json(sandwich), check_to_json(hausdorff),
                     check_to_json(expansion)});
    report["pass"] = bound.violations.empty() && sandwich.violations.empty() &&
                     hausdorff.violations.empty() && expansion.violations.empty();
    report["corrupt_sigma_max"] = corrupt;
    const std::string out = get_or<std::string>(config, "out_report", "verify_bounds.json");
    write_json(out_path(ctx, out), report);
    write_manifest(ctx, "verify-bounds", config, seed, {out});
    return report;
}

// --- predict-loss -----------------------------------------------------------------

json run_predict_loss(const json& config, const RunContext& ctx) {
    const Model m = load_model(require<std::string>(config, "model"));
    const Dataset data = load_dataset(require<std::string>(config, "data"));
    const ThreatModel source = threat_model_from(config, "source");
    const double slope = require<double>(config, "slope");
    const double rho = get_or<double>(config, "rho", kSoftmaxCeLipschitz);
    const std::uint64_t seed = effective_seed(config, ctx);
    const AttackConfig attack = attack_from(config, "attack", [] {
        AttackConfig a;
        a.steps = 100;
        a.restarts = 10;
        return a;
    }());
    const RiskMethod method = risk_method_from(get_or<std::string>(config, "method", "auto"), m);

    const RiskEstimate ls = empirical_adv_risk(m, data, source, attack, method, seed, ctx.threads);
    const VariationMethod vmethod =
        m.is_linear_extractor() ? VariationMethod::exact_closed_form : VariationMethod::pgd;
    double source_variation = 0.0;
    if (vmethod == VariationMethod::exact_closed_form && source.members.front().p == Norm::linf &&
        m.input_dim() > 20) {
        source_variation =
            dataset_variation(m, data, source, attack, VariationMethod::pgd, seed, ctx.threads).mean;
    } else {
        source_variation =
            dataset_variation(m, data, source, attack, vmethod, seed, ctx.threads).mean;
    }
    const double sigma_g = classifier_lipschitz(m);
    const double predicted = predict_target_loss(ls.mean_loss, source_variation, rho, sigma_g,
                                                 std::max(slope, 1.0));

    json report;
    report["source"] = describe(source);
    report["source_loss"] = ls.mean_loss;
    report["source_variation"] = source_variation;
    report["rho"] = rho;
    report["sigma_g"] = sigma_g;
    report["slope"] = slope;
    report["predicted_target_loss"] = predicted;
    if (config.contains("target")) {
        const ThreatModel target = threat_model_from(config, "target");
        const RiskEstimate lt =
            empirical_adv_risk(m, data, target, attack, method, seed + 1, ctx.threads);
        report["target"] = describe(target);
        report["measured_target_loss"] = lt.mean_loss;
    }
    const std::string out = get_or<std::string>(config, "out_report", "predict_loss.json");
    write_json(out_path(ctx, out), report);
    write_manifest(ctx, "predict-loss", config, seed, {out});
    return report;
}

}  // namespace atvr
