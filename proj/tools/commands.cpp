#include "commands.hpp"

#include "config.hpp"

#include "geomreg/dataset.hpp"
#include "geomreg/gram.hpp"
#include "geomreg/linear.hpp"
#include "geomreg/manifest.hpp"
#include "geomreg/mlp.hpp"
#include "geomreg/penalty.hpp"
#include "geomreg/pipeline.hpp"
#include "geomreg/random.hpp"
#include "geomreg/simulate.hpp"
#include "geomreg/tune.hpp"

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace geomreg::cli {

namespace fs = std::filesystem;

namespace {

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv("GEOMREG_SEED");
    if (!raw || !*raw) return std::nullopt;
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(raw, &end, 10);
    if (errno != 0 || *end != '\0' || raw[0] == '-') throw UsageError(std::string("GEOMREG_SEED is not an integer: ") + raw);
    return static_cast<std::uint64_t>(v);
}

std::uint64_t resolve_seed(const CommonOptions& common, std::uint64_t fallback) {
    if (common.seed) return *common.seed;
    if (auto s = env_seed()) return *s;
    return fallback;
}

// Output directory with a manifest that is written before any result and
// refreshed as outputs appear.
class RunDir {
public:
    RunDir(const CommonOptions& common, std::string command, nlohmann::json config, std::uint64_t seed) {
        root_ = common.out_dir.empty() ? fs::path("geomreg-" + command) : fs::path(common.out_dir);
        fs::create_directories(root_ / "results");
        fs::create_directories(root_ / "models");
        manifest_.command = std::move(command);
        manifest_.config = std::move(config);
        manifest_.seed = seed;
        manifest_.workers = common.workers;
        manifest_.started_at = utc_timestamp();
        manifest_.output_dir = root_;
        flush();
    }

    std::ofstream open(const std::string& relative) {
        std::ofstream out(root_ / relative);
        if (!out) throw std::runtime_error("cannot write " + (root_ / relative).string());
        manifest_.outputs.push_back(relative);
        return out;
    }

    void write_json(const std::string& relative, const nlohmann::json& j) {
        auto out = open(relative);
        out << j.dump(2) << '\n';
    }

    void finish(const std::string& status) {
        manifest_.status = status;
        manifest_.finished_at = utc_timestamp();
        flush();
    }

    const fs::path& root() const { return root_; }

private:
    void flush() const { write_manifest(manifest_, root_ / "manifest.json"); }

    fs::path root_;
    RunManifest manifest_;
};

std::string number_tag(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

Optimizer make_optimizer(const std::string& name, double lr) {
    if (name == "adam") {
        AdamOptions a;
        a.learning_rate = lr;
        return a;
    }
    if (name == "sgd") return SgdOptions{lr};
    throw UsageError("optimizer must be adam or sgd");
}

// ---------------------------------------------------------------- simulate

int run_simulation(const CommonOptions& common, const SimulateConfig& config, std::ostream& log) {
    RunDir run(common, "simulate", config, config.seed);

    TrainConfig train;
    train.epochs = config.epochs;
    train.batch_size = config.batch_size;
    train.optimizer = make_optimizer(config.optimizer, config.learning_rate);

    std::vector<MethodTemplate> methods;
    for (auto family : config.methods) {
        MethodTemplate m{to_string(family), family, {}};
        if (auto it = config.fixed_params.find(to_string(family)); it != config.fixed_params.end()) m.params = it->second;
        methods.push_back(std::move(m));
    }
    std::optional<CvPlan> plan;
    if (config.tune) {
        CvPlan cv;
        cv.folds = config.folds;
        cv.repeats = config.repeats;
        cv.grid = {config.grid};
        cv.mode = config.mode == "coordinate_wise" ? SearchMode::coordinate_wise : SearchMode::full_grid;
        plan = cv;
    }
    McOptions mc;
    mc.hidden = config.hidden;
    mc.test_fraction = config.test_fraction;
    mc.gram_delta = config.delta;
    mc.workers = common.workers;

    std::size_t failures = 0;
    for (const auto& scenario : config.scenarios) {
        std::vector<McResult> results;
        for (auto form : scenario.forms)
            for (double rho : scenario.rho)
                for (double sigma : scenario.sigma) {
                    // Every cell shares the master seed: cells differ only in
                    // (form, rho, sigma), not in the random draws.
                    DgpConfig dgp{scenario.n, scenario.p, scenario.k, rho, sigma, scenario.tau, form, config.seed};
                    log << "simulate " << scenario.name << ": " << to_string(form) << " rho=" << rho << " sigma=" << sigma
                        << " (" << config.replications << " replications, " << methods.size() << " methods)\n";
                    auto result = run_monte_carlo(dgp, methods, train, config.replications, plan, mc);
                    for (const auto& rec : result.records)
                        if (!rec.ok) log << "  failed: " << rec.method << " replication " << rec.replication << ": " << rec.error << '\n';
                    failures += result.failures();
                    auto out = run.open("results/" + scenario.name + "_" + to_string(form) + "_rho" + number_tag(rho) +
                                        "_sigma" + number_tag(sigma) + ".csv");
                    write_records_csv(result, out);
                    results.push_back(std::move(result));
                }
        auto out = run.open("results/summary_" + scenario.name + ".csv");
        write_summary_csv(results, out);
    }
    if (failures > 0) {
        log << failures << " (method, replication) cell(s) failed; see the result CSVs\n";
        run.finish("partial_failure");
        return kValidationFailure;
    }
    run.finish("ok");
    log << "results written to " << run.root().string() << '\n';
    return kSuccess;
}

// ---------------------------------------------------------------- fit / tune

Dataset load_data(const DataOptions& d) {
    if (d.path.empty()) throw UsageError("--data is required");
    if (d.target_name.empty() == !d.target_index.has_value())
        throw UsageError("give exactly one of --target and --target-index");
    const TargetColumn target = d.target_index ? TargetColumn{*d.target_index} : TargetColumn{d.target_name};
    Task task{};
    try {
        task = task_from_string(d.task);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return load_csv(d.path, target, task);
}

struct Prepared {
    Dataset data;
    PenaltyFamily family{};
    ModelSpec spec;
    TrainConfig train;
    Index screened;  // columns kept by full-data screening
};

Prepared prepare(const CommonOptions& common, const DataOptions& d, const LearnOptions& l, std::uint64_t seed,
                 bool need_params) {
    Prepared p;
    try {
        p.family = family_from_string(l.method);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (need_params && !l.tune && l.params.size() != arity(p.family))
        throw UsageError("--method " + l.method + " needs " + std::to_string(arity(p.family)) +
                         " value(s) in --params, or --tune");
    if (l.tune && !l.params.empty()) throw UsageError("--params and --tune are mutually exclusive");

    p.data = load_data(d);
    const bool classify = p.data.task == Task::classification;
    if (d.top && !classify) throw UsageError("--top applies to classification only");
    if (d.top && d.screen_full_data) {
        p.screened = anova_f_select(p.data.features, p.data.labels, std::min(*d.top, p.data.cols()));
        p.data = p.data.select_features(p.screened);
    } else if (d.top) {
        p.spec.top_features = *d.top;
    }
    p.spec.hidden = !l.hidden.empty() ? l.hidden : classify ? std::vector<std::size_t>{8, 4} : std::vector<std::size_t>{64, 32};
    p.spec.gram_delta = l.delta;

    p.train.epochs = l.epochs;
    p.train.batch_size = l.batch_size.value_or(classify ? 16 : 32);
    p.train.optimizer = make_optimizer(l.optimizer, l.learning_rate);
    const auto patience = l.patience ? l.patience : classify ? std::optional<std::size_t>{10} : std::nullopt;
    if (patience) p.train.early_stopping = EarlyStopping{l.validation_fraction, *patience};
    p.train.seed = derive_seed(seed, Stream::init);
    (void)common;
    return p;
}

CvPlan make_plan(const LearnOptions& l, PenaltyFamily family, Task task, std::uint64_t seed) {
    CvPlan plan;
    plan.folds = l.folds;
    plan.repeats = l.repeats;
    plan.seed = derive_seed(seed, Stream::folds);
    plan.criterion = task == Task::classification ? Criterion::mean_balanced_accuracy : Criterion::mean_mse;
    plan.mode = l.mode == "coordinate_wise" ? SearchMode::coordinate_wise : SearchMode::full_grid;
    if (l.mode != "full_grid" && l.mode != "coordinate_wise") throw UsageError("--mode must be full_grid or coordinate_wise");
    plan.grid.assign(arity(family), l.grid.empty() ? paper_grid() : l.grid);
    return plan;
}

nlohmann::json learn_config(const DataOptions& d, const LearnOptions& l, const Prepared& p) {
    nlohmann::json j;
    j["data"] = d.path;
    j["target"] = d.target_index ? nlohmann::json(*d.target_index) : nlohmann::json(d.target_name);
    j["task"] = d.task;
    j["top"] = d.top ? nlohmann::json(*d.top) : nlohmann::json(nullptr);
    j["screen_full_data"] = d.screen_full_data;
    j["method"] = l.method;
    j["params"] = l.params;
    j["tune"] = l.tune;
    j["grid"] = l.grid.empty() ? paper_grid() : l.grid;
    j["folds"] = l.folds;
    j["repeats"] = l.repeats;
    j["mode"] = l.mode;
    j["epochs"] = p.train.epochs;
    j["batch_size"] = p.train.batch_size;
    j["optimizer"] = l.optimizer;
    j["learning_rate"] = l.learning_rate;
    j["hidden"] = p.spec.hidden;
    j["patience"] = p.train.early_stopping ? nlohmann::json(p.train.early_stopping->patience) : nlohmann::json(nullptr);
    j["validation_fraction"] = l.validation_fraction;
    j["test_fraction"] = l.test_fraction;
    j["delta"] = l.delta;
    j["cv_repeats"] = l.cv_repeats;
    return j;
}

nlohmann::json named_params(PenaltyFamily family, const std::vector<double>& params) {
    nlohmann::json j = nlohmann::json::object();
    const auto names = parameter_names(family);
    for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = params[i];
    return j;
}

void save_model(RunDir& run, const FittedPipeline& fit, PenaltyFamily family, const std::vector<double>& params,
                const Index& screened) {
    nlohmann::json j;
    j["model"] = fit.model;
    j["standardization"] = fit.stats;
    // Column indices into the input CSV's feature columns.
    Index columns = fit.features;
    if (!screened.empty())
        for (auto& c : columns) c = screened[c];
    j["features"] = columns;
    j["penalty"] = {{"method", to_string(family)}, {"params", named_params(family, params)}};
    run.write_json("models/model.json", j);
    auto hist = run.open("results/history.csv");
    write_history_csv(fit.history, hist);
}

}  // namespace

int cmd_simulate(const CommonOptions& common, const SimulateOptions& opts, std::ostream& log) {
    if (opts.config_path.empty() == opts.manifest_path.empty())
        throw UsageError("give exactly one of --config and --manifest");
    SimulateConfig config;
    if (!opts.manifest_path.empty()) {
        // A manifest already holds the resolved seed; only an explicit
        // --seed replaces it.
        const auto m = read_manifest(opts.manifest_path);
        if (m.command != "simulate") throw UsageError("manifest is for '" + m.command + "', not simulate");
        config = m.config.get<SimulateConfig>();
        if (common.seed) config.seed = *common.seed;
    } else {
        config = load_simulate_config(opts.config_path);
        config.seed = resolve_seed(common, config.seed);
    }
    for (const auto& o : opts.overrides) apply_override(config, o);
    config.validate();
    return run_simulation(common, config, log);
}

int cmd_fit(const CommonOptions& common, const DataOptions& d, const LearnOptions& l, std::ostream& log) {
    const std::uint64_t seed = resolve_seed(common, 0);
    Prepared p = prepare(common, d, l, seed, true);
    RunDir run(common, "fit", learn_config(d, l, p), seed);
    const bool classify = p.data.task == Task::classification;

    // Classification follows the repeated-CV protocol on all rows; regression
    // holds out a test split.
    Index train_rows, test_rows;
    if (classify) {
        train_rows.resize(p.data.rows());
        std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
    } else {
        auto plan = split(p.data.rows(), l.test_fraction, derive_seed(seed, Stream::split));
        train_rows = std::move(plan.train_idx);
        test_rows = std::move(plan.test_idx);
    }

    std::vector<double> params = l.params;
    nlohmann::json report;
    report["method"] = to_string(p.family);
    if (l.tune && arity(p.family) > 0) {
        const CvPlan plan = make_plan(l, p.family, p.data.task, seed);
        const Dataset train_data = p.data.subset(train_rows);
        log << "tuning " << to_string(p.family) << " over " << plan.folds << "-fold CV\n";
        const auto gs = grid_search(train_data, p.family, plan, p.train, p.spec, common.workers);
        params = gs.best;
        auto out = run.open("results/cv_scores.csv");
        write_cv_table(gs, p.family, out);
        report["selection"] = selection_summary(gs, p.family, plan);
    }
    report["params"] = named_params(p.family, params);

    const auto fit = fit_pipeline(p.data, train_rows, p.family, params, p.spec, p.train);
    save_model(run, fit, p.family, params, p.screened);

    if (classify) {
        const auto cv = repeated_cv(p.data, p.family, params, p.spec, p.train, l.folds, l.cv_repeats,
                                    derive_seed(seed, Stream::validation), common.workers);
        report["balanced_accuracy"] = {{"mean", cv.mean},
                                       {"std", cv.std},
                                       {"pooled_mean", cv.pooled_mean},
                                       {"pooled_std", cv.pooled_std},
                                       {"repeat_means", cv.repeat_means},
                                       {"folds", l.folds},
                                       {"repeats", l.cv_repeats}};
        log << "balanced accuracy " << cv.mean << " +/- " << cv.std << " (" << l.cv_repeats << " x " << l.folds
            << "-fold CV)\n";
    } else {
        const auto m = score_regression(fit, p.data, test_rows);
        report["metrics"] = {{"mse", m.mse},
                             {"mae", m.mae},
                             {"rmse", m.rmse},
                             {"r2", m.r2 ? nlohmann::json(*m.r2) : nlohmann::json(nullptr)},
                             {"bias", m.bias},
                             {"test_rows", test_rows.size()}};
        log << "test mse " << m.mse << ", mae " << m.mae << ", rmse " << m.rmse;
        if (m.r2) log << ", r2 " << *m.r2;
        log << '\n';
    }
    run.write_json("results/metrics.json", report);
    run.finish("ok");
    return kSuccess;
}

int cmd_tune(const CommonOptions& common, const DataOptions& d, const LearnOptions& l, std::ostream& log) {
    const std::uint64_t seed = resolve_seed(common, 0);
    Prepared p = prepare(common, d, l, seed, false);
    if (arity(p.family) == 0) throw UsageError("method none has nothing to tune");
    RunDir run(common, "tune", learn_config(d, l, p), seed);
    const CvPlan plan = make_plan(l, p.family, p.data.task, seed);
    const auto gs = grid_search(p.data, p.family, plan, p.train, p.spec, common.workers);
    auto out = run.open("results/cv_scores.csv");
    write_cv_table(gs, p.family, out);
    out.close();
    run.write_json("results/selection.json", selection_summary(gs, p.family, plan));
    log << "best " << named_params(p.family, gs.best).dump() << " score " << gs.best_score << '\n';
    run.finish("ok");
    return kSuccess;
}

int cmd_validate(const CommonOptions& common, const ValidateOptions& o, std::ostream& log) {
    const std::uint64_t seed = resolve_seed(common, 0);
    nlohmann::json config = {{"theorem", o.theorem}, {"n", o.n},           {"p", o.p},
                             {"sigma", o.sigma},     {"lambda1", o.lambda1}, {"lambda2", o.lambda2},
                             {"replications", o.replications}, {"tolerance", o.tolerance}, {"problems", o.problems}};
    if (o.theorem == "t1") {
        if (o.n < 2 || o.p < 1) throw UsageError("t1 needs n >= 2 and p >= 1");
        RunDir run(common, "validate", config, seed);
        auto rng = make_rng(derive_seed(seed, Stream::data));
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::MatrixXd design(static_cast<Eigen::Index>(o.n), static_cast<Eigen::Index>(o.p));
        for (Eigen::Index i = 0; i < design.rows(); ++i)
            for (Eigen::Index j = 0; j < design.cols(); ++j) design(i, j) = normal(rng);
        Eigen::VectorXd w0(design.cols());
        for (Eigen::Index j = 0; j < w0.size(); ++j) w0(j) = normal(rng);
        const auto rep = validate_theorem1(design, w0, o.sigma, o.lambda1, o.lambda2, o.replications,
                                           derive_seed(seed, Stream::noise), o.tolerance, common.workers);
        run.write_json("results/t1_report.json", rep);
        log << (rep.pass() ? "PASS" : "FAIL") << " t1: relative Frobenius error " << rep.relative_frobenius_error
            << " (tolerance " << o.tolerance << "), max |mean| z " << rep.max_mean_z << " (limit 4), max leverage "
            << rep.max_leverage << '\n';
        run.finish(rep.pass() ? "pass" : "fail");
        return rep.pass() ? kSuccess : kValidationFailure;
    }
    if (o.theorem == "t2-gamma0") {
        if (o.problems < 1) throw UsageError("--problems must be >= 1");
        RunDir run(common, "validate", config, seed);
        double worst = 0.0;
        nlohmann::json per_problem = nlohmann::json::array();
        for (std::size_t t = 0; t < o.problems; ++t) {
            auto rng = make_rng(derive_seed(seed, t));
            std::normal_distribution<double> normal(0.0, 1.0);
            std::uniform_int_distribution<int> pick_p(2, 10), pick_n(20, 200);
            std::uniform_real_distribution<double> pick_l(0.01, 1.0);
            const int p = pick_p(rng);
            const int n = pick_n(rng);
            Eigen::MatrixXd x(n, p);
            Eigen::VectorXd y(n);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < p; ++j) x(i, j) = normal(rng);
                y(i) = normal(rng);
            }
            const double l1 = pick_l(rng);
            const auto problem = make_problem(x, y);
            ProximalOptions opts;
            opts.tol = 1e-13;
            opts.max_iter = 1000000;
            const auto spar = sparridge_solve(problem, l1, 0.0, opts);
            const auto cov = covridge_closed_form(problem, l1, 0.0);
            const double gap = (spar.w_hat - cov).cwiseAbs().maxCoeff();
            worst = std::max(worst, gap);
            per_problem.push_back({{"n", n}, {"p", p}, {"lambda1", l1}, {"max_abs_gap", gap}, {"iterations", spar.iterations}});
        }
        const bool pass = worst < 1e-8;
        run.write_json("results/t2_gamma0_report.json",
                       {{"problems", per_problem}, {"max_abs_gap", worst}, {"threshold", 1e-8}, {"pass", pass}});
        log << (pass ? "PASS" : "FAIL") << " t2-gamma0: max-norm gap " << worst << " over " << o.problems
            << " problems (threshold 1e-8)\n";
        run.finish(pass ? "pass" : "fail");
        return pass ? kSuccess : kValidationFailure;
    }
    throw UsageError("theorem must be t1 or t2-gamma0");
}

int cmd_contours(const CommonOptions& common, const ContourOptions& o, std::ostream& log) {
    PenaltyFamily family{};
    try {
        family = family_from_string(o.method);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (o.params.size() != arity(family))
        throw UsageError("--method " + o.method + " needs " + std::to_string(arity(family)) + " value(s) in --params");
    if (o.c_n.size() != 4) throw UsageError("--cn takes four values (2x2, row-major)");
    if (o.range.size() != 4) throw UsageError("--range takes x_min,x_max,y_min,y_max");
    if (o.basis != "canonical" && o.basis != "eigen") throw UsageError("--basis must be canonical or eigen");

    StabilizedGram gram;
    if (needs_gram(family)) {
        Eigen::Matrix2d c;
        c << o.c_n[0], o.c_n[1], o.c_n[2], o.c_n[3];
        gram = StabilizedGram::from_moment(c, o.delta);
    }
    const auto config = PenaltyConfig::make(family, o.params, gram);
    const GridSpec spec{o.range[0], o.range[1], o.range[2], o.range[3], o.resolution, o.resolution};

    nlohmann::json cfg = {{"method", o.method}, {"params", o.params}, {"cn", o.c_n},        {"delta", o.delta},
                          {"range", o.range},   {"resolution", o.resolution}, {"basis", o.basis}, {"svg", o.svg}};
    RunDir run(common, "contours", cfg, 0);
    const auto grid = contour_grid(config, spec, o.basis == "eigen" ? Basis::eigen : Basis::canonical);
    {
        auto out = run.open("results/contours.csv");
        write_grid(grid, out);
    }
    if (o.svg) {
        auto out = run.open("results/contours.svg");
        out << render_svg(grid);
    }
    log << describe(config) << ": " << o.resolution << "x" << o.resolution << " grid written to "
        << (run.root() / "results").string() << '\n';
    run.finish("ok");
    return kSuccess;
}

}  // namespace geomreg::cli
