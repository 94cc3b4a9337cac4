#include "commands.hpp"
#include "config.hpp"

#include "geomreg/dataset.hpp"
#include "geomreg/manifest.hpp"
#include "geomreg/parallel.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace geomreg::cli;

namespace {

void add_common(CLI::App* app, CommonOptions& c) {
    app->add_option("--out", c.out_dir, "Output directory (created if missing)");
    app->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
    app->add_option("--seed", c.seed, "Master seed; overrides GEOMREG_SEED and the config");
}

void add_data(CLI::App* app, DataOptions& d) {
    app->add_option("--data", d.path, "CSV file")->required()->check(CLI::ExistingFile);
    app->add_option("--target", d.target_name, "Target column name (header required)");
    app->add_option("--target-index", d.target_index, "Target column index (0-based)");
    app->add_option("--task", d.task, "regression or classification")->check(CLI::IsMember({"regression", "classification"}));
    app->add_option("--top", d.top, "Keep the top-m features by ANOVA F (classification)")->check(CLI::PositiveNumber);
    app->add_flag("--screen-full-data", d.screen_full_data, "Screen once on all rows instead of inside each fold");
}

void add_learn(CLI::App* app, LearnOptions& l) {
    app->add_option("--method", l.method, "none, ridge, lasso, elastic_net, covridge or sparridge");
    app->add_option("--params", l.params, "Penalty parameters in method order")->delimiter(',');
    app->add_option("--grid", l.grid, "Candidate values for every parameter")->delimiter(',');
    app->add_option("--folds", l.folds, "Cross-validation folds")->check(CLI::Range(2, 1000000));
    app->add_option("--repeats", l.repeats, "Tuning CV repeats")->check(CLI::PositiveNumber);
    app->add_option("--mode", l.mode, "full_grid or coordinate_wise");
    app->add_option("--epochs", l.epochs, "Training epochs");
    app->add_option("--batch-size", l.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    app->add_option("--lr", l.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    app->add_option("--optimizer", l.optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
    app->add_option("--hidden", l.hidden, "Hidden layer sizes")->delimiter(',');
    app->add_option("--patience", l.patience, "Early-stopping patience in epochs")->check(CLI::PositiveNumber);
    app->add_option("--validation-fraction", l.validation_fraction, "Early-stopping validation share");
    app->add_option("--test-fraction", l.test_fraction, "Held-out share (regression)");
    app->add_option("--delta", l.delta, "Gram stabilization")->check(CLI::PositiveNumber);
    app->add_option("--cv-repeats", l.cv_repeats, "Repeats of the final CV (classification)")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Covariance-aware regularization toolkit"};
    app.set_version_flag("--version", geomreg::version_string());
    app.require_subcommand(1);

    CommonOptions common;
    common.workers = geomreg::default_workers();

    SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Run Monte Carlo scenarios from a config file");
    add_common(simulate, common);
    simulate->add_option("--config", sim.config_path, "Scenario config file");
    simulate->add_option("--manifest", sim.manifest_path, "Repeat the run recorded in a manifest.json");
    simulate->add_option("--set", sim.overrides, "Override, e.g. run.epochs=100 or dgp1.rho=0.75");

    DataOptions fit_data;
    LearnOptions fit_learn;
    auto* fit = app.add_subcommand("fit", "Train and evaluate one method on a CSV file");
    add_common(fit, common);
    add_data(fit, fit_data);
    add_learn(fit, fit_learn);
    fit->add_flag("--tune", fit_learn.tune, "Choose parameters by cross-validation");

    DataOptions tune_data;
    LearnOptions tune_learn;
    auto* tune = app.add_subcommand("tune", "Cross-validated grid search on a CSV file");
    add_common(tune, common);
    add_data(tune, tune_data);
    add_learn(tune, tune_learn);
    tune_learn.tune = true;

    ValidateOptions val;
    auto* validate = app.add_subcommand("validate", "Numerical checks of the estimator theory");
    add_common(validate, common);
    validate->add_option("theorem", val.theorem, "t1 or t2-gamma0")->required()->check(CLI::IsMember({"t1", "t2-gamma0"}));
    validate->add_option("--n", val.n, "Rows of the fixed design");
    validate->add_option("--p", val.p, "Columns of the fixed design");
    validate->add_option("--sigma", val.sigma, "Noise standard deviation");
    validate->add_option("--lambda1", val.lambda1, "Covariance-term weight");
    validate->add_option("--lambda2", val.lambda2, "Ridge weight");
    validate->add_option("--replications", val.replications, "Monte Carlo replications")->check(CLI::PositiveNumber);
    validate->add_option("--tolerance", val.tolerance, "Relative Frobenius tolerance");
    validate->add_option("--problems", val.problems, "Random problems (t2-gamma0)");

    ContourOptions con;
    auto* contours = app.add_subcommand("contours", "Penalty values on a two-dimensional grid");
    add_common(contours, common);
    contours->add_option("--method", con.method, "Penalty family");
    contours->add_option("--params", con.params, "Penalty parameters")->delimiter(',');
    contours->add_option("--cn", con.c_n, "2x2 second-moment matrix, row-major")->delimiter(',');
    contours->add_option("--delta", con.delta, "Gram stabilization")->check(CLI::PositiveNumber);
    contours->add_option("--range", con.range, "x_min,x_max,y_min,y_max")->delimiter(',');
    contours->add_option("--resolution", con.resolution, "Points per axis")->check(CLI::Range(2, 100000));
    contours->add_option("--basis", con.basis, "canonical or eigen");
    contours->add_flag("--svg", con.svg, "Also write an SVG of the level sets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kSuccess : kUsageError;
    }

    try {
        if (*simulate) return cmd_simulate(common, sim, std::cout);
        if (*fit) return cmd_fit(common, fit_data, fit_learn, std::cout);
        if (*tune) return cmd_tune(common, tune_data, tune_learn, std::cout);
        if (*validate) return cmd_validate(common, val, std::cout);
        if (*contours) return cmd_contours(common, con, std::cout);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsageError;
    } catch (const geomreg::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidationFailure;
    }
    return kUsageError;
}
