#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "geomreg/dataset.hpp"
#include "geomreg/gram.hpp"
#include "geomreg/linear.hpp"
#include "geomreg/manifest.hpp"
#include "geomreg/metrics.hpp"
#include "geomreg/mlp.hpp"
#include "geomreg/penalty.hpp"
#include "geomreg/simulate.hpp"
#include "geomreg/tune.hpp"

namespace py = pybind11;
using namespace geomreg;

namespace {

PenaltyConfig make_penalty(const std::string& method, const std::vector<double>& params, const StabilizedGram& gram) {
    return PenaltyConfig::make(family_from_string(method), params, gram);
}

py::dict metrics_dict(const RegressionMetrics& m) {
    py::dict d;
    d["mse"] = m.mse;
    d["mae"] = m.mae;
    d["bias"] = m.bias;
    d["rmse"] = m.rmse;
    d["r2"] = m.r2 ? py::object(py::float_(*m.r2)) : py::object(py::none());
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Covariance-aware regularization: penalties, linear estimators, simulation";
    m.attr("__version__") = version_string();
    m.attr("DEFAULT_DELTA") = kDefaultGramDelta;

    py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

    py::class_<StabilizedGram>(m, "StabilizedGram")
        .def_property_readonly("dims", &StabilizedGram::dims)
        .def_property_readonly("delta", &StabilizedGram::delta)
        .def_property_readonly("c_n", &StabilizedGram::c_n)
        .def_property_readonly("c_delta", &StabilizedGram::c_delta)
        .def_property_readonly("eigenvalues", &StabilizedGram::eigenvalues)
        .def_property_readonly("eigenvectors", &StabilizedGram::eigenvectors)
        .def_property_readonly("sqrt", &StabilizedGram::sqrt)
        .def("quadratic", &StabilizedGram::quadratic, py::arg("w"))
        .def_static("from_moment", &StabilizedGram::from_moment, py::arg("c_n"), py::arg("delta"));

    m.def("build_gram", &build_gram, py::arg("h"), py::arg("delta") = kDefaultGramDelta,
          "Stabilized Gram H^T H / n + delta I of a representation H.");

    m.def(
        "penalty_value",
        [](const std::string& method, const std::vector<double>& params, const Eigen::MatrixXd& w,
           const StabilizedGram& gram) { return penalty_value(make_penalty(method, params, gram), w); },
        py::arg("method"), py::arg("params"), py::arg("w"), py::arg("gram") = StabilizedGram{});
    m.def(
        "penalty_grad",
        [](const std::string& method, const std::vector<double>& params, const Eigen::MatrixXd& w,
           const StabilizedGram& gram) { return penalty_grad(make_penalty(method, params, gram), w); },
        py::arg("method"), py::arg("params"), py::arg("w"), py::arg("gram") = StabilizedGram{});
    m.def(
        "contour_grid",
        [](const std::string& method, const std::vector<double>& params, const StabilizedGram& gram,
           std::array<double, 4> range, std::size_t resolution, const std::string& basis) {
            const auto g = contour_grid(make_penalty(method, params, gram),
                                        GridSpec{range[0], range[1], range[2], range[3], resolution, resolution},
                                        basis == "eigen" ? Basis::eigen : Basis::canonical);
            return py::make_tuple(g.xs, g.ys, g.values);
        },
        py::arg("method"), py::arg("params"), py::arg("gram") = StabilizedGram{},
        py::arg("range") = std::array<double, 4>{-2, 2, -2, 2}, py::arg("resolution") = 101,
        py::arg("basis") = "canonical", "Returns (xs, ys, values) with values[iy, ix].");

    m.def("soft_threshold", &soft_threshold, py::arg("z"), py::arg("t"));
    m.def(
        "covridge_closed_form",
        [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda1, double lambda2, double delta) {
            return covridge_closed_form(make_problem(x, y, build_gram(x, delta)), lambda1, lambda2);
        },
        py::arg("x"), py::arg("y"), py::arg("lambda1"), py::arg("lambda2"), py::arg("delta") = kDefaultGramDelta);
    m.def(
        "shrunken_target",
        [](const Eigen::MatrixXd& x, const Eigen::VectorXd& w0, double lambda1, double lambda2, double delta) {
            return shrunken_target(make_problem(x, Eigen::VectorXd::Zero(x.rows()), build_gram(x, delta)), lambda1,
                                   lambda2, w0);
        },
        py::arg("x"), py::arg("w0"), py::arg("lambda1"), py::arg("lambda2"), py::arg("delta") = kDefaultGramDelta);
    m.def("covridge_asym_cov", &covridge_asym_cov, py::arg("q"), py::arg("c_delta"), py::arg("lambda1"),
          py::arg("lambda2"), py::arg("sigma2"));
    m.def(
        "sparridge_solve",
        [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda1, double gamma, double tol,
           std::size_t max_iter, bool accelerated, double delta) {
            ProximalOptions opts;
            opts.tol = tol;
            opts.max_iter = max_iter;
            opts.accelerated = accelerated;
            const auto fit = sparridge_solve(make_problem(x, y, build_gram(x, delta)), lambda1, gamma, opts);
            py::dict d;
            d["w"] = fit.w_hat;
            d["iterations"] = fit.iterations;
            d["converged"] = fit.converged;
            return d;
        },
        py::arg("x"), py::arg("y"), py::arg("lambda1"), py::arg("gamma"), py::arg("tol") = 1e-10,
        py::arg("max_iter") = 100000, py::arg("accelerated") = false, py::arg("delta") = kDefaultGramDelta);
    m.def("limit_criterion_minimize", &limit_criterion_minimize, py::arg("h"), py::arg("z"), py::arg("gamma"),
          py::arg("w_star"));
    m.def(
        "validate_theorem1",
        [](const Eigen::MatrixXd& design, const Eigen::VectorXd& w0, double sigma, double lambda1, double lambda2,
           std::size_t replications, std::uint64_t seed, double tolerance, std::size_t workers) {
            Theorem1Report r;
            {
                py::gil_scoped_release release;
                r = validate_theorem1(design, w0, sigma, lambda1, lambda2, replications, seed, tolerance, workers);
            }
            py::dict d;
            d["relative_frobenius_error"] = r.relative_frobenius_error;
            d["max_mean_z"] = r.max_mean_z;
            d["empirical_cov"] = r.empirical_cov;
            d["theoretical_cov"] = r.theoretical_cov;
            d["empirical_mean"] = r.empirical_mean;
            d["w_circ"] = r.w_circ;
            d["max_leverage"] = r.max_leverage;
            d["passed"] = r.pass();
            return d;
        },
        py::arg("design"), py::arg("w0"), py::arg("sigma"), py::arg("lambda1"), py::arg("lambda2"),
        py::arg("replications"), py::arg("seed"), py::arg("tolerance") = 0.1, py::arg("workers") = 1);

    m.def(
        "gen_dataset",
        [](std::size_t n, std::size_t p, std::size_t k, double rho, double sigma, double tau, const std::string& form,
           std::uint64_t seed) {
            const auto g = gen_dataset(DgpConfig{n, p, k, rho, sigma, tau, form_from_string(form), seed});
            return py::make_tuple(g.data.features, g.data.target, g.theta);
        },
        py::arg("n"), py::arg("p"), py::arg("k"), py::arg("rho"), py::arg("sigma"), py::arg("tau") = 1.0,
        py::arg("form") = "linear", py::arg("seed") = 0, "Returns (X, y, theta).");

    m.def(
        "compute_metrics",
        [](const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) { return metrics_dict(compute_metrics(y, yhat)); },
        py::arg("y_true"), py::arg("y_pred"));
    m.def(
        "balanced_accuracy",
        [](const std::vector<int>& labels, const std::vector<int>& predicted, int num_classes) {
            return balanced_accuracy(labels, predicted, num_classes);
        },
        py::arg("labels"), py::arg("predicted"), py::arg("num_classes") = 0);

    m.def(
        "standardize",
        [](const Eigen::MatrixXd& x) {
            const auto s = standardize(x);
            return py::make_tuple(s.apply(x), s.means, s.stds, s.constant_flags);
        },
        py::arg("x"), "Returns (standardized, means, stds, constant_flags).");
    m.def(
        "split",
        [](std::size_t n, double test_fraction, std::uint64_t seed) {
            const auto plan = split(n, test_fraction, seed);
            return py::make_tuple(plan.train_idx, plan.test_idx);
        },
        py::arg("n"), py::arg("test_fraction"), py::arg("seed"));
    m.def("kfold_split", &kfold_split, py::arg("n"), py::arg("k"), py::arg("seed"));
    m.def(
        "anova_f_select",
        [](const Eigen::MatrixXd& x, const std::vector<int>& labels, std::size_t m) { return anova_f_select(x, labels, m); },
        py::arg("x"), py::arg("labels"), py::arg("m"));

    m.def(
        "train_mlp",
        [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::size_t>& hidden,
           const std::string& method, const std::vector<double>& params, std::size_t epochs, std::size_t batch_size,
           double learning_rate, std::uint64_t seed) {
            std::vector<std::size_t> sizes{static_cast<std::size_t>(x.cols())};
            sizes.insert(sizes.end(), hidden.begin(), hidden.end());
            sizes.push_back(1);
            const auto family = family_from_string(method);
            const auto penalty = PenaltyConfig::make(family, params, needs_gram(family) ? build_gram(x) : StabilizedGram{});
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            AdamOptions adam;
            adam.learning_rate = learning_rate;
            cfg.optimizer = adam;
            cfg.seed = seed;
            auto result = train(init_model(sizes, OutputHead::linear, seed), make_regression(x, y), cfg, penalty);
            return py::make_tuple(predict_values(result.model, x), result.history.train_loss);
        },
        py::arg("x"), py::arg("y"), py::arg("hidden") = std::vector<std::size_t>{64, 32}, py::arg("method") = "none",
        py::arg("params") = std::vector<double>{}, py::arg("epochs") = 200, py::arg("batch_size") = 32,
        py::arg("learning_rate") = 1e-3, py::arg("seed") = 0,
        "Trains a ReLU regression network on (x, y); returns (fitted values, per-epoch loss).");
}
