#include "geomreg/simulate.hpp"

#include "geomreg/parallel.hpp"
#include "geomreg/pipeline.hpp"
#include "geomreg/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace geomreg {

std::string to_string(SignalForm form) {
    return form == SignalForm::linear ? "linear" : "sin_nonlinear";
}

SignalForm form_from_string(const std::string& name) {
    if (name == "linear") return SignalForm::linear;
    if (name == "sin_nonlinear" || name == "nonlinear" || name == "sin") return SignalForm::sin_nonlinear;
    throw std::invalid_argument("unknown signal form '" + name + "' (expected linear or sin_nonlinear)");
}

void DgpConfig::validate() const {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    if (p < 1) throw std::invalid_argument("p must be >= 1");
    if (k > p) throw std::invalid_argument("k must not exceed p");
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be >= 0");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be > 0");
}

void to_json(nlohmann::json& j, const DgpConfig& c) {
    j = {{"n", c.n},         {"p", c.p},         {"k", c.k},    {"rho", c.rho},
         {"sigma", c.sigma}, {"tau", c.tau},     {"form", to_string(c.form)}, {"seed", c.seed}};
}

namespace {
// Sub-streams of the data stream.
enum : std::uint64_t { kTheta = 0, kLatent = 1, kIdiosyncratic = 2, kNoiseFeatures = 3, kErrors = 4 };
}  // namespace

GeneratedData gen_dataset(const DgpConfig& config) {
    config.validate();
    const auto n = static_cast<Eigen::Index>(config.n);
    const auto p = static_cast<Eigen::Index>(config.p);
    const auto k = static_cast<Eigen::Index>(config.k);
    const std::uint64_t base = derive_seed(config.seed, Stream::data);
    std::normal_distribution<double> normal(0.0, 1.0);

    GeneratedData out;
    out.theta = Eigen::VectorXd::Zero(p);
    {
        auto rng = make_rng(derive_seed(base, kTheta));
        for (Eigen::Index j = 0; j < k; ++j) out.theta(j) = config.tau * normal(rng);
    }

    Eigen::MatrixXd x(n, p);
    {
        auto latent_rng = make_rng(derive_seed(base, kLatent));
        auto idio_rng = make_rng(derive_seed(base, kIdiosyncratic));
        const double a = std::sqrt(config.rho);
        const double b = std::sqrt(1.0 - config.rho);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double z = normal(latent_rng);
            for (Eigen::Index j = 0; j < k; ++j) x(i, j) = a * z + b * normal(idio_rng);
        }
    }
    {
        auto rng = make_rng(derive_seed(base, kNoiseFeatures));
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = k; j < p; ++j) x(i, j) = normal(rng);
    }

    Eigen::VectorXd y(n);
    if (config.form == SignalForm::linear) {
        y = x * out.theta;
    } else {
        y = x.leftCols(k).array().sin().matrix() * out.theta.head(k);
    }
    if (config.sigma > 0.0) {
        auto rng = make_rng(derive_seed(base, kErrors));
        for (Eigen::Index i = 0; i < n; ++i) y(i) += config.sigma * normal(rng);
    }
    out.data = make_regression(std::move(x), std::move(y));
    return out;
}

std::size_t McResult::failures() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const McRecord& r) { return !r.ok; }));
}

const McSummary& McResult::summary_for(const std::string& method) const {
    for (const auto& s : summary)
        if (s.method == method) return s;
    throw std::out_of_range("no method named '" + method + "' in the result");
}

McResult run_monte_carlo(const DgpConfig& dgp, std::span<const MethodTemplate> methods, const TrainConfig& train,
                         std::size_t replications, const std::optional<CvPlan>& tuning, const McOptions& options) {
    dgp.validate();
    train.validate();
    if (replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (methods.empty()) throw std::invalid_argument("no methods to run");
    for (const auto& m : methods) {
        if (!tuning && m.params.size() != arity(m.family))
            throw std::invalid_argument("method '" + m.name + "' needs " + std::to_string(arity(m.family)) +
                                        " parameter(s) when not tuned");
    }

    McResult result;
    result.dgp = dgp;
    result.replications = replications;
    result.records.resize(replications * methods.size());
    ModelSpec spec;
    spec.hidden = options.hidden;
    spec.gram_delta = options.gram_delta;

    // One task per (replication, method); the dataset is regenerated inside
    // each task, which is cheap and keeps tasks independent.
    parallel_for(result.records.size(), options.workers, [&](std::size_t task) {
        const std::size_t r = task / methods.size();
        const MethodTemplate& method = methods[task % methods.size()];
        const std::uint64_t rep_seed = derive_seed(dgp.seed, r);
        McRecord rec;
        rec.method = method.name;
        rec.replication = r;
        try {
            DgpConfig cfg = dgp;
            cfg.seed = rep_seed;
            const auto generated = gen_dataset(cfg);
            const auto plan = split(generated.data.rows(), options.test_fraction, derive_seed(rep_seed, Stream::split));
            TrainConfig tc = train;
            tc.seed = derive_seed(rep_seed, Stream::init);

            rec.params = method.params;
            if (tuning && arity(method.family) > 0) {
                CvPlan cv = *tuning;
                cv.seed = derive_seed(rep_seed, Stream::folds);
                cv.grid.resize(arity(method.family), cv.grid.empty() ? paper_grid() : cv.grid.back());
                const Dataset train_part = generated.data.subset(plan.train_idx);
                rec.params = grid_search(train_part, method.family, cv, tc, spec).best;
            }
            const auto fit = fit_pipeline(generated.data, plan.train_idx, method.family, rec.params, spec, tc);
            const auto m = score_regression(fit, generated.data, plan.test_idx);
            rec.mse = m.mse;
            rec.mae = m.mae;
            rec.bias = m.bias;
            double norm2 = 0.0;
            for (const auto& layer : fit.model.layers) norm2 += layer.weight.squaredNorm();
            rec.weight_norm = std::sqrt(norm2);
            if (!std::isfinite(rec.mse)) throw std::runtime_error("non-finite test MSE");
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        result.records[task] = std::move(rec);
    });

    for (const auto& m : methods) {
        McSummary s;
        s.method = m.name;
        for (const auto& rec : result.records) {
            if (rec.method != m.name) continue;
            if (!rec.ok) {
                ++s.failed;
                continue;
            }
            ++s.completed;
            s.mse += rec.mse;
            s.mae += rec.mae;
            s.bias += rec.bias;
        }
        if (s.completed > 0) {
            const double c = static_cast<double>(s.completed);
            s.mse /= c;
            s.mae /= c;
            s.bias /= c;
        }
        result.summary.push_back(s);
    }
    return result;
}

namespace {
std::string format_params(const std::vector<double>& params) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < params.size(); ++i) os << (i ? ";" : "") << params[i];
    return os.str();
}
}  // namespace

void write_records_csv(const McResult& result, std::ostream& out) {
    const auto old_precision = out.precision(17);
    out << "method,replication,mse,mae,bias,ok,params\n";
    for (const auto& r : result.records) {
        out << r.method << ',' << r.replication << ',';
        if (r.ok)
            out << r.mse << ',' << r.mae << ',' << r.bias;
        else
            out << ",,";
        out << ',' << (r.ok ? 1 : 0) << ',' << format_params(r.params) << '\n';
    }
    out.precision(old_precision);
}

void write_summary_csv(std::span<const McResult> results, std::ostream& out) {
    // Table layout: rows are (form, method); columns run over rho, then
    // metric, then sigma.
    std::vector<double> rhos, sigmas;
    std::vector<std::string> forms, methods;
    auto add_unique = [](auto& v, const auto& x) {
        if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
    };
    std::map<std::tuple<std::string, std::string, double, double>, McSummary> cells;
    for (const auto& res : results) {
        add_unique(rhos, res.dgp.rho);
        add_unique(sigmas, res.dgp.sigma);
        add_unique(forms, to_string(res.dgp.form));
        for (const auto& s : res.summary) {
            add_unique(methods, s.method);
            cells[{to_string(res.dgp.form), s.method, res.dgp.rho, res.dgp.sigma}] = s;
        }
    }
    std::sort(rhos.begin(), rhos.end());
    std::sort(sigmas.begin(), sigmas.end());

    out << "form,method";
    for (double rho : rhos)
        for (const char* metric : {"mse", "mae", "bias"})
            for (double sigma : sigmas) out << ',' << metric << "_rho" << rho << "_sigma" << sigma;
    out << '\n';
    const auto old_precision = out.precision(17);
    for (const auto& form : forms) {
        for (const auto& method : methods) {
            out << form << ',' << method;
            for (double rho : rhos)
                for (int metric = 0; metric < 3; ++metric)
                    for (double sigma : sigmas) {
                        out << ',';
                        const auto it = cells.find({form, method, rho, sigma});
                        if (it == cells.end() || it->second.completed == 0) continue;
                        const auto& s = it->second;
                        out << (metric == 0 ? s.mse : metric == 1 ? s.mae : s.bias);
                    }
            out << '\n';
        }
    }
    out.precision(old_precision);
}

}  // namespace geomreg
