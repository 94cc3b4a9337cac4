#pragma once

#include "geomreg/dataset.hpp"
#include "geomreg/metrics.hpp"
#include "geomreg/mlp.hpp"
#include "geomreg/penalty.hpp"
#include "geomreg/tune.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace geomreg {

enum class SignalForm { linear, sin_nonlinear };

std::string to_string(SignalForm form);
SignalForm form_from_string(const std::string& name);

// First k features: x_j = sqrt(rho) z + sqrt(1 - rho) e_j with a shared
// latent z per row; remaining p - k features i.i.d. N(0, 1).
// theta_j ~ N(0, tau^2) for j < k, zero otherwise.
struct DgpConfig {
    std::size_t n = 200;
    std::size_t p = 20;
    std::size_t k = 10;
    double rho = 0.25;
    double sigma = 0.1;
    double tau = 1.0;
    SignalForm form = SignalForm::linear;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const DgpConfig& config);

struct GeneratedData {
    Dataset data;
    Eigen::VectorXd theta;
};

// Each ingredient (theta, latent factor, idiosyncratic terms, noise
// features, errors) has its own stream derived from config.seed.
GeneratedData gen_dataset(const DgpConfig& config);

// A method to compare: fixed parameters, or a grid when tuning is enabled.
struct MethodTemplate {
    std::string name;
    PenaltyFamily family = PenaltyFamily::none;
    std::vector<double> params;  // used when no tuning plan is given
};

struct McRecord {
    std::string method;
    std::size_t replication = 0;
    std::vector<double> params;  // parameters actually used (tuned or fixed)
    double mse = 0.0;
    double mae = 0.0;
    double bias = 0.0;
    double weight_norm = 0.0;  // Frobenius norm over all weight matrices
    bool ok = true;
    std::string error;
};

struct McSummary {
    std::string method;
    std::size_t completed = 0;
    std::size_t failed = 0;
    double mse = 0.0;
    double mae = 0.0;
    double bias = 0.0;
};

struct McResult {
    DgpConfig dgp;
    std::size_t replications = 0;
    std::vector<McRecord> records;  // replication-major, then method order
    std::vector<McSummary> summary;  // method order

    std::size_t failures() const;
    const McSummary& summary_for(const std::string& method) const;
};

struct McOptions {
    std::vector<std::size_t> hidden = {64, 32};
    double test_fraction = 0.25;
    double gram_delta = kDefaultGramDelta;
    std::size_t workers = 1;
};

// With tuning, each method's grid is the plan's first arity lists, the
// last list repeated when the plan has fewer (the paper grid when empty).
// Replication r: data, split, fold and training seeds all derive from
// (dgp.seed, r). Every method in a replication shares the same training
// seed, so differences between methods are paired.
McResult run_monte_carlo(const DgpConfig& dgp, std::span<const MethodTemplate> methods, const TrainConfig& train,
                         std::size_t replications, const std::optional<CvPlan>& tuning, const McOptions& options = {});

// Columns: method, replication, mse, mae, bias, ok, params
void write_records_csv(const McResult& result, std::ostream& out);

// One row per (form, rho, sigma, method) with mean mse, mae and bias.
void write_summary_csv(std::span<const McResult> results, std::ostream& out);

}  // namespace geomreg
