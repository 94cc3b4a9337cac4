#pragma once

#include "geomreg/penalty.hpp"
#include "geomreg/simulate.hpp"

#include <cstdint>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace geomreg::cli {

// Bad configuration; the message carries the source position when known.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScenarioSpec {
    std::string name;
    std::size_t n = 200;
    std::size_t p = 20;
    std::size_t k = 10;
    std::vector<double> rho{0.25};
    std::vector<double> sigma{0.1};
    double tau = 1.0;
    std::vector<SignalForm> forms{SignalForm::linear};
};

// Resolved settings of the simulate command. The file format is
//
//   # comment
//   [run]
//   seed = 7
//   methods = none, ridge, covridge
//   [params]            # fixed hyperparameters, used when tune = false
//   ridge = 0.1
//   [scenario dgp1]
//   n = 200
//   rho = 0.25, 0.75    # lists expand into a grid of runs
//
// Every key can be overridden with "section.key=value", where a scenario
// section is addressed by its name.
struct SimulateConfig {
    std::uint64_t seed = 0;
    std::size_t replications = 10;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    std::string optimizer = "adam";
    double learning_rate = 1e-3;
    std::vector<std::size_t> hidden{64, 32};
    double test_fraction = 0.25;
    double delta = kDefaultGramDelta;
    std::vector<PenaltyFamily> methods{PenaltyFamily::none,        PenaltyFamily::ridge,    PenaltyFamily::lasso,
                                       PenaltyFamily::elastic_net, PenaltyFamily::covridge, PenaltyFamily::sparridge};
    bool tune = true;
    std::size_t folds = 5;
    std::size_t repeats = 1;
    std::vector<double> grid{0.001, 0.01, 0.1, 0.5, 0.9};
    std::string mode = "full_grid";
    std::map<std::string, std::vector<double>> fixed_params;
    std::vector<ScenarioSpec> scenarios;

    void validate() const;
};

SimulateConfig parse_simulate_config(std::istream& in, const std::string& source);
SimulateConfig load_simulate_config(const std::string& path);

// "section.key=value"
void apply_override(SimulateConfig& config, const std::string& assignment);

void to_json(nlohmann::json& j, const SimulateConfig& c);
void from_json(const nlohmann::json& j, SimulateConfig& c);

std::vector<double> parse_doubles(const std::string& text);
std::vector<std::size_t> parse_sizes(const std::string& text);

}  // namespace geomreg::cli
