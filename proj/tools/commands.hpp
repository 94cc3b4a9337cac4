#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <ostream>
#include <string>
#include <vector>

namespace geomreg::cli {

enum ExitCode : int { kSuccess = 0, kValidationFailure = 1, kUsageError = 2 };

// Thrown for bad flag combinations detected after parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string out_dir;
    std::size_t workers = 1;
    std::optional<std::uint64_t> seed;  // --seed, else GEOMREG_SEED, else the config value
};

struct SimulateOptions {
    std::string config_path;
    std::string manifest_path;
    std::vector<std::string> overrides;
};

struct DataOptions {
    std::string path;
    std::string target_name;
    std::optional<std::size_t> target_index;
    std::string task = "regression";
    std::optional<std::size_t> top;  // ANOVA-F screening
    bool screen_full_data = false;
};

struct LearnOptions {
    std::string method = "none";
    std::vector<double> params;
    bool tune = false;
    std::vector<double> grid;
    std::size_t folds = 10;
    std::size_t repeats = 1;
    std::string mode = "full_grid";
    std::size_t epochs = 200;
    std::optional<std::size_t> batch_size;
    double learning_rate = 1e-3;
    std::string optimizer = "adam";
    std::vector<std::size_t> hidden;
    std::optional<std::size_t> patience;
    double validation_fraction = 0.2;
    double test_fraction = 0.3;
    double delta = 1e-3;
    std::size_t cv_repeats = 10;  // classification: repeated CV of the tuned model
};

struct ValidateOptions {
    std::string theorem;  // t1 | t2-gamma0
    std::size_t n = 2000;
    std::size_t p = 5;
    double sigma = 1.0;
    double lambda1 = 0.3;
    double lambda2 = 0.1;
    std::size_t replications = 5000;
    double tolerance = 0.1;
    std::size_t problems = 50;
};

struct ContourOptions {
    std::string method = "ridge";
    std::vector<double> params;
    std::vector<double> c_n{1.0, 0.5, 0.5, 1.0};  // 2x2, row-major
    double delta = 1e-3;
    std::vector<double> range{-2.0, 2.0, -2.0, 2.0};
    std::size_t resolution = 101;
    std::string basis = "canonical";
    bool svg = false;
};

int cmd_simulate(const CommonOptions& common, const SimulateOptions& opts, std::ostream& log);
int cmd_fit(const CommonOptions& common, const DataOptions& data, const LearnOptions& learn, std::ostream& log);
int cmd_tune(const CommonOptions& common, const DataOptions& data, const LearnOptions& learn, std::ostream& log);
int cmd_validate(const CommonOptions& common, const ValidateOptions& opts, std::ostream& log);
int cmd_contours(const CommonOptions& common, const ContourOptions& opts, std::ostream& log);

}  // namespace geomreg::cli
