#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace geomreg {

using Index = std::vector<std::size_t>;

enum class Task { regression, classification };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

// Raised for malformed input files; the message names the offending cell.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Features plus either a continuous target or contiguous class labels
// 0..m-1. Rows are observations.
struct Dataset {
    Eigen::MatrixXd features;
    Eigen::VectorXd target;   // regression only
    std::vector<int> labels;  // classification only
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;
    Task task = Task::regression;

    std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(features.cols()); }
    int num_classes() const;

    Dataset subset(std::span<const std::size_t> rows) const;
    Dataset select_features(std::span<const std::size_t> columns) const;

    // Throws std::invalid_argument if any invariant is violated.
    void validate() const;
};

Dataset make_regression(Eigen::MatrixXd features, Eigen::VectorXd target);
Dataset make_classification(Eigen::MatrixXd features, std::vector<int> labels);

using TargetColumn = std::variant<std::string, std::size_t>;

// Comma separated, '.' decimal. A header row is required when the target is
// given by name; otherwise it is detected by a non-numeric feature cell in
// the first row. Classification labels are re-encoded in order of first
// appearance.
Dataset load_csv(const std::filesystem::path& path, const TargetColumn& target, Task task);

struct StandardizationStats {
    Eigen::VectorXd means;
    Eigen::VectorXd stds;
    std::vector<bool> constant_flags;

    std::size_t dims() const { return static_cast<std::size_t>(means.size()); }

    // Columns flagged constant map to zero.
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const;
};

// Population standard deviation; columns with std below 1e-12 are flagged.
StandardizationStats standardize(const Eigen::MatrixXd& train_features);

void to_json(nlohmann::json& j, const StandardizationStats& stats);
void from_json(const nlohmann::json& j, StandardizationStats& stats);

struct SplitPlan {
    Index train_idx;
    Index test_idx;
    std::uint64_t seed = 0;
};

// |test| = round(n * test_fraction); both index lists are sorted.
SplitPlan split(std::size_t n, double test_fraction, std::uint64_t seed);

// One-way ANOVA F per column. Zero within-group variance with nonzero
// between-group variance yields +inf; a constant column yields 0.
Eigen::VectorXd anova_f_scores(const Eigen::MatrixXd& features, std::span<const int> labels);

// Indices of the m largest F statistics, +inf first, ties to the lower index.
Index anova_f_select(const Eigen::MatrixXd& features, std::span<const int> labels, std::size_t m);

}  // namespace geomreg
