#pragma once

#include "geomreg/dataset.hpp"
#include "geomreg/metrics.hpp"
#include "geomreg/mlp.hpp"
#include "geomreg/penalty.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace geomreg {

// Called with a stage name ("screen", "standardize", "gram", "train",
// "score") and the dataset rows that stage reads. Used to audit folds for
// leakage; may be empty.
using AccessAudit = std::function<void(std::string_view stage, std::span<const std::size_t> rows)>;

// How a network is built and fed. Hidden sizes exclude input and output.
struct ModelSpec {
    std::vector<std::size_t> hidden = {64, 32};
    double gram_delta = kDefaultGramDelta;
    std::optional<std::size_t> top_features;  // ANOVA-F screening, classification only
};

// A trained model together with everything needed to apply it to new rows.
struct FittedPipeline {
    Index features;  // selected input columns (all when not screened)
    StandardizationStats stats;
    MlpModel model;
    TrainHistory history;
    PenaltyConfig penalty;

    Eigen::MatrixXd prepare(const Eigen::MatrixXd& raw) const;
};

// Builds a penalty for `family`; the Gram, when needed, comes from the
// given (already standardized) training features.
PenaltyConfig instantiate_penalty(PenaltyFamily family, std::span<const double> params,
                                  const Eigen::MatrixXd& standardized_train, double delta);

// Screen (if requested) -> standardize -> Gram -> init -> train, reading
// only `rows` of `data`. The training seed is config.seed.
FittedPipeline fit_pipeline(const Dataset& data, std::span<const std::size_t> rows, PenaltyFamily family,
                            std::span<const double> params, const ModelSpec& spec, const TrainConfig& config,
                            const AccessAudit& audit = {});

RegressionMetrics score_regression(const FittedPipeline& fit, const Dataset& data, std::span<const std::size_t> rows);

// Mean recall over the classes present among `rows`, so folds missing a
// rare class still get a score.
double score_classification(const FittedPipeline& fit, const Dataset& data, std::span<const std::size_t> rows);

// k folds whose class proportions follow the full label vector; sizes
// differ by at most one. Deterministic given seed.
std::vector<Index> stratified_kfold_split(std::span<const int> labels, std::size_t k, std::uint64_t seed);

struct RepeatedCvResult {
    std::vector<std::vector<double>> fold_scores;  // [repeat][fold]
    std::vector<double> repeat_means;
    double mean = 0.0;  // mean of repeat_means
    double std = 0.0;   // sample std of repeat_means (0 with one repeat)
    double pooled_mean = 0.0;
    double pooled_std = 0.0;
};

// Repeated stratified k-fold evaluation of fixed hyperparameters; screening,
// standardization and the Gram are recomputed inside every fold. Repeat r
// uses fold seed seed + r.
RepeatedCvResult repeated_cv(const Dataset& data, PenaltyFamily family, std::span<const double> params,
                             const ModelSpec& spec, const TrainConfig& config, std::size_t folds, std::size_t repeats,
                             std::uint64_t seed, std::size_t workers = 1);

}  // namespace geomreg
