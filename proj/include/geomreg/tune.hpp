#pragma once

#include "geomreg/dataset.hpp"
#include "geomreg/mlp.hpp"
#include "geomreg/penalty.hpp"
#include "geomreg/pipeline.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace geomreg {

enum class Criterion { mean_mse, mean_balanced_accuracy };
enum class SearchMode { full_grid, coordinate_wise };

std::string to_string(Criterion c);

struct CvPlan {
    std::size_t folds = 5;
    std::vector<std::vector<double>> grid;  // one candidate list per parameter
    std::size_t repeats = 1;
    std::uint64_t seed = 0;
    Criterion criterion = Criterion::mean_mse;
    SearchMode mode = SearchMode::full_grid;

    // Throws std::invalid_argument on a bad plan for this arity and row count.
    void validate(std::size_t arity, std::size_t rows) const;
};

// The candidate grid used throughout the simulations.
const std::vector<double>& paper_grid();

// Fold i gets n / k rows, plus one for the first n % k folds.
std::vector<Index> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct CvRecord {
    std::vector<double> params;
    std::size_t repeat = 0;
    std::size_t fold = 0;
    double score = 0.0;
    bool failed = false;
    std::string error;
};

struct GridPoint {
    std::vector<double> params;
    double score = 0.0;  // mean over folds and repeats
    std::size_t failures = 0;
};

struct GridSearchResult {
    std::vector<double> best;
    double best_score = 0.0;
    std::vector<GridPoint> points;   // lexicographic parameter order
    std::vector<CvRecord> records;   // point-major, then repeat, then fold
    std::size_t trainings = 0;
};

// Every grid point is trained on every fold of every repeat. The fold's
// training portion alone drives screening, standardization and the Gram.
// Failed trainings score +inf (mse) or 0 (accuracy). Ties go to the
// lexicographically smallest parameter tuple. Fold f of repeat r trains
// with seed derive_seed(config.seed, r * folds + f) for every grid point.
GridSearchResult grid_search(const Dataset& train_data, PenaltyFamily family, const CvPlan& plan,
                             const TrainConfig& config, const ModelSpec& spec = {}, std::size_t workers = 1,
                             const AccessAudit& audit = {});

// Columns: parameter names..., repeat, fold, score
void write_cv_table(const GridSearchResult& result, PenaltyFamily family, std::ostream& out);
nlohmann::json selection_summary(const GridSearchResult& result, PenaltyFamily family, const CvPlan& plan);

}  // namespace geomreg
