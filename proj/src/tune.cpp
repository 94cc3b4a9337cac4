#include "geomreg/tune.hpp"

#include "geomreg/parallel.hpp"
#include "geomreg/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace geomreg {

std::string to_string(Criterion c) {
    return c == Criterion::mean_mse ? "mean_mse" : "mean_balanced_accuracy";
}

const std::vector<double>& paper_grid() {
    static const std::vector<double> grid{0.001, 0.01, 0.1, 0.5, 0.9};
    return grid;
}

void CvPlan::validate(std::size_t arity, std::size_t rows) const {
    if (folds < 2) throw std::invalid_argument("folds must be >= 2");
    if (folds > rows) throw std::invalid_argument("folds (" + std::to_string(folds) + ") exceed training rows (" +
                                                  std::to_string(rows) + ")");
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    if (grid.size() != arity)
        throw std::invalid_argument("grid has " + std::to_string(grid.size()) + " parameter list(s), method needs " +
                                    std::to_string(arity));
    for (const auto& values : grid) {
        if (values.empty()) throw std::invalid_argument("empty grid");
        for (double v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("grid values must be finite");
    }
}

std::vector<Index> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("folds must be >= 2");
    if (k > n) throw std::invalid_argument("folds (" + std::to_string(k) + ") exceed rows (" + std::to_string(n) + ")");
    Index perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto rng = make_rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Index> folds(k);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t size = n / k + (i < n % k ? 1 : 0);
        folds[i].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos), perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(folds[i].begin(), folds[i].end());
        pos += size;
    }
    return folds;
}

namespace {

using Point = std::vector<double>;

std::vector<Point> cartesian(const std::vector<std::vector<double>>& lists) {
    std::vector<Point> out{Point{}};
    for (const auto& values : lists) {
        std::vector<Point> next;
        for (const auto& prefix : out)
            for (double v : values) {
                Point p = prefix;
                p.push_back(v);
                next.push_back(std::move(p));
            }
        out = std::move(next);
    }
    return out;
}

struct Evaluator {
    const Dataset& data;
    PenaltyFamily family;
    const CvPlan& plan;
    const TrainConfig& config;
    const ModelSpec& spec;
    std::size_t workers;
    const AccessAudit& audit;
    std::vector<std::vector<Index>> fold_plans;  // [repeat][fold]
    std::map<Point, GridPoint> points;
    std::map<Point, std::vector<CvRecord>> records;
    std::size_t trainings = 0;

    bool maximize() const { return plan.criterion == Criterion::mean_balanced_accuracy; }
    double failure_score() const { return maximize() ? 0.0 : std::numeric_limits<double>::infinity(); }

    void evaluate(const std::vector<Point>& candidates) {
        std::vector<Point> todo;
        for (const auto& p : candidates)
            if (!points.count(p) && std::find(todo.begin(), todo.end(), p) == todo.end()) todo.push_back(p);
        const std::size_t per_point = plan.repeats * plan.folds;
        std::vector<CvRecord> out(todo.size() * per_point);
        std::mutex audit_mutex;
        parallel_for(out.size(), workers, [&](std::size_t task) {
            const Point& params = todo[task / per_point];
            const std::size_t within = task % per_point;
            const std::size_t r = within / plan.folds;
            const std::size_t f = within % plan.folds;
            CvRecord rec{params, r, f, 0.0, false, {}};
            const Index& val = fold_plans[r][f];
            Index train_rows;
            for (std::size_t g = 0; g < plan.folds; ++g)
                if (g != f) train_rows.insert(train_rows.end(), fold_plans[r][g].begin(), fold_plans[r][g].end());
            std::sort(train_rows.begin(), train_rows.end());
            TrainConfig cfg = config;
            cfg.seed = derive_seed(config.seed, within);
            AccessAudit guarded;
            if (audit)
                guarded = [&](std::string_view stage, std::span<const std::size_t> rows) {
                    std::lock_guard lock(audit_mutex);
                    audit(stage, rows);
                };
            try {
                const auto fit = fit_pipeline(data, train_rows, family, params, spec, cfg, guarded);
                if (guarded) guarded("score", val);
                if (maximize()) {
                    rec.score = score_classification(fit, data, val);
                } else {
                    rec.score = score_regression(fit, data, val).mse;
                }
                if (!std::isfinite(rec.score)) throw TrainingDiverged("non-finite validation score", fit.history);
            } catch (const std::exception& e) {
                rec.failed = true;
                rec.error = e.what();
                rec.score = failure_score();
            }
            out[task] = std::move(rec);
        });
        trainings += out.size();
        for (std::size_t i = 0; i < todo.size(); ++i) {
            GridPoint gp{todo[i], 0.0, 0};
            auto& recs = records[todo[i]];
            for (std::size_t t = 0; t < per_point; ++t) {
                auto& rec = out[i * per_point + t];
                gp.score += rec.score;
                if (rec.failed) ++gp.failures;
                recs.push_back(std::move(rec));
            }
            gp.score /= static_cast<double>(per_point);
            points.emplace(todo[i], std::move(gp));
        }
    }

    // Best among the given candidates; strict improvement only, so the
    // lexicographically smallest tuple wins ties.
    Point best_of(std::vector<Point> candidates) const {
        std::sort(candidates.begin(), candidates.end());
        const GridPoint* best = nullptr;
        for (const auto& p : candidates) {
            const GridPoint& gp = points.at(p);
            if (!best || (maximize() ? gp.score > best->score : gp.score < best->score)) best = &gp;
        }
        return best->params;
    }
};

}  // namespace

GridSearchResult grid_search(const Dataset& train_data, PenaltyFamily family, const CvPlan& plan,
                             const TrainConfig& config, const ModelSpec& spec, std::size_t workers,
                             const AccessAudit& audit) {
    plan.validate(arity(family), train_data.rows());
    if ((plan.criterion == Criterion::mean_balanced_accuracy) != (train_data.task == Task::classification))
        throw std::invalid_argument("criterion " + to_string(plan.criterion) + " does not match the dataset task");

    Evaluator ev{train_data, family, plan, config, spec, workers, audit, {}, {}, {}, 0};
    for (std::size_t r = 0; r < plan.repeats; ++r) {
        const std::uint64_t fold_seed = plan.seed + r;
        ev.fold_plans.push_back(train_data.task == Task::classification
                                    ? stratified_kfold_split(train_data.labels, plan.folds, fold_seed)
                                    : kfold_split(train_data.rows(), plan.folds, fold_seed));
    }

    std::vector<std::vector<double>> lists = plan.grid;
    for (auto& values : lists) {
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
    }

    if (plan.mode == SearchMode::full_grid || lists.size() < 2) {
        ev.evaluate(cartesian(lists));
    } else {
        // One sweep per coordinate, the others held at their current best
        // (starting from the smallest candidates).
        Point current;
        for (const auto& values : lists) current.push_back(values.front());
        for (std::size_t c = 0; c < lists.size(); ++c) {
            std::vector<Point> line;
            for (double v : lists[c]) {
                Point p = current;
                p[c] = v;
                line.push_back(std::move(p));
            }
            ev.evaluate(line);
            current = ev.best_of(line);
        }
    }

    GridSearchResult result;
    std::vector<Point> all;
    for (auto& [params, gp] : ev.points) {
        all.push_back(params);
        result.points.push_back(gp);
        auto& recs = ev.records[params];
        result.records.insert(result.records.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
    }
    result.best = ev.best_of(all);
    result.best_score = ev.points.at(result.best).score;
    result.trainings = ev.trainings;
    return result;
}

void write_cv_table(const GridSearchResult& result, PenaltyFamily family, std::ostream& out) {
    for (const auto& name : parameter_names(family)) out << name << ',';
    out << "repeat,fold,score\n";
    const auto old_precision = out.precision(17);
    for (const auto& rec : result.records) {
        for (double v : rec.params) out << v << ',';
        out << rec.repeat << ',' << rec.fold << ',' << rec.score << '\n';
    }
    out.precision(old_precision);
}

nlohmann::json selection_summary(const GridSearchResult& result, PenaltyFamily family, const CvPlan& plan) {
    nlohmann::json j;
    j["method"] = to_string(family);
    j["criterion"] = to_string(plan.criterion);
    j["folds"] = plan.folds;
    j["repeats"] = plan.repeats;
    j["mode"] = plan.mode == SearchMode::full_grid ? "full_grid" : "coordinate_wise";
    j["seed"] = plan.seed;
    const auto names = parameter_names(family);
    nlohmann::json best = nlohmann::json::object();
    for (std::size_t i = 0; i < names.size(); ++i) best[names[i]] = result.best[i];
    j["best"] = best;
    j["best_score"] = result.best_score;
    j["grid_points"] = result.points.size();
    j["trainings"] = result.trainings;
    std::size_t failures = 0;
    for (const auto& rec : result.records) failures += rec.failed ? 1 : 0;
    j["failed_trainings"] = failures;
    return j;
}

}  // namespace geomreg
