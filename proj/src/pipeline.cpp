#include "geomreg/pipeline.hpp"

#include "geomreg/gram.hpp"
#include "geomreg/parallel.hpp"
#include "geomreg/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace geomreg {

Eigen::MatrixXd FittedPipeline::prepare(const Eigen::MatrixXd& raw) const {
    return stats.apply(raw(Eigen::all, features));
}

PenaltyConfig instantiate_penalty(PenaltyFamily family, std::span<const double> params,
                                  const Eigen::MatrixXd& standardized_train, double delta) {
    if (params.size() != arity(family))
        throw std::invalid_argument(to_string(family) + " expects " + std::to_string(arity(family)) + " parameter(s), got " +
                                    std::to_string(params.size()));
    StabilizedGram gram;
    if (needs_gram(family)) gram = build_gram(standardized_train, delta);
    return PenaltyConfig::make(family, params, gram);
}

FittedPipeline fit_pipeline(const Dataset& data, std::span<const std::size_t> rows, PenaltyFamily family,
                            std::span<const double> params, const ModelSpec& spec, const TrainConfig& config,
                            const AccessAudit& audit) {
    if (rows.empty()) throw std::invalid_argument("no training rows");
    FittedPipeline fit;
    Dataset train_data = data.subset(rows);

    if (spec.top_features && data.task == Task::classification && *spec.top_features < data.cols()) {
        if (audit) audit("screen", rows);
        fit.features = anova_f_select(train_data.features, train_data.labels, *spec.top_features);
        train_data = train_data.select_features(fit.features);
    } else {
        fit.features.resize(data.cols());
        std::iota(fit.features.begin(), fit.features.end(), std::size_t{0});
    }

    if (audit) audit("standardize", rows);
    fit.stats = standardize(train_data.features);
    train_data.features = fit.stats.apply(train_data.features);

    if (audit && needs_gram(family)) audit("gram", rows);
    fit.penalty = instantiate_penalty(family, params, train_data.features, spec.gram_delta);

    std::vector<std::size_t> sizes{train_data.cols()};
    sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
    const bool classify = data.task == Task::classification;
    sizes.push_back(classify ? static_cast<std::size_t>(data.num_classes()) : 1);
    MlpModel model = init_model(sizes, classify ? OutputHead::softmax : OutputHead::linear, config.seed);

    if (audit) audit("train", rows);
    auto trained = train(std::move(model), train_data, config, fit.penalty);
    fit.model = std::move(trained.model);
    fit.history = std::move(trained.history);
    return fit;
}

RegressionMetrics score_regression(const FittedPipeline& fit, const Dataset& data, std::span<const std::size_t> rows) {
    const Index idx(rows.begin(), rows.end());
    const Eigen::MatrixXd x = fit.prepare(data.features(idx, Eigen::all));
    return compute_metrics(data.target(idx), predict_values(fit.model, x));
}

double score_classification(const FittedPipeline& fit, const Dataset& data, std::span<const std::size_t> rows) {
    const Index idx(rows.begin(), rows.end());
    const auto predicted = predict_classes(fit.model, fit.prepare(data.features(idx, Eigen::all)));
    std::map<int, std::pair<double, double>> per_class;  // label -> (hits, total)
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto& [hits, total] = per_class[data.labels[idx[i]]];
        total += 1.0;
        if (predicted[i] == data.labels[idx[i]]) hits += 1.0;
    }
    double sum = 0.0;
    for (const auto& [label, ht] : per_class) sum += ht.first / ht.second;
    return sum / static_cast<double>(per_class.size());
}

std::vector<Index> stratified_kfold_split(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("folds must be >= 2");
    if (k > labels.size()) throw std::invalid_argument("more folds than rows");
    std::map<int, Index> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    auto rng = make_rng(seed);
    // Deal rows class by class round-robin, continuing where the previous
    // class stopped so fold sizes stay within one of each other.
    std::vector<Index> folds(k);
    std::size_t next = 0;
    for (auto& [label, members] : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t row : members) {
            folds[next].push_back(row);
            next = (next + 1) % k;
        }
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

namespace {
double sample_std(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}
}  // namespace

RepeatedCvResult repeated_cv(const Dataset& data, PenaltyFamily family, std::span<const double> params,
                             const ModelSpec& spec, const TrainConfig& config, std::size_t folds, std::size_t repeats,
                             std::uint64_t seed, std::size_t workers) {
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    if (data.task != Task::classification) throw std::invalid_argument("repeated_cv expects a classification dataset");
    std::vector<std::vector<Index>> plans(repeats);
    for (std::size_t r = 0; r < repeats; ++r) plans[r] = stratified_kfold_split(data.labels, folds, seed + r);

    RepeatedCvResult out;
    out.fold_scores.assign(repeats, std::vector<double>(folds, 0.0));
    parallel_for(repeats * folds, workers, [&](std::size_t task) {
        const std::size_t r = task / folds;
        const std::size_t f = task % folds;
        const Index& val = plans[r][f];
        Index train_rows;
        for (std::size_t g = 0; g < folds; ++g)
            if (g != f) train_rows.insert(train_rows.end(), plans[r][g].begin(), plans[r][g].end());
        std::sort(train_rows.begin(), train_rows.end());
        TrainConfig cfg = config;
        cfg.seed = derive_seed(config.seed, task);
        const auto fit = fit_pipeline(data, train_rows, family, params, spec, cfg);
        out.fold_scores[r][f] = score_classification(fit, data, val);
    });

    std::vector<double> pooled;
    for (const auto& scores : out.fold_scores) {
        out.repeat_means.push_back(std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(folds));
        pooled.insert(pooled.end(), scores.begin(), scores.end());
    }
    out.mean = std::accumulate(out.repeat_means.begin(), out.repeat_means.end(), 0.0) / static_cast<double>(repeats);
    out.std = sample_std(out.repeat_means);
    out.pooled_mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / static_cast<double>(pooled.size());
    out.pooled_std = sample_std(pooled);
    return out;
}

}  // namespace geomreg
