#include "geomreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace geomreg {

RegressionMetrics compute_metrics(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
    if (y_true.size() != y_pred.size()) throw std::invalid_argument("truth and prediction lengths differ");
    if (y_true.size() == 0) throw std::invalid_argument("metrics need at least one observation");
    const Eigen::ArrayXd err = (y_pred - y_true).array();
    const double n = static_cast<double>(err.size());
    RegressionMetrics m;
    const double sse = err.square().sum();
    m.mse = sse / n;
    m.mae = err.abs().sum() / n;
    m.bias = err.sum() / n;
    m.rmse = std::sqrt(m.mse);
    const double sst = (y_true.array() - y_true.mean()).square().sum();
    if (sst > 0.0) m.r2 = 1.0 - sse / sst;
    return m;
}

double balanced_accuracy(std::span<const int> labels, std::span<const int> predicted, int num_classes) {
    if (labels.size() != predicted.size()) throw std::invalid_argument("label and prediction lengths differ");
    if (labels.empty()) throw std::invalid_argument("balanced accuracy needs at least one observation");
    int m = num_classes;
    if (m <= 0) m = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<double> hits(static_cast<std::size_t>(m), 0.0);
    std::vector<double> totals(static_cast<std::size_t>(m), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= m) throw std::invalid_argument("true label outside 0.." + std::to_string(m - 1));
        if (predicted[i] < 0 || predicted[i] >= m)
            throw std::invalid_argument("predicted class " + std::to_string(predicted[i]) + " outside label range");
        totals[static_cast<std::size_t>(labels[i])] += 1.0;
        if (labels[i] == predicted[i]) hits[static_cast<std::size_t>(labels[i])] += 1.0;
    }
    double sum = 0.0;
    for (int c = 0; c < m; ++c) {
        if (totals[static_cast<std::size_t>(c)] == 0.0)
            throw std::invalid_argument("class " + std::to_string(c) + " has no true members");
        sum += hits[static_cast<std::size_t>(c)] / totals[static_cast<std::size_t>(c)];
    }
    return sum / static_cast<double>(m);
}

}  // namespace geomreg
