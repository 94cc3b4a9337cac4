#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>

namespace geomreg {

// Errors are signed as prediction minus truth, so bias > 0 means
// over-prediction on average.
struct RegressionMetrics {
    double mse = 0.0;
    double mae = 0.0;
    double bias = 0.0;
    double rmse = 0.0;
    std::optional<double> r2;  // missing when the truth is constant
};

RegressionMetrics compute_metrics(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

// Mean of per-class recalls over classes 0..m-1, where m is num_classes or,
// if zero, one more than the largest true label. Every class needs at least
// one true member; predictions must lie in [0, m).
double balanced_accuracy(std::span<const int> labels, std::span<const int> predicted, int num_classes = 0);

}  // namespace geomreg
