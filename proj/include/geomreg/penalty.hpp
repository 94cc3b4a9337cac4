#pragma once

#include "geomreg/gram.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace geomreg {

enum class PenaltyFamily { none, ridge, lasso, elastic_net, covridge, sparridge };

std::string to_string(PenaltyFamily family);
PenaltyFamily family_from_string(const std::string& name);

// Number of tuning scalars: 0, 1 (ridge, lasso) or 2.
std::size_t arity(PenaltyFamily family);
bool needs_gram(PenaltyFamily family);
std::vector<std::string> parameter_names(PenaltyFamily family);

namespace penalty {
struct None {};
struct Ridge {
    double lambda = 0.0;
};
struct Lasso {
    double lambda = 0.0;
};
// lambda * (alpha ||W||_1 + (1 - alpha)/2 ||W||_F^2)
struct ElasticNet {
    double lambda = 0.0;
    double alpha = 0.5;
};
// lambda1 ||C^{1/2} W||_F^2 + lambda2 ||W||_F^2
struct Covridge {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    StabilizedGram gram;
};
// lambda1 ||C^{1/2} W||_F^2 + gamma ||W||_1
struct Sparridge {
    double lambda1 = 0.0;
    double gamma = 0.0;
    StabilizedGram gram;
};
}  // namespace penalty

using PenaltyVariant =
    std::variant<penalty::None, penalty::Ridge, penalty::Lasso, penalty::ElasticNet, penalty::Covridge, penalty::Sparridge>;

// Validated penalty. Weights are oriented rows = inputs, so for the
// covariance variants W must have gram.dims() rows.
class PenaltyConfig {
public:
    PenaltyConfig() = default;
    PenaltyConfig(PenaltyVariant v);  // NOLINT: implicit from any variant alternative

    // params in parameter_names() order; gram is ignored by families that
    // do not use it.
    static PenaltyConfig make(PenaltyFamily family, std::span<const double> params, const StabilizedGram& gram = {});

    PenaltyFamily family() const;
    std::vector<double> params() const;
    const PenaltyVariant& variant() const { return variant_; }
    const StabilizedGram* gram() const;

    // Same penalty with the covariance-weighted term removed. Applied to
    // layers other than the one the Gram describes.
    PenaltyConfig companion() const;

    // Coefficients of the three primitive terms:
    //   quad * tr(W^T C W) + l2 * ||W||_F^2 + l1 * ||W||_1
    struct Terms {
        double quad = 0.0;
        double l2 = 0.0;
        double l1 = 0.0;
    };
    Terms terms() const;

private:
    PenaltyVariant variant_;
};

std::string describe(const PenaltyConfig& config);

double penalty_value(const PenaltyConfig& config, const Eigen::MatrixXd& weights);
Eigen::MatrixXd penalty_grad(const PenaltyConfig& config, const Eigen::MatrixXd& weights);
// grad += penalty gradient. sign(0) = 0 for the l1 subgradient.
void accumulate_penalty_grad(const PenaltyConfig& config, const Eigen::MatrixXd& weights, Eigen::MatrixXd& grad);

struct GridSpec {
    double x_min = -2.0;
    double x_max = 2.0;
    double y_min = -2.0;
    double y_max = 2.0;
    std::size_t nx = 101;
    std::size_t ny = 101;
};

enum class Basis { canonical, eigen };

struct ContourGrid {
    Eigen::VectorXd xs;
    Eigen::VectorXd ys;
    Eigen::MatrixXd values;  // values(iy, ix)
};

// Penalty on a two-dimensional weight vector. In the eigen basis the first
// coordinate runs along the lowest-variance eigenvector of the Gram and the
// second along the highest; families without a Gram use the identity.
ContourGrid contour_grid(const PenaltyConfig& config, const GridSpec& grid, Basis basis);

// "x,y,value" rows with a header line.
void write_grid(const ContourGrid& grid, std::ostream& out);

// Level sets by marching squares. Levels default to evenly spaced
// quantiles of the grid values when empty.
std::string render_svg(const ContourGrid& grid, std::span<const double> levels = {}, std::size_t size_px = 480);

}  // namespace geomreg
