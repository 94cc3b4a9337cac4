#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <memory>

#include <nlohmann/json_fwd.hpp>

namespace geomreg {

struct MlpModel;

inline constexpr double kDefaultGramDelta = 1e-3;

// Stabilized second-moment matrix C_delta = H^T H / n + delta * I of a
// representation H (n x p), with its symmetric eigendecomposition and
// symmetric square root.
//
// Eigenvalues are reported non-increasing. Eigenvalues of H^T H / n below
// zero (round-off) are clipped to 0 before delta is added. The dense
// matrices and the spectral factors are computed on first access and then
// shared by all copies; the object is immutable from the caller's side and
// safe to share across threads.
class StabilizedGram {
public:
    StabilizedGram() = default;

    static StabilizedGram from_representation(const Eigen::MatrixXd& h, double delta);
    // From an already formed symmetric second-moment matrix C_n.
    static StabilizedGram from_moment(const Eigen::MatrixXd& c_n, double delta);

    std::size_t dims() const;
    double delta() const;
    bool empty() const { return impl_ == nullptr; }

    const Eigen::MatrixXd& c_n() const;
    const Eigen::MatrixXd& c_delta() const;
    const Eigen::VectorXd& eigenvalues() const;   // mu_i + delta, non-increasing
    const Eigen::MatrixXd& eigenvectors() const;  // columns match eigenvalues()
    const Eigen::MatrixXd& sqrt() const;

    // C_delta * W without forming C_delta when the representation has
    // fewer rows than columns.
    Eigen::MatrixXd apply(const Eigen::MatrixXd& w) const;

    // tr(W^T C_delta W) = ||C_delta^{1/2} W||_F^2.
    double quadratic(const Eigen::MatrixXd& w) const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

// Throws std::invalid_argument on non-finite H or delta <= 0.
StabilizedGram build_gram(const Eigen::MatrixXd& representation, double delta = kDefaultGramDelta);

// Gram of the post-activation values of hidden layer `layer` (1-based; the
// output layer is rejected) over the given rows.
StabilizedGram gram_from_hidden(const MlpModel& model, const Eigen::MatrixXd& train_features, std::size_t layer,
                                double delta = kDefaultGramDelta);

// {"dims": [p, p], "delta": d, "c_n": [row-major values]}
void to_json(nlohmann::json& j, const StabilizedGram& gram);
void from_json(const nlohmann::json& j, StabilizedGram& gram);

}  // namespace geomreg
