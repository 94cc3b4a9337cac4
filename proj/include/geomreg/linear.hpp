#pragma once

#include "geomreg/gram.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json_fwd.hpp>

// Penalized linear least squares with a covariance-weighted quadratic term.
//
// Objectives here carry the one-half scaling of the asymptotic theory:
//
//   covridge:  1/(2n) ||y - Xw||^2 + lambda1/2 w^T C w + lambda2/2 ||w||^2
//   sparridge: 1/(2n) ||y - Xw||^2 + lambda1/2 w^T C w + gamma ||w||_1
//
// The network penalties (penalty.hpp) use no one-half factors, so a
// quadratic coefficient lambda there corresponds to lambda / 2 here
// relative to a loss of (1/n)||y - Xw||^2.
namespace geomreg {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LinearProblem {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    StabilizedGram gram;
    Eigen::MatrixXd q_n;    // X^T X / n
    Eigen::VectorXd q_vec;  // X^T y / n

    std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
    std::size_t dims() const { return static_cast<std::size_t>(x.cols()); }
};

// An empty gram defaults to build_gram(x, kDefaultGramDelta).
LinearProblem make_problem(Eigen::MatrixXd x, Eigen::VectorXd y, StabilizedGram gram = {});

enum class LinearMethod { covridge, sparridge };

struct LinearFit {
    Eigen::VectorXd w_hat;
    std::optional<Eigen::VectorXd> w_circ;  // finite-sample shrunken target, needs w0
    std::optional<Eigen::VectorXd> w_star;  // limit target, needs the limit Q and C
    std::optional<Eigen::MatrixXd> asym_cov;
    LinearMethod method = LinearMethod::covridge;
    std::size_t iterations = 0;
    bool converged = true;
};

// Q + lambda1 C_delta + lambda2 I.
Eigen::MatrixXd covridge_hessian(const Eigen::MatrixXd& q, const Eigen::MatrixXd& c_delta, double lambda1, double lambda2);

// Solves (Q_n + lambda1 C + lambda2 I) w = q_n by Cholesky. Throws
// SolverError when the system is not positive definite, its smallest
// eigenvalue is <= 1e-12 or its condition estimate exceeds 1e12.
Eigen::VectorXd covridge_closed_form(const LinearProblem& problem, double lambda1, double lambda2);

// (Q_n + lambda1 C + lambda2 I)^{-1} Q_n w0.
Eigen::VectorXd shrunken_target(const LinearProblem& problem, double lambda1, double lambda2, const Eigen::VectorXd& w0);

// sigma2 H^{-1} Q H^{-1} with H = Q + lambda1 C + lambda2 I.
Eigen::MatrixXd covridge_asym_cov(const Eigen::MatrixXd& q, const Eigen::MatrixXd& c_delta, double lambda1, double lambda2,
                                  double sigma2);

LinearFit covridge_fit(const LinearProblem& problem, double lambda1, double lambda2);

double soft_threshold(double z, double t);

struct ProximalOptions {
    double tol = 1e-10;
    std::size_t max_iter = 100000;
    bool accelerated = false;
    std::function<void(std::size_t, const Eigen::VectorXd&)> on_iterate;  // called after each step
};

// Proximal gradient with step 1/L, L = lambda_max(Q_n + lambda1 C). Stops
// when the max-norm change between iterates falls below tol. Entries with
// magnitude below 1e-12 are snapped to zero. On hitting max_iter the best
// iterate (lowest objective) is returned with converged = false.
LinearFit sparridge_solve(const LinearProblem& problem, double lambda1, double gamma, const ProximalOptions& options = {});

double sparridge_objective(const LinearProblem& problem, double lambda1, double gamma, const Eigen::VectorXd& w);

// Gradient of the smooth part, (Q_n + lambda1 C) w - q_n.
Eigen::VectorXd sparridge_smooth_grad(const LinearProblem& problem, double lambda1, const Eigen::VectorXd& w);

// Fills w_circ and asym_cov of a fit for a known w0 and noise variance,
// using the finite-sample Q_n and C as the limit matrices. For sparridge the
// Hessian is Q_n + lambda1 C (the second parameter is ignored).
void attach_inference(LinearFit& fit, const LinearProblem& problem, double lambda1, double lambda2,
                      const Eigen::VectorXd& w0, double sigma2);

// argmin_u 1/2 u^T H u - u^T Z + gamma (sum_{j in A} sign(w*_j) u_j + sum_{j not in A} |u_j|)
// with A = {j : |w*_j| > 1e-10}. Throws SolverError when H is not positive
// definite.
Eigen::VectorXd limit_criterion_minimize(const Eigen::MatrixXd& h, const Eigen::VectorXd& z, double gamma,
                                         const Eigen::VectorXd& w_star);

double limit_criterion_value(const Eigen::MatrixXd& h, const Eigen::VectorXd& z, double gamma,
                             const Eigen::VectorXd& w_star, const Eigen::VectorXd& u);

// Monte Carlo check of the Gaussian limit of sqrt(n) (w_hat - w_circ).
struct Theorem1Report {
    std::size_t n = 0;
    std::size_t p = 0;
    std::size_t replications = 0;
    double sigma = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double max_leverage = 0.0;  // max_i ||x_i||^2 / n
    Eigen::VectorXd w_circ;
    Eigen::VectorXd empirical_mean;
    Eigen::MatrixXd empirical_cov;
    Eigen::MatrixXd theoretical_cov;
    double relative_frobenius_error = 0.0;
    double max_mean_z = 0.0;  // max_j |mean_j| / (std_j / sqrt(R))
    double tolerance = 0.1;
    bool cov_pass = false;
    bool mean_pass = false;
    bool pass() const { return cov_pass && mean_pass; }
};

// Errors are i.i.d. N(0, sigma^2); replication r uses a seed derived from
// (seed, r) so results do not depend on the worker count. The Gram is built
// from the design. Mean check: every |mean_j| <= 4 sd_j / sqrt(R).
Theorem1Report validate_theorem1(const Eigen::MatrixXd& design, const Eigen::VectorXd& w0, double sigma, double lambda1,
                                 double lambda2, std::size_t replications, std::uint64_t seed, double tolerance = 0.1,
                                 std::size_t workers = 1, double delta = kDefaultGramDelta);

void to_json(nlohmann::json& j, const Theorem1Report& report);

// Draws of U* = argmin Delta(u) with Z ~ N(0, sigma^2 Q), one row per draw.
Eigen::MatrixXd sample_limit_law(const Eigen::MatrixXd& h, const Eigen::MatrixXd& q, double sigma, double gamma,
                                 const Eigen::VectorXd& w_star, std::size_t draws, std::uint64_t seed);

}  // namespace geomreg
