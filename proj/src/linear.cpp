#include "geomreg/linear.hpp"

#include "geomreg/parallel.hpp"
#include "geomreg/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace geomreg {

namespace {

constexpr double kMinEigen = 1e-12;
constexpr double kMaxCondition = 1e12;
constexpr double kZeroSnap = 1e-12;
constexpr double kActiveThreshold = 1e-10;

// Cholesky factor of a symmetric positive definite matrix with the
// conditioning checks shared by every solve in this module.
Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& h, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) throw SolverError(std::string(what) + " is not positive definite");
    const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly).eigenvalues();
    if (eig.minCoeff() <= kMinEigen)
        throw SolverError(std::string(what) + " is singular (smallest eigenvalue " + std::to_string(eig.minCoeff()) + ")");
    if (eig.maxCoeff() / eig.minCoeff() > kMaxCondition || 1.0 / llt.rcond() > kMaxCondition)
        throw SolverError(std::string(what) + " is ill-conditioned (condition estimate > 1e12)");
    return llt;
}

double max_eigenvalue(const Eigen::MatrixXd& a) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

void snap_zeros(Eigen::VectorXd& w) {
    for (Eigen::Index j = 0; j < w.size(); ++j)
        if (std::abs(w(j)) < kZeroSnap) w(j) = 0.0;
}

Eigen::MatrixXd smooth_hessian(const LinearProblem& problem, double lambda1) {
    Eigen::MatrixXd a = problem.q_n;
    if (lambda1 != 0.0) a += lambda1 * problem.gram.c_delta();
    return a;
}

}  // namespace

LinearProblem make_problem(Eigen::MatrixXd x, Eigen::VectorXd y, StabilizedGram gram) {
    if (x.rows() < 1 || x.cols() < 1) throw std::invalid_argument("design must be non-empty");
    if (y.size() != x.rows()) throw std::invalid_argument("response length does not match design rows");
    if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("design and response must be finite");
    if (gram.empty()) gram = build_gram(x, kDefaultGramDelta);
    if (static_cast<Eigen::Index>(gram.dims()) != x.cols())
        throw std::invalid_argument("gram dimension does not match design columns");
    LinearProblem p;
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    p.q_n = Eigen::MatrixXd::Zero(x.cols(), x.cols());
    p.q_n.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), inv_n);
    p.q_n.triangularView<Eigen::StrictlyUpper>() = p.q_n.transpose();
    p.q_vec = x.transpose() * y * inv_n;
    p.x = std::move(x);
    p.y = std::move(y);
    p.gram = std::move(gram);
    return p;
}

Eigen::MatrixXd covridge_hessian(const Eigen::MatrixXd& q, const Eigen::MatrixXd& c_delta, double lambda1, double lambda2) {
    if (q.rows() != q.cols() || c_delta.rows() != q.rows() || c_delta.cols() != q.cols())
        throw std::invalid_argument("Q and C must be square with equal dimensions");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("lambda1 and lambda2 must be >= 0");
    Eigen::MatrixXd h = q + lambda1 * c_delta;
    h.diagonal().array() += lambda2;
    return h;
}

Eigen::VectorXd covridge_closed_form(const LinearProblem& problem, double lambda1, double lambda2) {
    const auto h = covridge_hessian(problem.q_n, problem.gram.c_delta(), lambda1, lambda2);
    return factor_spd(h, "covridge normal matrix").solve(problem.q_vec);
}

Eigen::VectorXd shrunken_target(const LinearProblem& problem, double lambda1, double lambda2, const Eigen::VectorXd& w0) {
    if (static_cast<std::size_t>(w0.size()) != problem.dims()) throw std::invalid_argument("w0 has wrong length");
    const auto h = covridge_hessian(problem.q_n, problem.gram.c_delta(), lambda1, lambda2);
    return factor_spd(h, "covridge normal matrix").solve(problem.q_n * w0);
}

Eigen::MatrixXd covridge_asym_cov(const Eigen::MatrixXd& q, const Eigen::MatrixXd& c_delta, double lambda1, double lambda2,
                                  double sigma2) {
    if (sigma2 < 0.0) throw std::invalid_argument("noise variance must be >= 0");
    const auto h = covridge_hessian(q, c_delta, lambda1, lambda2);
    const auto llt = factor_spd(h, "limit covridge matrix");
    const Eigen::MatrixXd h_inv_q = llt.solve(q);
    Eigen::MatrixXd cov = sigma2 * llt.solve(h_inv_q.transpose());
    return 0.5 * (cov + cov.transpose());
}

LinearFit covridge_fit(const LinearProblem& problem, double lambda1, double lambda2) {
    LinearFit fit;
    fit.method = LinearMethod::covridge;
    fit.w_hat = covridge_closed_form(problem, lambda1, lambda2);
    fit.iterations = 1;
    return fit;
}

double soft_threshold(double z, double t) {
    if (t < 0.0) throw std::invalid_argument("threshold must be >= 0");
    const double mag = std::abs(z) - t;
    if (mag <= 0.0) return 0.0;
    return z > 0.0 ? mag : -mag;
}

double sparridge_objective(const LinearProblem& problem, double lambda1, double gamma, const Eigen::VectorXd& w) {
    const double loss = (problem.y - problem.x * w).squaredNorm() / (2.0 * static_cast<double>(problem.rows()));
    const double quad = lambda1 == 0.0 ? 0.0 : 0.5 * lambda1 * problem.gram.quadratic(w);
    return loss + quad + gamma * w.lpNorm<1>();
}

Eigen::VectorXd sparridge_smooth_grad(const LinearProblem& problem, double lambda1, const Eigen::VectorXd& w) {
    Eigen::VectorXd g = problem.q_n * w - problem.q_vec;
    if (lambda1 != 0.0) g += lambda1 * problem.gram.apply(w);
    return g;
}

LinearFit sparridge_solve(const LinearProblem& problem, double lambda1, double gamma, const ProximalOptions& options) {
    if (!(lambda1 >= 0.0) || !(gamma >= 0.0)) throw std::invalid_argument("lambda1 and gamma must be >= 0");
    if (!(options.tol > 0.0)) throw std::invalid_argument("tolerance must be > 0");
    const Eigen::MatrixXd a = smooth_hessian(problem, lambda1);
    const double lipschitz = max_eigenvalue(a);
    if (!(lipschitz > 0.0)) throw SolverError("sparridge smooth part has no curvature");
    const double step = 1.0 / lipschitz;
    const double threshold = gamma * step;
    const double const_term = problem.y.squaredNorm() / (2.0 * static_cast<double>(problem.rows()));
    const auto objective = [&](const Eigen::VectorXd& w) {
        return 0.5 * w.dot(a * w) - problem.q_vec.dot(w) + const_term + gamma * w.lpNorm<1>();
    };

    const auto p = static_cast<Eigen::Index>(problem.dims());
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd extrapolated = w;
    double momentum = 1.0;
    LinearFit fit;
    fit.method = LinearMethod::sparridge;
    fit.converged = false;
    Eigen::VectorXd best = w;
    double best_obj = objective(w);

    for (std::size_t it = 1; it <= options.max_iter; ++it) {
        const Eigen::VectorXd& base = options.accelerated ? extrapolated : w;
        Eigen::VectorXd next = base - step * (a * base - problem.q_vec);
        for (Eigen::Index j = 0; j < p; ++j) next(j) = soft_threshold(next(j), threshold);
        snap_zeros(next);
        const double change = (next - w).cwiseAbs().maxCoeff();
        if (options.accelerated) {
            const double m_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
            extrapolated = next + ((momentum - 1.0) / m_next) * (next - w);
            momentum = m_next;
        }
        w = std::move(next);
        fit.iterations = it;
        if (options.on_iterate) options.on_iterate(it, w);
        const double obj = objective(w);
        if (obj < best_obj) {
            best_obj = obj;
            best = w;
        }
        if (change < options.tol) {
            fit.converged = true;
            break;
        }
    }
    fit.w_hat = fit.converged ? w : best;
    return fit;
}

void attach_inference(LinearFit& fit, const LinearProblem& problem, double lambda1, double lambda2,
                      const Eigen::VectorXd& w0, double sigma2) {
    const double l2 = fit.method == LinearMethod::sparridge ? 0.0 : lambda2;
    fit.w_circ = shrunken_target(problem, lambda1, l2, w0);
    fit.asym_cov = covridge_asym_cov(problem.q_n, problem.gram.c_delta(), lambda1, l2, sigma2);
}

double limit_criterion_value(const Eigen::MatrixXd& h, const Eigen::VectorXd& z, double gamma,
                             const Eigen::VectorXd& w_star, const Eigen::VectorXd& u) {
    double penalty = 0.0;
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        if (std::abs(w_star(j)) > kActiveThreshold)
            penalty += (w_star(j) > 0.0 ? 1.0 : -1.0) * u(j);
        else
            penalty += std::abs(u(j));
    }
    return 0.5 * u.dot(h * u) - u.dot(z) + gamma * penalty;
}

Eigen::VectorXd limit_criterion_minimize(const Eigen::MatrixXd& h, const Eigen::VectorXd& z, double gamma,
                                         const Eigen::VectorXd& w_star) {
    if (h.rows() != h.cols() || z.size() != h.rows() || w_star.size() != h.rows())
        throw std::invalid_argument("limit criterion dimensions disagree");
    if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
    const auto llt = factor_spd(h, "limit Hessian H");
    if (gamma == 0.0) return llt.solve(z);

    const auto p = h.rows();
    std::vector<bool> active(static_cast<std::size_t>(p));
    Eigen::VectorXd b = z;  // linear coefficient after folding active-set terms in
    for (Eigen::Index j = 0; j < p; ++j) {
        active[static_cast<std::size_t>(j)] = std::abs(w_star(j)) > kActiveThreshold;
        if (active[static_cast<std::size_t>(j)]) b(j) -= gamma * (w_star(j) > 0.0 ? 1.0 : -1.0);
    }

    // Accelerated proximal gradient on 1/2 u^T H u - u^T b + gamma sum_{inactive} |u_j|.
    const double step = 1.0 / max_eigenvalue(h);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd y = u;
    double t = 1.0;
    for (int it = 0; it < 200000; ++it) {
        Eigen::VectorXd next = y - step * (h * y - b);
        for (Eigen::Index j = 0; j < p; ++j)
            if (!active[static_cast<std::size_t>(j)]) next(j) = soft_threshold(next(j), gamma * step);
        const double change = (next - u).cwiseAbs().maxCoeff();
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / t_next) * (next - u);
        t = t_next;
        u = std::move(next);
        if (change < 1e-15 * std::max(1.0, u.cwiseAbs().maxCoeff())) break;
    }

    // Polish: fix the support and signs found above and solve the reduced
    // linear system exactly; keep it only if it satisfies the optimality
    // conditions.
    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < p; ++j)
        if (active[static_cast<std::size_t>(j)] || std::abs(u(j)) > 1e-9) support.push_back(j);
    Eigen::VectorXd polished = Eigen::VectorXd::Zero(p);
    if (!support.empty()) {
        const auto k = static_cast<Eigen::Index>(support.size());
        Eigen::MatrixXd hs(k, k);
        Eigen::VectorXd rhs(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            const auto j = support[static_cast<std::size_t>(a)];
            rhs(a) = b(j) - (active[static_cast<std::size_t>(j)] ? 0.0 : gamma * (u(j) > 0.0 ? 1.0 : -1.0));
            for (Eigen::Index c = 0; c < k; ++c) hs(a, c) = h(j, support[static_cast<std::size_t>(c)]);
        }
        const Eigen::VectorXd sol = hs.llt().solve(rhs);
        for (Eigen::Index a = 0; a < k; ++a) polished(support[static_cast<std::size_t>(a)]) = sol(a);
    }
    const Eigen::VectorXd grad = h * polished - b;
    bool ok = true;
    for (Eigen::Index j = 0; j < p && ok; ++j) {
        if (active[static_cast<std::size_t>(j)]) continue;
        if (polished(j) == 0.0)
            ok = std::abs(grad(j)) <= gamma + 1e-9;
        else
            ok = (polished(j) > 0.0) == (u(j) > 0.0);
    }
    return ok ? polished : u;
}

Theorem1Report validate_theorem1(const Eigen::MatrixXd& design, const Eigen::VectorXd& w0, double sigma, double lambda1,
                                 double lambda2, std::size_t replications, std::uint64_t seed, double tolerance,
                                 std::size_t workers, double delta) {
    if (replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
    if (w0.size() != design.cols()) throw std::invalid_argument("w0 length does not match design columns");
    const auto n = design.rows();
    const auto p = design.cols();
    const LinearProblem problem = make_problem(design, Eigen::VectorXd::Zero(n), build_gram(design, delta));

    Theorem1Report rep;
    rep.n = static_cast<std::size_t>(n);
    rep.p = static_cast<std::size_t>(p);
    rep.replications = replications;
    rep.sigma = sigma;
    rep.lambda1 = lambda1;
    rep.lambda2 = lambda2;
    rep.tolerance = tolerance;
    rep.max_leverage = design.rowwise().squaredNorm().maxCoeff() / static_cast<double>(n);

    const auto h = covridge_hessian(problem.q_n, problem.gram.c_delta(), lambda1, lambda2);
    const auto llt = factor_spd(h, "covridge normal matrix");
    const Eigen::VectorXd signal = problem.q_n * w0;
    rep.w_circ = llt.solve(signal);
    rep.theoretical_cov = covridge_asym_cov(problem.q_n, problem.gram.c_delta(), lambda1, lambda2, sigma * sigma);

    const double root_n = std::sqrt(static_cast<double>(n));
    Eigen::MatrixXd draws(static_cast<Eigen::Index>(replications), p);
    parallel_for(replications, workers, [&](std::size_t r) {
        auto rng = make_rng(derive_seed(seed, r));
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd eps(n);
        for (Eigen::Index i = 0; i < n; ++i) eps(i) = sigma * normal(rng);
        const Eigen::VectorXd q = signal + design.transpose() * eps / static_cast<double>(n);
        const Eigen::VectorXd w_hat = llt.solve(q);
        draws.row(static_cast<Eigen::Index>(r)) = (root_n * (w_hat - rep.w_circ)).transpose();
    });

    rep.empirical_mean = draws.colwise().mean().transpose();
    const Eigen::MatrixXd centered = draws.rowwise() - rep.empirical_mean.transpose();
    rep.empirical_cov = replications > 1 ? Eigen::MatrixXd(centered.transpose() * centered / static_cast<double>(replications - 1))
                                         : Eigen::MatrixXd::Zero(p, p);

    const double theo_norm = rep.theoretical_cov.norm();
    const double diff_norm = (rep.empirical_cov - rep.theoretical_cov).norm();
    rep.relative_frobenius_error = theo_norm > 0.0 ? diff_norm / theo_norm : diff_norm;
    rep.cov_pass = rep.relative_frobenius_error <= tolerance;

    rep.mean_pass = true;
    rep.max_mean_z = 0.0;
    const double root_r = std::sqrt(static_cast<double>(replications));
    for (Eigen::Index j = 0; j < p; ++j) {
        const double sd = std::sqrt(std::max(0.0, rep.theoretical_cov(j, j)));
        const double m = std::abs(rep.empirical_mean(j));
        if (sd > 0.0) {
            const double zscore = m / (sd / root_r);
            rep.max_mean_z = std::max(rep.max_mean_z, zscore);
            if (zscore > 4.0) rep.mean_pass = false;
        } else if (m > 1e-12) {
            rep.mean_pass = false;
        }
    }
    return rep;
}

namespace {
nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
    return {{"dims", {m.rows(), m.cols()}}, {"values", v}};
}
}  // namespace

void to_json(nlohmann::json& j, const Theorem1Report& r) {
    j = nlohmann::json::object();
    j["n"] = r.n;
    j["p"] = r.p;
    j["replications"] = r.replications;
    j["sigma"] = r.sigma;
    j["lambda1"] = r.lambda1;
    j["lambda2"] = r.lambda2;
    j["max_leverage"] = r.max_leverage;
    j["w_circ"] = std::vector<double>(r.w_circ.begin(), r.w_circ.end());
    j["empirical_mean"] = std::vector<double>(r.empirical_mean.begin(), r.empirical_mean.end());
    j["empirical_cov"] = matrix_json(r.empirical_cov);
    j["theoretical_cov"] = matrix_json(r.theoretical_cov);
    j["relative_frobenius_error"] = r.relative_frobenius_error;
    j["max_mean_z"] = r.max_mean_z;
    j["tolerance"] = r.tolerance;
    j["cov_pass"] = r.cov_pass;
    j["mean_pass"] = r.mean_pass;
    j["pass"] = r.pass();
}

Eigen::MatrixXd sample_limit_law(const Eigen::MatrixXd& h, const Eigen::MatrixXd& q, double sigma, double gamma,
                                 const Eigen::VectorXd& w_star, std::size_t draws, std::uint64_t seed) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
    const Eigen::MatrixXd root =
        es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(draws), h.rows());
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd xi(h.rows());
    for (std::size_t d = 0; d < draws; ++d) {
        for (Eigen::Index j = 0; j < xi.size(); ++j) xi(j) = normal(rng);
        const Eigen::VectorXd z = sigma * (root * xi);
        out.row(static_cast<Eigen::Index>(d)) = limit_criterion_minimize(h, z, gamma, w_star).transpose();
    }
    return out;
}

}  // namespace geomreg
