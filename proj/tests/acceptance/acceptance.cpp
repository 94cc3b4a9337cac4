// Acceptance checks. Prints one PASS/FAIL line per criterion with the
// measured quantities and exits nonzero if any criterion fails.
//
//   acceptance [--workers N] [--only 1,5,9]
//
// --workers 0 uses every available core.

#include "commands.hpp"

#include "geomreg/dataset.hpp"
#include "geomreg/gram.hpp"
#include "geomreg/linear.hpp"
#include "geomreg/manifest.hpp"
#include "geomreg/mlp.hpp"
#include "geomreg/parallel.hpp"
#include "geomreg/penalty.hpp"
#include "geomreg/simulate.hpp"
#include "geomreg/tune.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace geomreg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::size_t g_workers = 1;

std::string fmt(double v, int digits = 3) {
    std::ostringstream s;
    s << std::setprecision(digits) << v;
    return s.str();
}

Eigen::MatrixXd uniform(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

// Entries pushed into [-1, -0.1) U (0.1, 1].
Eigen::MatrixXd uniform_away_from_zero(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.1 + 1e-3, 1.0);
    std::bernoulli_distribution coin(0.5);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (coin(rng) ? 1.0 : -1.0) * mag(rng);
    return m;
}

double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ------------------------------------------------------------ criterion 1

Outcome gradient_correctness() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(101);
    const double h = 1e-5;
    std::map<std::string, double> worst;
    for (int trial = 0; trial < 20; ++trial) {
        const int p = 2 + trial % 7, d = 1 + trial % 4;
        const auto gram = build_gram(gaussian(3 * p, p, rng), 1e-3);
        std::uniform_real_distribution<double> scale(0.01, 1.0), mix(0.05, 0.95);
        const std::vector<std::pair<PenaltyConfig, bool>> configs{
            {PenaltyConfig::make(PenaltyFamily::none, std::vector<double>{}), false},
            {PenaltyConfig::make(PenaltyFamily::ridge, std::vector<double>{scale(rng)}), false},
            {PenaltyConfig::make(PenaltyFamily::lasso, std::vector<double>{scale(rng)}), true},
            {PenaltyConfig::make(PenaltyFamily::elastic_net, std::vector<double>{scale(rng), mix(rng)}), true},
            {PenaltyConfig::make(PenaltyFamily::covridge, std::vector<double>{scale(rng), scale(rng)}, gram), false},
            {PenaltyConfig::make(PenaltyFamily::sparridge, std::vector<double>{scale(rng), scale(rng)}, gram), true}};
        for (const auto& [cfg, has_l1] : configs) {
            const Eigen::MatrixXd w = has_l1 ? uniform_away_from_zero(p, d, rng) : uniform(p, d, rng);
            const Eigen::MatrixXd analytic = penalty_grad(cfg, w);
            Eigen::MatrixXd numeric(p, d);
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                Eigen::MatrixXd up = w, down = w;
                up.data()[i] += h;
                down.data()[i] -= h;
                numeric.data()[i] = (penalty_value(cfg, up) - penalty_value(cfg, down)) / (2 * h);
            }
            const double denom = numeric.cwiseAbs().maxCoeff();
            const double err = denom == 0.0 ? analytic.cwiseAbs().maxCoeff()
                                            : (analytic - numeric).cwiseAbs().maxCoeff() / denom;
            double& slot = worst[to_string(cfg.family())];
            slot = std::max(slot, err);
        }
    }
    double overall = 0.0;
    std::string detail;
    for (const auto& [name, err] : worst) {
        overall = std::max(overall, err);
        detail += name + " " + fmt(err, 2) + ", ";
    }
    const double secs = elapsed(start);
    return {overall < 1e-6 && secs < 5.0,
            "max relative error " + fmt(overall, 2) + " (" + detail + "tol 1e-6), " + fmt(secs, 2) + " s (budget 5 s)"};
}

// ------------------------------------------------------------ criterion 2

Outcome eigen_identity() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int p = 1 + trial % 10;
        std::uniform_real_distribution<double> log_delta(-6.0, 0.0), lam(0.0, 2.0);
        const double delta = std::pow(10.0, log_delta(rng));
        const Eigen::MatrixXd hmat = gaussian(5 + trial * 3, p, rng);
        const auto gram = build_gram(hmat, delta);
        const Eigen::MatrixXd w = uniform(p, 1 + trial % 3, rng);
        const double l1 = lam(rng), l2 = lam(rng);
        const double value = penalty_value(PenaltyConfig::make(PenaltyFamily::covridge, std::vector<double>{l1, l2}, gram), w);
        // independent decomposition of H^T H / n
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hmat.transpose() * hmat / static_cast<double>(hmat.rows()));
        const Eigen::MatrixXd rotated = es.eigenvectors().transpose() * w;
        double expected = l2 * w.squaredNorm();
        for (int i = 0; i < p; ++i) expected += l1 * (std::max(0.0, es.eigenvalues()(i)) + delta) * rotated.row(i).squaredNorm();
        worst = std::max(worst, std::abs(value - expected) / std::max(std::abs(expected), 1e-300));
    }
    const double secs = elapsed(start);
    return {worst < 1e-10 && secs < 1.0,
            "max relative gap " + fmt(worst, 2) + " (tol 1e-10), " + fmt(secs, 2) + " s (budget 1 s)"};
}

// ------------------------------------------------------------ criterion 3

bool same_parameters(const MlpModel& a, const MlpModel& b) {
    if (a.depth() != b.depth()) return false;
    for (std::size_t l = 0; l < a.depth(); ++l)
        if (a.layers[l].weight != b.layers[l].weight || a.layers[l].offset != b.layers[l].offset) return false;
    return true;
}

Outcome reduction_identities() {
    std::mt19937_64 rng(303);
    // penalty level
    bool penalties_equal = true;
    for (int trial = 0; trial < 20; ++trial) {
        const int p = 2 + trial % 6;
        const auto gram = build_gram(gaussian(20, p, rng), 1e-3);
        const Eigen::MatrixXd w = uniform(p, 3, rng);
        std::uniform_real_distribution<double> lam(0.001, 1.0);
        const double lam2 = lam(rng), gam = lam(rng);
        const auto cov = PenaltyConfig::make(PenaltyFamily::covridge, std::vector<double>{0.0, lam2}, gram);
        const auto ridge = PenaltyConfig::make(PenaltyFamily::ridge, std::vector<double>{lam2});
        const auto spr = PenaltyConfig::make(PenaltyFamily::sparridge, std::vector<double>{0.0, gam}, gram);
        const auto lasso = PenaltyConfig::make(PenaltyFamily::lasso, std::vector<double>{gam});
        penalties_equal = penalties_equal && penalty_value(cov, w) == penalty_value(ridge, w) &&
                          penalty_grad(cov, w) == penalty_grad(ridge, w) && penalty_value(spr, w) == penalty_value(lasso, w) &&
                          penalty_grad(spr, w) == penalty_grad(lasso, w);
    }

    // training level: 20 inputs, hidden (8, 4), one output; the trajectory is
    // compared after every epoch count from 1 to 50
    DgpConfig dgp;
    dgp.seed = 33;
    const auto data = gen_dataset(dgp).data;
    const auto z = standardize(data.features).apply(data.features);
    const Dataset train_data = make_regression(z, data.target);
    const auto gram = build_gram(z, 1e-3);
    const std::vector<std::size_t> sizes{20, 8, 4, 1};
    const auto init = init_model(sizes, OutputHead::linear, 34);
    const std::vector<std::pair<PenaltyConfig, PenaltyConfig>> pairs{
        {PenaltyConfig::make(PenaltyFamily::covridge, std::vector<double>{0.0, 0.01}, gram),
         PenaltyConfig::make(PenaltyFamily::ridge, std::vector<double>{0.01})},
        {PenaltyConfig::make(PenaltyFamily::sparridge, std::vector<double>{0.0, 0.01}, gram),
         PenaltyConfig::make(PenaltyFamily::lasso, std::vector<double>{0.01})}};
    std::vector<int> identical(2, 1);
    parallel_for(100, g_workers, [&](std::size_t task) {
        const std::size_t which = task / 50;
        TrainConfig cfg;
        cfg.epochs = task % 50 + 1;
        cfg.seed = 35;
        const auto a = train(init, train_data, cfg, pairs[which].first);
        const auto b = train(init, train_data, cfg, pairs[which].second);
        if (!same_parameters(a.model, b.model) || a.history.train_loss != b.history.train_loss) identical[which] = 0;
    });
    const bool pass = penalties_equal && identical[0] && identical[1];
    return {pass, std::string("penalty values/gradients ") + (penalties_equal ? "identical" : "DIFFER") +
                      "; covridge(0, l) vs ridge(l) trajectories " + (identical[0] ? "bit-identical" : "DIFFER") +
                      ", sparridge(0, g) vs lasso(g) " + (identical[1] ? "bit-identical" : "DIFFER") +
                      " over epochs 1..50 on 20-8-4-1"};
}

// ------------------------------------------------------------ criterion 4

Outcome closed_form_vs_descent() {
    std::mt19937_64 rng(404);
    double worst = 0.0;
    std::size_t max_iters = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> pick_p(1, 10);
        const int p = pick_p(rng);
        std::uniform_int_distribution<int> pick_n(2 * p + 5, 200);
        const int n = pick_n(rng);
        const Eigen::MatrixXd x = gaussian(n, p, rng);
        const Eigen::VectorXd y = x * gaussian(p, 1, rng) + 0.5 * gaussian(n, 1, rng);
        std::uniform_real_distribution<double> lam(0.0, 1.0);
        const double l1 = lam(rng), l2 = lam(rng);
        const auto problem = make_problem(x, y);
        const Eigen::VectorXd closed = covridge_closed_form(problem, l1, l2);

        // gradient of 1/(2n)||y - Xw||^2 + l1/2 w^T C w + l2/2 ||w||^2, formed here
        const Eigen::MatrixXd c = x.transpose() * x / n + 1e-3 * Eigen::MatrixXd::Identity(p, p);
        const Eigen::MatrixXd curvature = x.transpose() * x / n + l1 * c + l2 * Eigen::MatrixXd::Identity(p, p);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(curvature);
        const double step = 1.0 / es.eigenvalues().maxCoeff();
        Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
        std::size_t it = 0;
        for (; it < 5000000; ++it) {
            const Eigen::VectorXd grad = -x.transpose() * (y - x * w) / n + l1 * (c * w) + l2 * w;
            if (grad.cwiseAbs().maxCoeff() < 1e-12) break;
            w -= step * grad;
        }
        max_iters = std::max(max_iters, it);
        worst = std::max(worst, (w - closed).cwiseAbs().maxCoeff());
    }
    return {worst < 1e-6, "max-norm gap " + fmt(worst, 2) + " over 50 problems (tol 1e-6), up to " +
                              std::to_string(max_iters) + " descent steps"};
}

// ------------------------------------------------------------ criterion 5

Outcome theorem1_asymptotics() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(505);
    const Eigen::MatrixXd design = gaussian(2000, 5, rng);
    const Eigen::VectorXd w0 = gaussian(5, 1, rng);
    const auto rep = validate_theorem1(design, w0, 1.0, 0.3, 0.1, 5000, 506, 0.1, g_workers);
    const double secs = elapsed(start);
    return {rep.pass() && secs < 120.0,
            "relative Frobenius error " + fmt(rep.relative_frobenius_error) + " (tol 0.1), max |mean| z " +
                fmt(rep.max_mean_z) + " (tol 4), max leverage " + fmt(rep.max_leverage) + ", " + fmt(secs, 2) +
                " s (budget 120 s)"};
}

// ------------------------------------------------------------ criterion 6

// Exhaustive minimizer of 1/2 w^T A w - b^T w + gamma ||w||_1 for small p:
// every support and sign pattern gives a linear system, and the best
// sign-consistent candidate is the global minimizer.
Eigen::VectorXd brute_force_oracle(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double gamma) {
    const int p = static_cast<int>(b.size());
    Eigen::VectorXd best = Eigen::VectorXd::Zero(p);
    double best_obj = 0.0;
    for (int support = 1; support < (1 << p); ++support) {
        std::vector<int> idx;
        for (int j = 0; j < p; ++j)
            if (support & (1 << j)) idx.push_back(j);
        const int m = static_cast<int>(idx.size());
        for (int signs = 0; signs < (1 << m); ++signs) {
            Eigen::MatrixXd a_s(m, m);
            Eigen::VectorXd rhs(m), s(m);
            for (int i = 0; i < m; ++i) {
                s(i) = (signs & (1 << i)) ? -1.0 : 1.0;
                rhs(i) = b(idx[i]) - gamma * s(i);
                for (int k = 0; k < m; ++k) a_s(i, k) = a(idx[i], idx[k]);
            }
            const Eigen::VectorXd w_s = a_s.ldlt().solve(rhs);
            bool consistent = true;
            for (int i = 0; i < m; ++i) consistent = consistent && w_s(i) * s(i) > 0.0;
            if (!consistent) continue;
            Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
            for (int i = 0; i < m; ++i) w(idx[i]) = w_s(i);
            const double obj = 0.5 * w.dot(a * w) - b.dot(w) + gamma * w.lpNorm<1>();
            if (obj < best_obj) {
                best_obj = obj;
                best = w;
            }
        }
    }
    return best;
}

LinearProblem random_linear_problem(std::mt19937_64& rng, int n, int p) {
    const Eigen::MatrixXd x = gaussian(n, p, rng);
    Eigen::VectorXd w = gaussian(p, 1, rng);
    for (int j = 0; j < p; j += 2) w(j) = 0.0;  // partly sparse truth
    return make_problem(x, x * w + 0.5 * gaussian(n, 1, rng));
}

Outcome theorem2_gamma_zero() {
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> lam(0.01, 1.0);
    ProximalOptions tight;
    tight.tol = 1e-14;
    tight.max_iter = 2000000;
    tight.accelerated = true;

    double gamma0_gap = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> pick_p(1, 10);
        const int p = pick_p(rng);
        const auto prob = random_linear_problem(rng, 20 + 4 * p + trial, p);
        const double l1 = lam(rng);
        const auto fit = sparridge_solve(prob, l1, 0.0, tight);
        gamma0_gap = std::max(gamma0_gap, (fit.w_hat - covridge_closed_form(prob, l1, 0.0)).cwiseAbs().maxCoeff());
    }

    double kkt = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> pick_p(2, 10);
        const int p = pick_p(rng);
        const auto prob = random_linear_problem(rng, 30 + 3 * trial, p);
        const double l1 = lam(rng), gamma = 0.5 * lam(rng) * prob.q_vec.cwiseAbs().maxCoeff();
        const auto fit = sparridge_solve(prob, l1, gamma, tight);
        const Eigen::VectorXd g = prob.q_n * fit.w_hat + l1 * (prob.gram.c_delta() * fit.w_hat) - prob.q_vec;
        for (Eigen::Index j = 0; j < g.size(); ++j) {
            const double residual = fit.w_hat(j) == 0.0 ? std::max(0.0, std::abs(g(j)) - gamma)
                                                        : std::abs(g(j) + gamma * (fit.w_hat(j) > 0 ? 1.0 : -1.0));
            kkt = std::max(kkt, residual);
        }
    }

    double oracle_gap = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int p = 1 + trial % 4;
        const auto prob = random_linear_problem(rng, 10 + trial, p);
        const double l1 = lam(rng), gamma = 0.5 * lam(rng) * prob.q_vec.cwiseAbs().maxCoeff();
        const Eigen::MatrixXd c = prob.x.transpose() * prob.x / static_cast<double>(prob.rows()) +
                                  1e-3 * Eigen::MatrixXd::Identity(p, p);
        const Eigen::MatrixXd a = prob.x.transpose() * prob.x / static_cast<double>(prob.rows()) + l1 * c;
        const Eigen::VectorXd b = prob.x.transpose() * prob.y / static_cast<double>(prob.rows());
        const Eigen::VectorXd oracle = brute_force_oracle(a, b, gamma);
        const auto fit = sparridge_solve(prob, l1, gamma, tight);
        oracle_gap = std::max(oracle_gap, (fit.w_hat - oracle).cwiseAbs().maxCoeff());
    }
    const bool pass = gamma0_gap < 1e-8 && kkt < 1e-6 && oracle_gap < 1e-6;
    return {pass, "gamma=0 vs quadratic solve " + fmt(gamma0_gap, 2) + " (tol 1e-8, 50 problems); KKT residual " +
                      fmt(kkt, 2) + " (tol 1e-6, 50 problems); vs brute-force oracle " + fmt(oracle_gap, 2) +
                      " (tol 1e-6, 20 problems, p <= 4)"};
}

// ------------------------------------------------------------ criterion 7

Outcome limit_criterion() {
    std::mt19937_64 rng(707);
    double linear_gap = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int p = 1 + trial % 8;
        const Eigen::MatrixXd b = gaussian(p, p, rng);
        const Eigen::MatrixXd h = b * b.transpose() + 0.5 * Eigen::MatrixXd::Identity(p, p);
        const Eigen::VectorXd z = gaussian(p, 1, rng);
        const Eigen::VectorXd expected = h.fullPivLu().solve(z);
        const Eigen::VectorXd u = limit_criterion_minimize(h, z, 0.0, gaussian(p, 1, rng));
        linear_gap = std::max(linear_gap, (u - expected).cwiseAbs().maxCoeff() / std::max(1.0, expected.cwiseAbs().maxCoeff()));
    }

    // H = I separates the problem: active coordinates solve u_j = z_j - gamma sign(w*_j),
    // inactive ones are soft-thresholded
    double separable_gap = 0.0;
    const auto check = [&](const Eigen::VectorXd& z, double gamma, const Eigen::VectorXd& w_star) {
        const Eigen::Index p = z.size();
        Eigen::VectorXd expected(p);
        for (Eigen::Index j = 0; j < p; ++j) {
            if (std::abs(w_star(j)) > 1e-10) {
                expected(j) = z(j) - gamma * (w_star(j) > 0 ? 1.0 : -1.0);
            } else {
                const double m = std::abs(z(j)) - gamma;
                expected(j) = m > 0 ? (z(j) > 0 ? m : -m) : 0.0;
            }
        }
        const Eigen::VectorXd u = limit_criterion_minimize(Eigen::MatrixXd::Identity(p, p), z, gamma, w_star);
        separable_gap = std::max(separable_gap, (u - expected).cwiseAbs().maxCoeff());
    };
    check(Eigen::Vector2d(3, 0), 1.0, Eigen::Vector2d(0, 0));
    check(Eigen::Vector2d(3, 0), 1.0, Eigen::Vector2d(0.5, 0));
    for (int trial = 0; trial < 50; ++trial) {
        const int p = 1 + trial % 6;
        std::uniform_real_distribution<double> g(0.0, 2.0);
        Eigen::VectorXd w_star = gaussian(p, 1, rng);
        std::bernoulli_distribution zero(0.5);
        for (int j = 0; j < p; ++j)
            if (zero(rng)) w_star(j) = 0.0;
        check(2.0 * gaussian(p, 1, rng), g(rng), w_star);
    }
    return {linear_gap < 1e-10 && separable_gap < 1e-10,
            "gamma=0 vs H^-1 Z " + fmt(linear_gap, 2) + " (tol 1e-10, 50 problems); separable H=I cases " +
                fmt(separable_gap, 2) + " (tol 1e-10, 52 problems)"};
}

// ------------------------------------------------------------ criterion 8

Outcome dgp_fidelity() {
    std::string detail;
    bool pass = true;
    for (double rho : {0.0, 0.25, 0.75}) {
        DgpConfig cfg;
        cfg.n = 100000;
        cfg.p = 20;
        cfg.k = 10;
        cfg.rho = rho;
        cfg.seed = 808;
        const auto g = gen_dataset(cfg);
        const Eigen::MatrixXd block = g.data.features.leftCols(10);
        const Eigen::MatrixXd centered = block.rowwise() - block.colwise().mean();
        const Eigen::MatrixXd cov = centered.transpose() * centered / (cfg.n - 1.0);
        const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
        double worst = 0.0;
        for (int i = 0; i < 10; ++i)
            for (int j = i + 1; j < 10; ++j) worst = std::max(worst, std::abs(cov(i, j) / (sd(i) * sd(j)) - rho));
        pass = pass && worst < 0.02;
        detail += "rho " + fmt(rho, 2) + ": max |corr - rho| " + fmt(worst, 2) + "; ";
    }
    double identity_gap = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        DgpConfig cfg;
        cfg.sigma = 0.0;
        cfg.rho = 0.25 * static_cast<double>(seed % 4);
        cfg.seed = seed;
        const auto g = gen_dataset(cfg);
        const Eigen::VectorXd reference = g.data.features * g.theta;
        identity_gap = std::max(identity_gap, (g.data.target - reference).cwiseAbs().maxCoeff() /
                                                  std::max(1.0, reference.cwiseAbs().maxCoeff()));
    }
    pass = pass && identity_gap <= 1e-14;
    return {pass, detail + "(tol 0.02, n=1e5, k=10); sigma=0 max |y - X theta| " + fmt(identity_gap, 2) +
                      " relative (tol 1e-14)"};
}

// ------------------------------------------------------------ criterion 9

// P(Binomial(n, 1/2) >= k)
double upper_binomial_tail(std::size_t n, std::size_t k) {
    double total = 0.0;
    for (std::size_t i = k; i <= n; ++i) total += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
    return std::min(1.0, total);
}

Outcome table_orderings() {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<MethodTemplate> methods{{"none", PenaltyFamily::none, {}},
                                              {"ridge", PenaltyFamily::ridge, {}},
                                              {"lasso", PenaltyFamily::lasso, {}},
                                              {"elastic_net", PenaltyFamily::elastic_net, {}},
                                              {"covridge", PenaltyFamily::covridge, {}},
                                              {"sparridge", PenaltyFamily::sparridge, {}}};
    TrainConfig train;
    train.epochs = 100;
    train.batch_size = 32;
    CvPlan plan;
    plan.folds = 5;
    plan.grid = {paper_grid()};
    McOptions options;
    options.workers = g_workers;

    bool part_a = true, part_b = true;
    std::ostringstream detail;
    std::size_t failures = 0;
    for (double rho : {0.25, 0.75}) {
        for (double sigma : {0.10, 2.00}) {
            DgpConfig dgp;
            dgp.rho = rho;
            dgp.sigma = sigma;
            dgp.seed = 909;
            const auto result = run_monte_carlo(dgp, methods, train, 30, plan, options);
            failures += result.failures();
            std::map<std::string, double> mean;
            for (const auto& s : result.summary) mean[s.method] = s.failed == 0 ? s.mse : std::numeric_limits<double>::infinity();

            std::cerr << "  cell rho=" << rho << " sigma=" << sigma << ":";
            for (const auto& m : methods) std::cerr << ' ' << m.name << '=' << fmt(mean[m.name], 4);
            std::cerr << '\n';

            std::vector<std::string> not_better;
            for (const auto& m : methods)
                if (m.name != "none" && !(mean[m.name] < mean["none"])) not_better.push_back(m.name);
            part_a = part_a && not_better.empty();
            detail << "[rho " << rho << " sigma " << sigma << ": none " << fmt(mean["none"], 4);
            if (!not_better.empty()) {
                detail << ", not below baseline:";
                for (const auto& n : not_better) detail << ' ' << n << ' ' << fmt(mean[n], 4);
            }

            if (rho == 0.75) {
                const std::string proposed = mean["covridge"] <= mean["sparridge"] ? "covridge" : "sparridge";
                std::string classical = "ridge";
                for (const char* c : {"lasso", "elastic_net"})
                    if (mean[c] < mean[classical]) classical = c;
                // paired per-replication comparison of the two best methods
                std::map<std::size_t, double> prop_mse, class_mse;
                for (const auto& rec : result.records) {
                    if (!rec.ok) continue;
                    if (rec.method == proposed) prop_mse[rec.replication] = rec.mse;
                    if (rec.method == classical) class_mse[rec.replication] = rec.mse;
                }
                std::size_t n = 0, classical_wins = 0;
                for (const auto& [r, v] : prop_mse) {
                    const auto it = class_mse.find(r);
                    if (it == class_mse.end() || v == it->second) continue;
                    ++n;
                    if (it->second < v) ++classical_wins;
                }
                const double p_value = upper_binomial_tail(n, classical_wins);
                const bool cell_ok = p_value >= 0.1;
                part_b = part_b && cell_ok;
                detail << "; best proposed " << proposed << ' ' << fmt(mean[proposed], 4) << " vs best classical "
                       << classical << ' ' << fmt(mean[classical], 4) << ", classical better in " << classical_wins << '/'
                       << n << " replications, sign-test p " << fmt(p_value, 3);
            }
            detail << "] ";
        }
    }
    const double secs = elapsed(start);
    detail << "(a) " << (part_a ? "holds" : "FAILS") << ", (b) " << (part_b ? "holds" : "FAILS") << " at level 0.1; "
           << failures << " failed trainings; " << fmt(secs / 60.0, 3) << " min on " << g_workers
           << " worker(s) (budget 30 min on 8 cores)";
    return {part_a && part_b && failures == 0, detail.str()};
}

// ------------------------------------------------------------ criterion 10

// 64 samples, 2200 features, five unequal classes; 200 features carry a
// class-dependent mean shift.
void write_expression_csv(const fs::path& path, bool shuffle_labels, std::uint64_t seed) {
    const std::vector<std::pair<std::string, int>> classes{
        {"AML", 26}, {"bone_marrow", 10}, {"bone_marrow_CD34", 8}, {"peripheral_blood", 10}, {"PB_CD34", 10}};
    std::vector<int> labels;
    for (std::size_t c = 0; c < classes.size(); ++c) labels.insert(labels.end(), classes[c].second, static_cast<int>(c));
    std::mt19937_64 rng(seed);
    const std::size_t n = labels.size(), p = 2200;
    Eigen::MatrixXd x = gaussian(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p), rng);
    const Eigen::MatrixXd centers = 1.5 * gaussian(5, 200, rng);
    for (std::size_t i = 0; i < n; ++i) x.row(static_cast<Eigen::Index>(i)).head(200) += centers.row(labels[i]);
    if (shuffle_labels) std::shuffle(labels.begin(), labels.end(), rng);
    std::ofstream out(path);
    for (std::size_t j = 0; j < p; ++j) out << "g" << j << ',';
    out << "type\n" << std::setprecision(10);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) out << x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) << ',';
        out << classes[labels[i]].first << '\n';
    }
}

nlohmann::json run_classification(const fs::path& work, const std::string& name, bool shuffle) {
    const fs::path csv = work / (name + ".csv");
    write_expression_csv(csv, shuffle, 1010);
    cli::CommonOptions common{(work / name).string(), g_workers, std::uint64_t{1011}};
    cli::DataOptions data;
    data.path = csv.string();
    data.target_name = "type";
    data.task = "classification";
    data.top = 2000;
    cli::LearnOptions learn;
    learn.method = "covridge";
    learn.tune = true;
    learn.folds = 10;
    learn.cv_repeats = 10;
    learn.epochs = 500;
    learn.batch_size = 16;
    learn.hidden = {8, 4};
    learn.patience = 10;
    std::ostringstream log;
    const int rc = cli::cmd_fit(common, data, learn, log);
    if (rc != cli::kSuccess) throw std::runtime_error("fit exited with status " + std::to_string(rc) + ": " + log.str());
    std::ifstream in(work / name / "results" / "metrics.json");
    return nlohmann::json::parse(in);
}

Outcome pipeline_soundness() {
    const auto start = std::chrono::steady_clock::now();
    const fs::path work = fs::temp_directory_path() / "geomreg_acceptance_pipeline";
    fs::remove_all(work);
    fs::create_directories(work);
    const auto real = run_classification(work, "labels", false);
    const auto control = run_classification(work, "shuffled", true);
    fs::remove_all(work);
    const double real_mean = real.at("balanced_accuracy").at("mean").get<double>();
    const double real_std = real.at("balanced_accuracy").at("std").get<double>();
    const double ctrl_mean = control.at("balanced_accuracy").at("mean").get<double>();
    const double ctrl_std = control.at("balanced_accuracy").at("std").get<double>();
    const bool emitted = std::isfinite(real_mean) && std::isfinite(real_std);
    const bool near_chance = std::abs(ctrl_mean - 0.2) <= 0.15;
    return {emitted && near_chance,
            "planted labels " + fmt(real_mean) + " +/- " + fmt(real_std) + ", shuffled control " + fmt(ctrl_mean) +
                " +/- " + fmt(ctrl_std) + " (must lie within 0.15 of 0.2); top 2000 of 2200, tuned covridge, 10 x 10-fold CV, " +
                fmt(elapsed(start), 3) + " s"};
}

// ------------------------------------------------------------ criterion 11

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome reproducibility() {
    const fs::path work = fs::temp_directory_path() / "geomreg_acceptance_repro";
    fs::remove_all(work);
    fs::create_directories(work);
    {
        std::ofstream cfg(work / "run.cfg");
        cfg << "[run]\nseed = 1111\nreplications = 4\nepochs = 20\nhidden = 16, 8\n"
               "methods = none, ridge, covridge, sparridge\ntune = true\nfolds = 3\ngrid = 0.01, 0.5\n"
               "[scenario repro]\nn = 80\np = 10\nk = 5\nrho = 0.25, 0.75\nsigma = 0.1\n";
    }
    std::ostringstream log;
    cli::SimulateOptions from_config;
    from_config.config_path = (work / "run.cfg").string();
    int rc = cli::cmd_simulate({(work / "origin").string(), g_workers, std::nullopt}, from_config, log);
    cli::SimulateOptions from_manifest;
    from_manifest.manifest_path = (work / "origin" / "manifest.json").string();
    rc |= cli::cmd_simulate({(work / "first").string(), g_workers, std::nullopt}, from_manifest, log);
    rc |= cli::cmd_simulate({(work / "second").string(), g_workers, std::nullopt}, from_manifest, log);
    if (rc != 0) return {false, "simulate failed: " + log.str()};

    std::size_t files = 0, mismatched = 0;
    for (const auto& entry : fs::directory_iterator(work / "first" / "results")) {
        if (entry.path().extension() != ".csv") continue;
        ++files;
        const auto name = entry.path().filename();
        const std::string a = slurp(entry.path());
        if (a != slurp(work / "second" / "results" / name) || a != slurp(work / "origin" / "results" / name)) ++mismatched;
    }
    fs::remove_all(work);
    return {files > 0 && mismatched == 0, std::to_string(files) + " result CSVs compared across two manifest re-runs (and the original run), " +
                                              std::to_string(mismatched) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::size_t workers = 0;
    std::vector<int> only;
    app.add_option("--workers", workers, "Worker threads (0 = all cores)");
    app.add_option("--only", only, "Run only these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    g_workers = workers == 0 ? default_workers() : workers;

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"eigen identity", eigen_identity},
        {"reduction identities", reduction_identities},
        {"closed form vs gradient descent", closed_form_vs_descent},
        {"asymptotic covariance", theorem1_asymptotics},
        {"sparse estimator reductions and optimality", theorem2_gamma_zero},
        {"limit criterion", limit_criterion},
        {"DGP fidelity", dgp_fidelity},
        {"simulation orderings", table_orderings},
        {"pipeline soundness", pipeline_soundness},
        {"reproducibility", reproducibility},
    };
    const std::set<int> selected(only.begin(), only.end());
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << "criterion " << std::setw(2) << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
                  << ": " << o.detail << std::endl;
    }
    std::cout << (failed == 0 ? "all selected criteria passed" : std::to_string(failed) + " criterion/criteria failed")
              << std::endl;
    return failed == 0 ? 0 : 1;
}
