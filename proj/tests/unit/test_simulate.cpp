#include "geomreg/metrics.hpp"
#include "geomreg/simulate.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sstream>

using namespace geomreg;

namespace {

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::ArrayXd ca = a.array() - a.mean(), cb = b.array() - b.mean();
    return (ca * cb).sum() / std::sqrt(ca.square().sum() * cb.square().sum());
}

double max_offdiag_gap(const Eigen::MatrixXd& x, std::size_t k, double rho) {
    double worst = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
            worst = std::max(worst, std::abs(correlation(x.col(i), x.col(j)) - rho));
    return worst;
}

TrainConfig tiny_training(std::size_t epochs = 5) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 16;
    return c;
}

McOptions tiny_options(std::size_t workers = 1) {
    McOptions o;
    o.hidden = {6, 3};
    o.workers = workers;
    return o;
}

}  // namespace

TEST(Metrics, Examples) {
    const auto perfect = compute_metrics(Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 2));
    EXPECT_EQ(perfect.mse, 0.0);
    EXPECT_EQ(perfect.mae, 0.0);
    EXPECT_EQ(perfect.bias, 0.0);
    ASSERT_TRUE(perfect.r2);
    EXPECT_DOUBLE_EQ(*perfect.r2, 1.0);

    const auto symmetric = compute_metrics(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, -1));
    EXPECT_DOUBLE_EQ(symmetric.mse, 1.0);
    EXPECT_DOUBLE_EQ(symmetric.mae, 1.0);
    EXPECT_DOUBLE_EQ(symmetric.bias, 0.0);
    EXPECT_FALSE(symmetric.r2);  // constant truth

    const auto m = compute_metrics(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(2, 2, 2));
    EXPECT_DOUBLE_EQ(m.mse, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.mae, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.bias, 0.0);
    // SSE = SST = 2
    EXPECT_NEAR(*m.r2, 0.0, 1e-15);
}

TEST(Metrics, BiasSignAndIdentities) {
    std::mt19937_64 rng(1);
    const Eigen::VectorXd y = testutil::gaussian_matrix(50, 1, rng);
    const Eigen::VectorXd yhat = y.array() + 0.5 + 0.3 * testutil::gaussian_matrix(50, 1, rng).array();
    const auto m = compute_metrics(y, yhat);
    EXPECT_GT(m.bias, 0.0);  // over-prediction
    EXPECT_NEAR(m.rmse * m.rmse, m.mse, 1e-12);
    EXPECT_LE(m.bias * m.bias, m.mse);
    EXPECT_THROW(compute_metrics(Eigen::Vector2d(1, 2), Eigen::Vector3d(1, 2, 3)), std::invalid_argument);
}

TEST(BalancedAccuracy, Examples) {
    EXPECT_DOUBLE_EQ(balanced_accuracy(std::vector<int>{0, 1, 2, 1}, std::vector<int>{0, 1, 2, 1}), 1.0);
    EXPECT_DOUBLE_EQ(balanced_accuracy(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 0, 0, 0}), 0.5);
    EXPECT_NEAR(balanced_accuracy(std::vector<int>{0, 1, 1, 2, 2}, std::vector<int>{0, 1, 0, 2, 1}), 2.0 / 3.0, 1e-15);
    EXPECT_THROW(balanced_accuracy(std::vector<int>{0, 2}, std::vector<int>{0, 2}), std::invalid_argument);
    EXPECT_THROW(balanced_accuracy(std::vector<int>{0, 1}, std::vector<int>{0, 5}), std::invalid_argument);
}

TEST(GenDataset, NoiselessLinearIsExact) {
    DgpConfig cfg;
    cfg.sigma = 0.0;
    cfg.seed = 4;
    const auto g = gen_dataset(cfg);
    EXPECT_EQ(g.data.rows(), 200u);
    EXPECT_EQ(g.data.cols(), 20u);
    EXPECT_LT((g.data.target - g.data.features * g.theta).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(g.theta.tail(10).isZero(0.0));
}

TEST(GenDataset, EquicorrelatedBlock) {
    for (double rho : {0.0, 0.25, 0.75}) {
        DgpConfig cfg;
        cfg.n = 100000;
        cfg.p = 12;
        cfg.k = 10;
        cfg.rho = rho;
        cfg.seed = 19;
        const auto g = gen_dataset(cfg);
        EXPECT_LT(max_offdiag_gap(g.data.features, 10, rho), 0.02) << "rho " << rho;
        // noise features are independent of the block
        EXPECT_LT(std::abs(correlation(g.data.features.col(0), g.data.features.col(11))), 0.02);
        EXPECT_NEAR(g.data.features.col(3).squaredNorm() / 1e5, 1.0, 0.02);
    }
}

TEST(GenDataset, SinFormAndDeterminism) {
    DgpConfig cfg;
    cfg.form = SignalForm::sin_nonlinear;
    cfg.sigma = 0.0;
    const auto a = gen_dataset(cfg), b = gen_dataset(cfg);
    EXPECT_EQ(a.data.features, b.data.features);
    EXPECT_EQ(a.data.target, b.data.target);
    const Eigen::VectorXd lin = a.data.features * a.theta;
    EXPECT_GT((a.data.target - lin).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_TRUE(a.data.target.allFinite());
}

TEST(GenDataset, StreamsAreSeparate) {
    DgpConfig cfg;
    cfg.seed = 3;
    const auto base = gen_dataset(cfg);
    cfg.sigma = 2.0;  // only the error stream is scaled
    const auto noisy = gen_dataset(cfg);
    EXPECT_EQ(base.data.features, noisy.data.features);
    EXPECT_EQ(base.theta, noisy.theta);
    cfg.rho = 0.75;  // block changes, noise columns do not
    const auto correlated = gen_dataset(cfg);
    EXPECT_EQ(base.data.features.rightCols(10), correlated.data.features.rightCols(10));
}

TEST(GenDataset, Validation) {
    DgpConfig cfg;
    cfg.rho = 1.2;
    EXPECT_THROW(gen_dataset(cfg), std::invalid_argument);
    cfg.rho = 0.5;
    cfg.k = 30;
    EXPECT_THROW(gen_dataset(cfg), std::invalid_argument);
    cfg.k = 5;
    cfg.sigma = -1;
    EXPECT_THROW(gen_dataset(cfg), std::invalid_argument);
    EXPECT_EQ(form_from_string(to_string(SignalForm::sin_nonlinear)), SignalForm::sin_nonlinear);
}

TEST(MonteCarlo, HugeRidgeHasSmallerWeights) {
    DgpConfig dgp;
    dgp.n = 80;
    dgp.p = 6;
    dgp.k = 3;
    const std::vector<MethodTemplate> methods{{"none", PenaltyFamily::none, {}}, {"ridge", PenaltyFamily::ridge, {100.0}}};
    const auto r = run_monte_carlo(dgp, methods, tiny_training(30), 1, std::nullopt, tiny_options());
    ASSERT_EQ(r.records.size(), 2u);
    EXPECT_LT(r.records[1].weight_norm, r.records[0].weight_norm);
}

TEST(MonteCarlo, EveryCellRecordedOnNoiselessData) {
    DgpConfig dgp;
    dgp.n = 60;
    dgp.p = 5;
    dgp.k = 3;
    dgp.sigma = 0.0;
    const std::vector<MethodTemplate> methods{{"none", PenaltyFamily::none, {}},
                                              {"ridge", PenaltyFamily::ridge, {0.01}},
                                              {"lasso", PenaltyFamily::lasso, {0.01}},
                                              {"elastic_net", PenaltyFamily::elastic_net, {0.01, 0.5}},
                                              {"covridge", PenaltyFamily::covridge, {0.01, 0.01}},
                                              {"sparridge", PenaltyFamily::sparridge, {0.01, 0.01}}};
    const auto r = run_monte_carlo(dgp, methods, tiny_training(), 3, std::nullopt, tiny_options(2));
    ASSERT_EQ(r.records.size(), 18u);
    for (const auto& rec : r.records) {
        EXPECT_TRUE(rec.ok) << rec.error;
        EXPECT_TRUE(std::isfinite(rec.mse));
    }
    EXPECT_EQ(r.failures(), 0u);
    EXPECT_EQ(r.summary_for("covridge").completed, 3u);
    std::ostringstream out;
    write_records_csv(r, out);
    const std::string text = out.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 19);
    EXPECT_EQ(text.substr(0, text.find('\n')), "method,replication,mse,mae,bias,ok,params");
}

TEST(MonteCarlo, ReproducibleAcrossWorkerCounts) {
    DgpConfig dgp;
    dgp.n = 60;
    dgp.p = 5;
    dgp.k = 3;
    dgp.seed = 21;
    const std::vector<MethodTemplate> methods{{"ridge", PenaltyFamily::ridge, {0.1}},
                                              {"covridge", PenaltyFamily::covridge, {0.1, 0.1}}};
    CvPlan plan;
    plan.folds = 2;
    plan.grid = {{0.01, 0.1}};
    const auto a = run_monte_carlo(dgp, methods, tiny_training(), 3, plan, tiny_options(1));
    const auto b = run_monte_carlo(dgp, methods, tiny_training(), 3, plan, tiny_options(3));
    std::ostringstream sa, sb;
    write_records_csv(a, sa);
    write_records_csv(b, sb);
    EXPECT_EQ(sa.str(), sb.str());
    // tuned covridge uses the single list for both parameters
    EXPECT_EQ(a.records[1].params.size(), 2u);
}

TEST(MonteCarlo, SummaryTableLayout) {
    std::vector<McResult> results;
    for (double rho : {0.25, 0.75})
        for (double sigma : {0.1, 2.0}) {
            DgpConfig dgp;
            dgp.n = 40;
            dgp.p = 4;
            dgp.k = 2;
            dgp.rho = rho;
            dgp.sigma = sigma;
            const std::vector<MethodTemplate> methods{{"none", PenaltyFamily::none, {}}};
            results.push_back(run_monte_carlo(dgp, methods, tiny_training(2), 2, std::nullopt, tiny_options()));
        }
    std::ostringstream out;
    write_summary_csv(results, out);
    const std::string header = out.str().substr(0, out.str().find('\n'));
    EXPECT_NE(header.find("mse_rho0.25_sigma0.1"), std::string::npos) << header;
    EXPECT_NE(header.find("bias_rho0.75_sigma2"), std::string::npos) << header;
    const std::string text = out.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);  // header + one method row
}
