#include "geomreg/mlp.hpp"
#include "geomreg/simulate.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sstream>

using namespace geomreg;

namespace {

using Sizes = std::vector<std::size_t>;

MlpModel tiny_net(double w1, double b1, double w2, double b2) {
    auto m = init_model(Sizes{1, 1, 1}, OutputHead::linear, 0);
    m.layers[0].weight(0, 0) = w1;
    m.layers[0].offset(0) = b1;
    m.layers[1].weight(0, 0) = w2;
    m.layers[1].offset(0) = b2;
    return m;
}

// Central differences of the full objective over every parameter.
double max_fd_error(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t, const Regularization& reg) {
    const double h = 1e-6;
    const auto analytic = loss_and_grads(model, x, t, reg).grads;
    double worst = 0.0;
    auto check = [&](double& param, double grad) {
        const double saved = param;
        param = saved + h;
        const double up = loss_and_grads(model, x, t, reg).objective;
        param = saved - h;
        const double down = loss_and_grads(model, x, t, reg).objective;
        param = saved;
        const double numeric = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(numeric - grad) / std::max(1e-3, std::abs(numeric) + std::abs(grad)));
    };
    auto& m = const_cast<MlpModel&>(model);
    for (std::size_t l = 0; l < m.depth(); ++l) {
        for (Eigen::Index i = 0; i < m.layers[l].weight.size(); ++i)
            check(m.layers[l].weight.data()[i], analytic.weights[l].data()[i]);
        for (Eigen::Index i = 0; i < m.layers[l].offset.size(); ++i)
            check(m.layers[l].offset(i), analytic.offsets[l](i));
    }
    return worst;
}

// Keep weights away from the l1 kink and the batch away from ReLU kinks.
void push_from_zero(MlpModel& m) {
    for (auto& l : m.layers)
        for (Eigen::Index i = 0; i < l.weight.size(); ++i)
            if (std::abs(l.weight.data()[i]) < 0.1) l.weight.data()[i] += l.weight.data()[i] < 0 ? -0.1 : 0.1;
}

Dataset regression_data(std::size_t n, std::size_t p, std::uint64_t seed) {
    DgpConfig cfg;
    cfg.n = n;
    cfg.p = p;
    cfg.k = std::min<std::size_t>(p, 4);
    cfg.sigma = 0.1;
    cfg.seed = seed;
    return gen_dataset(cfg).data;
}

TrainConfig quick_config(std::size_t epochs, std::uint64_t seed = 3) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 16;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(InitModel, ShapesAndDeterminism) {
    const auto a = init_model(Sizes{2, 3, 1}, OutputHead::linear, 7);
    ASSERT_EQ(a.depth(), 2u);
    EXPECT_EQ(a.layers[0].weight.rows(), 2);
    EXPECT_EQ(a.layers[0].weight.cols(), 3);
    EXPECT_EQ(a.layers[1].weight.rows(), 3);
    EXPECT_EQ(a.layers[1].weight.cols(), 1);
    EXPECT_EQ(a.layers[0].offset.size(), 3);
    EXPECT_EQ(a.layers[1].offset.size(), 1);
    EXPECT_TRUE(a.layers[0].offset.isZero(0.0));
    const auto b = init_model(Sizes{2, 3, 1}, OutputHead::linear, 7);
    EXPECT_EQ(a.layers[0].weight, b.layers[0].weight);
    EXPECT_EQ(a.layers[1].weight, b.layers[1].weight);
    const auto c = init_model(Sizes{2, 3, 1}, OutputHead::linear, 8);
    EXPECT_NE(a.layers[0].weight, c.layers[0].weight);
    const double bound = std::sqrt(6.0 / 5.0);
    EXPECT_LE(a.layers[0].weight.cwiseAbs().maxCoeff(), bound);
}

TEST(InitModel, RegressionArchitecture) {
    const auto m = init_model(Sizes{20, 64, 32, 1}, OutputHead::linear, 0);
    EXPECT_EQ(m.layer_sizes(), (Sizes{20, 64, 32, 1}));
    EXPECT_EQ(m.input_dim(), 20u);
    EXPECT_EQ(m.output_dim(), 1u);
    EXPECT_THROW(init_model(Sizes{3}, OutputHead::linear, 0), std::invalid_argument);
}

TEST(Forward, HandComputedPasses) {
    const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
    EXPECT_EQ(forward(tiny_net(1, -2, 1, 0), one)(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(forward(tiny_net(2, 0, 3, 1), one)(0, 0), 7.0);
    auto zero = init_model(Sizes{4, 5, 2, 1}, OutputHead::linear, 1);
    for (auto& l : zero.layers) l.weight.setZero();
    std::mt19937_64 rng(1);
    EXPECT_TRUE(forward(zero, testutil::gaussian_matrix(6, 4, rng)).isZero(0.0));
    EXPECT_THROW(forward(zero, Eigen::MatrixXd::Ones(2, 3)), std::invalid_argument);
}

TEST(Forward, HiddenActivationsAreNonNegative) {
    const auto m = init_model(Sizes{3, 6, 4, 1}, OutputHead::linear, 2);
    std::mt19937_64 rng(2);
    const Eigen::MatrixXd x = testutil::gaussian_matrix(9, 3, rng);
    EXPECT_EQ(hidden_activations(m, x, 2).cols(), 4);
    EXPECT_GE(hidden_activations(m, x, 1).minCoeff(), 0.0);
    EXPECT_THROW(hidden_activations(m, x, 3), std::out_of_range);
}

TEST(Forward, SoftmaxRowsSumToOne) {
    const auto m = init_model(Sizes{4, 8, 5}, OutputHead::softmax, 3);
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd probs = forward(m, testutil::gaussian_matrix(20, 4, rng) * 10.0);
    for (Eigen::Index i = 0; i < probs.rows(); ++i) EXPECT_NEAR(probs.row(i).sum(), 1.0, 1e-12);
    EXPECT_GE(probs.minCoeff(), 0.0);
}

TEST(Predict, SoftmaxTieGoesToLowerClass) {
    auto m = init_model(Sizes{1, 2, 2}, OutputHead::softmax, 0);
    for (auto& l : m.layers) l.weight.setZero(), l.offset.setZero();
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 1);
    const Eigen::MatrixXd probs = forward(m, x);
    EXPECT_DOUBLE_EQ(probs(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(probs(0, 1), 0.5);
    EXPECT_EQ(predict_classes(m, x), (std::vector<int>{0}));
}

TEST(Predict, LinearHeadEqualsForward) {
    const auto m = init_model(Sizes{3, 5, 1}, OutputHead::linear, 4);
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd x = testutil::gaussian_matrix(7, 3, rng);
    EXPECT_EQ(predict_values(m, x), Eigen::VectorXd(forward(m, x).col(0)));
}

TEST(LossAndGrads, UnpenalizedObjectiveIsMse) {
    const auto m = init_model(Sizes{2, 3, 1}, OutputHead::linear, 5);
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd x = testutil::gaussian_matrix(4, 2, rng), t = testutil::gaussian_matrix(4, 1, rng);
    const auto r = loss_and_grads(m, x, t, Regularization{});
    EXPECT_DOUBLE_EQ(r.objective, (forward(m, x) - t).squaredNorm() / 4.0);
    EXPECT_EQ(r.penalty, 0.0);
}

TEST(LossAndGrads, SmoothPenaltyGradientVanishesAtZeroWeights) {
    auto m = init_model(Sizes{2, 3, 1}, OutputHead::linear, 5);
    for (auto& l : m.layers) l.weight.setZero();
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 2);
    const Eigen::MatrixXd t = forward(m, x);  // zero data gradient
    const auto gram = build_gram(x, 1e-3);
    for (const auto& pen : {PenaltyConfig::make(PenaltyFamily::ridge, std::vector<double>{0.7}),
                            PenaltyConfig::make(PenaltyFamily::covridge, std::vector<double>{0.3, 0.2}, gram)}) {
        const auto r = loss_and_grads(m, x, t, Regularization{pen, 0});
        for (const auto& g : r.grads.weights) EXPECT_TRUE(g.isZero(0.0));
    }
}

TEST(LossAndGrads, FiniteDifferencesEveryPenalty) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        auto m = init_model(Sizes{2, 3, 1}, OutputHead::linear, 100 + trial);
        push_from_zero(m);
        for (auto& l : m.layers) l.offset.setConstant(0.05);
        const Eigen::MatrixXd x = testutil::gaussian_matrix(4, 2, rng), t = testutil::gaussian_matrix(4, 1, rng);
        const auto gram = build_gram(x, 1e-3);
        const std::vector<PenaltyConfig> pens{
            PenaltyConfig{},
            PenaltyConfig::make(PenaltyFamily::ridge, std::vector<double>{0.3}),
            PenaltyConfig::make(PenaltyFamily::lasso, std::vector<double>{0.3}),
            PenaltyConfig::make(PenaltyFamily::elastic_net, std::vector<double>{0.3, 0.4}),
            PenaltyConfig::make(PenaltyFamily::covridge, std::vector<double>{0.5, 0.2}, gram),
            PenaltyConfig::make(PenaltyFamily::sparridge, std::vector<double>{0.5, 0.2}, gram)};
        for (const auto& pen : pens) EXPECT_LT(max_fd_error(m, x, t, Regularization{pen, 0}), 1e-5) << describe(pen);
    }
}

TEST(LossAndGrads, FiniteDifferencesSoftmax) {
    std::mt19937_64 rng(12);
    auto m = init_model(Sizes{3, 4, 3}, OutputHead::softmax, 9);
    const Eigen::MatrixXd x = testutil::gaussian_matrix(5, 3, rng);
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(5, 3);
    for (int i = 0; i < 5; ++i) t(i, i % 3) = 1.0;
    const auto gram = build_gram(x, 1e-3);
    const auto pen = PenaltyConfig::make(PenaltyFamily::covridge, std::vector<double>{0.5, 0.2}, gram);
    const auto r = loss_and_grads(m, x, t, Regularization{pen, 0});
    EXPECT_GE(r.data_loss, 0.0);
    EXPECT_LT(max_fd_error(m, x, t, Regularization{pen, 0}), 1e-5);
}

TEST(LossAndGrads, CovarianceTermOnlyOnChosenLayer) {
    auto m = init_model(Sizes{2, 2, 1}, OutputHead::linear, 6);
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd x = testutil::gaussian_matrix(4, 2, rng);
    const auto gram = build_gram(x, 1e-3);
    const auto pen = PenaltyConfig::make(PenaltyFamily::covridge, std::vector<double>{0.5, 0.2}, gram);
    const auto r = loss_and_grads(m, x, forward(m, x), Regularization{pen, 0});
    const double expected = penalty_value(pen, m.layers[0].weight) + 0.2 * m.layers[1].weight.squaredNorm();
    EXPECT_NEAR(r.penalty, expected, 1e-14);
}

TEST(LossAndGrads, OffsetsReceiveNoPenaltyGradient) {
    auto m = init_model(Sizes{3, 4, 1}, OutputHead::linear, 8);
    for (auto& l : m.layers) l.offset.setConstant(0.3);
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd x = testutil::gaussian_matrix(6, 3, rng);
    const Eigen::MatrixXd t = forward(m, x);  // data-loss gradient is zero
    const auto gram = build_gram(x, 1e-3);
    for (const auto& pen : {PenaltyConfig::make(PenaltyFamily::ridge, std::vector<double>{5.0}),
                            PenaltyConfig::make(PenaltyFamily::sparridge, std::vector<double>{1.0, 1.0}, gram)}) {
        const auto r = loss_and_grads(m, x, t, Regularization{pen, 0});
        for (const auto& g : r.grads.offsets) EXPECT_TRUE(g.isZero(0.0));
        EXPECT_FALSE(r.grads.weights[0].isZero(0.0));
    }
}

TEST(Train, ZeroEpochsReturnsModelUnchanged) {
    const auto data = regression_data(30, 5, 1);
    const auto m = init_model(Sizes{5, 4, 1}, OutputHead::linear, 2);
    const auto r = train(m, data, quick_config(0), PenaltyConfig{});
    EXPECT_EQ(r.model.layers[0].weight, m.layers[0].weight);
    EXPECT_EQ(r.model.layers[1].offset, m.layers[1].offset);
    EXPECT_TRUE(r.history.train_loss.empty());
}

TEST(Train, SeedDeterminism) {
    const auto data = regression_data(50, 5, 2);
    const auto m = init_model(Sizes{5, 6, 1}, OutputHead::linear, 2);
    const auto a = train(m, data, quick_config(10), PenaltyConfig::make(PenaltyFamily::lasso, std::vector<double>{0.01}));
    const auto b = train(m, data, quick_config(10), PenaltyConfig::make(PenaltyFamily::lasso, std::vector<double>{0.01}));
    for (std::size_t l = 0; l < m.depth(); ++l) {
        EXPECT_EQ(a.model.layers[l].weight, b.model.layers[l].weight);
        EXPECT_EQ(a.model.layers[l].offset, b.model.layers[l].offset);
    }
    EXPECT_EQ(a.history.train_loss, b.history.train_loss);
}

TEST(Train, CovridgeWithoutQuadraticMatchesRidgeBitForBit) {
    const auto data = regression_data(40, 6, 3);
    const auto m = init_model(Sizes{6, 5, 1}, OutputHead::linear, 4);
    const auto gram = build_gram(data.features, 1e-3);
    const auto cov = PenaltyConfig::make(PenaltyFamily::covridge, std::vector<double>{0.0, 0.05}, gram);
    const auto ridge = PenaltyConfig::make(PenaltyFamily::ridge, std::vector<double>{0.05});
    for (std::size_t epochs : {1u, 2u, 5u}) {
        const auto a = train(m, data, quick_config(epochs), cov);
        const auto b = train(m, data, quick_config(epochs), ridge);
        EXPECT_EQ(a.history.train_loss, b.history.train_loss);
        for (std::size_t l = 0; l < m.depth(); ++l) EXPECT_EQ(a.model.layers[l].weight, b.model.layers[l].weight);
    }
}

TEST(Train, LargeRidgeShrinksWeights) {
    const auto data = regression_data(60, 5, 4);
    const auto m = init_model(Sizes{5, 8, 1}, OutputHead::linear, 5);
    auto norm = [](const MlpModel& model) {
        double s = 0;
        for (const auto& l : model.layers) s += l.weight.squaredNorm();
        return std::sqrt(s);
    };
    TrainConfig cfg = quick_config(200);
    cfg.optimizer = SgdOptions{1e-4};
    const auto plain = train(m, data, cfg, PenaltyConfig{});
    const auto heavy = train(m, data, cfg, PenaltyConfig::make(PenaltyFamily::ridge, std::vector<double>{1e3}));
    EXPECT_LT(norm(heavy.model), norm(plain.model));
}

TEST(Train, LossDecreasesAndPredictionsFinite) {
    DgpConfig dgp;
    dgp.seed = 9;
    const auto data = gen_dataset(dgp).data;
    const auto m = init_model(Sizes{20, 64, 32, 1}, OutputHead::linear, 9);
    const auto r = train(m, data, quick_config(30), PenaltyConfig{});
    EXPECT_LT(r.history.train_loss.back(), r.history.train_loss.front());
    EXPECT_TRUE(predict_values(r.model, data.features).allFinite());
}

TEST(Train, EarlyStoppingReturnsBestEpoch) {
    const auto data = regression_data(80, 5, 6);
    TrainConfig cfg = quick_config(60);
    cfg.early_stopping = EarlyStopping{0.25, 3};
    const auto r = train(init_model(Sizes{5, 8, 1}, OutputHead::linear, 1), data, cfg, PenaltyConfig{});
    ASSERT_FALSE(r.history.val_loss.empty());
    const auto best = std::min_element(r.history.val_loss.begin(), r.history.val_loss.end());
    EXPECT_EQ(static_cast<std::size_t>(best - r.history.val_loss.begin()), r.history.best_epoch);
}

TEST(Train, DivergenceCarriesHistory) {
    const auto data = regression_data(40, 5, 7);
    TrainConfig cfg = quick_config(50);
    cfg.optimizer = SgdOptions{1e3};
    try {
        train(init_model(Sizes{5, 8, 1}, OutputHead::linear, 1), data, cfg, PenaltyConfig{});
        FAIL() << "expected divergence";
    } catch (const TrainingDiverged& e) {
        EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
    }
}

TEST(Train, RejectsMismatchedInputs) {
    const auto data = regression_data(20, 5, 8);
    EXPECT_THROW(train(init_model(Sizes{4, 3, 1}, OutputHead::linear, 1), data, quick_config(1), PenaltyConfig{}),
                 std::invalid_argument);
    EXPECT_THROW(train(init_model(Sizes{5, 3, 2}, OutputHead::softmax, 1), data, quick_config(1), PenaltyConfig{}),
                 std::invalid_argument);
    const auto wrong_gram = build_gram(Eigen::MatrixXd::Ones(3, 3), 1e-3);
    EXPECT_THROW(train(init_model(Sizes{5, 3, 1}, OutputHead::linear, 1), data, quick_config(1),
                       PenaltyConfig::make(PenaltyFamily::covridge, std::vector<double>{0.1, 0.1}, wrong_gram)),
                 std::invalid_argument);
}

TEST(Train, ClassificationLearnsSeparableClasses) {
    std::mt19937_64 rng(10);
    Eigen::MatrixXd x = testutil::gaussian_matrix(90, 2, rng) * 0.3;
    std::vector<int> labels(90);
    for (int i = 0; i < 90; ++i) {
        labels[i] = i % 3;
        x(i, labels[i] % 2) += 2.0 * (labels[i] == 2 ? -1.0 : 1.0);
    }
    const auto data = make_classification(x, labels);
    TrainConfig cfg = quick_config(100);
    AdamOptions adam;
    adam.learning_rate = 0.01;
    cfg.optimizer = adam;
    const auto r = train(init_model(Sizes{2, 8, 3}, OutputHead::softmax, 1), data, cfg, PenaltyConfig{});
    const auto pred = predict_classes(r.model, x);
    int correct = 0;
    for (int i = 0; i < 90; ++i) correct += pred[i] == labels[i];
    EXPECT_GT(correct, 80);
}

TEST(Serialization, ModelAndHistory) {
    const auto m = init_model(Sizes{3, 4, 2}, OutputHead::softmax, 12);
    const nlohmann::json j = m;
    const auto back = j.get<MlpModel>();
    EXPECT_EQ(back.head, OutputHead::softmax);
    EXPECT_EQ(back.layers[0].weight, m.layers[0].weight);
    EXPECT_EQ(back.layers[1].offset, m.layers[1].offset);
    TrainHistory h;
    h.train_loss = {1.0, 0.5};
    std::ostringstream out;
    write_history_csv(h, out);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "epoch,train_loss,val_loss");
}
