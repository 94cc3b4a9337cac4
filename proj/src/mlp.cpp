#include "geomreg/mlp.hpp"

#include "geomreg/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace geomreg {

namespace {

constexpr double kDivergenceLimit = 1e12;

struct ForwardCache {
    std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
    std::vector<Eigen::MatrixXd> post;  // post[0] = inputs, post[l] = output of layer l
};

void softmax_rows(Eigen::MatrixXd& z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double m = z.row(i).maxCoeff();
        z.row(i) = (z.row(i).array() - m).exp();
        z.row(i) /= z.row(i).sum();
    }
}

ForwardCache run_forward(const MlpModel& model, const Eigen::MatrixXd& inputs, std::size_t stop_after) {
    ForwardCache cache;
    cache.post.reserve(stop_after + 1);
    cache.pre.reserve(stop_after);
    cache.post.push_back(inputs);
    for (std::size_t l = 0; l < stop_after; ++l) {
        const auto& layer = model.layers[l];
        Eigen::MatrixXd z = cache.post.back() * layer.weight;
        z.rowwise() += layer.offset.transpose();
        cache.pre.push_back(z);
        if (l + 1 < model.depth())
            cache.post.push_back(z.cwiseMax(0.0));
        else
            cache.post.push_back(std::move(z));
    }
    return cache;
}

void check_inputs(const MlpModel& model, const Eigen::MatrixXd& inputs) {
    if (static_cast<std::size_t>(inputs.cols()) != model.input_dim())
        throw std::invalid_argument("input has " + std::to_string(inputs.cols()) + " columns, model expects " +
                                    std::to_string(model.input_dim()));
}

// Mean loss over rows and the gradient with respect to the final
// pre-activation.
double output_loss(OutputHead head, const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets,
                   Eigen::MatrixXd* dlogits) {
    const auto n = static_cast<double>(logits.rows());
    if (head == OutputHead::linear) {
        const Eigen::MatrixXd resid = logits - targets;
        if (dlogits) *dlogits = (2.0 / n) * resid;
        return resid.squaredNorm() / n;
    }
    Eigen::MatrixXd probs = logits;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const double m = probs.row(i).maxCoeff();
        const double lse = m + std::log((probs.row(i).array() - m).exp().sum());
        loss -= targets.row(i).dot((logits.row(i).array() - lse).matrix());
    }
    if (dlogits) {
        softmax_rows(probs);
        *dlogits = (probs - targets) / n;
    }
    return loss / n;
}

double total_penalty(const MlpModel& model, const Regularization& reg, const PenaltyConfig& companion) {
    double value = 0.0;
    for (std::size_t l = 0; l < model.depth(); ++l)
        value += penalty_value(l == reg.covariance_layer ? reg.penalty : companion, model.layers[l].weight);
    return value;
}

}  // namespace

std::size_t MlpModel::input_dim() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.rows());
}

std::size_t MlpModel::output_dim() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.cols());
}

std::vector<std::size_t> MlpModel::layer_sizes() const {
    std::vector<std::size_t> sizes;
    if (layers.empty()) return sizes;
    sizes.push_back(input_dim());
    for (const auto& l : layers) sizes.push_back(static_cast<std::size_t>(l.weight.cols()));
    return sizes;
}

double MlpModel::max_abs_parameter() const {
    double m = 0.0;
    for (const auto& l : layers) {
        if (l.weight.size() > 0) m = std::max(m, l.weight.cwiseAbs().maxCoeff());
        if (l.offset.size() > 0) m = std::max(m, l.offset.cwiseAbs().maxCoeff());
    }
    return m;
}

void MlpModel::validate() const {
    if (layers.size() < 2) throw std::invalid_argument("model needs at least one hidden layer");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weight.rows() == 0 || layer.weight.cols() == 0) throw std::invalid_argument("layer of size 0");
        if (layer.offset.size() != layer.weight.cols())
            throw std::invalid_argument("offset length does not match layer " + std::to_string(l) + " width");
        if (l > 0 && layers[l - 1].weight.cols() != layer.weight.rows())
            throw std::invalid_argument("layer " + std::to_string(l) + " input does not chain with previous output");
        if (!layer.weight.allFinite() || !layer.offset.allFinite())
            throw std::invalid_argument("model parameters must be finite");
    }
    if (head == OutputHead::softmax && output_dim() < 2) throw std::invalid_argument("softmax head needs >= 2 outputs");
}

MlpModel init_model(std::span<const std::size_t> layer_sizes, OutputHead head, std::uint64_t seed) {
    if (layer_sizes.size() < 3) throw std::invalid_argument("layer sizes need inputs, >= 1 hidden layer and outputs");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw std::invalid_argument("layer of size 0");
    MlpModel model;
    model.head = head;
    auto rng = make_rng(derive_seed(seed, Stream::init));
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const auto fan_in = static_cast<Eigen::Index>(layer_sizes[l]);
        const auto fan_out = static_cast<Eigen::Index>(layer_sizes[l + 1]);
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-a, a);
        DenseLayer layer;
        layer.weight.resize(fan_in, fan_out);
        for (Eigen::Index r = 0; r < fan_in; ++r)
            for (Eigen::Index c = 0; c < fan_out; ++c) layer.weight(r, c) = dist(rng);
        layer.offset = Eigen::VectorXd::Zero(fan_out);
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

Eigen::MatrixXd forward(const MlpModel& model, const Eigen::MatrixXd& inputs) {
    check_inputs(model, inputs);
    auto cache = run_forward(model, inputs, model.depth());
    Eigen::MatrixXd out = std::move(cache.post.back());
    if (model.head == OutputHead::softmax) softmax_rows(out);
    return out;
}

Eigen::MatrixXd hidden_activations(const MlpModel& model, const Eigen::MatrixXd& inputs, std::size_t layer) {
    if (layer < 1 || layer >= model.depth())
        throw std::out_of_range("layer " + std::to_string(layer) + " is not a hidden layer");
    check_inputs(model, inputs);
    auto cache = run_forward(model, inputs, layer);
    return std::move(cache.post.back());
}

LossResult loss_and_grads(const MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                          const Regularization& reg) {
    check_inputs(model, inputs);
    if (inputs.rows() == 0) throw std::invalid_argument("loss_and_grads needs a non-empty batch");
    if (targets.rows() != inputs.rows() || static_cast<std::size_t>(targets.cols()) != model.output_dim())
        throw std::invalid_argument("target matrix shape does not match batch and model outputs");
    if (reg.covariance_layer >= model.depth()) throw std::invalid_argument("covariance layer out of range");

    const std::size_t depth = model.depth();
    const auto cache = run_forward(model, inputs, depth);
    LossResult result;
    Eigen::MatrixXd delta;
    result.data_loss = output_loss(model.head, cache.pre.back(), targets, &delta);

    result.grads.weights.resize(depth);
    result.grads.offsets.resize(depth);
    for (std::size_t l = depth; l-- > 0;) {
        result.grads.weights[l].noalias() = cache.post[l].transpose() * delta;
        result.grads.offsets[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd upstream = delta * model.layers[l].weight.transpose();
            delta = upstream.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }

    const PenaltyConfig companion = reg.penalty.companion();
    result.penalty = total_penalty(model, reg, companion);
    for (std::size_t l = 0; l < depth; ++l)
        accumulate_penalty_grad(l == reg.covariance_layer ? reg.penalty : companion, model.layers[l].weight,
                                result.grads.weights[l]);
    result.objective = result.data_loss + result.penalty;
    return result;
}

Eigen::MatrixXd target_matrix(const Dataset& data) {
    if (data.task == Task::regression) return data.target;
    const int m = data.num_classes();
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(data.rows()), m);
    for (std::size_t i = 0; i < data.labels.size(); ++i) t(static_cast<Eigen::Index>(i), data.labels[i]) = 1.0;
    return t;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    const double lr = std::visit([](const auto& o) { return o.learning_rate; }, optimizer);
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be > 0");
    if (early_stopping) {
        if (!(early_stopping->validation_fraction > 0.0 && early_stopping->validation_fraction < 1.0))
            throw std::invalid_argument("validation fraction must lie in (0, 1)");
        if (early_stopping->patience < 1) throw std::invalid_argument("patience must be >= 1");
    }
    if (gram_refresh && gram_refresh->every_epochs < 1) throw std::invalid_argument("gram refresh period must be >= 1");
}

void write_history_csv(const TrainHistory& history, std::ostream& out) {
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
        std::ostringstream row;
        row.precision(17);
        row << e << ',' << history.train_loss[e] << ',';
        if (e < history.val_loss.size()) row << history.val_loss[e];
        out << row.str() << '\n';
    }
}

namespace {

class ParameterUpdater {
public:
    ParameterUpdater(const Optimizer& opt, const MlpModel& model) : opt_(opt) {
        if (std::holds_alternative<AdamOptions>(opt_)) {
            for (const auto& l : model.layers) {
                m_w_.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
                v_w_.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
                m_b_.push_back(Eigen::VectorXd::Zero(l.offset.size()));
                v_b_.push_back(Eigen::VectorXd::Zero(l.offset.size()));
            }
        }
    }

    void step(MlpModel& model, const Gradients& g) {
        if (const auto* sgd = std::get_if<SgdOptions>(&opt_)) {
            for (std::size_t l = 0; l < model.depth(); ++l) {
                model.layers[l].weight -= sgd->learning_rate * g.weights[l];
                model.layers[l].offset -= sgd->learning_rate * g.offsets[l];
            }
            return;
        }
        const auto& a = std::get<AdamOptions>(opt_);
        ++t_;
        const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(t_));
        const auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
            m = a.beta1 * m + (1.0 - a.beta1) * grad;
            v = a.beta2 * v + (1.0 - a.beta2) * grad.cwiseProduct(grad);
            param.array() -= a.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + a.epsilon);
        };
        for (std::size_t l = 0; l < model.depth(); ++l) {
            update(model.layers[l].weight, m_w_[l], v_w_[l], g.weights[l]);
            update(model.layers[l].offset, m_b_[l], v_b_[l], g.offsets[l]);
        }
    }

private:
    Optimizer opt_;
    std::size_t t_ = 0;
    std::vector<Eigen::MatrixXd> m_w_, v_w_;
    std::vector<Eigen::VectorXd> m_b_, v_b_;
};

}  // namespace

TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& config, const PenaltyConfig& penalty) {
    config.validate();
    model.validate();
    data.validate();
    if ((data.task == Task::classification) != (model.head == OutputHead::softmax))
        throw std::invalid_argument("dataset task does not match model output head");
    check_inputs(model, data.features);
    if (data.task == Task::classification && static_cast<std::size_t>(data.num_classes()) > model.output_dim())
        throw std::invalid_argument("dataset has more classes than the softmax head");
    if (data.task == Task::regression && model.output_dim() != 1)
        throw std::invalid_argument("regression requires a single output unit");

    Eigen::MatrixXd targets = target_matrix(data);
    if (targets.cols() < static_cast<Eigen::Index>(model.output_dim())) {
        Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(targets.rows(), static_cast<Eigen::Index>(model.output_dim()));
        padded.leftCols(targets.cols()) = targets;
        targets = std::move(padded);
    }

    Index train_rows(data.rows());
    std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
    Index val_rows;
    if (config.early_stopping) {
        auto vrng = make_rng(derive_seed(config.seed, Stream::validation));
        std::shuffle(train_rows.begin(), train_rows.end(), vrng);
        const auto n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(config.early_stopping->validation_fraction * static_cast<double>(data.rows()))));
        if (n_val >= data.rows()) throw std::invalid_argument("validation split leaves no training rows");
        val_rows.assign(train_rows.begin(), train_rows.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_rows.erase(train_rows.begin(), train_rows.begin() + static_cast<std::ptrdiff_t>(n_val));
        std::sort(val_rows.begin(), val_rows.end());
        std::sort(train_rows.begin(), train_rows.end());
    }
    const Eigen::MatrixXd x_train = data.features(train_rows, Eigen::all);
    const Eigen::MatrixXd t_train = targets(train_rows, Eigen::all);
    Eigen::MatrixXd x_val, t_val;
    if (!val_rows.empty()) {
        x_val = data.features(val_rows, Eigen::all);
        t_val = targets(val_rows, Eigen::all);
    }

    Regularization reg{penalty, 0};
    if (const auto* g = penalty.gram(); g && !config.gram_refresh && g->dims() != model.input_dim())
        throw std::invalid_argument("Gram dimension " + std::to_string(g->dims()) + " does not match input dimension " +
                                    std::to_string(model.input_dim()));

    TrainHistory history;
    ParameterUpdater updater(config.optimizer, model);
    auto shuffle_rng = make_rng(derive_seed(config.seed, Stream::shuffle));
    Index order(train_rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    MlpModel best_model = model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.gram_refresh && penalty.gram() && epoch % config.gram_refresh->every_epochs == 0) {
            const auto& r = *config.gram_refresh;
            const auto gram = gram_from_hidden(model, x_train, r.layer, r.delta);
            const auto params = penalty.params();
            reg = Regularization{PenaltyConfig::make(penalty.family(), params, gram), r.layer};
        }
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_objective = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            const Eigen::MatrixXd xb = x_train(batch, Eigen::all);
            const Eigen::MatrixXd tb = t_train(batch, Eigen::all);
            const LossResult lr = loss_and_grads(model, xb, tb, reg);
            if (!std::isfinite(lr.objective) || lr.objective > kDivergenceLimit) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << epoch << ": objective " << lr.objective
                    << ", max |parameter| " << model.max_abs_parameter();
                throw TrainingDiverged(msg.str(), history);
            }
            epoch_objective += lr.objective;
            ++batches;
            updater.step(model, lr.grads);
        }
        history.train_loss.push_back(epoch_objective / static_cast<double>(std::max<std::size_t>(1, batches)));

        if (config.early_stopping) {
            const double val = output_loss(model.head, run_forward(model, x_val, model.depth()).pre.back(), t_val, nullptr);
            history.val_loss.push_back(val);
            if (val < best_val) {
                best_val = val;
                best_model = model;
                history.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= config.early_stopping->patience) {
                history.stopped_early = true;
                break;
            }
        } else {
            history.best_epoch = epoch;
        }
    }
    if (config.early_stopping && !history.val_loss.empty()) model = std::move(best_model);
    return {std::move(model), std::move(history)};
}

Eigen::VectorXd predict_values(const MlpModel& model, const Eigen::MatrixXd& features) {
    if (model.head != OutputHead::linear) throw std::invalid_argument("predict_values needs a linear head");
    return forward(model, features).col(0);
}

std::vector<int> predict_classes(const MlpModel& model, const Eigen::MatrixXd& features) {
    if (model.head != OutputHead::softmax) throw std::invalid_argument("predict_classes needs a softmax head");
    const Eigen::MatrixXd probs = forward(model, features);
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c)
            if (probs(i, c) > probs(i, best)) best = c;
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

void to_json(nlohmann::json& j, const MlpModel& model) {
    j = nlohmann::json::object();
    j["head"] = model.head == OutputHead::linear ? "linear" : "softmax";
    j["layer_sizes"] = model.layer_sizes();
    auto layers = nlohmann::json::array();
    for (const auto& l : model.layers) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weight.size()));
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
        layers.push_back({{"rows", l.weight.rows()},
                          {"cols", l.weight.cols()},
                          {"weight", w},
                          {"offset", std::vector<double>(l.offset.begin(), l.offset.end())}});
    }
    j["layers"] = layers;
}

void from_json(const nlohmann::json& j, MlpModel& model) {
    const auto head = j.at("head").get<std::string>();
    if (head != "linear" && head != "softmax") throw std::invalid_argument("unknown head '" + head + "'");
    model.head = head == "linear" ? OutputHead::linear : OutputHead::softmax;
    model.layers.clear();
    for (const auto& jl : j.at("layers")) {
        const auto rows = jl.at("rows").get<Eigen::Index>();
        const auto cols = jl.at("cols").get<Eigen::Index>();
        const auto w = jl.at("weight").get<std::vector<double>>();
        const auto b = jl.at("offset").get<std::vector<double>>();
        if (static_cast<std::size_t>(rows * cols) != w.size() || static_cast<std::size_t>(cols) != b.size())
            throw std::invalid_argument("model JSON layer has inconsistent sizes");
        DenseLayer layer;
        layer.weight.resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
        layer.offset = Eigen::Map<const Eigen::VectorXd>(b.data(), cols);
        model.layers.push_back(std::move(layer));
    }
    model.validate();
}

}  // namespace geomreg
