#include "geomreg/gram.hpp"

#include "geomreg/mlp.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace geomreg {

struct StabilizedGram::Impl {
    std::size_t p = 0;
    double delta = 0.0;
    // H / sqrt(n), kept only when n < p so products stay O(n p d).
    std::optional<Eigen::MatrixXd> factor;

    mutable std::once_flag dense_once;
    mutable Eigen::MatrixXd c_n;
    mutable Eigen::MatrixXd c_delta;

    mutable std::once_flag spectral_once;
    mutable Eigen::VectorXd eigenvalues;
    mutable Eigen::MatrixXd eigenvectors;
    mutable Eigen::MatrixXd sqrt;

    void ensure_dense() const {
        std::call_once(dense_once, [this] {
            if (factor) {
                const auto pp = static_cast<Eigen::Index>(p);
                c_n = Eigen::MatrixXd::Zero(pp, pp);
                c_n.selfadjointView<Eigen::Lower>().rankUpdate(factor->transpose());
                c_n.triangularView<Eigen::StrictlyUpper>() = c_n.transpose();
            }
            c_delta = c_n;
            c_delta.diagonal().array() += delta;
        });
    }

    void ensure_spectral() const {
        ensure_dense();
        std::call_once(spectral_once, [this] {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(c_n);
            if (solver.info() != Eigen::Success) throw std::runtime_error("gram eigendecomposition failed");
            // Eigen returns ascending order; store non-increasing.
            const Eigen::Index pp = c_n.rows();
            eigenvalues.resize(pp);
            eigenvectors.resize(pp, pp);
            for (Eigen::Index i = 0; i < pp; ++i) {
                const Eigen::Index src = pp - 1 - i;
                double mu = solver.eigenvalues()(src);
                if (mu < 0.0) mu = 0.0;
                eigenvalues(i) = mu + delta;
                eigenvectors.col(i) = solver.eigenvectors().col(src);
            }
            sqrt = eigenvectors * eigenvalues.cwiseSqrt().asDiagonal() * eigenvectors.transpose();
        });
    }
};

StabilizedGram StabilizedGram::from_representation(const Eigen::MatrixXd& h, double delta) {
    if (h.rows() < 1 || h.cols() < 1) throw std::invalid_argument("gram representation must be non-empty");
    if (!h.allFinite()) throw std::invalid_argument("gram representation contains non-finite entries");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("delta must be positive");
    auto impl = std::make_shared<Impl>();
    impl->p = static_cast<std::size_t>(h.cols());
    impl->delta = delta;
    const double scale = 1.0 / std::sqrt(static_cast<double>(h.rows()));
    if (h.rows() < h.cols()) {
        impl->factor = h * scale;
    } else {
        impl->c_n = Eigen::MatrixXd::Zero(h.cols(), h.cols());
        impl->c_n.selfadjointView<Eigen::Lower>().rankUpdate(h.transpose(), scale * scale);
        impl->c_n.triangularView<Eigen::StrictlyUpper>() = impl->c_n.transpose();
    }
    StabilizedGram g;
    g.impl_ = std::move(impl);
    return g;
}

StabilizedGram StabilizedGram::from_moment(const Eigen::MatrixXd& c_n, double delta) {
    if (c_n.rows() != c_n.cols() || c_n.rows() < 1) throw std::invalid_argument("moment matrix must be square");
    if (!c_n.allFinite()) throw std::invalid_argument("moment matrix contains non-finite entries");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("delta must be positive");
    if ((c_n - c_n.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, c_n.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("moment matrix must be symmetric");
    auto impl = std::make_shared<Impl>();
    impl->p = static_cast<std::size_t>(c_n.rows());
    impl->delta = delta;
    impl->c_n = 0.5 * (c_n + c_n.transpose());
    StabilizedGram g;
    g.impl_ = std::move(impl);
    return g;
}

std::size_t StabilizedGram::dims() const { return impl_ ? impl_->p : 0; }
double StabilizedGram::delta() const { return impl_ ? impl_->delta : 0.0; }

const Eigen::MatrixXd& StabilizedGram::c_n() const {
    if (!impl_) throw std::logic_error("empty StabilizedGram");
    impl_->ensure_dense();
    return impl_->c_n;
}

const Eigen::MatrixXd& StabilizedGram::c_delta() const {
    if (!impl_) throw std::logic_error("empty StabilizedGram");
    impl_->ensure_dense();
    return impl_->c_delta;
}

const Eigen::VectorXd& StabilizedGram::eigenvalues() const {
    if (!impl_) throw std::logic_error("empty StabilizedGram");
    impl_->ensure_spectral();
    return impl_->eigenvalues;
}

const Eigen::MatrixXd& StabilizedGram::eigenvectors() const {
    if (!impl_) throw std::logic_error("empty StabilizedGram");
    impl_->ensure_spectral();
    return impl_->eigenvectors;
}

const Eigen::MatrixXd& StabilizedGram::sqrt() const {
    if (!impl_) throw std::logic_error("empty StabilizedGram");
    impl_->ensure_spectral();
    return impl_->sqrt;
}

Eigen::MatrixXd StabilizedGram::apply(const Eigen::MatrixXd& w) const {
    if (!impl_) throw std::logic_error("empty StabilizedGram");
    if (static_cast<std::size_t>(w.rows()) != impl_->p)
        throw std::invalid_argument("gram dimension " + std::to_string(impl_->p) + " does not match weight rows " +
                                    std::to_string(w.rows()));
    if (impl_->factor) {
        const Eigen::MatrixXd projected = (*impl_->factor) * w;
        Eigen::MatrixXd out = impl_->factor->transpose() * projected;
        out += impl_->delta * w;
        return out;
    }
    impl_->ensure_dense();
    return impl_->c_delta * w;
}

double StabilizedGram::quadratic(const Eigen::MatrixXd& w) const {
    if (!impl_) throw std::logic_error("empty StabilizedGram");
    if (impl_->factor) {
        if (static_cast<std::size_t>(w.rows()) != impl_->p)
            throw std::invalid_argument("gram dimension does not match weight rows");
        return ((*impl_->factor) * w).squaredNorm() + impl_->delta * w.squaredNorm();
    }
    return w.cwiseProduct(apply(w)).sum();
}

StabilizedGram build_gram(const Eigen::MatrixXd& representation, double delta) {
    return StabilizedGram::from_representation(representation, delta);
}

StabilizedGram gram_from_hidden(const MlpModel& model, const Eigen::MatrixXd& train_features, std::size_t layer,
                                double delta) {
    if (layer < 1 || layer >= model.depth())
        throw std::out_of_range("layer " + std::to_string(layer) + " is not a hidden layer (valid: 1.." +
                                std::to_string(model.depth() - 1) + ")");
    return build_gram(hidden_activations(model, train_features, layer), delta);
}

void to_json(nlohmann::json& j, const StabilizedGram& gram) {
    const Eigen::MatrixXd& c = gram.c_n();
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(c.size()));
    for (Eigen::Index r = 0; r < c.rows(); ++r)
        for (Eigen::Index col = 0; col < c.cols(); ++col) values.push_back(c(r, col));
    j = nlohmann::json{{"dims", {c.rows(), c.cols()}}, {"delta", gram.delta()}, {"c_n", values}};
}

void from_json(const nlohmann::json& j, StabilizedGram& gram) {
    const auto dims = j.at("dims").get<std::vector<Eigen::Index>>();
    const auto values = j.at("c_n").get<std::vector<double>>();
    if (dims.size() != 2 || dims[0] != dims[1] || static_cast<std::size_t>(dims[0] * dims[1]) != values.size())
        throw std::invalid_argument("gram JSON has inconsistent dims");
    Eigen::MatrixXd c(dims[0], dims[1]);
    for (Eigen::Index r = 0; r < dims[0]; ++r)
        for (Eigen::Index col = 0; col < dims[1]; ++col) c(r, col) = values[static_cast<std::size_t>(r * dims[1] + col)];
    gram = StabilizedGram::from_moment(c, j.at("delta").get<double>());
}

}  // namespace geomreg
