#include "geomreg/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace geomreg {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_scalar(double v, const char* name, bool unit_interval = false) {
    if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument(std::string(name) + " must be finite and >= 0");
    if (unit_interval && v > 1.0) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
}

void require_gram(const StabilizedGram& g) {
    if (g.empty()) throw std::invalid_argument("covariance penalty requires a Gram matrix");
}

double signum(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::string to_string(PenaltyFamily family) {
    switch (family) {
        case PenaltyFamily::none: return "none";
        case PenaltyFamily::ridge: return "ridge";
        case PenaltyFamily::lasso: return "lasso";
        case PenaltyFamily::elastic_net: return "elastic_net";
        case PenaltyFamily::covridge: return "covridge";
        case PenaltyFamily::sparridge: return "sparridge";
    }
    return "unknown";
}

PenaltyFamily family_from_string(const std::string& name) {
    std::string key;
    for (char c : name) key.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (key == "none" || key == "unregularized") return PenaltyFamily::none;
    if (key == "ridge") return PenaltyFamily::ridge;
    if (key == "lasso") return PenaltyFamily::lasso;
    if (key == "elastic_net" || key == "elasticnet" || key == "en") return PenaltyFamily::elastic_net;
    if (key == "covridge") return PenaltyFamily::covridge;
    if (key == "sparridge") return PenaltyFamily::sparridge;
    throw std::invalid_argument("unknown penalty family '" + name + "'");
}

std::size_t arity(PenaltyFamily family) {
    switch (family) {
        case PenaltyFamily::none: return 0;
        case PenaltyFamily::ridge:
        case PenaltyFamily::lasso: return 1;
        default: return 2;
    }
}

bool needs_gram(PenaltyFamily family) {
    return family == PenaltyFamily::covridge || family == PenaltyFamily::sparridge;
}

std::vector<std::string> parameter_names(PenaltyFamily family) {
    switch (family) {
        case PenaltyFamily::none: return {};
        case PenaltyFamily::ridge:
        case PenaltyFamily::lasso: return {"lambda"};
        case PenaltyFamily::elastic_net: return {"lambda", "alpha"};
        case PenaltyFamily::covridge: return {"lambda1", "lambda2"};
        case PenaltyFamily::sparridge: return {"lambda1", "gamma"};
    }
    return {};
}

PenaltyConfig::PenaltyConfig(PenaltyVariant v) : variant_(std::move(v)) {
    std::visit(overloaded{
                   [](const penalty::None&) {},
                   [](const penalty::Ridge& p) { require_scalar(p.lambda, "lambda"); },
                   [](const penalty::Lasso& p) { require_scalar(p.lambda, "lambda"); },
                   [](const penalty::ElasticNet& p) {
                       require_scalar(p.lambda, "lambda");
                       require_scalar(p.alpha, "alpha", true);
                   },
                   [](const penalty::Covridge& p) {
                       require_scalar(p.lambda1, "lambda1");
                       require_scalar(p.lambda2, "lambda2");
                       require_gram(p.gram);
                   },
                   [](const penalty::Sparridge& p) {
                       require_scalar(p.lambda1, "lambda1");
                       require_scalar(p.gamma, "gamma");
                       require_gram(p.gram);
                   },
               },
               variant_);
}

PenaltyConfig PenaltyConfig::make(PenaltyFamily family, std::span<const double> params, const StabilizedGram& gram) {
    if (params.size() != arity(family))
        throw std::invalid_argument(to_string(family) + " takes " + std::to_string(arity(family)) + " parameter(s), got " +
                                    std::to_string(params.size()));
    switch (family) {
        case PenaltyFamily::none: return PenaltyConfig{penalty::None{}};
        case PenaltyFamily::ridge: return PenaltyConfig{penalty::Ridge{params[0]}};
        case PenaltyFamily::lasso: return PenaltyConfig{penalty::Lasso{params[0]}};
        case PenaltyFamily::elastic_net: return PenaltyConfig{penalty::ElasticNet{params[0], params[1]}};
        case PenaltyFamily::covridge: return PenaltyConfig{penalty::Covridge{params[0], params[1], gram}};
        case PenaltyFamily::sparridge: return PenaltyConfig{penalty::Sparridge{params[0], params[1], gram}};
    }
    throw std::invalid_argument("unknown penalty family");
}

PenaltyFamily PenaltyConfig::family() const {
    return static_cast<PenaltyFamily>(variant_.index());
}

std::vector<double> PenaltyConfig::params() const {
    return std::visit(overloaded{
                          [](const penalty::None&) { return std::vector<double>{}; },
                          [](const penalty::Ridge& p) { return std::vector<double>{p.lambda}; },
                          [](const penalty::Lasso& p) { return std::vector<double>{p.lambda}; },
                          [](const penalty::ElasticNet& p) { return std::vector<double>{p.lambda, p.alpha}; },
                          [](const penalty::Covridge& p) { return std::vector<double>{p.lambda1, p.lambda2}; },
                          [](const penalty::Sparridge& p) { return std::vector<double>{p.lambda1, p.gamma}; },
                      },
                      variant_);
}

const StabilizedGram* PenaltyConfig::gram() const {
    if (const auto* c = std::get_if<penalty::Covridge>(&variant_)) return &c->gram;
    if (const auto* s = std::get_if<penalty::Sparridge>(&variant_)) return &s->gram;
    return nullptr;
}

PenaltyConfig PenaltyConfig::companion() const {
    if (const auto* c = std::get_if<penalty::Covridge>(&variant_)) return PenaltyConfig{penalty::Ridge{c->lambda2}};
    if (const auto* s = std::get_if<penalty::Sparridge>(&variant_)) return PenaltyConfig{penalty::Lasso{s->gamma}};
    return *this;
}

PenaltyConfig::Terms PenaltyConfig::terms() const {
    return std::visit(overloaded{
                          [](const penalty::None&) { return Terms{}; },
                          [](const penalty::Ridge& p) { return Terms{0.0, p.lambda, 0.0}; },
                          [](const penalty::Lasso& p) { return Terms{0.0, 0.0, p.lambda}; },
                          [](const penalty::ElasticNet& p) {
                              return Terms{0.0, p.lambda * (1.0 - p.alpha) / 2.0, p.lambda * p.alpha};
                          },
                          [](const penalty::Covridge& p) { return Terms{p.lambda1, p.lambda2, 0.0}; },
                          [](const penalty::Sparridge& p) { return Terms{p.lambda1, 0.0, p.gamma}; },
                      },
                      variant_);
}

std::string describe(const PenaltyConfig& config) {
    std::ostringstream os;
    os << to_string(config.family());
    const auto names = parameter_names(config.family());
    const auto values = config.params();
    for (std::size_t i = 0; i < names.size(); ++i) os << (i == 0 ? "(" : ", ") << names[i] << "=" << values[i];
    if (!names.empty()) os << ")";
    return os.str();
}

namespace {
void check_dims(const PenaltyConfig& config, const Eigen::MatrixXd& w) {
    if (const auto* g = config.gram(); g && static_cast<std::size_t>(w.rows()) != g->dims())
        throw std::invalid_argument("weight matrix has " + std::to_string(w.rows()) + " rows but the Gram has dimension " +
                                    std::to_string(g->dims()));
}
}  // namespace

// Terms with a zero coefficient are skipped, so families that reduce to one
// another (covridge with lambda1 = 0 vs ridge) run identical arithmetic.
double penalty_value(const PenaltyConfig& config, const Eigen::MatrixXd& weights) {
    check_dims(config, weights);
    const auto t = config.terms();
    double value = 0.0;
    if (t.quad != 0.0) value += t.quad * config.gram()->quadratic(weights);
    if (t.l2 != 0.0) value += t.l2 * weights.squaredNorm();
    if (t.l1 != 0.0) value += t.l1 * weights.lpNorm<1>();
    return value;
}

void accumulate_penalty_grad(const PenaltyConfig& config, const Eigen::MatrixXd& weights, Eigen::MatrixXd& grad) {
    check_dims(config, weights);
    if (grad.rows() != weights.rows() || grad.cols() != weights.cols())
        throw std::invalid_argument("gradient buffer shape does not match weights");
    const auto t = config.terms();
    if (t.quad != 0.0) grad += (2.0 * t.quad) * config.gram()->apply(weights);
    if (t.l2 != 0.0) grad += (2.0 * t.l2) * weights;
    if (t.l1 != 0.0) grad += t.l1 * weights.unaryExpr(&signum);
}

Eigen::MatrixXd penalty_grad(const PenaltyConfig& config, const Eigen::MatrixXd& weights) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(weights.rows(), weights.cols());
    accumulate_penalty_grad(config, weights, grad);
    return grad;
}

ContourGrid contour_grid(const PenaltyConfig& config, const GridSpec& grid, Basis basis) {
    if (grid.nx == 0 || grid.ny == 0) throw std::invalid_argument("contour grid must have at least one point per axis");
    if (!(grid.x_max >= grid.x_min) || !(grid.y_max >= grid.y_min))
        throw std::invalid_argument("contour grid ranges must be ordered");
    const StabilizedGram* gram = config.gram();
    if (gram && gram->dims() != 2) throw std::invalid_argument("contour grid needs a two-dimensional Gram");

    // Column 0: low-variance direction, column 1: high-variance direction.
    Eigen::Matrix2d rotation = Eigen::Matrix2d::Identity();
    if (basis == Basis::eigen && gram) {
        rotation.col(0) = gram->eigenvectors().col(1);
        rotation.col(1) = gram->eigenvectors().col(0);
    }

    const auto axis = [](double lo, double hi, std::size_t count) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(count));
        for (std::size_t i = 0; i < count; ++i)
            v(static_cast<Eigen::Index>(i)) = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
        return v;
    };
    ContourGrid out;
    out.xs = axis(grid.x_min, grid.x_max, grid.nx);
    out.ys = axis(grid.y_min, grid.y_max, grid.ny);
    out.values.resize(out.ys.size(), out.xs.size());
    Eigen::MatrixXd w(2, 1);
    for (Eigen::Index iy = 0; iy < out.ys.size(); ++iy) {
        for (Eigen::Index ix = 0; ix < out.xs.size(); ++ix) {
            w = rotation * Eigen::Vector2d(out.xs(ix), out.ys(iy));
            out.values(iy, ix) = penalty_value(config, w);
        }
    }
    return out;
}

void write_grid(const ContourGrid& grid, std::ostream& out) {
    out << "x,y,value\n" << std::setprecision(17);
    for (Eigen::Index iy = 0; iy < grid.ys.size(); ++iy)
        for (Eigen::Index ix = 0; ix < grid.xs.size(); ++ix)
            out << grid.xs(ix) << ',' << grid.ys(iy) << ',' << grid.values(iy, ix) << '\n';
}

std::string render_svg(const ContourGrid& grid, std::span<const double> levels, std::size_t size_px) {
    const Eigen::Index nx = grid.xs.size();
    const Eigen::Index ny = grid.ys.size();
    std::vector<double> lv(levels.begin(), levels.end());
    if (lv.empty()) {
        const double lo = grid.values.minCoeff();
        const double hi = grid.values.maxCoeff();
        constexpr int kLevels = 8;
        for (int i = 1; i <= kLevels; ++i) lv.push_back(lo + (hi - lo) * i / (kLevels + 1));
    }
    const double x0 = grid.xs(0), x1 = grid.xs(nx - 1);
    const double y0 = grid.ys(0), y1 = grid.ys(ny - 1);
    const double px = static_cast<double>(size_px);
    const auto sx = [&](double x) { return x1 > x0 ? (x - x0) / (x1 - x0) * px : px / 2; };
    const auto sy = [&](double y) { return y1 > y0 ? px - (y - y0) / (y1 - y0) * px : px / 2; };

    std::ostringstream svg;
    svg << std::fixed << std::setprecision(2);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size_px << "\" height=\"" << size_px
        << "\" viewBox=\"0 0 " << size_px << ' ' << size_px << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << sx(0) << "\" y1=\"0\" x2=\"" << sx(0) << "\" y2=\"" << px << "\" stroke=\"#bbb\"/>\n";
    svg << "<line x1=\"0\" y1=\"" << sy(0) << "\" x2=\"" << px << "\" y2=\"" << sy(0) << "\" stroke=\"#bbb\"/>\n";

    for (std::size_t li = 0; li < lv.size(); ++li) {
        const double level = lv[li];
        svg << "<path fill=\"none\" stroke=\"hsl(" << (220 - 200 * li / std::max<std::size_t>(1, lv.size() - 1))
            << ",70%,40%)\" stroke-width=\"1.2\" d=\"";
        for (Eigen::Index iy = 0; iy + 1 < ny; ++iy) {
            for (Eigen::Index ix = 0; ix + 1 < nx; ++ix) {
                // corners counter-clockwise from bottom-left
                const double xs[4] = {grid.xs(ix), grid.xs(ix + 1), grid.xs(ix + 1), grid.xs(ix)};
                const double ys[4] = {grid.ys(iy), grid.ys(iy), grid.ys(iy + 1), grid.ys(iy + 1)};
                const double vs[4] = {grid.values(iy, ix), grid.values(iy, ix + 1), grid.values(iy + 1, ix + 1),
                                      grid.values(iy + 1, ix)};
                std::vector<std::pair<double, double>> hits;
                for (int e = 0; e < 4; ++e) {
                    const int a = e, b = (e + 1) % 4;
                    const bool above_a = vs[a] >= level, above_b = vs[b] >= level;
                    if (above_a == above_b) continue;
                    const double t = (level - vs[a]) / (vs[b] - vs[a]);
                    hits.emplace_back(xs[a] + t * (xs[b] - xs[a]), ys[a] + t * (ys[b] - ys[a]));
                }
                for (std::size_t h = 0; h + 1 < hits.size(); h += 2)
                    svg << 'M' << sx(hits[h].first) << ' ' << sy(hits[h].second) << 'L' << sx(hits[h + 1].first) << ' '
                        << sy(hits[h + 1].second);
            }
        }
        svg << "\"/>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace geomreg
