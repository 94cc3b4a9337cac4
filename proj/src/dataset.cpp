#include "geomreg/dataset.hpp"

#include "geomreg/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace geomreg {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(first, last - first + 1));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string_view rest(line);
    for (;;) {
        const auto comma = rest.find(',');
        cells.push_back(trim(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    return cells;
}

enum class Parse { ok, not_a_number, non_finite };

Parse parse_double(const std::string& cell, double& value) {
    if (cell.empty()) return Parse::not_a_number;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) return Parse::not_a_number;
    return std::isfinite(value) ? Parse::ok : Parse::non_finite;
}

}  // namespace

std::string to_string(Task task) {
    return task == Task::regression ? "regression" : "classification";
}

Task task_from_string(const std::string& name) {
    if (name == "regression") return Task::regression;
    if (name == "classification") return Task::classification;
    throw std::invalid_argument("unknown task '" + name + "' (expected regression or classification)");
}

int Dataset::num_classes() const {
    if (labels.empty()) return 0;
    return *std::max_element(labels.begin(), labels.end()) + 1;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.task = task;
    out.feature_names = feature_names;
    out.class_names = class_names;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    if (task == Task::regression) out.target.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        if (rows[i] >= this->rows()) throw std::out_of_range("row index out of range in Dataset::subset");
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(r);
        if (task == Task::regression)
            out.target(static_cast<Eigen::Index>(i)) = target(r);
        else
            out.labels.push_back(labels[rows[i]]);
    }
    return out;
}

Dataset Dataset::select_features(std::span<const std::size_t> columns) const {
    Dataset out = *this;
    out.features.resize(features.rows(), static_cast<Eigen::Index>(columns.size()));
    out.feature_names.clear();
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j] >= cols()) throw std::out_of_range("column index out of range in Dataset::select_features");
        out.features.col(static_cast<Eigen::Index>(j)) = features.col(static_cast<Eigen::Index>(columns[j]));
        if (!feature_names.empty()) out.feature_names.push_back(feature_names[columns[j]]);
    }
    return out;
}

void Dataset::validate() const {
    if (rows() < 1 || cols() < 1) throw std::invalid_argument("dataset needs n >= 1 and p >= 1");
    if (!features.allFinite()) throw std::invalid_argument("dataset features contain non-finite values");
    if (!feature_names.empty() && feature_names.size() != cols())
        throw std::invalid_argument("feature_names length does not match column count");
    if (task == Task::regression) {
        if (static_cast<std::size_t>(target.size()) != rows())
            throw std::invalid_argument("target length does not match row count");
        if (!target.allFinite()) throw std::invalid_argument("dataset target contains non-finite values");
        return;
    }
    if (labels.size() != rows()) throw std::invalid_argument("label count does not match row count");
    const int m = num_classes();
    std::vector<bool> seen(static_cast<std::size_t>(std::max(m, 0)), false);
    for (int label : labels) {
        if (label < 0) throw std::invalid_argument("class labels must be non-negative");
        seen[static_cast<std::size_t>(label)] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw std::invalid_argument("class labels must form a contiguous range 0..m-1");
}

Dataset make_regression(Eigen::MatrixXd features, Eigen::VectorXd target) {
    Dataset d;
    d.features = std::move(features);
    d.target = std::move(target);
    d.task = Task::regression;
    d.validate();
    return d;
}

Dataset make_classification(Eigen::MatrixXd features, std::vector<int> labels) {
    Dataset d;
    d.features = std::move(features);
    d.labels = std::move(labels);
    d.task = Task::classification;
    d.validate();
    return d;
}

Dataset load_csv(const std::filesystem::path& path, const TargetColumn& target, Task task) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");

    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        rows.push_back(split_line(line));
    }
    if (rows.empty()) throw DataError("CSV file '" + path.string() + "' is empty");

    const std::size_t width = rows.front().size();
    if (width < 2) throw DataError("CSV needs at least one feature column and a target column");

    bool has_header = false;
    std::size_t target_idx = 0;
    if (const auto* name = std::get_if<std::string>(&target)) {
        has_header = true;
        const auto& header = rows.front();
        const auto it = std::find(header.begin(), header.end(), *name);
        if (it == header.end()) throw DataError("target column '" + *name + "' not found in header");
        target_idx = static_cast<std::size_t>(it - header.begin());
    } else {
        target_idx = std::get<std::size_t>(target);
        if (target_idx >= width) throw DataError("target column index " + std::to_string(target_idx) + " out of range");
        double tmp = 0.0;
        for (std::size_t c = 0; c < width; ++c) {
            if (c == target_idx && task == Task::classification) continue;
            if (parse_double(rows.front()[c], tmp) == Parse::not_a_number) has_header = true;
        }
    }

    const std::size_t first = has_header ? 1 : 0;
    const std::size_t n = rows.size() - first;
    if (n < 1) throw DataError("CSV file has a header but no data rows");
    const std::size_t p = width - 1;

    Dataset d;
    d.task = task;
    d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    if (has_header) {
        for (std::size_t c = 0; c < width; ++c)
            if (c != target_idx) d.feature_names.push_back(rows.front()[c]);
    }
    if (task == Task::regression) d.target.resize(static_cast<Eigen::Index>(n));

    std::unordered_map<std::string, int> codes;
    for (std::size_t r = 0; r < n; ++r) {
        const auto& cells = rows[first + r];
        const std::size_t file_row = first + r + 1;
        if (cells.size() != width)
            throw DataError("row " + std::to_string(file_row) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(width));
        std::size_t j = 0;
        for (std::size_t c = 0; c < width; ++c) {
            const auto where = [&] {
                return "row " + std::to_string(file_row) + ", column " + std::to_string(c + 1);
            };
            if (c == target_idx && task == Task::classification) {
                const auto [it, inserted] = codes.emplace(cells[c], static_cast<int>(codes.size()));
                if (inserted) d.class_names.push_back(cells[c]);
                d.labels.push_back(it->second);
                continue;
            }
            double value = 0.0;
            switch (parse_double(cells[c], value)) {
                case Parse::not_a_number:
                    throw DataError("unparseable cell '" + cells[c] + "' at " + where());
                case Parse::non_finite:
                    throw DataError("non-finite value '" + cells[c] + "' at " + where());
                case Parse::ok:
                    break;
            }
            if (c == target_idx)
                d.target(static_cast<Eigen::Index>(r)) = value;
            else
                d.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j++)) = value;
        }
    }
    if (task == Task::classification && codes.size() < 2)
        throw DataError("classification target needs at least 2 distinct labels");
    d.validate();
    return d;
}

Eigen::MatrixXd StandardizationStats::apply(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.cols()) != dims())
        throw std::invalid_argument("standardize: matrix has " + std::to_string(x.cols()) + " columns, stats have " +
                                    std::to_string(dims()));
    Eigen::MatrixXd z(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (constant_flags[static_cast<std::size_t>(j)])
            z.col(j).setZero();
        else
            z.col(j) = (x.col(j).array() - means(j)) / stds(j);
    }
    return z;
}

Eigen::MatrixXd StandardizationStats::invert(const Eigen::MatrixXd& z) const {
    if (static_cast<std::size_t>(z.cols()) != dims())
        throw std::invalid_argument("standardize: matrix column count does not match stats");
    Eigen::MatrixXd x(z.rows(), z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        if (constant_flags[static_cast<std::size_t>(j)])
            x.col(j).setConstant(means(j));
        else
            x.col(j) = z.col(j).array() * stds(j) + means(j);
    }
    return x;
}

StandardizationStats standardize(const Eigen::MatrixXd& train_features) {
    if (train_features.rows() < 2) throw std::invalid_argument("standardize needs at least 2 training rows");
    const auto n = static_cast<double>(train_features.rows());
    StandardizationStats s;
    s.means = train_features.colwise().mean().transpose();
    s.stds.resize(train_features.cols());
    s.constant_flags.assign(static_cast<std::size_t>(train_features.cols()), false);
    for (Eigen::Index j = 0; j < train_features.cols(); ++j) {
        const double var = (train_features.col(j).array() - s.means(j)).square().sum() / n;
        const double sd = std::sqrt(var);
        if (sd < 1e-12) {
            s.stds(j) = 1.0;
            s.constant_flags[static_cast<std::size_t>(j)] = true;
        } else {
            s.stds(j) = sd;
        }
    }
    return s;
}

void to_json(nlohmann::json& j, const StandardizationStats& stats) {
    j = nlohmann::json{{"means", std::vector<double>(stats.means.begin(), stats.means.end())},
                       {"stds", std::vector<double>(stats.stds.begin(), stats.stds.end())},
                       {"constant_flags", stats.constant_flags}};
}

void from_json(const nlohmann::json& j, StandardizationStats& stats) {
    const auto means = j.at("means").get<std::vector<double>>();
    const auto stds = j.at("stds").get<std::vector<double>>();
    stats.constant_flags = j.at("constant_flags").get<std::vector<bool>>();
    if (means.size() != stds.size() || means.size() != stats.constant_flags.size())
        throw std::invalid_argument("standardization stats arrays differ in length");
    stats.means = Eigen::Map<const Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
    stats.stds = Eigen::Map<const Eigen::VectorXd>(stds.data(), static_cast<Eigen::Index>(stds.size()));
}

SplitPlan split(std::size_t n, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("test fraction must lie in (0, 1)");
    if (n < 4) throw std::invalid_argument("split needs n >= 4");
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    if (n_test == 0 || n_test == n) throw std::invalid_argument("test fraction leaves an empty partition");

    Index perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto rng = make_rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    SplitPlan plan;
    plan.seed = seed;
    plan.test_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    plan.train_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
    std::sort(plan.test_idx.begin(), plan.test_idx.end());
    std::sort(plan.train_idx.begin(), plan.train_idx.end());
    return plan;
}

Eigen::VectorXd anova_f_scores(const Eigen::MatrixXd& features, std::span<const int> labels) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (labels.size() != n) throw std::invalid_argument("anova: label count does not match row count");
    int g = 0;
    for (int l : labels) {
        if (l < 0) throw std::invalid_argument("anova: negative class label");
        g = std::max(g, l + 1);
    }
    std::vector<double> counts(static_cast<std::size_t>(g), 0.0);
    for (int l : labels) counts[static_cast<std::size_t>(l)] += 1.0;
    if (g < 2) throw std::invalid_argument("anova: need at least 2 classes");
    for (int c = 0; c < g; ++c)
        if (counts[static_cast<std::size_t>(c)] < 2.0)
            throw std::invalid_argument("anova: class " + std::to_string(c) + " has fewer than 2 members");

    const double df_between = g - 1;
    const double df_within = static_cast<double>(n) - g;
    Eigen::VectorXd f(features.cols());
    Eigen::VectorXd sums(g);
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
        sums.setZero();
        for (std::size_t i = 0; i < n; ++i) sums(labels[i]) += features(static_cast<Eigen::Index>(i), j);
        const double grand = features.col(j).mean();
        double ssb = 0.0;
        for (int c = 0; c < g; ++c) {
            const double mean_c = sums(c) / counts[static_cast<std::size_t>(c)];
            ssb += counts[static_cast<std::size_t>(c)] * (mean_c - grand) * (mean_c - grand);
        }
        double ssw = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = features(static_cast<Eigen::Index>(i), j) - sums(labels[i]) / counts[static_cast<std::size_t>(labels[i])];
            ssw += d * d;
        }
        const double scale = std::max(1.0, std::abs(grand));
        if (ssb <= 1e-24 * scale * scale * static_cast<double>(n))
            f(j) = 0.0;
        else if (ssw <= 1e-24 * scale * scale * static_cast<double>(n))
            f(j) = std::numeric_limits<double>::infinity();
        else
            f(j) = (ssb / df_between) / (ssw / df_within);
    }
    return f;
}

Index anova_f_select(const Eigen::MatrixXd& features, std::span<const int> labels, std::size_t m) {
    if (m > static_cast<std::size_t>(features.cols()))
        throw std::invalid_argument("anova_f_select: m = " + std::to_string(m) + " exceeds p = " +
                                    std::to_string(features.cols()));
    const Eigen::VectorXd f = anova_f_scores(features, labels);
    Index order(static_cast<std::size_t>(f.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return f(static_cast<Eigen::Index>(a)) > f(static_cast<Eigen::Index>(b));
    });
    order.resize(m);
    return order;
}

}  // namespace geomreg
