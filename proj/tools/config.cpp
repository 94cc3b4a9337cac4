#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace geomreg::cli {

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ConfigError("'" + s + "' is not a finite number");
    return v;
}

std::uint64_t to_u64(const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ConfigError("'" + s + "' is not a non-negative integer");
    return v;
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    throw ConfigError("'" + s + "' is not a boolean");
}

void check_rho(double rho) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1), got " + std::to_string(rho));
}

void check_positive(std::size_t v, const char* what) {
    if (v < 1) throw ConfigError(std::string(what) + " must be >= 1");
}

void assign_run(SimulateConfig& c, const std::string& key, const std::string& value) {
    if (key == "seed") {
        c.seed = to_u64(value);
    } else if (key == "replications") {
        c.replications = to_u64(value);
        check_positive(c.replications, "replications");
    } else if (key == "epochs") {
        c.epochs = to_u64(value);
    } else if (key == "batch_size") {
        c.batch_size = to_u64(value);
        check_positive(c.batch_size, "batch_size");
    } else if (key == "optimizer") {
        if (value != "adam" && value != "sgd") throw ConfigError("optimizer must be adam or sgd");
        c.optimizer = value;
    } else if (key == "learning_rate") {
        c.learning_rate = to_double(value);
        if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    } else if (key == "hidden") {
        c.hidden = parse_sizes(value);
        if (c.hidden.empty()) throw ConfigError("hidden needs at least one layer");
    } else if (key == "test_fraction") {
        c.test_fraction = to_double(value);
        if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    } else if (key == "delta") {
        c.delta = to_double(value);
        if (!(c.delta > 0.0)) throw ConfigError("delta must be > 0");
    } else if (key == "methods") {
        c.methods.clear();
        for (const auto& name : split_list(value)) {
            try {
                c.methods.push_back(family_from_string(name));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
        if (c.methods.empty()) throw ConfigError("methods must not be empty");
    } else if (key == "tune") {
        c.tune = to_bool(value);
    } else if (key == "folds") {
        c.folds = to_u64(value);
        if (c.folds < 2) throw ConfigError("folds must be >= 2");
    } else if (key == "repeats") {
        c.repeats = to_u64(value);
        check_positive(c.repeats, "repeats");
    } else if (key == "grid") {
        c.grid = parse_doubles(value);
        if (c.grid.empty()) throw ConfigError("grid must not be empty");
    } else if (key == "mode") {
        if (value != "full_grid" && value != "coordinate_wise") throw ConfigError("mode must be full_grid or coordinate_wise");
        c.mode = value;
    } else {
        throw ConfigError("unknown key '" + key + "' in [run]");
    }
}

void assign_params(SimulateConfig& c, const std::string& key, const std::string& value) {
    PenaltyFamily family{};
    try {
        family = family_from_string(key);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    auto params = parse_doubles(value);
    if (params.size() != arity(family))
        throw ConfigError(key + " takes " + std::to_string(arity(family)) + " value(s)");
    c.fixed_params[to_string(family)] = std::move(params);
}

void assign_scenario(ScenarioSpec& s, const std::string& key, const std::string& value) {
    if (key == "n") {
        s.n = to_u64(value);
        check_positive(s.n, "n");
    } else if (key == "p") {
        s.p = to_u64(value);
        check_positive(s.p, "p");
    } else if (key == "k") {
        s.k = to_u64(value);
    } else if (key == "rho") {
        s.rho = parse_doubles(value);
        if (s.rho.empty()) throw ConfigError("rho must not be empty");
        std::for_each(s.rho.begin(), s.rho.end(), check_rho);
    } else if (key == "sigma") {
        s.sigma = parse_doubles(value);
        if (s.sigma.empty()) throw ConfigError("sigma must not be empty");
        for (double v : s.sigma)
            if (v < 0.0) throw ConfigError("sigma must be >= 0");
    } else if (key == "tau") {
        s.tau = to_double(value);
        if (!(s.tau > 0.0)) throw ConfigError("tau must be > 0");
    } else if (key == "form") {
        s.forms.clear();
        for (const auto& f : split_list(value)) {
            try {
                s.forms.push_back(form_from_string(f));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
        if (s.forms.empty()) throw ConfigError("form must not be empty");
    } else {
        throw ConfigError("unknown key '" + key + "' in scenario '" + s.name + "'");
    }
}

ScenarioSpec* find_scenario(SimulateConfig& c, const std::string& name) {
    for (auto& s : c.scenarios)
        if (s.name == name) return &s;
    return nullptr;
}

void assign(SimulateConfig& c, const std::string& section, const std::string& key, const std::string& value) {
    if (section == "run") {
        assign_run(c, key, value);
    } else if (section == "params") {
        assign_params(c, key, value);
    } else if (auto* s = find_scenario(c, section)) {
        assign_scenario(*s, key, value);
    } else {
        throw ConfigError("unknown section '" + section + "'");
    }
}

}  // namespace

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) out.push_back(to_double(item));
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(text)) {
        const auto v = to_u64(item);
        if (v < 1) throw ConfigError("sizes must be >= 1");
        out.push_back(v);
    }
    return out;
}

void SimulateConfig::validate() const {
    if (scenarios.empty()) throw ConfigError("no [scenario ...] blocks");
    for (const auto& s : scenarios) {
        if (s.k > s.p) throw ConfigError("scenario '" + s.name + "': k must not exceed p");
        const auto test = static_cast<std::size_t>(std::llround(static_cast<double>(s.n) * test_fraction));
        if (s.n < 4 || test < 1 || test >= s.n) throw ConfigError("scenario '" + s.name + "': n too small to split");
        if (tune && folds > s.n - test) throw ConfigError("scenario '" + s.name + "': more folds than training rows");
    }
    if (!tune) {
        for (auto m : methods)
            if (arity(m) > 0 && !fixed_params.count(to_string(m)))
                throw ConfigError("tune = false but [params] gives no values for " + to_string(m));
    }
}

SimulateConfig parse_simulate_config(std::istream& in, const std::string& source) {
    SimulateConfig c;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto where = source + ":" + std::to_string(line_no) + ": ";
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError("unterminated section header");
                const std::string header = trim(line.substr(1, line.size() - 2));
                if (header == "run" || header == "params") {
                    section = header;
                } else if (header.rfind("scenario", 0) == 0) {
                    const std::string name = trim(header.substr(8));
                    if (name.empty()) throw ConfigError("scenario needs a name");
                    if (name == "run" || name == "params") throw ConfigError("scenario name '" + name + "' is reserved");
                    if (find_scenario(c, name)) throw ConfigError("duplicate scenario '" + name + "'");
                    c.scenarios.push_back(ScenarioSpec{});
                    c.scenarios.back().name = name;
                    section = name;
                } else {
                    throw ConfigError("unknown section '" + header + "'");
                }
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("expected key = value");
            if (section.empty()) throw ConfigError("key outside of any section");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty() || value.empty()) throw ConfigError("empty key or value");
            assign(c, section, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return c;
}

SimulateConfig load_simulate_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_simulate_config(in, path);
}

void apply_override(SimulateConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.rfind('.', eq);
    if (eq == std::string::npos || dot == std::string::npos || dot == 0)
        throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    try {
        assign(config, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
               trim(assignment.substr(eq + 1)));
    } catch (const ConfigError& e) {
        throw ConfigError("override '" + assignment + "': " + e.what());
    }
}

void to_json(nlohmann::json& j, const SimulateConfig& c) {
    std::vector<std::string> methods;
    for (auto m : c.methods) methods.push_back(to_string(m));
    auto scenarios = nlohmann::json::array();
    for (const auto& s : c.scenarios) {
        std::vector<std::string> forms;
        for (auto f : s.forms) forms.push_back(to_string(f));
        scenarios.push_back({{"name", s.name}, {"n", s.n},         {"p", s.p},     {"k", s.k},
                             {"rho", s.rho},   {"sigma", s.sigma}, {"tau", s.tau}, {"form", forms}});
    }
    j = {{"seed", c.seed},
         {"replications", c.replications},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"optimizer", c.optimizer},
         {"learning_rate", c.learning_rate},
         {"hidden", c.hidden},
         {"test_fraction", c.test_fraction},
         {"delta", c.delta},
         {"methods", methods},
         {"tune", c.tune},
         {"folds", c.folds},
         {"repeats", c.repeats},
         {"grid", c.grid},
         {"mode", c.mode},
         {"fixed_params", c.fixed_params},
         {"scenarios", scenarios}};
}

void from_json(const nlohmann::json& j, SimulateConfig& c) {
    c = SimulateConfig{};
    c.seed = j.at("seed").get<std::uint64_t>();
    c.replications = j.at("replications").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.optimizer = j.at("optimizer").get<std::string>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.test_fraction = j.at("test_fraction").get<double>();
    c.delta = j.at("delta").get<double>();
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(family_from_string(m.get<std::string>()));
    c.tune = j.at("tune").get<bool>();
    c.folds = j.at("folds").get<std::size_t>();
    c.repeats = j.at("repeats").get<std::size_t>();
    c.grid = j.at("grid").get<std::vector<double>>();
    c.mode = j.at("mode").get<std::string>();
    c.fixed_params = j.at("fixed_params").get<std::map<std::string, std::vector<double>>>();
    for (const auto& s : j.at("scenarios")) {
        ScenarioSpec spec;
        spec.name = s.at("name").get<std::string>();
        spec.n = s.at("n").get<std::size_t>();
        spec.p = s.at("p").get<std::size_t>();
        spec.k = s.at("k").get<std::size_t>();
        spec.rho = s.at("rho").get<std::vector<double>>();
        spec.sigma = s.at("sigma").get<std::vector<double>>();
        spec.tau = s.at("tau").get<double>();
        spec.forms.clear();
        for (const auto& f : s.at("form")) spec.forms.push_back(form_from_string(f.get<std::string>()));
        c.scenarios.push_back(std::move(spec));
    }
}

}  // namespace geomreg::cli
