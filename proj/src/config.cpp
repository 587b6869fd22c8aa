#include "rejsamp/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rejsamp/errors.hpp"
#include "rejsamp/ldist.hpp"

namespace rejsamp {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == delim) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
}

using Section = std::map<std::string, std::string>;
using Ini = std::map<std::string, Section>;

Ini parse_ini(const std::string& text) {
    Ini ini;
    std::string section = "";
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
            section = trim(t.substr(1, t.size() - 2));
            ini[section];
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        ini[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return ini;
}

double to_double(const std::string& v, const std::string& key) {
    try {
        return std::stod(v);
    } catch (...) {
        throw ConfigError("config key '" + key + "': not a number: " + v);
    }
}

long to_long(const std::string& v, const std::string& key) {
    try {
        return std::stol(v);
    } catch (...) {
        throw ConfigError("config key '" + key + "': not an integer: " + v);
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': not a boolean: " + v);
}

PhaseDesignConfig parse_phase(const Section& s, const std::string& name) {
    PhaseDesignConfig p;
    for (const auto& [k, v] : s) {
        if (k == "design") p.design = v;
        else if (k == "n") p.n = to_long(v, name + "." + k);
        else if (k == "probs_from") p.probs_from = v;
        else if (k == "expected_n") p.expected_n = to_double(v, name + "." + k);
        else if (k == "strata_from") p.strata_from = v;
        else if (k == "take") {
            for (const auto& t : split(v, ','))
                p.take.push_back(static_cast<int>(to_long(t, name + ".take")));
        } else if (k == "gamma_sq") p.gamma_spec = v;
        else if (k == "tiers") {
            // [a,b],[c] style
            std::string body = v;
            std::size_t pos = 0;
            while ((pos = body.find('[', pos)) != std::string::npos) {
                std::size_t end = body.find(']', pos);
                if (end == std::string::npos)
                    throw ConfigError(name + ".tiers: unbalanced brackets");
                p.tiers.push_back(split(body.substr(pos + 1, end - pos - 1), ','));
                pos = end + 1;
            }
        } else if (k == "tier_weights") {
            for (const auto& t : split(v, ','))
                p.tier_weights.push_back(to_double(t, name + ".tier_weights"));
        } else if (k == "max_draws") p.max_draws = to_long(v, name + "." + k);
        else throw ConfigError("unknown key '" + k + "' in [" + name + "]");
    }
    if (p.design != "srswor" && p.design != "poisson" && p.design != "stratified")
        throw ConfigError(name + ".design must be srswor, poisson, or stratified");
    return p;
}

}  // namespace

double resolve_gamma(const std::string& spec, int p) {
    std::string s = trim(spec);
    if (s == "inf" || s == "infinity" || s == "none") return kInfGamma;
    const std::string prefix = "chisq_quantile:";
    if (s.rfind(prefix, 0) == 0) {
        double prob = to_double(s.substr(prefix.size()), "gamma_sq");
        if (!(prob > 0.0 && prob < 1.0))
            throw ConfigError("gamma_sq chisq_quantile probability must be in (0,1)");
        return chisq_quantile(std::max(p, 1), prob);
    }
    double g = to_double(s, "gamma_sq");
    if (!(g > 0.0)) throw ConfigError("gamma_sq must be positive (or inf)");
    return g;
}

ExperimentConfig parse_config_string(const std::string& text) {
    Ini ini = parse_ini(text);
    ExperimentConfig cfg;

    if (auto it = ini.find("population"); it != ini.end()) {
        for (const auto& [k, v] : it->second) {
            if (k == "source") {
                if (v == "synthetic") cfg.population.source = PopulationConfig::Source::Synthetic;
                else if (v == "api_style") cfg.population.source = PopulationConfig::Source::ApiStyle;
                else if (v == "file") cfg.population.source = PopulationConfig::Source::File;
                else throw ConfigError("population.source must be synthetic, api_style, or file");
            } else if (k == "n_units") cfg.population.n_units = to_long(v, "population.n_units");
            else if (k == "beta") cfg.population.beta = to_double(v, "population.beta");
            else if (k == "noise_sd") cfg.population.noise_sd = to_double(v, "population.noise_sd");
            else if (k == "seed") cfg.population.seed = static_cast<std::uint64_t>(to_long(v, k));
            else if (k == "path") cfg.population.path = v;
            else if (k == "x_cols") cfg.population.schema.x_cols = split(v, ',');
            else if (k == "z_cols") cfg.population.schema.z_cols = split(v, ',');
            else if (k == "y_col") cfg.population.schema.y_col = v;
            else if (k == "delimiter") {
                if (v == "tab") cfg.population.schema.delimiter = '\t';
                else if (v == "comma") cfg.population.schema.delimiter = ',';
                else throw ConfigError("population.delimiter must be comma or tab");
            } else throw ConfigError("unknown key '" + k + "' in [population]");
        }
    }
    if (auto it = ini.find("phase1"); it != ini.end()) cfg.phase1 = parse_phase(it->second, "phase1");
    if (auto it = ini.find("phase2"); it != ini.end()) cfg.phase2 = parse_phase(it->second, "phase2");
    if (auto it = ini.find("phase3"); it != ini.end())
        cfg.phase3 = parse_phase(it->second, "phase3");

    if (auto it = ini.find("estimate"); it != ini.end()) {
        for (const auto& [k, v] : it->second) {
            if (k == "estimators") cfg.estimators = split(v, ',');
            else if (k == "parameter") cfg.ee_parameter = v;
            else if (k == "variance_style") cfg.variance_style = v;
            else if (k == "normalizer") cfg.normalizer = v;
            else if (k == "approx_joint") cfg.approx_joint = to_bool(v, k);
            else if (k == "alpha") cfg.alpha = to_double(v, k);
            else if (k == "ridge") cfg.ridge = to_double(v, k);
            else throw ConfigError("unknown key '" + k + "' in [estimate]");
        }
    }
    if (auto it = ini.find("simulate"); it != ini.end()) {
        for (const auto& [k, v] : it->second) {
            if (k == "n_replicates") cfg.n_replicates = to_long(v, k);
            else if (k == "base_seed") cfg.base_seed = static_cast<std::uint64_t>(to_long(v, k));
            else if (k == "quantile_draws") cfg.quantile_draws = to_long(v, k);
            else if (k == "fast") cfg.fast = to_bool(v, k);
            else if (k == "keep_replicates") cfg.keep_replicates = to_bool(v, k);
            else throw ConfigError("unknown key '" + k + "' in [simulate]");
        }
    }

    if (cfg.n_replicates < 1) throw ConfigError("simulate.n_replicates must be >= 1");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("estimate.alpha must be in (0,1)");
    if (cfg.variance_style != "srs" && cfg.variance_style != "ht" && cfg.variance_style != "syg")
        throw ConfigError("estimate.variance_style must be srs, ht, or syg");
    for (const auto& e : cfg.estimators)
        if (e != "pi_star" && e != "hajek" && e != "ree" && e != "reg2" && e != "reg3")
            throw ConfigError("unknown estimator: " + e);
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_string(ss.str());
}

void apply_fast_defaults(ExperimentConfig& config) {
    if (!config.fast) return;
    config.population.n_units = std::min(config.population.n_units, 20000L);
    if (config.phase1.design == "srswor") config.phase1.n = std::min(config.phase1.n, 1000L);
    if (config.phase2.design == "srswor") config.phase2.n = std::min(config.phase2.n, 200L);
    config.quantile_draws = std::min(config.quantile_draws, 50000L);
}

}  // namespace rejsamp
