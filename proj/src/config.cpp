#include "driftguard/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "driftguard/errors.hpp"
#include "driftguard/text.hpp"

namespace driftguard {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> tokens;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

/// Typed, path-aware access to one section.  Every key and subsection read
/// is remembered; finish() turns anything left over into a SchemaError so a
/// misspelled tunable cannot silently fall back to its default.
class ConfigReader {
public:
    ConfigReader(const ConfigNode& node, std::string path)
        : node_(node), path_(std::move(path)) {}

    static const ConfigNode& empty_node() {
        static const ConfigNode empty;
        return empty;
    }

    std::string dotted(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(const std::string& key) const { return node_.values.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        used_values_.insert(key);
        auto it = node_.values.find(key);
        return it == node_.values.end() ? fallback : it->second;
    }

    long get_long(const std::string& key, long fallback) {
        used_values_.insert(key);
        auto it = node_.values.find(key);
        if (it == node_.values.end()) return fallback;
        try {
            return parse_long(it->second);
        } catch (const ValidationError&) {
            throw SchemaError("config: " + dotted(key) + " is not an integer: '" + it->second +
                              "'");
        }
    }

    int get_int(const std::string& key, int fallback) {
        return static_cast<int>(get_long(key, fallback));
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        used_values_.insert(key);
        auto it = node_.values.find(key);
        if (it == node_.values.end()) return fallback;
        try {
            return static_cast<std::uint64_t>(parse_long(it->second));
        } catch (const ValidationError&) {
            throw SchemaError("config: " + dotted(key) + " is not an integer: '" + it->second +
                              "'");
        }
    }

    double get_double(const std::string& key, double fallback) {
        used_values_.insert(key);
        auto it = node_.values.find(key);
        if (it == node_.values.end()) return fallback;
        try {
            return parse_double(it->second);
        } catch (const ValidationError&) {
            throw SchemaError("config: " + dotted(key) + " is not a number: '" + it->second +
                              "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        used_values_.insert(key);
        auto it = node_.values.find(key);
        if (it == node_.values.end()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw SchemaError("config: " + dotted(key) + " is not a boolean: '" + v + "'");
    }

    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) {
        used_values_.insert(key);
        auto it = node_.values.find(key);
        if (it == node_.values.end()) return fallback;
        std::vector<int> out;
        for (const std::string& tok : split_tokens(it->second)) {
            try {
                out.push_back(static_cast<int>(parse_long(tok)));
            } catch (const ValidationError&) {
                throw SchemaError("config: " + dotted(key) + " has a non-integer entry: '" + tok +
                                  "'");
            }
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) {
        used_values_.insert(key);
        auto it = node_.values.find(key);
        if (it == node_.values.end()) return fallback;
        std::vector<double> out;
        for (const std::string& tok : split_tokens(it->second)) {
            try {
                out.push_back(parse_double(tok));
            } catch (const ValidationError&) {
                throw SchemaError("config: " + dotted(key) + " has a non-numeric entry: '" + tok +
                                  "'");
            }
        }
        return out;
    }

    ConfigReader section(const std::string& key) {
        used_sections_.insert(key);
        auto it = node_.sections.find(key);
        const ConfigNode& child = it == node_.sections.end() ? empty_node() : it->second;
        return ConfigReader(child, dotted(key));
    }

    void finish() const {
        for (const auto& [key, value] : node_.values) {
            if (!used_values_.count(key)) {
                throw SchemaError("config: unknown key " + dotted(key));
            }
            (void)value;
        }
        for (const auto& [key, child] : node_.sections) {
            if (!used_sections_.count(key)) {
                throw SchemaError("config: unknown section " + dotted(key));
            }
            (void)child;
        }
    }

private:
    const ConfigNode& node_;
    std::string path_;
    std::set<std::string> used_values_;
    std::set<std::string> used_sections_;
};

}  // namespace

ConfigNode parse_config_text(const std::string& text) {
    ConfigNode root;
    std::vector<ConfigNode*> stack = {&root};
    std::vector<std::string> names = {""};
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const std::string where = "config line " + std::to_string(line_no) + ": ";

        if (line == "}") {
            if (stack.size() == 1) throw SchemaError(where + "unmatched '}'");
            stack.pop_back();
            names.pop_back();
            continue;
        }
        if (line.back() == '{') {
            const std::string name = trim(line.substr(0, line.size() - 1));
            if (name.empty() || name.find_first_of("={} \t") != std::string::npos) {
                throw SchemaError(where + "bad section header '" + line + "'");
            }
            if (stack.back()->sections.count(name)) {
                throw SchemaError(where + "duplicate section '" + name + "'");
            }
            ConfigNode& child = stack.back()->sections[name];
            stack.push_back(&child);
            names.push_back(name);
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw SchemaError(where + "expected 'key = value', 'name {' or '}', got '" + line +
                              "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || key.find_first_of("{} \t") != std::string::npos) {
            throw SchemaError(where + "bad key '" + key + "'");
        }
        if (value.empty()) throw SchemaError(where + "empty value for '" + key + "'");
        if (stack.back()->values.count(key)) {
            throw SchemaError(where + "duplicate key '" + key + "'");
        }
        stack.back()->values[key] = value;
    }
    if (stack.size() != 1) {
        throw SchemaError("config: section '" + names.back() + "' is never closed");
    }
    return root;
}

ConfigNode load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

const char* to_string(DataSource source) {
    switch (source) {
        case DataSource::Synthetic: return "synthetic";
        case DataSource::M5: return "m5";
    }
    return "?";
}

DataSource data_source_from_string(const std::string& name) {
    if (name == "synthetic") return DataSource::Synthetic;
    if (name == "m5") return DataSource::M5;
    throw SchemaError("config: unknown data source '" + name + "' (synthetic or m5)");
}

void SplitConfig::validate() const {
    if (train_start < 1) throw ValidationError("split: train_start must be >= 1");
    if (train_end <= train_start) {
        throw ValidationError("split: train window [" + std::to_string(train_start) + ", " +
                              std::to_string(train_end) + "] is empty or inverted");
    }
    if (monitor_start <= train_end) {
        throw ValidationError("split: monitoring must start after the training window");
    }
    if (monitor_end < monitor_start) {
        throw ValidationError("split: monitor window is inverted");
    }
    if (anchor_step < 1) throw ValidationError("split: anchor_step must be >= 1");
    if (validation_days < 1) throw ValidationError("split: validation_days must be >= 1");
    if (evaluate_start <= monitor_end) {
        throw ValidationError(
            "split: evaluation must start after the monitor window so scored days were never "
            "available to retraining");
    }
    if (evaluate_end < evaluate_start) {
        throw ValidationError("split: evaluation window is inverted");
    }
}

void RunConfig::validate() const {
    synth.validate();
    split.validate();
    detector.validate();
    cost.validate();
    features.validate();
    gbt.validate();
    if (out_dir.empty()) throw ValidationError("config: out_dir must not be empty");
    if (source == DataSource::M5 && m5_dir.empty()) {
        throw ValidationError("config: data source m5 needs data.m5_dir");
    }
    // The detectors calibrate on a clean span of monitoring forecasts ending
    // 7 days before the sweep starts; that span must fit after training.
    const int baseline_start = split.monitor_start - detector.baseline_window - 7;
    if (baseline_start <= split.train_end) {
        throw ValidationError(
            "config: monitor_start leaves no room for the detector baseline window between "
            "training and the sweep (needs " +
            std::to_string(detector.baseline_window + 7) + " forecast days before it)");
    }
    if (scenario_enabled) {
        if (scenario.onset_day < split.monitor_start || scenario.onset_day > split.monitor_end) {
            throw ValidationError("config: scenario onset day " +
                                  std::to_string(scenario.onset_day) +
                                  " is outside the monitored range [" +
                                  std::to_string(split.monitor_start) + ", " +
                                  std::to_string(split.monitor_end) + "]");
        }
    }
    if (window_candidates.empty()) {
        throw ValidationError("config: retrain window_candidates must not be empty");
    }
    for (int w : window_candidates) {
        if (w < 1) throw ValidationError("config: retrain window candidates must be >= 1");
    }
    if (batch_seeds < 1) throw ValidationError("config: batch n_seeds must be >= 1");
    if (severity_sweep && sweep_alphas.empty()) {
        throw ValidationError("config: severity sweep enabled with no alphas");
    }
    for (double a : sweep_alphas) {
        if (!(a > 0.0)) throw ValidationError("config: sweep alphas must be > 0");
    }
}

RunConfig run_config_from_node(const ConfigNode& root) {
    RunConfig config;
    ConfigReader r(root, "");

    config.seed = r.get_u64("seed", config.seed);
    config.out_dir = r.get_string("out_dir", config.out_dir);

    {
        ConfigReader data = r.section("data");
        config.source = data_source_from_string(data.get_string("source", "synthetic"));
        config.m5_dir = data.get_string("m5_dir", "");
        ConfigReader synth = data.section("synth");
        SynthConfig& s = config.synth;
        s.n_stores = synth.get_int("n_stores", s.n_stores);
        s.n_states = synth.get_int("n_states", s.n_states);
        s.n_skus_per_store = synth.get_int("n_skus_per_store", s.n_skus_per_store);
        s.n_days = synth.get_int("n_days", s.n_days);
        s.weekly_amplitude = synth.get_double("weekly_amplitude", s.weekly_amplitude);
        s.annual_period_days = synth.get_int("annual_period_days", s.annual_period_days);
        s.annual_amplitude = synth.get_double("annual_amplitude", s.annual_amplitude);
        s.base_demand_mean = synth.get_double("base_demand_mean", s.base_demand_mean);
        s.noise_dispersion = synth.get_double("noise_dispersion", s.noise_dispersion);
        s.holiday_every_n_days = synth.get_int("holiday_every_n_days", s.holiday_every_n_days);
        synth.finish();
        data.finish();
    }
    {
        ConfigReader split = r.section("split");
        SplitConfig& s = config.split;
        s.train_start = split.get_int("train_start", s.train_start);
        s.train_end = split.get_int("train_end", s.train_end);
        s.monitor_start = split.get_int("monitor_start", s.monitor_start);
        s.monitor_end = split.get_int("monitor_end", s.monitor_end);
        s.anchor_step = split.get_int("anchor_step", s.anchor_step);
        s.validation_days = split.get_int("validation_days", s.validation_days);
        s.evaluate_start = split.get_int("evaluate_start", s.evaluate_start);
        s.evaluate_end = split.get_int("evaluate_end", s.evaluate_end);
        split.finish();
    }
    {
        ConfigReader sc = r.section("scenario");
        config.scenario_enabled = sc.get_bool("enabled", config.scenario_enabled);
        DriftScenario& d = config.scenario;
        d.kind = drift_kind_from_string(sc.get_string("kind", to_string(d.kind)));
        d.onset_day = sc.get_int("onset_day", 700);
        d.alpha = sc.get_double("alpha", d.alpha);
        d.beta = sc.get_double("beta", d.beta);
        d.gamma = sc.get_double("gamma", d.gamma);
        d.seasonal_factor = sc.get_double("seasonal_factor", d.seasonal_factor);
        d.affected_fraction = sc.get_double("affected_fraction", d.affected_fraction);
        d.affected_region = sc.get_string("affected_region", d.affected_region);
        sc.finish();
    }
    {
        ConfigReader det = r.section("detector");
        DetectorConfig& d = config.detector;
        d.theta_e = det.get_double("theta_e", d.theta_e);
        d.theta_s = det.get_double("theta_s", d.theta_s);
        d.theta_a = det.get_double("theta_a", d.theta_a);
        d.theta_c = det.get_double("theta_c", d.theta_c);
        d.recent_window = det.get_int("recent_window", d.recent_window);
        d.baseline_window = det.get_int("baseline_window", d.baseline_window);
        d.cusum_k = det.get_double("cusum_k", d.cusum_k);
        d.psi_bins = det.get_int("psi_bins", d.psi_bins);
        d.ks_alpha = det.get_double("ks_alpha", d.ks_alpha);
        d.vote_quorum = det.get_int("vote_quorum", d.vote_quorum);
        d.panel_flag_fraction = det.get_double("panel_flag_fraction", d.panel_flag_fraction);
        d.ae_window = det.get_int("ae_window", d.ae_window);
        d.ae_bottleneck = det.get_int("ae_bottleneck", d.ae_bottleneck);
        d.ae_epochs = det.get_int("ae_epochs", d.ae_epochs);
        d.ae_step = det.get_double("ae_step", d.ae_step);
        d.ae_seed = det.get_u64("ae_seed", d.ae_seed);
        det.finish();
    }
    {
        ConfigReader cost = r.section("cost");
        CostModel& c = config.cost;
        c.holding_ratio = cost.get_double("holding_ratio", c.holding_ratio);
        c.stockout_ratio = cost.get_double("stockout_ratio", c.stockout_ratio);
        c.compute_cost_rate = cost.get_double("compute_cost_rate", c.compute_cost_rate);
        c.lambda = cost.get_double("lambda", c.lambda);
        c.tau = cost.get_double("tau", c.tau);
        c.top_k = cost.get_int("top_k", c.top_k);
        cost.finish();
    }
    {
        ConfigReader feat = r.section("features");
        FeatureSpec& f = config.features;
        f.lag_days = feat.get_int_list("lags", f.lag_days);
        f.rolling_windows = feat.get_int_list("rolling", f.rolling_windows);
        f.include_calendar = feat.get_bool("calendar", f.include_calendar);
        f.include_price = feat.get_bool("price", f.include_price);
        feat.finish();
    }
    {
        ConfigReader gbt = r.section("gbt");
        GbtHyper& g = config.gbt;
        g.n_trees = gbt.get_int("n_trees", g.n_trees);
        g.max_depth = gbt.get_int("max_depth", g.max_depth);
        g.learning_rate = gbt.get_double("learning_rate", g.learning_rate);
        g.min_leaf = gbt.get_int("min_leaf", g.min_leaf);
        g.seed = gbt.get_u64("seed", g.seed);
        gbt.finish();
    }
    {
        ConfigReader retrain = r.section("retrain");
        config.window_candidates =
            retrain.get_int_list("window_candidates", config.window_candidates);
        retrain.finish();
    }
    {
        ConfigReader batch = r.section("batch");
        config.batch_seeds = batch.get_int("n_seeds", config.batch_seeds);
        config.severity_sweep = batch.get_bool("severity_sweep", config.severity_sweep);
        config.sweep_alphas = batch.get_double_list("alphas", config.sweep_alphas);
        batch.finish();
    }
    r.finish();

    config.validate();
    return config;
}

RunConfig load_run_config(const std::string& path) {
    return run_config_from_node(load_config_file(path));
}

std::string canonical_config_text(const RunConfig& c) {
    std::ostringstream out;
    auto num = [](double v) { return format_double(v); };
    out << "seed = " << c.seed << "\n";
    out << "out_dir = " << c.out_dir << "\n";
    out << "data {\n";
    out << "  source = " << to_string(c.source) << "\n";
    if (!c.m5_dir.empty()) out << "  m5_dir = " << c.m5_dir << "\n";
    out << "  synth {\n";
    out << "    n_stores = " << c.synth.n_stores << "\n";
    out << "    n_states = " << c.synth.n_states << "\n";
    out << "    n_skus_per_store = " << c.synth.n_skus_per_store << "\n";
    out << "    n_days = " << c.synth.n_days << "\n";
    out << "    weekly_amplitude = " << num(c.synth.weekly_amplitude) << "\n";
    out << "    annual_period_days = " << c.synth.annual_period_days << "\n";
    out << "    annual_amplitude = " << num(c.synth.annual_amplitude) << "\n";
    out << "    base_demand_mean = " << num(c.synth.base_demand_mean) << "\n";
    out << "    noise_dispersion = " << num(c.synth.noise_dispersion) << "\n";
    out << "    holiday_every_n_days = " << c.synth.holiday_every_n_days << "\n";
    out << "  }\n";
    out << "}\n";
    out << "split {\n";
    out << "  train_start = " << c.split.train_start << "\n";
    out << "  train_end = " << c.split.train_end << "\n";
    out << "  monitor_start = " << c.split.monitor_start << "\n";
    out << "  monitor_end = " << c.split.monitor_end << "\n";
    out << "  anchor_step = " << c.split.anchor_step << "\n";
    out << "  validation_days = " << c.split.validation_days << "\n";
    out << "  evaluate_start = " << c.split.evaluate_start << "\n";
    out << "  evaluate_end = " << c.split.evaluate_end << "\n";
    out << "}\n";
    out << "scenario {\n";
    out << "  enabled = " << (c.scenario_enabled ? "true" : "false") << "\n";
    out << "  kind = " << to_string(c.scenario.kind) << "\n";
    out << "  onset_day = " << c.scenario.onset_day << "\n";
    out << "  alpha = " << num(c.scenario.alpha) << "\n";
    out << "  beta = " << num(c.scenario.beta) << "\n";
    out << "  gamma = " << num(c.scenario.gamma) << "\n";
    out << "  seasonal_factor = " << num(c.scenario.seasonal_factor) << "\n";
    out << "  affected_fraction = " << num(c.scenario.affected_fraction) << "\n";
    if (!c.scenario.affected_region.empty()) {
        out << "  affected_region = " << c.scenario.affected_region << "\n";
    }
    out << "}\n";
    out << "detector {\n";
    out << "  theta_e = " << num(c.detector.theta_e) << "\n";
    out << "  theta_s = " << num(c.detector.theta_s) << "\n";
    out << "  theta_a = " << num(c.detector.theta_a) << "\n";
    out << "  theta_c = " << num(c.detector.theta_c) << "\n";
    out << "  recent_window = " << c.detector.recent_window << "\n";
    out << "  baseline_window = " << c.detector.baseline_window << "\n";
    out << "  cusum_k = " << num(c.detector.cusum_k) << "\n";
    out << "  psi_bins = " << c.detector.psi_bins << "\n";
    out << "  ks_alpha = " << num(c.detector.ks_alpha) << "\n";
    out << "  vote_quorum = " << c.detector.vote_quorum << "\n";
    out << "  panel_flag_fraction = " << num(c.detector.panel_flag_fraction) << "\n";
    out << "  ae_window = " << c.detector.ae_window << "\n";
    out << "  ae_bottleneck = " << c.detector.ae_bottleneck << "\n";
    out << "  ae_epochs = " << c.detector.ae_epochs << "\n";
    out << "  ae_step = " << num(c.detector.ae_step) << "\n";
    out << "  ae_seed = " << c.detector.ae_seed << "\n";
    out << "}\n";
    out << "cost {\n";
    out << "  holding_ratio = " << num(c.cost.holding_ratio) << "\n";
    out << "  stockout_ratio = " << num(c.cost.stockout_ratio) << "\n";
    out << "  compute_cost_rate = " << num(c.cost.compute_cost_rate) << "\n";
    out << "  lambda = " << num(c.cost.lambda) << "\n";
    out << "  tau = " << num(c.cost.tau) << "\n";
    out << "  top_k = " << c.cost.top_k << "\n";
    out << "}\n";
    out << "features {\n";
    out << "  lags =";
    for (int lag : c.features.lag_days) out << " " << lag;
    out << "\n  rolling =";
    for (int w : c.features.rolling_windows) out << " " << w;
    out << "\n  calendar = " << (c.features.include_calendar ? "true" : "false") << "\n";
    out << "  price = " << (c.features.include_price ? "true" : "false") << "\n";
    out << "}\n";
    out << "gbt {\n";
    out << "  n_trees = " << c.gbt.n_trees << "\n";
    out << "  max_depth = " << c.gbt.max_depth << "\n";
    out << "  learning_rate = " << num(c.gbt.learning_rate) << "\n";
    out << "  min_leaf = " << c.gbt.min_leaf << "\n";
    out << "  seed = " << c.gbt.seed << "\n";
    out << "}\n";
    out << "retrain {\n";
    out << "  window_candidates =";
    for (int w : c.window_candidates) out << " " << w;
    out << "\n}\n";
    out << "batch {\n";
    out << "  n_seeds = " << c.batch_seeds << "\n";
    out << "  severity_sweep = " << (c.severity_sweep ? "true" : "false") << "\n";
    out << "  alphas =";
    for (double a : c.sweep_alphas) out << " " << num(a);
    out << "\n}\n";
    return out.str();
}

std::uint64_t config_hash(const RunConfig& config) {
    return fnv1a64(canonical_config_text(config));
}

}  // namespace driftguard
