#include "driftguard/diagnose.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "driftguard/errors.hpp"
#include "driftguard/rng.hpp"
#include "driftguard/text.hpp"

namespace driftguard {

namespace {

constexpr int kExactSubsetLimit = 16;

void validate_attribution_inputs(const std::vector<std::string>& feature_names,
                                 const std::vector<double>& instance,
                                 const std::vector<std::vector<double>>& background,
                                 const char* who) {
    const std::size_t n = feature_names.size();
    if (n == 0) throw ValidationError(std::string(who) + ": no features to attribute");
    if (instance.size() != n) {
        throw ValidationError(std::string(who) + ": instance has " +
                              std::to_string(instance.size()) + " features, expected " +
                              std::to_string(n));
    }
    if (background.empty()) throw ValidationError(std::string(who) + ": background is empty");
    for (const auto& row : background) {
        if (row.size() != n) {
            throw ValidationError(std::string(who) + ": background row width " +
                                  std::to_string(row.size()) + " != " + std::to_string(n));
        }
    }
}

double mean_background_prediction(const PredictFn& f,
                                  const std::vector<std::vector<double>>& background) {
    double sum = 0.0;
    for (const auto& row : background) sum += f(row.data());
    return sum / static_cast<double>(background.size());
}

}  // namespace

ShapResult shapley_exact(const PredictFn& f, const std::vector<std::string>& feature_names,
                         const std::vector<double>& instance,
                         const std::vector<std::vector<double>>& background,
                         const std::vector<int>& feature_subset) {
    validate_attribution_inputs(feature_names, instance, background, "shapley_exact");
    const int n = static_cast<int>(feature_names.size());
    const int k = static_cast<int>(feature_subset.size());
    if (k > kExactSubsetLimit) {
        throw ValidationError(
            "shapley_exact: subset of " + std::to_string(k) + " features exceeds the " +
            std::to_string(kExactSubsetLimit) +
            "-feature enumeration bound; use shapley_sampled for wider attributions");
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (int idx : feature_subset) {
        if (idx < 0 || idx >= n) {
            throw ValidationError("shapley_exact: feature index " + std::to_string(idx) +
                                  " out of range");
        }
        if (seen[static_cast<std::size_t>(idx)]++) {
            throw ValidationError("shapley_exact: duplicate feature index " + std::to_string(idx));
        }
    }

    // Coalition values for every subset mask: predictions averaged over the
    // background with masked-in features (and everything outside the subset)
    // taken from the instance.
    const std::size_t n_masks = std::size_t{1} << k;
    std::vector<double> value(n_masks, 0.0);
    std::vector<double> row(instance.begin(), instance.end());
    for (const auto& bg : background) {
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            for (int j = 0; j < k; ++j) {
                const int feat = feature_subset[static_cast<std::size_t>(j)];
                row[static_cast<std::size_t>(feat)] =
                    (mask >> j) & 1 ? instance[static_cast<std::size_t>(feat)]
                                    : bg[static_cast<std::size_t>(feat)];
            }
            value[mask] += f(row.data());
        }
        for (int feat : feature_subset) {
            row[static_cast<std::size_t>(feat)] = instance[static_cast<std::size_t>(feat)];
        }
    }
    const double inv_bg = 1.0 / static_cast<double>(background.size());
    for (double& v : value) v *= inv_bg;

    // weight(s) = s! * (k-1-s)! / k! for a coalition of size s joined by one
    // more feature; exact in double for k <= 16.
    std::vector<double> weight(static_cast<std::size_t>(std::max(k, 1)), 0.0);
    double k_fact = 1.0;
    for (int i = 2; i <= k; ++i) k_fact *= i;
    for (int s = 0; s < k; ++s) {
        double s_fact = 1.0;
        for (int i = 2; i <= s; ++i) s_fact *= i;
        double rest_fact = 1.0;
        for (int i = 2; i <= k - 1 - s; ++i) rest_fact *= i;
        weight[static_cast<std::size_t>(s)] = s_fact * rest_fact / k_fact;
    }

    ShapResult out;
    for (const auto& name : feature_names) out.phi[name] = 0.0;
    for (int j = 0; j < k; ++j) {
        const std::size_t bit = std::size_t{1} << j;
        double phi = 0.0;
        for (std::size_t mask = 0; mask < n_masks; ++mask) {
            if (mask & bit) continue;
            const int s = std::popcount(mask);
            phi += weight[static_cast<std::size_t>(s)] * (value[mask | bit] - value[mask]);
        }
        out.phi[feature_names[static_cast<std::size_t>(feature_subset[static_cast<std::size_t>(j)])]] =
            phi;
    }
    out.base_value = value[0];
    out.prediction = f(instance.data());
    return out;
}

ShapResult shapley_sampled(const PredictFn& f, const std::vector<std::string>& feature_names,
                           const std::vector<double>& instance,
                           const std::vector<std::vector<double>>& background,
                           int n_permutations, std::uint64_t seed) {
    validate_attribution_inputs(feature_names, instance, background, "shapley_sampled");
    if (n_permutations < 50) {
        throw ValidationError("shapley_sampled: need at least 50 permutations, got " +
                              std::to_string(n_permutations));
    }
    const int n = static_cast<int>(feature_names.size());
    const std::size_t n_bg = background.size();

    std::mt19937_64 rng = make_engine(seed, 0);
    std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> row(static_cast<std::size_t>(n), 0.0);

    for (int p = 0; p < n_permutations; ++p) {
        const std::size_t b = bounded_uniform(rng, n_bg);
        // Fisher-Yates; the draw order is fixed so results are reproducible
        // across platforms.
        for (int i = n - 1; i > 0; --i) {
            const std::size_t j = bounded_uniform(rng, static_cast<std::uint64_t>(i) + 1);
            std::swap(perm[static_cast<std::size_t>(i)], perm[j]);
        }
        row = background[b];
        double prev = f(row.data());
        for (int i = 0; i < n; ++i) {
            const int feat = perm[static_cast<std::size_t>(i)];
            row[static_cast<std::size_t>(feat)] = instance[static_cast<std::size_t>(feat)];
            const double cur = f(row.data());
            phi[static_cast<std::size_t>(feat)] += cur - prev;
            prev = cur;
        }
    }
    const double inv_p = 1.0 / static_cast<double>(n_permutations);
    for (double& v : phi) v *= inv_p;

    ShapResult out;
    out.base_value = mean_background_prediction(f, background);
    out.prediction = f(instance.data());

    // Restore the efficiency identity: spread the estimator's leftover gap
    // across features in proportion to their estimated magnitude (equally if
    // every estimate is zero).
    double sum_phi = 0.0, sum_abs = 0.0;
    for (double v : phi) {
        sum_phi += v;
        sum_abs += std::abs(v);
    }
    const double residual = (out.prediction - out.base_value) - sum_phi;
    if (sum_abs > 0.0) {
        for (double& v : phi) v += residual * std::abs(v) / sum_abs;
    } else if (residual != 0.0) {
        for (double& v : phi) v += residual / static_cast<double>(n);
    }
    for (int i = 0; i < n; ++i) {
        out.phi[feature_names[static_cast<std::size_t>(i)]] = phi[static_cast<std::size_t>(i)];
    }
    return out;
}

namespace {

PredictFn wrap_model(const GbtModel& model) {
    return [&model](const double* x) { return model.predict_row(x); };
}

const std::vector<std::string>& model_names(const GbtModel& model, const char* who) {
    if (model.feature_names.empty()) {
        throw ValidationError(std::string(who) + ": model has no feature names");
    }
    return model.feature_names;
}

}  // namespace

ShapResult shapley_exact(const GbtModel& model, const std::vector<double>& instance,
                         const std::vector<std::vector<double>>& background,
                         const std::vector<int>& feature_subset) {
    return shapley_exact(wrap_model(model), model_names(model, "shapley_exact"), instance,
                         background, feature_subset);
}

ShapResult shapley_sampled(const GbtModel& model, const std::vector<double>& instance,
                           const std::vector<std::vector<double>>& background,
                           int n_permutations, std::uint64_t seed) {
    return shapley_sampled(wrap_model(model), model_names(model, "shapley_sampled"), instance,
                           background, n_permutations, seed);
}

namespace {

// Uniform subsample of {0..n-1} of size cap (all indices if n <= cap),
// returned in ascending order. Deterministic in the engine's state.
std::vector<std::size_t> pick_instances(std::size_t n, int cap, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (cap > 0 && n > static_cast<std::size_t>(cap)) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(cap); ++i) {
            const std::size_t j = i + bounded_uniform(rng, n - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(static_cast<std::size_t>(cap));
        std::sort(idx.begin(), idx.end());
    }
    return idx;
}

// Mean |phi| per feature over the selected instances of one period. Both
// periods run through here with the same seeds, so identical inputs give
// identical means.
std::vector<double> period_mean_abs_phi(const PredictFn& f,
                                        const std::vector<std::string>& feature_names,
                                        const std::vector<std::vector<double>>& instances,
                                        const std::vector<std::vector<double>>& background,
                                        const DeltaPhiOptions& options, const char* period) {
    if (instances.empty()) {
        throw ValidationError(std::string("delta_phi: ") + period + " period has no instances");
    }
    std::mt19937_64 pick_rng = make_engine(options.seed, 1);
    const std::vector<std::size_t> chosen =
        pick_instances(instances.size(), options.instance_cap, pick_rng);
    std::vector<double> mean(feature_names.size(), 0.0);
    for (std::size_t pos = 0; pos < chosen.size(); ++pos) {
        const ShapResult r =
            shapley_sampled(f, feature_names, instances[chosen[pos]], background,
                            options.n_permutations, mix_seed(options.seed, 100 + pos));
        std::size_t i = 0;
        for (const auto& name : feature_names) {
            mean[i++] += std::abs(r.phi.at(name));
        }
    }
    for (double& v : mean) v /= static_cast<double>(chosen.size());
    return mean;
}

}  // namespace

std::vector<DeltaPhi> delta_phi(const PredictFn& f, const std::vector<std::string>& feature_names,
                                const std::vector<std::vector<double>>& baseline_instances,
                                const std::vector<std::vector<double>>& drift_instances,
                                const std::vector<std::vector<double>>& background,
                                const DeltaPhiOptions& options) {
    if (options.instance_cap < 1) throw ValidationError("delta_phi: instance_cap must be >= 1");
    const std::vector<double> base_mean = period_mean_abs_phi(
        f, feature_names, baseline_instances, background, options, "baseline");
    const std::vector<double> drift_mean =
        period_mean_abs_phi(f, feature_names, drift_instances, background, options, "drift");
    std::vector<DeltaPhi> out(feature_names.size());
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
        out[i].feature = feature_names[i];
        out[i].baseline_mean_phi = base_mean[i];
        out[i].drift_mean_phi = drift_mean[i];
        out[i].delta = drift_mean[i] - base_mean[i];
    }
    return out;
}

std::vector<DeltaPhi> delta_phi(const GbtModel& model,
                                const std::vector<std::vector<double>>& baseline_instances,
                                const std::vector<std::vector<double>>& drift_instances,
                                const std::vector<std::vector<double>>& background,
                                const DeltaPhiOptions& options) {
    return delta_phi(wrap_model(model), model_names(model, "delta_phi"), baseline_instances,
                     drift_instances, background, options);
}

std::vector<DeltaPhi> top_features_by_weight(const std::vector<DeltaPhi>& deltas, int k) {
    if (k < 0) throw ValidationError("top_features_by_weight: k must be >= 0");
    std::vector<std::size_t> order(deltas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return deltas[a].baseline_mean_phi + deltas[a].drift_mean_phi >
               deltas[b].baseline_mean_phi + deltas[b].drift_mean_phi;
    });
    const std::size_t take = std::min(order.size(), static_cast<std::size_t>(k));
    std::vector<DeltaPhi> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(deltas[order[i]]);
    return out;
}

DiagnosticMap hierarchical_impact(const std::vector<double>& wmape_baseline,
                                  const std::vector<double>& wmape_drift,
                                  const Hierarchy& hierarchy, const Panel& panel,
                                  int window_start, int window_end) {
    const int n_series = hierarchy.n_series();
    if (panel.n_series() != n_series) {
        throw ValidationError("hierarchical_impact: hierarchy covers " +
                              std::to_string(n_series) + " series, panel has " +
                              std::to_string(panel.n_series()));
    }
    if (static_cast<int>(wmape_baseline.size()) != n_series ||
        static_cast<int>(wmape_drift.size()) != n_series) {
        throw ValidationError(
            "hierarchical_impact: per-series metrics must cover every series exactly once");
    }
    if (window_start < 0 || window_end >= panel.n_days() || window_start > window_end) {
        throw ValidationError("hierarchical_impact: bad sales window [" +
                              std::to_string(window_start) + ", " + std::to_string(window_end) +
                              "]");
    }

    // Sales totals per series over the drift window; these are the
    // aggregation weights all the way up.
    std::vector<double> series_sales(static_cast<std::size_t>(n_series), 0.0);
    for (int s = 0; s < n_series; ++s) {
        double sum = 0.0;
        for (int d = window_start; d <= window_end; ++d) sum += panel.sales_at(s, d);
        series_sales[static_cast<std::size_t>(s)] = sum;
    }

    const int n_nodes = static_cast<int>(hierarchy.nodes().size());
    DiagnosticMap map;
    map.severity.assign(static_cast<std::size_t>(n_nodes),
                        std::numeric_limits<double>::quiet_NaN());
    std::vector<double> node_sales(static_cast<std::size_t>(n_nodes), 0.0);
    std::vector<char> done(static_cast<std::size_t>(n_nodes), 0);

    auto fill = [&](auto&& self, int id) -> void {
        if (done[static_cast<std::size_t>(id)]) return;
        const HierarchyNode& node = hierarchy.node(id);
        if (node.children.empty()) {
            const int s = node.leaf_series.at(0);
            node_sales[static_cast<std::size_t>(id)] = series_sales[static_cast<std::size_t>(s)];
            map.severity[static_cast<std::size_t>(id)] =
                wmape_drift[static_cast<std::size_t>(s)] -
                wmape_baseline[static_cast<std::size_t>(s)];
        } else {
            double weighted = 0.0, weight_total = 0.0, sales = 0.0;
            for (int c : node.children) {
                self(self, c);
                sales += node_sales[static_cast<std::size_t>(c)];
                const double sev = map.severity[static_cast<std::size_t>(c)];
                if (std::isnan(sev)) continue;  // undefined child: excluded with its weight
                weighted += sev * node_sales[static_cast<std::size_t>(c)];
                weight_total += node_sales[static_cast<std::size_t>(c)];
            }
            node_sales[static_cast<std::size_t>(id)] = sales;
            if (weight_total > 0.0) {
                map.severity[static_cast<std::size_t>(id)] = weighted / weight_total;
            }
            // else: no child carries sales in the window; severity stays NaN.
        }
        done[static_cast<std::size_t>(id)] = 1;
    };
    for (int id = 0; id < n_nodes; ++id) fill(fill, id);
    return map;
}

namespace {

std::string severity_cell(double sev) {
    if (std::isnan(sev)) return "    n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+5.1fpp", sev * 100.0);
    return buf;
}

void render_node(const DiagnosticMap& map, const Hierarchy& hierarchy, int id, int depth,
                 std::size_t label_width, std::string& out) {
    const HierarchyNode& node = hierarchy.node(id);
    std::string label(static_cast<std::size_t>(depth) * 2, ' ');
    label += node.label.empty() ? std::string(to_string(node.level)) : node.label;
    if (label.size() < label_width) label.resize(label_width, ' ');
    out += label;
    out += "  ";
    out += severity_cell(map.severity[static_cast<std::size_t>(id)]);
    out += '\n';
    // Leaves are one per series; printing hundreds of them drowns the map, so
    // the text view stops at the level above (the document form keeps all).
    for (int c : node.children) {
        if (hierarchy.node(c).children.empty()) return;
    }
    for (int c : node.children) {
        render_node(map, hierarchy, c, depth + 1, label_width, out);
    }
}

std::size_t branch_label_width(const Hierarchy& hierarchy, int id, int depth) {
    const HierarchyNode& node = hierarchy.node(id);
    std::size_t w = static_cast<std::size_t>(depth) * 2 +
                    (node.label.empty() ? std::string(to_string(node.level)).size()
                                        : node.label.size());
    for (int c : node.children) {
        if (hierarchy.node(c).children.empty()) continue;
        w = std::max(w, branch_label_width(hierarchy, c, depth + 1));
    }
    return w;
}

}  // namespace

std::string render_diagnostic_map(const DiagnosticMap& map, const Hierarchy& hierarchy) {
    if (map.severity.size() != hierarchy.nodes().size()) {
        throw ValidationError("render_diagnostic_map: severity list does not match hierarchy");
    }
    std::string out;
    out += "Accuracy impact by hierarchy node (WMAPE change, percentage points)\n";
    std::size_t width = branch_label_width(hierarchy, hierarchy.root(), 0);
    for (int c : hierarchy.category_roots()) {
        width = std::max(width, branch_label_width(hierarchy, c, 0));
    }
    render_node(map, hierarchy, hierarchy.root(), 0, width, out);
    if (!hierarchy.category_roots().empty()) {
        out += "-- product rollup --\n";
        for (int c : hierarchy.category_roots()) {
            render_node(map, hierarchy, c, 0, width, out);
        }
    }
    if (!map.top_features.empty()) {
        out += "\nTop feature attribution shifts (mean |phi|)\n";
        std::size_t name_w = 7;
        for (const auto& d : map.top_features) name_w = std::max(name_w, d.feature.size());
        for (const auto& d : map.top_features) {
            std::string name = d.feature;
            name.resize(name_w, ' ');
            char buf[96];
            std::snprintf(buf, sizeof buf, "  baseline %9.4f  drift %9.4f  delta %+9.4f",
                          d.baseline_mean_phi, d.drift_mean_phi, d.delta);
            out += name;
            out += buf;
            out += '\n';
        }
    }
    return out;
}

namespace {

nlohmann::ordered_json node_to_json(const DiagnosticMap& map, const Hierarchy& hierarchy,
                                    int id) {
    const HierarchyNode& node = hierarchy.node(id);
    nlohmann::ordered_json j;
    j["level"] = to_string(node.level);
    j["label"] = node.label;
    const double sev = map.severity[static_cast<std::size_t>(id)];
    if (std::isnan(sev)) {
        j["severity"] = nullptr;
    } else {
        j["severity"] = sev;
    }
    if (node.children.empty()) {
        j["series"] = node.leaf_series.at(0);
    } else {
        nlohmann::ordered_json kids = nlohmann::ordered_json::array();
        for (int c : node.children) kids.push_back(node_to_json(map, hierarchy, c));
        j["children"] = std::move(kids);
    }
    return j;
}

void collect_severities(const nlohmann::json& j, const Hierarchy& hierarchy, int id,
                        std::vector<double>& severity) {
    const HierarchyNode& node = hierarchy.node(id);
    if (!j.is_object() || !j.contains("severity")) {
        throw SchemaError("diagnostic map: node record missing severity");
    }
    if (j.at("label").get<std::string>() != node.label) {
        throw SchemaError("diagnostic map: node label '" + j.at("label").get<std::string>() +
                          "' does not match hierarchy node '" + node.label + "'");
    }
    const auto& sev = j.at("severity");
    severity[static_cast<std::size_t>(id)] =
        sev.is_null() ? std::numeric_limits<double>::quiet_NaN() : sev.get<double>();
    if (!node.children.empty()) {
        const auto& kids = j.at("children");
        if (!kids.is_array() || kids.size() != node.children.size()) {
            throw SchemaError("diagnostic map: children of '" + node.label +
                              "' do not match the hierarchy");
        }
        for (std::size_t i = 0; i < kids.size(); ++i) {
            collect_severities(kids[i], hierarchy, node.children[i], severity);
        }
    }
}

}  // namespace

void write_diagnostic_map(const DiagnosticMap& map, const Hierarchy& hierarchy,
                          const std::string& path) {
    if (map.severity.size() != hierarchy.nodes().size()) {
        throw ValidationError("write_diagnostic_map: severity list does not match hierarchy");
    }
    nlohmann::ordered_json doc;
    doc["format"] = "diagnostic-map/1";
    doc["geographic"] = node_to_json(map, hierarchy, hierarchy.root());
    nlohmann::ordered_json product = nlohmann::ordered_json::array();
    for (int c : hierarchy.category_roots()) product.push_back(node_to_json(map, hierarchy, c));
    doc["product"] = std::move(product);
    nlohmann::ordered_json feats = nlohmann::ordered_json::array();
    for (const auto& d : map.top_features) {
        feats.push_back({{"feature", d.feature},
                         {"baseline_mean_phi", d.baseline_mean_phi},
                         {"drift_mean_phi", d.drift_mean_phi},
                         {"delta", d.delta}});
    }
    doc["top_features"] = std::move(feats);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path);
}

DiagnosticMap read_diagnostic_map(const std::string& path, const Hierarchy& hierarchy) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("diagnostic map " + path + ": " + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != "diagnostic-map/1") {
            throw SchemaError("diagnostic map " + path + ": unknown format");
        }
        DiagnosticMap map;
        map.severity.assign(hierarchy.nodes().size(),
                            std::numeric_limits<double>::quiet_NaN());
        collect_severities(doc.at("geographic"), hierarchy, hierarchy.root(), map.severity);
        const auto& product = doc.at("product");
        if (!product.is_array() || product.size() != hierarchy.category_roots().size()) {
            throw SchemaError("diagnostic map: product branch does not match the hierarchy");
        }
        for (std::size_t i = 0; i < product.size(); ++i) {
            collect_severities(product[i], hierarchy, hierarchy.category_roots()[i],
                               map.severity);
        }
        for (const auto& f : doc.at("top_features")) {
            DeltaPhi d;
            d.feature = f.at("feature").get<std::string>();
            d.baseline_mean_phi = f.at("baseline_mean_phi").get<double>();
            d.drift_mean_phi = f.at("drift_mean_phi").get<double>();
            d.delta = f.at("delta").get<double>();
            map.top_features.push_back(std::move(d));
        }
        return map;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("diagnostic map " + path + ": " + e.what());
    }
}

}  // namespace driftguard
