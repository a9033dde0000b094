#include "driftguard/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "driftguard/errors.hpp"
#include "driftguard/text.hpp"

namespace driftguard {

void GbtHyper::validate() const {
    if (n_trees < 0) throw ValidationError("gbt: n_trees must be >= 0");
    if (max_depth < 1) throw ValidationError("gbt: max_depth must be >= 1");
    if (!(learning_rate > 0.0) || learning_rate > 1.0) {
        throw ValidationError("gbt: learning_rate must be in (0, 1]");
    }
    if (min_leaf < 1) throw ValidationError("gbt: min_leaf must be >= 1");
}

double GbtModel::predict_row(const double* x) const {
    double acc = 0.0;
    for (const RegressionTree& tree : trees) acc += tree.eval(x);
    return base_score + learning_rate * acc;
}

double predict(const GbtModel& model, const FeatureVector& x) {
    if (static_cast<int>(x.values.size()) != model.n_features()) {
        throw ValidationError("gbt predict: feature vector has " +
                              std::to_string(x.values.size()) + " values, model expects " +
                              std::to_string(model.n_features()));
    }
    return model.predict_row(x.values.data());
}

namespace {

constexpr int kMaxBins = 256;

// Per-feature value -> small integer codes.  Cut points are actual data
// values, so every bin is occupied and bin b+1's smallest value is a valid
// "x < threshold" split boundary separating bins <= b from bins > b.
struct BinnedMatrix {
    int n_rows = 0;
    int n_features = 0;
    std::vector<std::uint8_t> codes;          // row-major [row][feature]
    std::vector<std::vector<double>> cuts;    // per feature, ascending
    std::vector<std::vector<double>> bin_min; // per feature, smallest value in each bin
    std::vector<int> n_bins;                  // per feature

    std::uint8_t code(int row, int feature) const {
        return codes[static_cast<std::size_t>(row) * n_features + feature];
    }
};

BinnedMatrix bin_features(const std::vector<double>& X, int n_rows, int n_features) {
    BinnedMatrix bm;
    bm.n_rows = n_rows;
    bm.n_features = n_features;
    bm.codes.resize(static_cast<std::size_t>(n_rows) * n_features);
    bm.cuts.resize(n_features);
    bm.bin_min.resize(n_features);
    bm.n_bins.resize(n_features);

    std::vector<double> column(n_rows);
    for (int f = 0; f < n_features; ++f) {
        for (int r = 0; r < n_rows; ++r) {
            column[r] = X[static_cast<std::size_t>(r) * n_features + f];
        }
        std::vector<double> sorted = column;
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> distinct = sorted;
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

        std::vector<double>& cuts = bm.cuts[f];
        if (static_cast<int>(distinct.size()) <= kMaxBins) {
            // Exact binning: one bin per distinct value.
            cuts.assign(distinct.begin(), distinct.end() - 1);
        } else {
            // Quantile cuts; duplicates collapse, the max never becomes a cut
            // so the last bin stays occupied.
            for (int b = 1; b < kMaxBins; ++b) {
                const double v = sorted[static_cast<std::size_t>(b) * n_rows / kMaxBins];
                if (v < sorted.back() && (cuts.empty() || v > cuts.back())) cuts.push_back(v);
            }
        }

        const int nb = static_cast<int>(cuts.size()) + 1;
        bm.n_bins[f] = nb;
        std::vector<double>& bmin = bm.bin_min[f];
        bmin.assign(nb, std::numeric_limits<double>::infinity());
        for (int r = 0; r < n_rows; ++r) {
            const double v = column[r];
            const int b = static_cast<int>(
                std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
            bm.codes[static_cast<std::size_t>(r) * n_features + f] = static_cast<std::uint8_t>(b);
            bmin[b] = std::min(bmin[b], v);
        }
    }
    return bm;
}

struct Histogram {
    std::vector<double> sum;  // [feature * kMaxBins + bin] residual totals
    std::vector<int> count;

    explicit Histogram(int n_features)
        : sum(static_cast<std::size_t>(n_features) * kMaxBins, 0.0),
          count(static_cast<std::size_t>(n_features) * kMaxBins, 0) {}

    void accumulate(const BinnedMatrix& bm, const std::vector<int>& rows,
                    const std::vector<double>& residual) {
        for (int r : rows) {
            const std::uint8_t* row_codes = &bm.codes[static_cast<std::size_t>(r) * bm.n_features];
            const double g = residual[r];
            for (int f = 0; f < bm.n_features; ++f) {
                const std::size_t slot = static_cast<std::size_t>(f) * kMaxBins + row_codes[f];
                sum[slot] += g;
                count[slot] += 1;
            }
        }
    }

    void subtract(const Histogram& other) {
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] -= other.sum[i];
            count[i] -= other.count[i];
        }
    }
};

struct SplitChoice {
    bool found = false;
    int feature = -1;
    int last_left_bin = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

// Best variance-reduction split: maximizes sumL^2/nL + sumR^2/nR (the parent
// term is constant).  Scanning features then bins in ascending order with a
// strict improvement test makes ties resolve to the lowest feature index and
// lowest threshold.
SplitChoice find_split(const BinnedMatrix& bm, const Histogram& hist, double node_sum,
                       int node_count, int min_leaf) {
    SplitChoice best;
    const double parent_term = node_sum * node_sum / node_count;
    for (int f = 0; f < bm.n_features; ++f) {
        const double* sums = &hist.sum[static_cast<std::size_t>(f) * kMaxBins];
        const int* counts = &hist.count[static_cast<std::size_t>(f) * kMaxBins];
        const int nb = bm.n_bins[f];
        double sum_left = 0.0;
        int count_left = 0;
        for (int b = 0; b + 1 < nb; ++b) {
            sum_left += sums[b];
            count_left += counts[b];
            if (count_left < min_leaf) continue;
            const int count_right = node_count - count_left;
            if (count_right < min_leaf) break;
            if (counts[b] == 0) continue;  // same partition as an earlier boundary
            const double sum_right = node_sum - sum_left;
            const double gain =
                sum_left * sum_left / count_left + sum_right * sum_right / count_right - parent_term;
            if (gain > best.gain + 1e-12) {
                // Threshold: smallest value of the next bin this node occupies.
                int nb_next = b + 1;
                while (counts[nb_next] == 0) ++nb_next;
                best.found = true;
                best.feature = f;
                best.last_left_bin = b;
                best.threshold = bm.bin_min[f][nb_next];
                best.gain = gain;
            }
        }
    }
    return best;
}

struct TreeBuilder {
    const BinnedMatrix& bm;
    const std::vector<double>& residual;
    const GbtHyper& hyper;
    RegressionTree tree;
    std::vector<int>& leaf_of_row;

    void grow(int node_id, std::vector<int> rows, Histogram hist, double node_sum, int depth) {
        const int node_count = static_cast<int>(rows.size());
        const SplitChoice split =
            depth >= hyper.max_depth || node_count < 2 * hyper.min_leaf
                ? SplitChoice{}
                : find_split(bm, hist, node_sum, node_count, hyper.min_leaf);
        if (!split.found) {
            tree.nodes[node_id].feature = -1;
            tree.nodes[node_id].leaf = node_sum / node_count;
            for (int r : rows) leaf_of_row[r] = node_id;
            return;
        }

        std::vector<int> left_rows, right_rows;
        left_rows.reserve(rows.size());
        right_rows.reserve(rows.size());
        for (int r : rows) {
            (bm.code(r, split.feature) <= split.last_left_bin ? left_rows : right_rows).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();

        const int left_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const int right_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        TreeNode& node = tree.nodes[node_id];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = left_id;
        node.right = right_id;

        // Build the smaller child's histogram directly; derive the larger one
        // by subtracting it from the parent's.
        const bool left_smaller = left_rows.size() <= right_rows.size();
        Histogram small(bm.n_features);
        small.accumulate(bm, left_smaller ? left_rows : right_rows, residual);
        double small_sum = 0.0;
        for (int r : (left_smaller ? left_rows : right_rows)) small_sum += residual[r];
        Histogram large = std::move(hist);
        large.subtract(small);
        const double large_sum = node_sum - small_sum;

        if (left_smaller) {
            grow(left_id, std::move(left_rows), std::move(small), small_sum, depth + 1);
            grow(right_id, std::move(right_rows), std::move(large), large_sum, depth + 1);
        } else {
            grow(left_id, std::move(left_rows), std::move(large), large_sum, depth + 1);
            grow(right_id, std::move(right_rows), std::move(small), small_sum, depth + 1);
        }
    }
};

}  // namespace

GbtModel train_gbt(const std::vector<double>& features, int n_features,
                   const std::vector<double>& targets, const GbtHyper& hyper) {
    hyper.validate();
    if (n_features < 1) throw ValidationError("gbt: n_features must be >= 1");
    const int n_rows = static_cast<int>(targets.size());
    if (features.size() != static_cast<std::size_t>(n_rows) * n_features) {
        throw ValidationError("gbt: feature matrix size does not match targets");
    }
    if (n_rows < 2 * hyper.min_leaf) {
        throw ValidationError("gbt: need at least 2*min_leaf = " +
                              std::to_string(2 * hyper.min_leaf) + " rows, got " +
                              std::to_string(n_rows));
    }

    GbtModel model;
    model.learning_rate = hyper.learning_rate;

    double sum = 0.0;
    for (double y : targets) sum += y;
    model.base_score = sum / n_rows;

    const auto [mn, mx] = std::minmax_element(targets.begin(), targets.end());
    if (*mn == *mx) {
        model.base_score = *mn;  // exactly the shared value, not a mean rounding
        return model;
    }

    const BinnedMatrix bm = bin_features(features, n_rows, n_features);

    std::vector<double> residual(n_rows);
    for (int r = 0; r < n_rows; ++r) residual[r] = targets[r] - model.base_score;
    std::vector<int> leaf_of_row(n_rows, 0);
    std::vector<int> all_rows(n_rows);
    for (int r = 0; r < n_rows; ++r) all_rows[r] = r;

    for (int k = 0; k < hyper.n_trees; ++k) {
        Histogram root_hist(n_features);
        root_hist.accumulate(bm, all_rows, residual);
        double root_sum = 0.0;
        for (double g : residual) root_sum += g;

        TreeBuilder builder{bm, residual, hyper, {}, leaf_of_row};
        builder.tree.nodes.emplace_back();
        builder.grow(0, all_rows, std::move(root_hist), root_sum, 0);

        if (builder.tree.nodes.size() == 1) break;  // residuals carry no structure

        for (int r = 0; r < n_rows; ++r) {
            residual[r] -= hyper.learning_rate * builder.tree.nodes[leaf_of_row[r]].leaf;
        }
        model.trees.push_back(std::move(builder.tree));
    }
    return model;
}

namespace {

std::string join_ints(const std::vector<int>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(xs[i]);
    }
    return out;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(static_cast<int>(parse_long(s.substr(pos, comma - pos))));
        pos = comma + 1;
    }
    return out;
}

}  // namespace

void save_gbt(const GbtModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "driftguard-gbt v1\n";
    out << "learning_rate " << format_double(model.learning_rate) << '\n';
    out << "base_score " << format_double(model.base_score) << '\n';
    out << "trained_window " << model.trained_start << ' ' << model.trained_end << '\n';
    out << "lags " << join_ints(model.feature_spec.lag_days) << '\n';
    out << "windows " << join_ints(model.feature_spec.rolling_windows) << '\n';
    out << "calendar " << (model.feature_spec.include_calendar ? 1 : 0) << '\n';
    out << "price " << (model.feature_spec.include_price ? 1 : 0) << '\n';
    out << "n_trees " << model.trees.size() << '\n';
    for (std::size_t k = 0; k < model.trees.size(); ++k) {
        const RegressionTree& tree = model.trees[k];
        out << "tree " << k << ' ' << tree.nodes.size() << '\n';
        for (const TreeNode& node : tree.nodes) {
            if (node.feature < 0) {
                out << "l " << format_double(node.leaf) << '\n';
            } else {
                out << "n " << node.feature << ' ' << format_double(node.threshold) << ' '
                    << node.left << ' ' << node.right << '\n';
            }
        }
    }
    out << "end\n";
    if (!out) throw IoError("write failed: " + path);
}

namespace {

std::string next_line(std::ifstream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("model file truncated: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> parts;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) parts.push_back(tok);
    return parts;
}

std::string expect_field(std::ifstream& in, const std::string& key, const std::string& path) {
    const std::string line = next_line(in, path);
    if (line.size() < key.size() + 1 || line.compare(0, key.size(), key) != 0 ||
        line[key.size()] != ' ') {
        throw SchemaError("model file: expected \"" + key + " ...\", got \"" + line + "\"");
    }
    return line.substr(key.size() + 1);
}

}  // namespace

GbtModel load_gbt(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string line = next_line(in, path);
    if (line != "driftguard-gbt v1") {
        throw IoError("unsupported model file version: \"" + line + "\"");
    }
    GbtModel model;
    model.learning_rate = parse_double(expect_field(in, "learning_rate", path));
    model.base_score = parse_double(expect_field(in, "base_score", path));
    {
        auto parts = split_ws(expect_field(in, "trained_window", path));
        if (parts.size() != 2) throw SchemaError("model file: bad trained_window");
        model.trained_start = static_cast<int>(parse_long(parts[0]));
        model.trained_end = static_cast<int>(parse_long(parts[1]));
    }
    model.feature_spec.lag_days = split_ints(expect_field(in, "lags", path));
    model.feature_spec.rolling_windows = split_ints(expect_field(in, "windows", path));
    model.feature_spec.include_calendar = parse_long(expect_field(in, "calendar", path)) != 0;
    model.feature_spec.include_price = parse_long(expect_field(in, "price", path)) != 0;
    model.feature_spec.validate();
    model.feature_names = model.feature_spec.feature_names();

    const long n_trees = parse_long(expect_field(in, "n_trees", path));
    for (long k = 0; k < n_trees; ++k) {
        auto parts = split_ws(next_line(in, path));
        if (parts.size() != 3 || parts[0] != "tree" || parse_long(parts[1]) != k) {
            throw SchemaError("model file: bad tree header for tree " + std::to_string(k));
        }
        const long n_nodes = parse_long(parts[2]);
        RegressionTree tree;
        tree.nodes.reserve(n_nodes);
        for (long i = 0; i < n_nodes; ++i) {
            auto np = split_ws(next_line(in, path));
            TreeNode node;
            if (np.size() == 2 && np[0] == "l") {
                node.leaf = parse_double(np[1]);
            } else if (np.size() == 5 && np[0] == "n") {
                node.feature = static_cast<int>(parse_long(np[1]));
                node.threshold = parse_double(np[2]);
                node.left = static_cast<int>(parse_long(np[3]));
                node.right = static_cast<int>(parse_long(np[4]));
                if (node.left < 0 || node.left >= n_nodes || node.right < 0 ||
                    node.right >= n_nodes) {
                    throw SchemaError("model file: node child out of range");
                }
            } else {
                throw SchemaError("model file: bad node line in tree " + std::to_string(k));
            }
            tree.nodes.push_back(node);
        }
        model.trees.push_back(std::move(tree));
    }
    if (next_line(in, path) != "end") throw SchemaError("model file: missing end marker");
    return model;
}

}  // namespace driftguard
