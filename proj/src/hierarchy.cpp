#include "driftguard/hierarchy.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <utility>

#include "driftguard/text.hpp"

namespace driftguard {

const char* to_string(HierarchyLevel level) {
    switch (level) {
        case HierarchyLevel::Total: return "total";
        case HierarchyLevel::State: return "state";
        case HierarchyLevel::Store: return "store";
        case HierarchyLevel::Category: return "category";
        case HierarchyLevel::Department: return "department";
        case HierarchyLevel::Leaf: return "leaf";
    }
    return "?";
}

Hierarchy::Hierarchy(std::vector<HierarchyNode> nodes, int root, std::vector<int> category_roots,
                     std::uint64_t keys_fingerprint, int n_series)
    : nodes_(std::move(nodes)), root_(root), category_roots_(std::move(category_roots)),
      keys_fingerprint_(keys_fingerprint), n_series_(n_series) {}

std::vector<int> Hierarchy::nodes_at(HierarchyLevel level) const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
        if (nodes_[i].level == level) out.push_back(i);
    }
    return out;
}

int Hierarchy::leaf_of_series(int series) const {
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
        if (nodes_[i].level == HierarchyLevel::Leaf && nodes_[i].leaf_series.front() == series) return i;
    }
    throw ValidationError("series " + std::to_string(series) + " has no leaf node");
}

std::uint64_t fingerprint_keys(const std::vector<SeriesKey>& keys) {
    std::string joined;
    for (const auto& k : keys) {
        joined += k.sku_id;
        joined += '\x1f';
        joined += k.store_id;
        joined += '\x1e';
    }
    return fnv1a64(joined);
}

Hierarchy build_hierarchy(const std::vector<SeriesKey>& keys) {
    if (keys.empty()) throw ValidationError("build_hierarchy: no keys");
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& k : keys) {
        if (!seen.emplace(k.sku_id, k.store_id).second) {
            throw ValidationError("build_hierarchy: duplicate (sku_id, store_id): (" +
                                  k.sku_id + ", " + k.store_id + ")");
        }
    }

    const int n = static_cast<int>(keys.size());
    std::vector<HierarchyNode> nodes;
    auto add_node = [&](HierarchyLevel level, std::string label) {
        nodes.push_back(HierarchyNode{level, std::move(label), {}, {}});
        return static_cast<int>(nodes.size()) - 1;
    };

    // One leaf per series, in series order.
    std::vector<int> leaf_ids(n);
    for (int s = 0; s < n; ++s) {
        leaf_ids[s] = add_node(HierarchyLevel::Leaf, keys[s].sku_id + "@" + keys[s].store_id);
        nodes[leaf_ids[s]].leaf_series = {s};
    }

    // Geographic branch: state -> store -> leaf, labels sorted.
    std::map<std::string, std::map<std::string, std::vector<int>>> geo;
    for (int s = 0; s < n; ++s) geo[keys[s].state_id][keys[s].store_id].push_back(s);

    const int root = add_node(HierarchyLevel::Total, "total");
    for (const auto& [state, stores] : geo) {
        const int state_id = add_node(HierarchyLevel::State, state);
        nodes[root].children.push_back(state_id);
        for (const auto& [store, series] : stores) {
            const int store_id = add_node(HierarchyLevel::Store, store);
            nodes[state_id].children.push_back(store_id);
            for (int s : series) {
                nodes[store_id].children.push_back(leaf_ids[s]);
                nodes[store_id].leaf_series.push_back(s);
            }
            std::sort(nodes[store_id].leaf_series.begin(), nodes[store_id].leaf_series.end());
        }
        for (int c : nodes[state_id].children) {
            const auto& ls = nodes[c].leaf_series;
            nodes[state_id].leaf_series.insert(nodes[state_id].leaf_series.end(), ls.begin(), ls.end());
        }
        std::sort(nodes[state_id].leaf_series.begin(), nodes[state_id].leaf_series.end());
    }
    for (int c : nodes[root].children) {
        const auto& ls = nodes[c].leaf_series;
        nodes[root].leaf_series.insert(nodes[root].leaf_series.end(), ls.begin(), ls.end());
    }
    std::sort(nodes[root].leaf_series.begin(), nodes[root].leaf_series.end());

    // Product branch: category -> department -> leaf.
    std::map<std::string, std::map<std::string, std::vector<int>>> prod;
    for (int s = 0; s < n; ++s) prod[keys[s].category][keys[s].department].push_back(s);

    std::vector<int> category_roots;
    for (const auto& [cat, depts] : prod) {
        const int cat_id = add_node(HierarchyLevel::Category, cat);
        category_roots.push_back(cat_id);
        for (const auto& [dept, series] : depts) {
            const int dept_id = add_node(HierarchyLevel::Department, dept);
            nodes[cat_id].children.push_back(dept_id);
            for (int s : series) {
                nodes[dept_id].children.push_back(leaf_ids[s]);
                nodes[dept_id].leaf_series.push_back(s);
            }
            std::sort(nodes[dept_id].leaf_series.begin(), nodes[dept_id].leaf_series.end());
        }
        for (int c : nodes[cat_id].children) {
            const auto& ls = nodes[c].leaf_series;
            nodes[cat_id].leaf_series.insert(nodes[cat_id].leaf_series.end(), ls.begin(), ls.end());
        }
        std::sort(nodes[cat_id].leaf_series.begin(), nodes[cat_id].leaf_series.end());
    }

    return Hierarchy(std::move(nodes), root, std::move(category_roots), fingerprint_keys(keys), n);
}

std::vector<double> aggregate_series(const Panel& panel, const Hierarchy& hierarchy, int node_id) {
    if (hierarchy.n_series() != panel.n_series() ||
        hierarchy.keys_fingerprint() != fingerprint_keys(panel.keys())) {
        throw ValidationError("aggregate_series: hierarchy was not built from this panel's keys");
    }
    if (node_id < 0 || node_id >= static_cast<int>(hierarchy.nodes().size())) {
        throw ValidationError("aggregate_series: node id out of range");
    }

    const auto& node = hierarchy.node(node_id);
    const int days = panel.n_days();
    if (node.level == HierarchyLevel::Leaf) {
        std::vector<double> out(days);
        const int s = node.leaf_series.front();
        for (int d = 0; d < days; ++d) out[d] = panel.sales_at(s, panel.first_day() + d);
        return out;
    }

    std::vector<double> out(days, 0.0);
    for (int child : node.children) {
        const std::vector<double> part = aggregate_series(panel, hierarchy, child);
        for (int d = 0; d < days; ++d) out[d] += part[d];
    }
    return out;
}

}  // namespace driftguard
