#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftguard/panel.hpp"

namespace driftguard {

enum class HierarchyLevel { Total, State, Store, Category, Department, Leaf };

const char* to_string(HierarchyLevel level);

struct HierarchyNode {
    HierarchyLevel level = HierarchyLevel::Leaf;
    std::string label;
    std::vector<int> children;     // node ids, empty for leaves
    std::vector<int> leaf_series;  // sorted panel series indices under this node
};

// Two parallel rollups over the same leaves: a geographic branch
// (total -> state -> store -> leaf) reachable from root(), and a product
// branch (category -> department -> leaf) whose category nodes stand beside
// the root and are listed in category_roots(). Within either branch every
// node's leaf set is the disjoint union of its children's.
class Hierarchy {
public:
    Hierarchy() = default;
    Hierarchy(std::vector<HierarchyNode> nodes, int root, std::vector<int> category_roots,
              std::uint64_t keys_fingerprint, int n_series);

    const std::vector<HierarchyNode>& nodes() const { return nodes_; }
    const HierarchyNode& node(int id) const { return nodes_[id]; }
    int root() const { return root_; }
    const std::vector<int>& category_roots() const { return category_roots_; }
    int n_series() const { return n_series_; }
    std::uint64_t keys_fingerprint() const { return keys_fingerprint_; }

    // Node ids grouped by level, in construction order.
    std::vector<int> nodes_at(HierarchyLevel level) const;
    int leaf_of_series(int series) const;

private:
    std::vector<HierarchyNode> nodes_;
    int root_ = -1;
    std::vector<int> category_roots_;
    std::uint64_t keys_fingerprint_ = 0;
    int n_series_ = 0;
};

std::uint64_t fingerprint_keys(const std::vector<SeriesKey>& keys);

// Builds both branches from the series keys. Deterministic: labels are sorted
// lexicographically at every level and leaves are ordered by series index.
Hierarchy build_hierarchy(const std::vector<SeriesKey>& keys);

// Elementwise sales totals over node's leaves, indexed like the panel's
// calendar. Internal nodes are computed as the child-order sum of their
// children's aggregates, so parent == sum-of-children holds bitwise.
std::vector<double> aggregate_series(const Panel& panel, const Hierarchy& hierarchy, int node_id);

}  // namespace driftguard
