#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "driftguard/dates.hpp"
#include "driftguard/hierarchy.hpp"
#include "driftguard/panel.hpp"
#include "driftguard/synth.hpp"

using namespace driftguard;

namespace {

SeriesKey key(const char* sku, const char* store, const char* state, const char* cat,
              const char* dept) {
    SeriesKey k;
    k.sku_id = sku;
    k.store_id = store;
    k.state_id = state;
    k.category = cat;
    k.department = dept;
    return k;
}

std::vector<CalendarDay> make_calendar(int n_days, int start_index = 1) {
    std::vector<CalendarDay> cal(n_days);
    const long epoch = days_from_civil(2020, 1, 6);
    for (int d = 0; d < n_days; ++d) {
        cal[d].day_index = start_index + d;
        cal[d].date = iso_date_from_days(epoch + start_index - 1 + d);
        cal[d].day_of_week = weekday_from_days(epoch + start_index - 1 + d);
        cal[d].month = 1 + ((start_index + d) / 31) % 12;
        cal[d].month = cal[d].month < 1 ? 1 : cal[d].month;
    }
    return cal;
}

Panel tiny_panel() {
    std::vector<SeriesKey> keys = {
        key("A", "S1", "CA", "FOOD", "F1"),
        key("B", "S1", "CA", "FOOD", "F1"),
        key("A", "S2", "TX", "FOOD", "F1"),
    };
    std::vector<double> sales = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    std::vector<double> prices(12, 2.5);
    return Panel(std::move(keys), make_calendar(4), std::move(sales), std::move(prices));
}

}  // namespace

TEST_CASE("calendar date helpers agree with known anchors") {
    // 2020-01-06 was a Monday.
    const long z = days_from_civil(2020, 1, 6);
    CHECK(weekday_from_days(z) == 0);
    CHECK(iso_date_from_days(z) == "2020-01-06");
    CHECK(days_from_iso_date("2020-01-06") == z);
    // 1970-01-01 was a Thursday.
    CHECK(weekday_from_days(0) == 3);
    int y, m, d;
    civil_from_days(z, y, m, d);
    CHECK(y == 2020);
    CHECK(m == 1);
    CHECK(d == 6);
    // Round-trip across leap boundaries.
    for (long off = -800; off <= 800; off += 37) {
        civil_from_days(z + off, y, m, d);
        CHECK(days_from_civil(y, m, d) == z + off);
    }
}

TEST_CASE("panel validates its invariants at construction") {
    SUBCASE("well-formed panel accepted") { CHECK(tiny_panel().n_series() == 3); }
    SUBCASE("duplicate (sku, store) rejected") {
        std::vector<SeriesKey> keys = {key("A", "S1", "CA", "FOOD", "F1"),
                                       key("A", "S1", "CA", "FOOD", "F1")};
        std::vector<double> v(2, 1.0);
        CHECK_THROWS_AS(Panel(keys, make_calendar(1), v, v), ValidationError);
    }
    SUBCASE("department must map to one category") {
        std::vector<SeriesKey> keys = {key("A", "S1", "CA", "FOOD", "F1"),
                                       key("B", "S1", "CA", "DRINK", "F1")};
        std::vector<double> v(2, 1.0);
        CHECK_THROWS_AS(Panel(keys, make_calendar(1), v, v), ValidationError);
    }
    SUBCASE("store must map to one state") {
        std::vector<SeriesKey> keys = {key("A", "S1", "CA", "FOOD", "F1"),
                                       key("B", "S1", "TX", "FOOD", "F1")};
        std::vector<double> v(2, 1.0);
        CHECK_THROWS_AS(Panel(keys, make_calendar(1), v, v), ValidationError);
    }
    SUBCASE("negative sales rejected") {
        std::vector<SeriesKey> keys = {key("A", "S1", "CA", "FOOD", "F1")};
        std::vector<double> sales = {-0.5};
        std::vector<double> prices = {1.0};
        CHECK_THROWS_AS(Panel(keys, make_calendar(1), sales, prices), ValidationError);
    }
    SUBCASE("non-positive prices rejected") {
        std::vector<SeriesKey> keys = {key("A", "S1", "CA", "FOOD", "F1")};
        std::vector<double> sales = {1.0};
        std::vector<double> prices = {0.0};
        CHECK_THROWS_AS(Panel(keys, make_calendar(1), sales, prices), ValidationError);
    }
    SUBCASE("non-contiguous day_index rejected") {
        auto cal = make_calendar(3);
        cal[2].day_index = 5;
        std::vector<SeriesKey> keys = {key("A", "S1", "CA", "FOOD", "F1")};
        std::vector<double> v(3, 1.0);
        CHECK_THROWS_AS(Panel(keys, cal, v, v), ValidationError);
    }
    SUBCASE("dimension mismatch rejected") {
        std::vector<SeriesKey> keys = {key("A", "S1", "CA", "FOOD", "F1")};
        std::vector<double> sales = {1.0, 2.0};
        std::vector<double> prices = {1.0, 1.0};
        CHECK_THROWS_AS(Panel(keys, make_calendar(1), sales, prices), ValidationError);
    }
}

TEST_CASE("slice_window keeps day identities and bounds-checks") {
    Panel p = tiny_panel();
    SUBCASE("full range is the identity") { CHECK(slice_window(p, 1, 4) == p); }
    SUBCASE("single-day slice") {
        Panel s = slice_window(p, 3, 3);
        CHECK(s.n_days() == 1);
        CHECK(s.first_day() == 3);
        CHECK(s.sales_at(0, 3) == p.sales_at(0, 3));
        CHECK(s.day(3).date == p.day(3).date);
    }
    SUBCASE("interior slice preserves global day addressing") {
        Panel s = slice_window(p, 2, 3);
        CHECK(s.first_day() == 2);
        CHECK(s.last_day() == 3);
        for (int series = 0; series < p.n_series(); ++series) {
            for (int day = 2; day <= 3; ++day) {
                CHECK(s.sales_at(series, day) == p.sales_at(series, day));
                CHECK(s.price_at(series, day) == p.price_at(series, day));
            }
        }
        CHECK_THROWS_AS(s.sales_at(0, 1), ValidationError);
        CHECK_THROWS_AS(s.sales_at(0, 4), ValidationError);
    }
    SUBCASE("out-of-range bounds rejected") {
        CHECK_THROWS_AS(slice_window(p, 0, 3), ValidationError);
        CHECK_THROWS_AS(slice_window(p, 1, 5), ValidationError);
        CHECK_THROWS_AS(slice_window(p, 3, 2), ValidationError);
    }
}

TEST_CASE("build_hierarchy shapes") {
    SUBCASE("single series gives a chain down to one leaf") {
        std::vector<SeriesKey> keys = {key("A", "S1", "CA", "FOOD", "F1")};
        Hierarchy h = build_hierarchy(keys);
        CHECK(h.node(h.root()).level == HierarchyLevel::Total);
        CHECK(h.node(h.root()).leaf_series == std::vector<int>{0});
        CHECK(h.nodes_at(HierarchyLevel::State).size() == 1);
        CHECK(h.nodes_at(HierarchyLevel::Store).size() == 1);
        CHECK(h.nodes_at(HierarchyLevel::Leaf).size() == 1);
        CHECK(h.nodes_at(HierarchyLevel::Category).size() == 1);
        CHECK(h.nodes_at(HierarchyLevel::Department).size() == 1);
    }
    SUBCASE("2 stores x 2 departments: store nodes hold 2 leaves each") {
        std::vector<SeriesKey> keys = {
            key("A", "S1", "CA", "FOOD", "F1"), key("B", "S1", "CA", "FOOD", "F2"),
            key("A", "S2", "CA", "FOOD", "F1"), key("B", "S2", "CA", "FOOD", "F2")};
        Hierarchy h = build_hierarchy(keys);
        for (int id : h.nodes_at(HierarchyLevel::Store)) {
            CHECK(h.node(id).leaf_series.size() == 2);
        }
        for (int id : h.nodes_at(HierarchyLevel::Department)) {
            CHECK(h.node(id).leaf_series.size() == 2);
        }
    }
    SUBCASE("M5-shaped keys: 1 total / 3 states / 10 stores") {
        // Ten stores split 4/3/3 across CA/TX/WI like the public dataset.
        std::vector<SeriesKey> keys;
        const char* stores[10] = {"CA_1", "CA_2", "CA_3", "CA_4", "TX_1",
                                  "TX_2", "TX_3", "WI_1", "WI_2", "WI_3"};
        for (const char* st : stores) {
            std::string state(st, 2);
            keys.push_back(key("ITEM_1", st, state.c_str(), "FOODS", "FOODS_1"));
            keys.push_back(key("ITEM_2", st, state.c_str(), "HOBBIES", "HOBBIES_1"));
        }
        Hierarchy h = build_hierarchy(keys);
        CHECK(h.nodes_at(HierarchyLevel::Total).size() == 1);
        CHECK(h.nodes_at(HierarchyLevel::State).size() == 3);
        CHECK(h.nodes_at(HierarchyLevel::Store).size() == 10);
        CHECK(h.nodes_at(HierarchyLevel::Leaf).size() == 20);
    }
    SUBCASE("duplicate keys rejected") {
        std::vector<SeriesKey> keys = {key("A", "S1", "CA", "FOOD", "F1"),
                                       key("A", "S1", "CA", "FOOD", "F1")};
        CHECK_THROWS_AS(build_hierarchy(keys), ValidationError);
    }
    SUBCASE("deterministic rebuild") {
        Panel p = tiny_panel();
        Hierarchy a = build_hierarchy(p.keys());
        Hierarchy b = build_hierarchy(p.keys());
        REQUIRE(a.nodes().size() == b.nodes().size());
        for (std::size_t i = 0; i < a.nodes().size(); ++i) {
            CHECK(a.node(static_cast<int>(i)).label == b.node(static_cast<int>(i)).label);
            CHECK(a.node(static_cast<int>(i)).leaf_series ==
                  b.node(static_cast<int>(i)).leaf_series);
        }
    }
}

TEST_CASE("hierarchy partitions the series at every level") {
    SynthConfig cfg;
    cfg.n_stores = 6;
    cfg.n_states = 2;
    cfg.n_skus_per_store = 7;
    cfg.n_days = 60;
    cfg.seed = 11;
    Panel p = generate_synthetic(cfg);
    Hierarchy h = build_hierarchy(p.keys());

    auto check_partition = [&](const std::vector<int>& node_ids) {
        std::set<int> seen;
        for (int id : node_ids) {
            for (int s : h.node(id).leaf_series) {
                CHECK(seen.insert(s).second);  // disjoint
            }
        }
        CHECK(static_cast<int>(seen.size()) == p.n_series());  // complete
    };
    check_partition(h.nodes_at(HierarchyLevel::State));
    check_partition(h.nodes_at(HierarchyLevel::Store));
    check_partition(h.nodes_at(HierarchyLevel::Category));
    check_partition(h.nodes_at(HierarchyLevel::Department));
    check_partition(h.nodes_at(HierarchyLevel::Leaf));

    // Parent's leaf set is the disjoint union of its children's.
    for (const HierarchyNode& n : h.nodes()) {
        if (n.children.empty()) continue;
        std::vector<int> merged;
        for (int c : n.children) {
            const auto& cl = h.node(c).leaf_series;
            merged.insert(merged.end(), cl.begin(), cl.end());
        }
        std::sort(merged.begin(), merged.end());
        CHECK(merged == n.leaf_series);
    }
}

TEST_CASE("aggregate_series sums leaves exactly") {
    Panel p = tiny_panel();
    Hierarchy h = build_hierarchy(p.keys());

    SUBCASE("leaf node returns the series unchanged") {
        const int leaf = h.leaf_of_series(1);
        std::vector<double> expect = {5, 6, 7, 8};
        CHECK(aggregate_series(p, h, leaf) == expect);
    }
    SUBCASE("hand example: (1,2) + (3,4) = (4,6)") {
        std::vector<SeriesKey> keys = {key("A", "S1", "CA", "FOOD", "F1"),
                                       key("B", "S1", "CA", "FOOD", "F1")};
        std::vector<double> sales = {1, 2, 3, 4};
        std::vector<double> prices(4, 1.0);
        Panel q(keys, make_calendar(2), sales, prices);
        Hierarchy hq = build_hierarchy(q.keys());
        std::vector<double> expect = {4, 6};
        CHECK(aggregate_series(q, hq, hq.root()) == expect);
    }
    SUBCASE("root equals independent column sums") {
        SynthConfig cfg;
        cfg.n_stores = 4;
        cfg.n_states = 2;
        cfg.n_skus_per_store = 9;
        cfg.n_days = 90;
        cfg.seed = 5;
        Panel q = generate_synthetic(cfg);
        Hierarchy hq = build_hierarchy(q.keys());
        std::vector<double> got = aggregate_series(q, hq, hq.root());
        REQUIRE(static_cast<int>(got.size()) == q.n_days());
        for (int d = 0; d < q.n_days(); ++d) {
            double col = 0.0;
            for (int s = 0; s < q.n_series(); ++s) col += q.sales_at(s, d + 1);
            CHECK(got[d] == doctest::Approx(col).epsilon(1e-12));
        }
    }
    SUBCASE("every parent equals the elementwise sum of its children, exactly") {
        SynthConfig cfg;
        cfg.n_stores = 4;
        cfg.n_states = 2;
        cfg.n_skus_per_store = 5;
        cfg.n_days = 70;
        cfg.seed = 6;
        Panel q = generate_synthetic(cfg);
        Hierarchy hq = build_hierarchy(q.keys());
        for (int id = 0; id < static_cast<int>(hq.nodes().size()); ++id) {
            const HierarchyNode& n = hq.node(id);
            if (n.children.empty()) continue;
            std::vector<double> parent = aggregate_series(q, hq, id);
            std::vector<double> summed(q.n_days(), 0.0);
            for (int c : n.children) {
                std::vector<double> child = aggregate_series(q, hq, c);
                for (int d = 0; d < q.n_days(); ++d) summed[d] += child[d];
            }
            CHECK(parent == summed);  // bitwise, not approximate
        }
    }
    SUBCASE("foreign node rejected") {
        std::vector<SeriesKey> other = {key("Z", "S9", "NV", "MISC", "M1")};
        Hierarchy hz = build_hierarchy(other);
        CHECK_THROWS_AS(aggregate_series(p, hz, hz.root()), ValidationError);
        CHECK_THROWS_AS(aggregate_series(p, h, 999), ValidationError);
    }
}

TEST_CASE("slice then aggregate equals aggregate then slice") {
    SynthConfig cfg;
    cfg.n_stores = 4;
    cfg.n_states = 2;
    cfg.n_skus_per_store = 6;
    cfg.n_days = 80;
    cfg.seed = 21;
    Panel p = generate_synthetic(cfg);
    Hierarchy h = build_hierarchy(p.keys());
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> day_dist(1, p.n_days());
    std::uniform_int_distribution<int> node_dist(0, static_cast<int>(h.nodes().size()) - 1);
    for (int trial = 0; trial < 25; ++trial) {
        int a = day_dist(rng), b = day_dist(rng);
        if (a > b) std::swap(a, b);
        const int node = node_dist(rng);
        std::vector<double> slice_first = aggregate_series(slice_window(p, a, b), h, node);
        std::vector<double> full = aggregate_series(p, h, node);
        std::vector<double> agg_first(full.begin() + (a - 1), full.begin() + b);
        CHECK(slice_first == agg_first);
    }
}
