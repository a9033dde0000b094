#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "driftguard/m5.hpp"
#include "driftguard/panel_io.hpp"
#include "driftguard/synth.hpp"

using namespace driftguard;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case; removed on destruction.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("driftguard_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Three-day, one-item miniature in the public M5 layout.
void write_m5_fixture(const TempDir& dir, bool shuffle_columns = false, bool drop_prices = false,
                      bool drop_column = false) {
    std::string sales_header = "id,item_id,dept_id,cat_id,store_id,state_id,d_1,d_2,d_3";
    std::string sales_row =
        "FOODS_1_001_CA_1_validation,FOODS_1_001,FOODS_1,FOODS,CA_1,CA,3,0,12";
    if (shuffle_columns) {
        sales_header = "d_2,state_id,id,d_1,item_id,cat_id,store_id,d_3,dept_id";
        sales_row = "0,CA,FOODS_1_001_CA_1_validation,3,FOODS_1_001,FOODS,CA_1,12,FOODS_1";
    }
    if (drop_column) {
        sales_header = "id,item_id,dept_id,cat_id,store_id,d_1,d_2,d_3";
        sales_row = "FOODS_1_001_CA_1_validation,FOODS_1_001,FOODS_1,FOODS,CA_1,3,0,12";
    }
    write_file(dir.file("sales_train_validation.csv"), sales_header + "\n" + sales_row + "\n");

    write_file(dir.file("calendar.csv"),
               "date,wm_yr_wk,weekday,wday,month,year,d,event_name_1,event_type_1,"
               "event_name_2,event_type_2,snap_CA,snap_TX,snap_WI\n"
               "2011-01-29,11101,Saturday,1,1,2011,d_1,,,,,0,0,0\n"
               "2011-01-30,11101,Sunday,2,1,2011,d_2,SuperBowl,Sporting,,,1,0,0\n"
               "2011-02-05,11102,Saturday,1,2,2011,d_3,,,,,0,0,0\n");

    // Price listed only for week 11102: days 1-2 must back-fill from it.
    if (!drop_prices) {
        write_file(dir.file("sell_prices.csv"),
                   "store_id,item_id,wm_yr_wk,sell_price\n"
                   "CA_1,FOODS_1_001,11102,2.48\n");
    } else {
        write_file(dir.file("sell_prices.csv"), "store_id,item_id,wm_yr_wk,sell_price\n");
    }
}

}  // namespace

TEST_CASE("synthetic generation is a pure function of config and seed") {
    SynthConfig cfg;
    cfg.n_stores = 3;
    cfg.n_states = 2;
    cfg.n_skus_per_store = 4;
    cfg.n_days = 120;
    cfg.seed = 42;
    Panel a = generate_synthetic(cfg);
    Panel b = generate_synthetic(cfg);
    CHECK(a == b);

    cfg.seed = 43;
    Panel c = generate_synthetic(cfg);
    CHECK_FALSE(a == c);
}

TEST_CASE("synthetic sales are integral counts and prices stay positive") {
    SynthConfig cfg;
    cfg.n_stores = 3;
    cfg.n_states = 1;
    cfg.n_skus_per_store = 5;
    cfg.n_days = 200;
    cfg.seed = 9;
    Panel p = generate_synthetic(cfg);
    for (int s = 0; s < p.n_series(); ++s) {
        for (int d = 1; d <= p.n_days(); ++d) {
            const double v = p.sales_at(s, d);
            CHECK(v >= 0.0);
            CHECK(v == std::floor(v));
            CHECK(p.price_at(s, d) > 0.0);
        }
    }
}

TEST_CASE("flat-config synthetic means concentrate on the configured level") {
    SynthConfig cfg;
    cfg.n_stores = 4;
    cfg.n_states = 2;
    cfg.n_skus_per_store = 10;
    cfg.n_days = 800;
    cfg.weekly_amplitude = 0.0;
    cfg.annual_amplitude = 0.0;
    cfg.base_demand_mean = 30.0;
    cfg.seed = 77;
    Panel p = generate_synthetic(cfg);
    for (int s = 0; s < p.n_series(); ++s) {
        double sum = 0.0;
        for (int d = 1; d <= p.n_days(); ++d) sum += p.sales_at(s, d);
        const double mean = sum / p.n_days();
        CHECK(mean == doctest::Approx(cfg.base_demand_mean).epsilon(0.05));
    }
}

TEST_CASE("holidays land on the configured cadence") {
    SynthConfig cfg;
    cfg.n_stores = 1;
    cfg.n_states = 1;
    cfg.n_skus_per_store = 1;
    cfg.n_days = 100;
    cfg.holiday_every_n_days = 7;
    Panel p = generate_synthetic(cfg);
    int holidays = 0;
    for (const CalendarDay& day : p.calendar()) {
        if (day.is_holiday) {
            ++holidays;
            CHECK(day.day_index % 7 == 0);
            CHECK_FALSE(day.event_name.empty());
        }
    }
    CHECK(holidays == 100 / 7);

    cfg.holiday_every_n_days = 0;
    Panel q = generate_synthetic(cfg);
    for (const CalendarDay& day : q.calendar()) CHECK_FALSE(day.is_holiday);
}

TEST_CASE("synthetic calendar starts on a Monday and stays contiguous") {
    SynthConfig cfg;
    cfg.n_stores = 1;
    cfg.n_states = 1;
    cfg.n_skus_per_store = 1;
    cfg.n_days = 60;
    Panel p = generate_synthetic(cfg);
    CHECK(p.calendar()[0].day_of_week == 0);
    for (int d = 0; d < p.n_days(); ++d) {
        CHECK(p.calendar()[d].day_index == d + 1);
        CHECK(p.calendar()[d].day_of_week == d % 7);
    }
}

TEST_CASE("panel files round-trip exactly and re-save is byte-identical") {
    TempDir dir("panel_io");
    SynthConfig cfg;
    cfg.n_stores = 4;
    cfg.n_states = 2;
    cfg.n_skus_per_store = 25;  // 100 series
    cfg.n_days = 90;
    cfg.seed = 3;
    Panel p = generate_synthetic(cfg);

    const std::string path1 = dir.file("panel1.csv");
    const std::string path2 = dir.file("panel2.csv");
    save_panel(p, path1);
    Panel q = load_panel(path1);
    CHECK(p == q);
    save_panel(q, path2);
    CHECK(read_file(path1) == read_file(path2));
}

TEST_CASE("panel files preserve empty event names and fractional sales") {
    TempDir dir("panel_io_opt");
    std::vector<SeriesKey> keys(1);
    keys[0].sku_id = "A";
    keys[0].store_id = "S,1";  // comma forces quoting
    keys[0].state_id = "CA";
    keys[0].category = "FOOD";
    keys[0].department = "F1";
    std::vector<CalendarDay> cal(2);
    cal[0] = {1, "2020-01-06", 0, 1, false, ""};
    cal[1] = {2, "2020-01-07", 1, 1, true, "NEW YEAR, LATE"};
    std::vector<double> sales = {0.0, 1.0 / 3.0};
    std::vector<double> prices = {2.5, 0.1};
    Panel p(keys, cal, sales, prices);

    const std::string path = dir.file("panel.csv");
    save_panel(p, path);
    Panel q = load_panel(path);
    CHECK(p == q);
    CHECK(q.day(1).event_name.empty());
    CHECK(q.day(2).event_name == "NEW YEAR, LATE");
    CHECK(q.sales_at(0, 2) == 1.0 / 3.0);
}

TEST_CASE("panel loader rejects wrong versions and missing files") {
    TempDir dir("panel_io_err");
    CHECK_THROWS_AS(load_panel(dir.file("missing.csv")), IoError);
    write_file(dir.file("bad.csv"), "driftguard-panel v9\n[keys]\n");
    CHECK_THROWS_AS(load_panel(dir.file("bad.csv")), IoError);
}

TEST_CASE("m5 miniature fixture loads with joined calendar and filled prices") {
    TempDir dir("m5");
    write_m5_fixture(dir);
    Panel p = load_m5_dir(dir.path.string());
    REQUIRE(p.n_series() == 1);
    REQUIRE(p.n_days() == 3);
    CHECK(p.key(0).sku_id == "FOODS_1_001");
    CHECK(p.key(0).store_id == "CA_1");
    CHECK(p.key(0).state_id == "CA");
    CHECK(p.key(0).category == "FOODS");
    CHECK(p.key(0).department == "FOODS_1");
    CHECK(p.sales_at(0, 1) == 3.0);
    CHECK(p.sales_at(0, 2) == 0.0);
    CHECK(p.sales_at(0, 3) == 12.0);
    // Week 11101 has no listed price; both days back-fill from week 11102.
    CHECK(p.price_at(0, 1) == 2.48);
    CHECK(p.price_at(0, 2) == 2.48);
    CHECK(p.price_at(0, 3) == 2.48);
    // Calendar join: dates, events, weekday derived from the date itself.
    CHECK(p.day(1).date == "2011-01-29");
    CHECK(p.day(1).day_of_week == 5);  // Saturday
    CHECK_FALSE(p.day(1).is_holiday);
    CHECK(p.day(2).is_holiday);
    CHECK(p.day(2).event_name == "SuperBowl");
    CHECK(p.day(3).month == 2);
}

TEST_CASE("m5 parse is header-driven, not positional") {
    TempDir a("m5_order_a");
    TempDir b("m5_order_b");
    write_m5_fixture(a, /*shuffle_columns=*/false);
    write_m5_fixture(b, /*shuffle_columns=*/true);
    CHECK(load_m5_dir(a.path.string()) == load_m5_dir(b.path.string()));
}

TEST_CASE("m5 loader errors name the problem") {
    SUBCASE("missing column") {
        TempDir dir("m5_col");
        write_m5_fixture(dir, false, false, /*drop_column=*/true);
        try {
            load_m5_dir(dir.path.string());
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("state_id") != std::string::npos);
        }
    }
    SUBCASE("series with no prices at all") {
        TempDir dir("m5_price");
        write_m5_fixture(dir, false, /*drop_prices=*/true);
        try {
            load_m5_dir(dir.path.string());
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("FOODS_1_001") != std::string::npos);
        }
    }
}

TEST_CASE("m5 load composes with panel save/load") {
    TempDir dir("m5_compose");
    write_m5_fixture(dir);
    Panel p = load_m5_dir(dir.path.string());
    const std::string path = dir.file("native.csv");
    save_panel(p, path);
    CHECK(load_panel(path) == p);
}
