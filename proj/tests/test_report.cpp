#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "specgeo/covariance.hpp"
#include "specgeo/report.hpp"
#include "test_helpers.hpp"

using namespace specgeo;

TEST_CASE("float formatting round-trips", "[report][format]") {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const double x = rng.normal() * std::pow(10.0, 40.0 * (rng.uniform() - 0.5));
        CHECK(parse_double(format_double(x)) == x);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-0.0) == "-0");
    CHECK(format_double(INFINITY) == "inf");
    CHECK(std::isnan(parse_double("nan")));
    CHECK_THROWS_AS(parse_double("1.5x"), Error);
    CHECK_THROWS_AS(parse_double(""), Error);
}

TEST_CASE("CSV quoting round-trips", "[report][format]") {
    CsvWriter w({"a", "b"});
    w.row({"plain", "with,comma"});
    w.row({"say \"hi\"", "two\nlines"});
    const auto rows = parse_csv(w.str());
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][1] == "with,comma");
    CHECK(rows[2][0] == "say \"hi\"");
    CHECK(rows[2][1] == "two\nlines");
    CHECK(parse_csv("x,y\r\n1,2\r\n")[1] == std::vector<std::string>{"1", "2"});
    CHECK_THROWS_AS(w.row({"only one"}), Error);
}

TEST_CASE("plot curves include the origin", "[report]") {
    const auto eig = covariance_from_spectrum(Vector{3.0, 1.0}, Matrix::identity(2)).eig;
    const std::vector<NamedProfile> ps{{"v", spectral_profile(Vector{1.0, 1.0}, eig)}};
    const auto rows = parse_csv(plot_curves_csv(ps));
    REQUIRE(rows.size() == 1 + 3);
    CHECK(rows[0] == std::vector<std::string>{"series_id", "k", "V_k", "C_k"});
    CHECK(rows[1] == std::vector<std::string>{"v", "0", "0", "0"});
    CHECK(parse_double(rows[2][2]) == 0.75);
    CHECK(parse_double(rows[2][3]) == 0.5);
    CHECK(parse_double(rows[3][3]) == 1.0);
}

TEST_CASE("baseline band contains the median baseline curve", "[report]") {
    const auto cov = covariance_from_matrix(testing::random_spd(10, 2));
    const auto base = random_baseline_profiles(cov.eig, 1000, 3);
    const auto rows = parse_csv(plot_band_csv(base));
    REQUIRE(rows.size() == 1 + 11);
    for (std::size_t k = 1; k <= 10; ++k) {
        std::vector<double> col;
        for (const auto& p : base) col.push_back(p.cum_energy[k - 1]);
        std::sort(col.begin(), col.end());
        const double median = quantile_sorted(col, 0.5);
        const double lo = parse_double(rows[k + 1][2]), hi = parse_double(rows[k + 1][3]);
        CHECK(lo <= median);
        CHECK(median <= hi);
        CHECK(parse_double(rows[k + 1][1]) == base[0].cum_variance[k - 1]);
    }
}

TEST_CASE("plot files are byte-identical across runs", "[report]") {
    const auto dir = testing::temp_dir("report");
    const auto cov = covariance_from_matrix(testing::random_spd(6, 4));
    auto emit = [&](const std::string& tag) {
        const auto base = random_baseline_profiles(cov.eig, 100, 9);
        const std::vector<NamedProfile> ps{{"a", base[0]}, {"b", base[1]}};
        emit_plot_data(ps, base, dir / (tag + "_c.csv"), dir / (tag + "_b.csv"));
    };
    emit("one");
    emit("two");
    CHECK(read_text(dir / "one_c.csv") == read_text(dir / "two_c.csv"));
    CHECK(read_text(dir / "one_b.csv") == read_text(dir / "two_b.csv"));
}

TEST_CASE("report merging flattens scalar leaves", "[report]") {
    nlohmann::ordered_json a = {{"x", 1.5}, {"nested", {{"flag", true}, {"name", "n"}}}, {"list", {1, 2}}};
    nlohmann::ordered_json b = {{"y", nullptr}};
    const std::vector<std::pair<std::string, nlohmann::ordered_json>> reports{{"a.json", a}, {"b.json", b}};
    const auto m = merge_reports(reports);
    CHECK(m.json["reports"].size() == 2);
    CHECK(m.json["reports"][0]["report"] == a);
    const auto rows = parse_csv(m.csv);
    REQUIRE(rows.size() == 1 + 6);
    CHECK(rows[1] == std::vector<std::string>{"a.json", "x", "1.5"});
    CHECK(rows[2] == std::vector<std::string>{"a.json", "nested.flag", "true"});
    CHECK(rows[4] == std::vector<std::string>{"a.json", "list[0]", "1"});
    CHECK(rows[6] == std::vector<std::string>{"b.json", "y", ""});

    const auto dir = testing::temp_dir("report_json");
    write_json(dir / "a.json", a);
    CHECK(read_json(dir / "a.json") == a);
    write_text(dir / "bad.json", "{");
    CHECK_THROWS_AS(read_json(dir / "bad.json"), Error);
}
