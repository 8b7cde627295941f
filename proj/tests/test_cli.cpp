#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "specgeo/cli.hpp"
#include "test_helpers.hpp"

using namespace specgeo;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "specgeo");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

} // namespace

TEST_CASE("usage errors exit 1", "[cli]") {
    const auto none = run({});
    CHECK(none.code == 1);
    CHECK(none.err.find("Usage") != std::string::npos);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"spectral", "--bogus"}).code == 1);
    CHECK(run({"dual"}).code == 1);
    CHECK(run({"dual", "--manifest", "/nonexistent/manifest.json"}).code == 1);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("synth then spectral recovers the planted gini sign", "[cli]") {
    const auto dir = testing::temp_dir("cli_spectral");
    const auto data = (dir / "data").string(), out = (dir / "out").string();
    REQUIRE(run({"--out-dir", data, "--seed", "3", "synth", "--kind", "tail", "--d", "32", "--n-concepts", "8"}).code == 0);
    const auto truth = read_json(dir / "data" / "truth.json");
    REQUIRE(run({"--out-dir", out, "spectral", "--manifest", data + "/manifest.json", "--n-baseline", "200",
                 "--n-suites", "999"})
                .code == 0);
    const auto rep = read_json(dir / "out" / "spectral.json");
    CHECK(rep["config"]["lambda"] == 0.1);
    CHECK(rep["config"]["seed"] == 0);
    CHECK(rep["summary"]["n_concepts"] == 8);
    const int sign = rep["summary"]["mean_gini"].get<double>() < 0 ? -1 : 1;
    CHECK(sign == truth["expected_gini_sign"].get<int>());
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(rep["concepts"][i]["gini"].get<double>() == Catch::Approx(truth["planted_gini"][i].get<double>()).epsilon(1e-9));
    CHECK(rep["summary"]["p_scm_gap"].get<double>() == 1.0 / 1000.0);

    const auto csv = parse_csv(read_text(dir / "out" / "spectral.csv"));
    CHECK(csv.size() == 9);
    CHECK(parse_double(csv[1][1]) == rep["concepts"][0]["gini"].get<double>());
    CHECK(fs::exists(dir / "out" / "plot_curves.csv"));
    CHECK(fs::exists(dir / "out" / "plot_band.csv"));

    // Unembedding-derived covariance with the default ridge also sees the tail.
    REQUIRE(run({"--out-dir", out + "2", "spectral", "--manifest", data + "/manifest.json", "--vectors",
                 data + "/concepts.sgt", "--n-baseline", "100", "--n-suites", "99", "--script", "Latin"})
                .code == 0);
    const auto rep2 = read_json(fs::path(out + "2") / "spectral.json");
    CHECK(rep2["config"]["sigma_source"] == "unembedding");
    CHECK(rep2["summary"]["mean_gini"].get<double>() < 0.0);
}

TEST_CASE("numerical failure exits 2", "[cli]") {
    const auto dir = testing::temp_dir("cli_numerical");
    Matrix sigma(2, 2);
    sigma(0, 0) = 1.0;
    save_tensor(sigma, dir / "sigma.sgt");
    std::vector<ConceptVector> cvs(1);
    cvs[0].concept_id = "a";
    cvs[0].v = {1.0, 1.0};
    save_concepts(cvs, dir / "v.sgt", dir / "v.json");
    const auto r = run({"--out-dir", (dir / "out").string(), "spectral", "--sigma", (dir / "sigma.sgt").string(), "--vectors",
                        (dir / "v.sgt").string(), "--n-baseline", "10", "--n-suites", "9"});
    CHECK(r.code == 2);
    CHECK(r.err.find("singular") != std::string::npos);
}

TEST_CASE("dual, split, transport, probe-pos and report", "[cli]") {
    const auto dir = testing::temp_dir("cli_pipelines");
    auto p = [&](const std::string& s) { return (dir / s).string(); };

    REQUIRE(run({"--out-dir", p("voc"), "synth", "--kind", "vocab", "--d", "16", "--n-concepts", "3", "--vocab", "600"}).code == 0);
    REQUIRE(run({"--out-dir", p("dual"), "dual", "--manifest", p("voc/manifest.json"), "--n-null", "300", "--n-suites", "999"}).code == 0);
    const auto dual = read_json(dir / "dual" / "dual.json");
    CHECK(dual["summary"]["concept_gini"].get<double>() > 0.0);
    CHECK(dual["summary"]["random_gini"].get<double>() < 0.0);
    CHECK(parse_csv(read_text(dir / "dual" / "dual.csv")).size() == 2);

    REQUIRE(run({"--out-dir", p("steer"), "synth", "--kind", "steering", "--n-concepts", "12", "--n-zero-energy", "2",
                 "--delta", "5", "--sigma", "10", "--d", "20"})
                .code == 0);
    REQUIRE(run({"--out-dir", p("split"), "split", "--logs", p("steer/logs.csv"), "--vectors", p("steer/vectors.sgt"),
                 "--sigma", p("steer/sigma.sgt")})
                .code == 0);
    const auto split = read_json(dir / "split" / "split.json");
    CHECK(split["reports"][0]["n_effective"] == 10);
    CHECK(split["reports"][0]["n_excluded"] == 2);
    CHECK(split["reports"][0]["cohens_d"].get<double>() == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(fs::exists(dir / "split" / "split_vectors.csv"));

    REQUIRE(run({"--out-dir", p("shared"), "synth", "--kind", "shared", "--d", "8", "--n-anchors", "60", "--n-concepts", "3",
                 "--n-units", "3"})
                .code == 0);
    REQUIRE(run({"--out-dir", p("tr"), "transport", "--units", p("shared/units.json"), "--n-seeds", "2"}).code == 0);
    const auto tr = read_json(dir / "tr" / "transport.json");
    CHECK(tr["report"]["conditions"].size() == 4);
    CHECK(tr["config"]["lambda"] == 0.0);
    CHECK(tr["report"]["conditions"][0]["win_rate"].get<double>() >= 0.9);

    REQUIRE(run({"--out-dir", p("pos"), "synth", "--kind", "pos", "--d", "20", "--n", "300", "--n-classes", "3"}).code == 0);
    REQUIRE(run({"--out-dir", p("probe"), "probe-pos", "--acts", p("pos/acts.sgt"), "--labels", p("pos/labels.json"),
                 "--sigma", p("pos/sigma.sgt"), "--fractions", "0.1,0.2", "--resamples", "200", "--n-random", "1",
                 "--model-id", "toy"})
                .code == 0);
    const auto probe = read_json(dir / "probe" / "probe_pos.json");
    CHECK(probe["results"].size() == 2);
    CHECK(probe["results"][0]["gap"].get<double>() > 0.0);
    const auto pcsv = parse_csv(read_text(dir / "probe" / "probe_pos.csv"));
    CHECK(pcsv[1][0] == "toy");

    REQUIRE(run({"--out-dir", p("merged"), "report", "--inputs", p("dual/dual.json"), p("split/split.json")}).code == 0);
    const auto merged = read_json(dir / "merged" / "merged.json");
    CHECK(merged["reports"].size() == 2);
    CHECK(merged["reports"][1]["source"] == "split.json");
}

TEST_CASE("fixed seeds give byte-identical reports", "[cli]") {
    const auto dir = testing::temp_dir("cli_repro");
    auto p = [&](const std::string& s) { return (dir / s).string(); };
    REQUIRE(run({"--out-dir", p("data"), "--seed", "11", "synth", "--kind", "tail", "--d", "16", "--n-concepts", "4"}).code == 0);
    for (const char* tag : {"a", "b"})
        REQUIRE(run({"--out-dir", p(tag), "--seed", "5", "spectral", "--manifest", p("data/manifest.json"), "--n-baseline",
                     "50", "--n-suites", "99"})
                    .code == 0);
    for (const char* f : {"spectral.json", "spectral.csv", "plot_curves.csv", "plot_band.csv"})
        CHECK(read_text(dir / "a" / f) == read_text(dir / "b" / f));
}
