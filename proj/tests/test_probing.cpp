#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "specgeo/probing.hpp"
#include "specgeo/synthetic.hpp"
#include "test_helpers.hpp"

using namespace specgeo;

TEST_CASE("rare tags are dropped and renumbered", "[probing]") {
    LabeledActivations in;
    in.x = testing::random_matrix(7, 2, 1);
    in.labels = {0, 1, 0, 2, 2, 2, 0};
    in.tag_names = {"NOUN", "X", "VERB"};
    const auto out = filter_rare_tags(in, 2);
    CHECK(out.tag_names == std::vector<std::string>{"NOUN", "VERB"});
    CHECK(out.labels == std::vector<int>{0, 0, 1, 1, 1, 0});
    CHECK(out.x.rows() == 6);
    CHECK(out.x(5, 1) == in.x(6, 1));
    CHECK(out.min_count_filter == 2);
    CHECK(filter_rare_tags(in, 4).tag_names.empty());
}

TEST_CASE("stratified folds are balanced per class and overall", "[probing]") {
    std::vector<int> labels;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 13 + 7 * c; ++i) labels.push_back(c);
    const auto folds = stratified_kfold(labels, 5, 3);
    CHECK(folds == stratified_kfold(labels, 5, 3));
    std::vector<int> total(5, 0);
    for (int c = 0; c < 4; ++c) {
        std::vector<int> per(5, 0);
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) ++per[static_cast<std::size_t>(folds[i])];
        CHECK(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()) <= 1);
    }
    for (int f : folds) ++total[static_cast<std::size_t>(f)];
    CHECK(*std::max_element(total.begin(), total.end()) - *std::min_element(total.begin(), total.end()) <= 1);
    CHECK_THROWS_AS(stratified_kfold(std::vector<int>{0, 0, 1}, 2), Error);
}

TEST_CASE("subspace projection uses eigenvector columns", "[probing]") {
    const auto cov = gen_planted_spectrum(6, 1.0, 2);
    const Matrix x = testing::random_matrix(4, 6, 3);
    const std::vector<std::size_t> idx{0, 5};
    const Matrix p = project_subspace(x, cov.eig, idx);
    REQUIRE(p.cols() == 2);
    CHECK(p(2, 1) == Catch::Approx(dot(x.row(2), cov.eig.vector(5))));
    const std::vector<std::size_t> dup{1, 1};
    CHECK_THROWS_AS(project_subspace(x, cov.eig, dup), Error);
}

TEST_CASE("multiclass objective gradient matches finite differences", "[probing]") {
    const Matrix x = testing::random_matrix(25, 3, 4);
    std::vector<int> y(25);
    for (std::size_t i = 0; i < 25; ++i) y[i] = static_cast<int>(i % 3);
    Rng rng(5);
    const Vector p = rng.normal_vector(12);
    Vector g(12), scratch(12);
    multiclass_objective(x, y, 3, 0.7, p, g);
    const double h = 1e-6;
    for (std::size_t j = 0; j < 12; ++j) {
        Vector a = p, b = p;
        a[j] += h;
        b[j] -= h;
        const double fd = (multiclass_objective(x, y, 3, 0.7, a, scratch) - multiclass_objective(x, y, 3, 0.7, b, scratch)) / (2 * h);
        CHECK(g[j] == Catch::Approx(fd).margin(1e-7));
    }
}

TEST_CASE("multiclass probe fits well separated classes", "[probing]") {
    Rng rng(6);
    Matrix x(150, 2);
    std::vector<int> y(150);
    const double centers[3][2] = {{4, 0}, {-4, 0}, {0, 4}};
    for (std::size_t i = 0; i < 150; ++i) {
        y[i] = static_cast<int>(i % 3);
        x(i, 0) = centers[y[i]][0] + rng.normal();
        x(i, 1) = centers[y[i]][1] + rng.normal();
    }
    const auto probe = train_multiclass_probe(x, y, 3);
    CHECK(probe.converged);
    CHECK(probe.accuracy(x, y) >= 0.95);
    const auto folds = stratified_kfold(y, 5, 0);
    const auto cv = cross_validate(x, y, 3, folds, 5);
    CHECK(cv.fold_acc.size() == 5);
    CHECK(cv.accuracy >= 0.9);
    CHECK(cv.accuracy == Catch::Approx(mean(cv.correct)));
}

TEST_CASE("planted subspace signal produces a signed gap", "[probing]") {
    ProbeGapConfig cfg;
    cfg.n_resamples = 500;
    cfg.n_random_subspaces = 2;
    const auto top = gen_pos_planted(24, 400, 3, PlantSubspace::top, 3.0, 1);
    const auto rt = pos_gap_experiment(top.data, top.cov.eig, 0.125, cfg);
    CHECK(rt.k == 3);
    CHECK(rt.gap > 0.05);
    CHECK(rt.ci.low <= rt.gap);
    CHECK(rt.ci.high >= rt.gap);
    CHECK(rt.top_variance > rt.bottom_variance);
    const auto bottom = gen_pos_planted(24, 400, 3, PlantSubspace::bottom, 3.0, 1);
    CHECK(pos_gap_experiment(bottom.data, bottom.cov.eig, 0.125, cfg).gap < -0.05);

    const std::vector<double> fractions{0.125, 0.25};
    const auto sweep = k_sensitivity_sweep(top.data, top.cov.eig, fractions, cfg);
    REQUIRE(sweep.size() == 2);
    CHECK(sweep[0].gap == rt.gap);
    CHECK(sweep[1].k == 6);
    const auto rows = parse_csv(probe_gap_csv(sweep, "m"));
    CHECK(rows.size() == 3);
    CHECK(parse_double(rows[1][5]) == sweep[0].gap);
}

TEST_CASE("labeled activations round trip", "[probing]") {
    const auto dir = testing::temp_dir("probing");
    LabeledActivations d;
    d.x = testing::random_matrix(3, 2, 7);
    d.labels = {0, 1, 0};
    d.tag_names = {"A", "B"};
    save_labeled(d, dir / "x.sgt", dir / "y.json");
    const auto back = load_labeled(dir / "x.sgt", dir / "y.json");
    CHECK(back.labels == d.labels);
    CHECK(back.tag_names == d.tag_names);
    CHECK(max_abs_diff(back.x, d.x) == 0.0);
    write_text(dir / "bad.json", "{\"labels\": [0, 5, 0], \"tag_names\": [\"A\"]}");
    CHECK_THROWS_AS(load_labeled(dir / "x.sgt", dir / "bad.json"), Error);
}
