#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "specgeo/steering.hpp"
#include "specgeo/synthetic.hpp"

using namespace specgeo;

namespace {

SteeringLog make_log(const std::string& concept_id, Component c, double increase_pct, double alpha = 10.0) {
    SteeringLog l;
    l.model_id = "m";
    l.concept_id = concept_id;
    l.alpha = alpha;
    l.component = c;
    l.ppl_base = 20.0;
    l.ppl_steered = 20.0 * (1.0 + increase_pct / 100.0);
    return l;
}

} // namespace

TEST_CASE("perplexity ratio and increase", "[steering]") {
    const auto l = make_log("a", Component::shout, 50.0);
    CHECK(ppl_ratio(l) == Catch::Approx(1.5));
    CHECK(ppl_increase(l) == Catch::Approx(50.0));
}

TEST_CASE("steering CSV parse and emit", "[steering]") {
    const std::string text =
        "model_id,concept_id,alpha,component,ppl_base,ppl_steered,kl,concept_shift\n"
        "m,a,10,shout,10,15,0.2,\n"
        "m,a,10,whisper,10,12,,0.1\n";
    const auto logs = parse_steering_csv(text);
    REQUIRE(logs.size() == 2);
    CHECK(logs[0].component == Component::shout);
    CHECK(logs[0].kl == 0.2);
    CHECK_FALSE(logs[0].concept_shift.has_value());
    CHECK(logs[1].concept_shift == 0.1);
    CHECK(parse_steering_csv(steering_csv(logs)).size() == 2);
    CHECK(steering_csv(logs) == text);

    CHECK_THROWS_AS(parse_steering_csv(text + "m,a,10,shout,10,16,,\n"), Error);
    CHECK_THROWS_AS(parse_steering_csv("model_id,concept_id\nm,a\n"), Error);
    CHECK_THROWS_AS(parse_steering_csv("model_id,concept_id,alpha,component,ppl_base,ppl_steered,kl,concept_shift\n"
                                       "m,a,10,loud,10,15,,\n"),
                    Error);
    CHECK_THROWS_AS(parse_steering_csv("model_id,concept_id,alpha,component,ppl_base,ppl_steered,kl,concept_shift\n"
                                       "m,a,10,shout,0,15,,\n"),
                    Error);

    const std::string layered =
        "model_id,concept_id,alpha,component,ppl_base,ppl_steered,kl,concept_shift,layer\n"
        "m,a,10,shout,10,15,,,3\n"
        "m,a,10,shout,10,17,,,4\n";
    const auto ll = parse_steering_csv(layered);
    CHECK(ll[1].layer == 4);
    CHECK(steering_csv(ll) == layered);
}

TEST_CASE("asymmetry statistics on hand data", "[steering]") {
    std::vector<SteeringLog> logs;
    const double shout[] = {30, 40, 50}, whisper[] = {29, 38, 47};
    for (int i = 0; i < 3; ++i) {
        logs.push_back(make_log("c" + std::to_string(i), Component::shout, shout[i]));
        logs.push_back(make_log("c" + std::to_string(i), Component::whisper, whisper[i]));
        logs.push_back(make_log("c" + std::to_string(i), Component::middle, 1.0));
    }
    logs.push_back(make_log("lonely", Component::shout, 10.0));
    const auto r = asymmetry_analysis(logs, "m", 10.0);
    CHECK(r.n_effective == 3);
    CHECK(r.n_unpaired == 1);
    CHECK(r.n_excluded == 1);
    CHECK(r.mean_ppl_increase_shout == Catch::Approx(40.0));
    CHECK(r.mean_ppl_increase_whisper == Catch::Approx(38.0));
    // diffs 1, 2, 3
    REQUIRE(r.cohens_d.has_value());
    CHECK(*r.cohens_d == Catch::Approx(2.0).epsilon(1e-12));
    CHECK(*r.p_value == Catch::Approx(1.0 - std::sqrt(12.0) / std::sqrt(14.0)).epsilon(1e-9));

    ExclusionSet ex;
    ex.add("", "c0");
    const auto r2 = asymmetry_analysis(logs, "m", 10.0, ex);
    CHECK(r2.n_effective == 2);
    CHECK(r2.n_excluded == 2);
    ExclusionSet other;
    other.add("other-model", "c0");
    CHECK(asymmetry_analysis(logs, "m", 10.0, other).n_effective == 3);

    CHECK_THROWS_AS(asymmetry_analysis(logs, "m", 99.0), Error);
}

TEST_CASE("label swap flips the sign of Cohen's d exactly", "[steering]") {
    SteeringPlan plan;
    plan.sigma = 7.0;
    auto logs = gen_steering_logs(plan, 3);
    const auto r = asymmetry_analysis(logs, plan.model_id, 10.0);
    for (auto& l : logs) {
        if (l.component == Component::shout)
            l.component = Component::whisper;
        else if (l.component == Component::whisper)
            l.component = Component::shout;
    }
    const auto s = asymmetry_analysis(logs, plan.model_id, 10.0);
    CHECK(*s.cohens_d == -*r.cohens_d);
    CHECK(*s.t_stat == -*r.t_stat);
    CHECK(*s.p_value == *r.p_value);
}

TEST_CASE("sweep over alphas and CSV rendering", "[steering]") {
    SteeringPlan plan;
    plan.alphas = {5.0, 10.0};
    const auto logs = gen_steering_logs(plan, 1);
    const std::vector<double> alphas{5.0, 10.0, 20.0};
    std::vector<std::string> warnings;
    const auto rs = sweep_report(logs, alphas, {}, &warnings);
    CHECK(rs.size() == 2);
    const auto rows = parse_csv(asymmetry_csv(rs));
    REQUIRE(rows.size() == 3);
    CHECK(parse_double(rows[1][8]) == *rs[0].cohens_d);
    const std::vector<double> none{7.0};
    CHECK(sweep_report(logs, none, {}, &warnings).empty());
    CHECK_FALSE(warnings.empty());
    CHECK(to_json(rs[0])["n_effective"] == plan.n_concepts);
}
