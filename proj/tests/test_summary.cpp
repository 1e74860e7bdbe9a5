#include "apdlh/errors.hpp"
#include "apdlh/summary.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace apdlh;

namespace {

const CategoryOf kGoldenCategories = {
    {1, Category::Static}, {2, Category::Static}, {3, Category::Modal}, {4, Category::Thermal}};

std::vector<ScoredRun> golden() { return load_scored_runs(testutil::fixture("golden_runs.csv")); }

std::vector<ScoredRun> only(const std::vector<ScoredRun>& runs, const std::string& strategy) {
    std::vector<ScoredRun> out;
    for (const auto& r : runs)
        if (r.strategy == strategy) out.push_back(r);
    return out;
}

ScoredRun run(int id, const std::string& s, int rep, int q, int completed = 1) {
    ScoredRun r;
    r.case_id = id;
    r.strategy = s;
    r.repeat = rep;
    r.completed = completed;
    r.t = completed ? 4 : 0;
    r.a = q - r.t >= 3 ? 3 : q - r.t;
    r.e = q - r.t - r.a;
    r.q = q;
    return r;
}

}  // namespace

TEST_CASE("golden fixture: model_only") {
    const auto s = aggregate(only(golden(), "model_only"), kGoldenCategories);
    // hand-computed from the fixture
    CHECK(s.N == 12);
    CHECK(s.repeats == 3);
    CHECK(s.completed == 6);
    CHECK(s.R == doctest::Approx(0.5));
    CHECK(s.Z == doctest::Approx(1.0));
    CHECK(s.Q == doctest::Approx(75.0 / 12.0));
    CHECK(s.majority_case_rate == doctest::Approx(0.5));
    CHECK(s.failed_case_ids == std::vector<int>{3, 4});
    CHECK(s.failures == FailureDistribution{2, 0, 1, 1});
    CHECK(s.R_by_repeat.at(1) == doctest::Approx(0.75));
    CHECK(s.R_by_repeat.at(2) == doctest::Approx(0.5));
    CHECK(s.R_by_repeat.at(3) == doctest::Approx(0.25));
    CHECK(s.q_quartiles.q1 == doctest::Approx(3.0));
    CHECK(s.q_quartiles.median == doctest::Approx(5.5));
    CHECK(s.q_quartiles.q3 == doctest::Approx(10.0));
    CHECK(s.per_type.at(Category::Static).n == 6);
    CHECK(s.per_type.at(Category::Static).R == doctest::Approx(5.0 / 6.0));
    CHECK(s.per_type.at(Category::Static).Q == doctest::Approx(50.0 / 6.0));
    CHECK(s.per_type.at(Category::Modal).R == doctest::Approx(0.0));
    CHECK(s.per_type.at(Category::Thermal).Q == doctest::Approx(16.0 / 3.0));
    const auto [lo, hi] = oracle::wald(6, 12);
    CHECK(s.R_ci.lo == doctest::Approx(lo));
    CHECK(s.R_ci.hi == doctest::Approx(hi));
}

TEST_CASE("golden fixture: rule_only") {
    const auto s = aggregate(only(golden(), "rule_only"), kGoldenCategories);
    CHECK(s.completed == 5);
    CHECK(s.R == doctest::Approx(5.0 / 12.0));
    CHECK(s.Z == 0.0);
    CHECK(s.Q == doctest::Approx(58.0 / 12.0));
    CHECK(s.majority_case_rate == doctest::Approx(0.5));
    CHECK(s.failed_case_ids == std::vector<int>{2, 4});
    CHECK(s.failures == FailureDistribution{2, 1, 1, 0});
}

TEST_CASE("golden fixture: comparisons") {
    const auto runs = golden();
    const auto rep = build_report(runs, kGoldenCategories);
    REQUIRE(rep.summaries.size() == 2);
    CHECK(rep.summaries[0].strategy == "rule_only");
    CHECK(rep.summaries[1].strategy == "model_only");
    REQUIRE(rep.comparisons.size() == 1);
    const auto& c = rep.comparisons[0];
    CHECK(c.a == "model_only");
    CHECK(c.b == "rule_only");
    std::vector<double> x, y;
    for (const auto& r : only(runs, "model_only")) x.push_back(r.q);
    for (const auto& r : only(runs, "rule_only")) y.push_back(r.q);
    CHECK(c.delta == oracle::cliffs_delta(x, y));
    CHECK(c.u == oracle::u_stat(x, y));
    CHECK(c.label == effect_label(c.delta));
    CHECK(c.prob_superiority == doctest::Approx((c.delta + 1) / 2));
    CHECK(c.mode == MwMode::NormalApprox);  // 24 pooled values is past exact enumeration
}

TEST_CASE("all completed with full autonomy") {
    std::vector<ScoredRun> runs;
    CategoryOf cats;
    for (int id = 1; id <= 50; ++id) {
        cats[id] = Category::Static;
        for (int rep = 1; rep <= 3; ++rep) runs.push_back(run(id, "model_only", rep, 10));
    }
    const auto s = aggregate(runs, cats);
    CHECK(s.N == 150);
    CHECK(s.R == 1.0);
    CHECK(s.Z == 1.0);
    CHECK(s.failed_case_ids.empty());
    CHECK(s.majority_case_rate == 1.0);
}

TEST_CASE("failure distribution takes the row shape") {
    std::vector<ScoredRun> runs;
    CategoryOf cats;
    for (int id = 1; id <= 6; ++id) {
        cats[id] = id <= 4 ? Category::Static : (id == 5 ? Category::Thermal : Category::Modal);
        const bool fails = id <= 3;
        for (int rep = 1; rep <= 3; ++rep) runs.push_back(run(id, "model_only", rep, fails ? 3 : 10, fails ? 0 : 1));
    }
    CHECK(aggregate(runs, cats).failures == FailureDistribution{3, 3, 0, 0});
}

TEST_CASE("aggregate input guards") {
    CategoryOf cats = {{1, Category::Static}, {2, Category::Static}};
    CHECK_THROWS_AS(aggregate({run(1, "x", 1, 10), run(1, "x", 2, 10), run(2, "x", 1, 10)}, cats), UnevenRepeats);
    CHECK_THROWS_AS(aggregate({run(1, "x", 1, 10), run(1, "x", 1, 10)}, cats), UnevenRepeats);
    CHECK_THROWS_AS(aggregate({}, cats), EmptySample);
    CHECK_THROWS_AS(aggregate({run(9, "x", 1, 10)}, cats), ConfigError);
}

TEST_CASE("per-task sensitivity") {
    SUBCASE("consistent ordering") {
        std::map<std::string, std::vector<ScoredRun>> by;
        for (int id = 1; id <= 5; ++id) {
            for (int rep = 1; rep <= 3; ++rep) {
                by["no_recovery"].push_back(run(id, "no_recovery", rep, 3, 0));
                by["rule_only"].push_back(run(id, "rule_only", rep, 6 + (rep == 2)));
                by["model_only"].push_back(run(id, "model_only", rep, 10));
            }
        }
        const auto r = per_task_sensitivity(by);
        CHECK_FALSE(r.insufficient_tasks);
        CHECK(r.ranking_match);
        CHECK(r.run_ranking == std::vector<std::string>{"model_only", "rule_only", "no_recovery"});
        CHECK(r.task_ranking == r.run_ranking);
        for (const auto& p : r.pairs) CHECK(p.same_sign);
    }
    SUBCASE("single task") {
        std::map<std::string, std::vector<ScoredRun>> by;
        by["rule_only"] = {run(1, "rule_only", 1, 6)};
        by["model_only"] = {run(1, "model_only", 1, 10)};
        const auto r = per_task_sensitivity(by);
        CHECK(r.insufficient_tasks);
        CHECK_FALSE(r.ranking_match);
    }
    SUBCASE("run and task levels can disagree") {
        // a wins most runs, but b has a higher mean on most tasks
        std::map<std::string, std::vector<ScoredRun>> by;
        const std::vector<std::vector<int>> a = {{10, 10, 0}, {10, 10, 0}, {5, 5, 5}};
        const std::vector<std::vector<int>> b = {{7, 7, 7}, {7, 7, 7}, {6, 6, 6}};
        for (int id = 0; id < 3; ++id) {
            for (int rep = 0; rep < 3; ++rep) {
                by["rule_only"].push_back(run(id + 1, "rule_only", rep + 1, b[id][rep], 0));
                by["model_only"].push_back(run(id + 1, "model_only", rep + 1, a[id][rep], 0));
            }
        }
        const auto r = per_task_sensitivity(by);
        REQUIRE(r.pairs.size() == 1);
        std::vector<double> ra, rb, ta, tb;
        for (int id = 0; id < 3; ++id) {
            double sa = 0, sb = 0;
            for (int rep = 0; rep < 3; ++rep) {
                ra.push_back(a[id][rep]);
                rb.push_back(b[id][rep]);
                sa += a[id][rep];
                sb += b[id][rep];
            }
            ta.push_back(sa / 3);
            tb.push_back(sb / 3);
        }
        CHECK(r.pairs[0].run_delta == oracle::cliffs_delta(ra, rb));
        CHECK(r.pairs[0].task_delta == oracle::cliffs_delta(ta, tb));
        CHECK(r.pairs[0].same_sign == ((r.pairs[0].run_delta > 0) == (r.pairs[0].task_delta > 0)));
    }
}

TEST_CASE("reports are pure functions of the CSV") {
    const auto a = render_json(build_report(golden(), kGoldenCategories));
    const auto b = render_json(build_report(golden(), kGoldenCategories));
    CHECK(a == b);
    auto shuffled = golden();
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(render_json(build_report(shuffled, kGoldenCategories)) == a);

    const auto md = render_markdown(build_report(golden(), kGoldenCategories));
    CHECK(md.find("## Overall results") != std::string::npos);
    CHECK(md.find("## Failed-case distribution") != std::string::npos);
    CHECK(md.find("| model_only | 2 | 0 | 1 | 1 | 3, 4 |") != std::string::npos);
    CHECK(md.find("| rule_only | 12 | 0.4167 |") != std::string::npos);

    const auto j = nlohmann::json::parse(a);
    CHECK(j.at("strategies").at(1).at("R") == 0.5);
    CHECK(j.at("strategies").at(1).at("failure_distribution").at("modal") == 1);

    const auto csv = render_csv(build_report(golden(), kGoldenCategories));
    CHECK(csv.find("model_only,12,0.5000,") != std::string::npos);
}

TEST_CASE("metric parsing") {
    CHECK(parse_metric("q") == Metric::Q);
    CHECK(parse_metric("t") == Metric::T);
    CHECK_FALSE(parse_metric("z").has_value());
}
