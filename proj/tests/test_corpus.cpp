#include "apdlh/corpus.hpp"
#include "apdlh/errors.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>

using namespace apdlh;

TEST_CASE("default corpus has the 35/10/5 category split") {
    const auto c = generate_default_corpus(42);
    std::map<Category, int> hist;
    for (const auto& t : c.tasks) ++hist[t.category];
    CHECK(c.tasks.size() == 50);
    CHECK(hist[Category::Static] == 35);
    CHECK(hist[Category::Modal] == 10);
    CHECK(hist[Category::Thermal] == 5);
    CHECK(category_warnings(c).empty());
}

TEST_CASE("hard tasks are exactly 8, 21 and 35, all static") {
    const auto c = generate_default_corpus(42);
    std::vector<int> hard;
    for (const auto& t : c.tasks) {
        if (t.hard) hard.push_back(t.case_id);
    }
    CHECK(hard == std::vector<int>{8, 21, 35});
    for (int id : hard) {
        const auto& t = c.task(id);
        CHECK(t.category == Category::Static);
        CHECK(t.fault_profile.injects(FaultClass::HardGeom));
        CHECK_FALSE(t.fault_profile.rule_resolvable.count(FaultClass::HardGeom));
        CHECK_FALSE(t.fault_profile.model_resolvable.count(FaultClass::HardGeom));
    }
}

TEST_CASE("corpus generation is a pure function of the seed") {
    CHECK(serialize_corpus(generate_default_corpus(42)) == serialize_corpus(generate_default_corpus(42)));
    CHECK(generate_default_corpus(7) == generate_default_corpus(7));
    CHECK(generate_default_corpus(42) != generate_default_corpus(43));
}

TEST_CASE("save then load round-trips") {
    testutil::TempDir dir("corpus");
    const auto c = generate_default_corpus(42);
    save_corpus(c, dir / "corpus.json");
    CHECK(load_corpus(dir / "corpus.json") == c);
    CHECK(testutil::slurp(dir / "corpus.json") == serialize_corpus(c));
}

TEST_CASE("malformed corpus files are rejected") {
    SUBCASE("duplicate case id") {
        CHECK_THROWS_AS(load_corpus(testutil::fixture("duplicate_case_id.json")), MalformedCorpus);
    }
    SUBCASE("empty file") {
        CHECK_THROWS_AS(load_corpus(testutil::fixture("empty_corpus.json")), MalformedCorpus);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.json"), MalformedCorpus);
    }
    SUBCASE("extra key on a task") {
        auto j = corpus_to_json(generate_default_corpus(42));
        j["tasks"][0]["difficulty"] = "easy";
        CHECK_THROWS_AS(parse_corpus(j.dump()), MalformedCorpus);
    }
    SUBCASE("unknown fault class") {
        auto j = corpus_to_json(generate_default_corpus(42));
        j["tasks"][0]["fault_profile"]["injected_faults"] = {"gremlins"};
        CHECK_THROWS_AS(parse_corpus(j.dump()), MalformedCorpus);
    }
    SUBCASE("rule_resolvable outside injected") {
        auto c = generate_default_corpus(42);
        auto& fp = c.tasks[0].fault_profile;
        fp.injected_faults.clear();
        fp.rule_resolvable = {FaultClass::ConvFail};
        fp.model_resolvable.clear();
        CHECK_THROWS_AS(parse_corpus(serialize_corpus(c)), MalformedCorpus);
    }
}

TEST_CASE("custom split loads with a warning only") {
    Corpus c;
    c.tasks.push_back(testutil::make_task(1, Category::Thermal, {}, {}, {}));
    c.tasks.push_back(testutil::make_task(2, Category::Static, {FaultClass::ConvFail}, {FaultClass::ConvFail},
                                          {FaultClass::ConvFail}));
    const auto back = parse_corpus(serialize_corpus(c));
    CHECK(back == c);
    CHECK(category_warnings(back).size() == 1);
}

TEST_CASE("fault profiles satisfy their invariants for any seed") {
    for (std::uint64_t seed = 1; seed <= 150; ++seed) {
        const auto c = generate_default_corpus(seed);
        CAPTURE(seed);
        REQUIRE(validate_corpus(c).empty());
        int faulty = 0;
        int instances = 0;
        int rule = 0;
        for (const auto& t : c.tasks) {
            const auto& fp = t.fault_profile;
            CHECK(std::is_sorted(fp.injected_faults.begin(), fp.injected_faults.end()));
            for (auto f : fp.rule_resolvable) CHECK(fp.injects(f));
            for (auto f : fp.model_resolvable) CHECK(fp.injects(f));
            if (t.hard) continue;
            CHECK_FALSE(fp.injects(FaultClass::HardGeom));
            // every ordinary defect is within reach of the model
            CHECK(fp.model_resolvable.size() == fp.injected_faults.size());
            if (!fp.injected_faults.empty()) ++faulty;
            instances += static_cast<int>(fp.injected_faults.size());
            rule += static_cast<int>(fp.rule_resolvable.size());
        }
        CHECK(faulty == 14);
        CHECK(rule == static_cast<int>(std::lround(0.6 * instances)));
    }
}
