#include "apdlh/errors.hpp"
#include "apdlh/trace.hpp"

#include "run_helpers.hpp"

#include <doctest.h>

#include <regex>

using namespace apdlh;
using nlohmann::json;

namespace {

TaskSpec mesh_task() {
    auto t = testutil::make_task(3, Category::Static, {FaultClass::MeshFail}, {FaultClass::MeshFail},
                                 {FaultClass::MeshFail});
    t.geometry.element_size_mm = 2;
    return t;
}

std::vector<TraceEvent> sample_trace(testutil::CaseHarness& h, Policy p) {
    return h.trace(h.run(mesh_task(), p));
}

}  // namespace

TEST_CASE("trace events serialize with the fixed field set") {
    TraceEvent e;
    e.run_id = "abc";
    e.case_id = 4;
    e.strategy = "rule_only";
    e.seed = 42;
    e.seq = 7;
    e.event = EventKind::RulePatched;
    e.payload = json{{"rules_applied", {"R1_Mesh"}}};
    e.wall_time = utc_now_iso8601();
    const auto j = to_json(e);
    std::vector<std::string> keys;
    for (const auto& [k, _] : j.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"case_id", "event", "payload", "run_id", "seed", "seq", "strategy", "wall_time"});
    CHECK(j.at("event") == "RulePatched");
    CHECK(trace_event_from_json(j).same_event(e));
    CHECK(std::regex_match(e.wall_time, std::regex(R"(\d{4}-\d\d-\d\dT\d\d:\d\d:\d\d(\.\d+)?Z)")));

    auto extra = j;
    extra["mood"] = "fine";
    CHECK_THROWS_AS(trace_event_from_json(extra), IncompleteTrace);
    auto bad_kind = j;
    bad_kind["event"] = "Exploded";
    CHECK_THROWS_AS(trace_event_from_json(bad_kind), IncompleteTrace);

    auto other = e;
    other.wall_time = "1999-01-01T00:00:00Z";
    CHECK(other.same_event(e));
    other.seq = 8;
    CHECK_FALSE(other.same_event(e));
}

TEST_CASE("writer appends, reader parses, truncate drops the tail") {
    testutil::TempDir dir("trace");
    const auto path = dir / "traces/x.jsonl";
    {
        TraceWriter w(path);
        for (int i = 0; i < 5; ++i) {
            TraceEvent e;
            e.run_id = "x";
            e.seq = i;
            e.event = i == 4 ? EventKind::Stopped : EventKind::Executed;
            w.append(e);
        }
    }
    auto events = read_trace(path);
    REQUIRE(events.size() == 5);
    CHECK(events[4].event == EventKind::Stopped);
    truncate_trace(path, 2);
    events = read_trace(path);
    REQUIRE(events.size() == 2);
    CHECK(events.back().seq == 1);
    {
        TraceWriter w(path);  // reopening appends
        TraceEvent e;
        e.seq = 2;
        w.append(e);
    }
    CHECK(read_trace(path).size() == 3);

    testutil::spit(dir / "bad.jsonl", "{\"run_id\":\n");
    CHECK_THROWS_AS(read_trace(dir / "bad.jsonl"), IncompleteTrace);
}

TEST_CASE("orchestrator traces lint clean") {
    testutil::CaseHarness h;
    for (auto p : {Policy::NoRecovery, Policy::RuleOnly, Policy::ModelOnly, Policy::FullLadder}) {
        const auto trace = sample_trace(h, p);
        const auto report = lint_trace(trace, StrategyConfig::for_policy(p));
        CAPTURE(to_string(p));
        CHECK(report.clean());
        for (const auto& v : report.structure_violations) MESSAGE(v);
    }
}

TEST_CASE("lint catches broken pairing") {
    testutil::CaseHarness h;
    const auto cfg = StrategyConfig::for_policy(Policy::RuleOnly);
    const auto good = sample_trace(h, Policy::RuleOnly);
    REQUIRE(lint_trace(good, cfg).clean());

    SUBCASE("dropped tool result") {
        auto t = good;
        for (auto& e : t) {
            auto& turns = e.payload["turns"];
            for (auto it = turns.begin(); it != turns.end(); ++it) {
                if ((*it)["kind"] == "tool_result") {
                    turns.erase(it);
                    goto done;
                }
            }
        }
    done:
        CHECK_FALSE(lint_trace(t, cfg).pairing_violations.empty());
    }
    SUBCASE("result without call") {
        auto t = good;
        t[0].payload["turns"].push_back(json{{"kind", "tool_result"}, {"call_id", "ghost"}, {"payload", {}}, {"tokens", 1}});
        CHECK_FALSE(lint_trace(t, cfg).pairing_violations.empty());
    }
    SUBCASE("reused call id") {
        auto t = good;
        std::string first_id;
        for (auto& e : t)
            for (auto& turn : e.payload["turns"])
                if (turn["kind"] == "tool_call") {
                    if (first_id.empty()) first_id = turn["call_id"];
                    else turn["call_id"] = first_id;
                }
        CHECK_FALSE(lint_trace(t, cfg).pairing_violations.empty());
    }
}

TEST_CASE("lint catches budget and grammar breaches") {
    testutil::CaseHarness h;
    const auto good = sample_trace(h, Policy::NoRecovery);
    const auto cfg = StrategyConfig::for_policy(Policy::NoRecovery);
    REQUIRE(lint_trace(good, cfg).clean());

    SUBCASE("second execution under no_recovery") {
        REQUIRE(good.size() == 5);
        REQUIRE(good[1].event == EventKind::ConfirmationRequested);
        REQUIRE(good[2].event == EventKind::Executed);
        std::vector<TraceEvent> t = {good[0], good[1], good[2], good[3], good[1], good[2], good[4]};
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i].seq = static_cast<std::int64_t>(i);
            t[i].payload["turns"] = json::array();
        }
        CHECK_FALSE(lint_trace(t, cfg).budget_violations.empty());
    }
    SUBCASE("seq going backwards") {
        auto t = good;
        t[2].seq = 0;
        CHECK_FALSE(lint_trace(t, cfg).structure_violations.empty());
    }
    SUBCASE("missing terminal Stopped") {
        auto t = good;
        t.pop_back();
        CHECK_FALSE(lint_trace(t, cfg).clean());
    }
    SUBCASE("execution without confirmation") {
        auto t = good;
        t.erase(t.begin() + 1);
        CHECK_FALSE(lint_trace(t, cfg).structure_violations.empty());
    }
    SUBCASE("event forbidden for the policy") {
        auto t = good;
        t[3].event = EventKind::ModelRepaired;
        CHECK_FALSE(lint_trace(t, cfg).structure_violations.empty());
    }
    SUBCASE("empty trace") {
        CHECK_FALSE(lint_trace({}, cfg).clean());
    }
}
