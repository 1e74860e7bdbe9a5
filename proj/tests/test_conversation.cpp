#include "apdlh/conversation.hpp"
#include "apdlh/errors.hpp"

#include <doctest.h>

#include <random>

using namespace apdlh;
using nlohmann::json;

namespace {

Turn sys(int tokens) {
    Turn t = make_turn(TurnKind::System, json{{"text", "system"}});
    t.token_estimate = tokens;
    return t;
}

Turn thought(int tokens = 10) {
    Turn t = make_turn(TurnKind::ModelThought, json{{"text", "thinking"}});
    t.token_estimate = tokens;
    return t;
}

Turn call(const std::string& id, int tokens = 10) {
    Turn t = make_turn(TurnKind::ToolCall, json{{"name", "run_solver"}}, id);
    t.token_estimate = tokens;
    return t;
}

Turn result(const std::string& id, int tokens = 10) {
    Turn t = make_turn(TurnKind::ToolResult, json{{"log", std::string(static_cast<std::size_t>(tokens) * 4, 'x')}}, id);
    t.token_estimate = tokens;
    return t;
}

Turn user(int tokens = 10) {
    Turn t = make_turn(TurnKind::User, json{{"text", "please"}});
    t.token_estimate = tokens;
    return t;
}

}  // namespace

TEST_CASE("token estimates") {
    CHECK(estimate_tokens("") == 0);
    CHECK(estimate_tokens("abcd") == 1);
    CHECK(estimate_tokens("abcde") == 2);
    const auto t = make_turn(TurnKind::User, json{{"text", "hello"}});
    CHECK(t.token_estimate == estimate_tokens(t.payload.dump()));
    CHECK(turn_from_json(to_json(t)) == t);
    const auto c = make_turn(TurnKind::ToolCall, json::object(), "c1");
    CHECK(turn_from_json(to_json(c)) == c);
}

TEST_CASE("pairing violations") {
    using V = std::vector<Turn>;
    CHECK_FALSE(find_pairing_violation(V{sys(1), thought(), call("a"), result("a"), thought()}, true));
    CHECK(find_pairing_violation(V{thought(), result("a")}, false));
    CHECK(find_pairing_violation(V{thought(), call("a"), thought()}, false));
    CHECK(find_pairing_violation(V{thought(), call("a"), result("a"), result("a")}, false));
    CHECK(find_pairing_violation(V{thought(), call("a"), result("a"), call("a"), result("a")}, false));
    CHECK(find_pairing_violation(V{thought(), call("a")}, true));
    CHECK_FALSE(find_pairing_violation(V{thought(), call("a")}, false));
    // parallel calls answered in any order
    CHECK_FALSE(find_pairing_violation(V{thought(), call("a"), call("b"), result("b"), result("a"), thought()}, true));
}

TEST_CASE("StateTracker rejects pairing breaks as they happen") {
    StateTracker st;
    st.append(sys(5));
    st.append(thought());
    st.append(call("c1"));
    CHECK_THROWS_AS(st.append(thought()), InternalInvariantViolation);
    CHECK_THROWS_AS(st.require_settled(), InternalInvariantViolation);
    CHECK_THROWS_AS(st.append(result("zz")), InternalInvariantViolation);
    st.append(result("c1"));
    st.require_settled();
    CHECK_THROWS_AS(st.append(result("c1")), InternalInvariantViolation);
    CHECK_THROWS_AS(st.append(call("")), InternalInvariantViolation);
    CHECK(st.total_tokens() == 35);
}

TEST_CASE("manage_context") {
    SUBCASE("under budget is a no-op") {
        const std::vector<Turn> conv = {sys(10), thought(), call("a"), result("a")};
        CHECK(manage_context(conv, 1000) == conv);
    }
    SUBCASE("old tool results collapse first") {
        const std::vector<Turn> conv = {sys(10), thought(), call("a"), result("a", 500), thought(), call("b"),
                                        result("b", 20)};
        const auto out = manage_context(conv, 200);
        REQUIRE(out.size() == conv.size());
        CHECK(out[3].payload.contains("collapsed"));
        CHECK(out[3].call_id == "a");
        CHECK(out[6] == conv[6]);
        CHECK(total_tokens(out) <= 200);
        CHECK_FALSE(find_pairing_violation(out, true));
    }
    SUBCASE("budget below the system turn") {
        const std::vector<Turn> conv = {sys(100), thought(), user()};
        CHECK_THROWS_AS(manage_context(conv, 50), BudgetInfeasible);
    }
    SUBCASE("trim drops whole groups and keeps system and tail") {
        const std::vector<Turn> conv = {sys(10), user(100), thought(100), call("a", 5), result("a", 5),
                                        thought(100), user(10), thought(10)};
        const auto out = manage_context(conv, 60);
        CHECK(out.front() == conv.front());
        CHECK(out[out.size() - 1] == conv.back());
        CHECK(out[out.size() - 2] == conv[conv.size() - 2]);
        CHECK(total_tokens(out) <= 60);
        CHECK_FALSE(find_pairing_violation(out, true));
    }
    SUBCASE("protected tail too large") {
        const std::vector<Turn> conv = {sys(10), thought(10), user(500), thought(500)};
        CHECK_THROWS_AS(manage_context(conv, 200), BudgetInfeasible);
    }
}

TEST_CASE("manage_context preserves pairing on random conversations") {
    std::mt19937 rng(77);
    std::uniform_int_distribution<int> tok(1, 120);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Turn> conv = {sys(tok(rng))};
        int id = 0;
        const int groups = std::uniform_int_distribution<int>(1, 10)(rng);
        for (int g = 0; g < groups; ++g) {
            conv.push_back(std::uniform_int_distribution<int>(0, 3)(rng) == 0 ? user(tok(rng)) : thought(tok(rng)));
            const int calls = std::uniform_int_distribution<int>(0, 2)(rng);
            std::vector<std::string> ids;
            for (int c = 0; c < calls; ++c) {
                ids.push_back("c" + std::to_string(id++));
                conv.push_back(call(ids.back(), tok(rng)));
            }
            for (const auto& i : ids) conv.push_back(result(i, tok(rng)));
        }
        REQUIRE_FALSE(find_pairing_violation(conv, true));
        const int budget = std::uniform_int_distribution<int>(conv[0].token_estimate + 1, 1500)(rng);
        try {
            const auto out = manage_context(conv, budget);
            CHECK(total_tokens(out) <= budget);
            CHECK(out.front() == conv.front());
            CHECK_FALSE(find_pairing_violation(out, true));
            if (conv.size() >= 3) {
                CHECK(out.back() == conv.back());
            }
        } catch (const BudgetInfeasible&) {
            // Smallest reachable form: system turns plus the group holding the
            // protected tail, with older results collapsed.
            const std::size_t tail = conv.size() - 2;
            std::size_t start = tail;
            while (start > 0 && (conv[start].kind == TurnKind::ToolCall || conv[start].kind == TurnKind::ToolResult)) --start;
            int floor = 0;
            for (std::size_t i = 0; i < conv.size(); ++i) {
                const auto& t = conv[i];
                if (t.kind != TurnKind::System && i < start) continue;
                int tokens = t.token_estimate;
                if (t.kind == TurnKind::ToolResult && i < tail) {
                    const json collapsed{{"collapsed", "tool result elided (" + std::to_string(tokens) + " tokens)"}};
                    tokens = std::min(tokens, estimate_tokens(collapsed.dump()));
                }
                floor += tokens;
            }
            CHECK(floor > budget);
        }
    }
}
