#include "apdlh/conversation.hpp"

#include "apdlh/errors.hpp"

#include <algorithm>
#include <map>

namespace apdlh {

using nlohmann::json;

std::string_view to_string(TurnKind k) noexcept {
    switch (k) {
        case TurnKind::System: return "system";
        case TurnKind::User: return "user";
        case TurnKind::ModelThought: return "model_thought";
        case TurnKind::ToolCall: return "tool_call";
        case TurnKind::ToolResult: return "tool_result";
    }
    return "system";
}

std::optional<TurnKind> parse_turn_kind(std::string_view s) noexcept {
    for (auto k : {TurnKind::System, TurnKind::User, TurnKind::ModelThought, TurnKind::ToolCall, TurnKind::ToolResult}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

int estimate_tokens(std::string_view text) noexcept { return static_cast<int>((text.size() + 3) / 4); }

Turn make_turn(TurnKind kind, json payload, std::string call_id) {
    Turn t;
    t.kind = kind;
    t.token_estimate = estimate_tokens(payload.dump());
    t.payload = std::move(payload);
    t.call_id = std::move(call_id);
    return t;
}

json to_json(const Turn& t) {
    json j{{"kind", std::string(to_string(t.kind))}, {"payload", t.payload}, {"tokens", t.token_estimate}};
    if (!t.call_id.empty()) j["call_id"] = t.call_id;
    return j;
}

Turn turn_from_json(const json& j) {
    Turn t;
    auto kind = parse_turn_kind(j.at("kind").get<std::string>());
    if (!kind) throw std::invalid_argument("unknown turn kind");
    t.kind = *kind;
    t.payload = j.at("payload");
    t.token_estimate = j.at("tokens").get<int>();
    t.call_id = j.value("call_id", std::string());
    return t;
}

std::optional<std::string> find_pairing_violation(std::span<const Turn> turns, bool require_closed) {
    std::map<std::string, int> results_seen;  // call id -> results so far, for calls since the last thought
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const auto& t = turns[i];
        const auto at = " (turn " + std::to_string(i) + ")";
        switch (t.kind) {
            case TurnKind::ToolCall:
                if (t.call_id.empty()) return "tool call without id" + at;
                if (results_seen.count(t.call_id)) return "duplicate tool call id " + t.call_id + at;
                results_seen[t.call_id] = 0;
                break;
            case TurnKind::ToolResult: {
                auto it = results_seen.find(t.call_id);
                if (it == results_seen.end()) return "tool result without matching call " + t.call_id + at;
                if (++it->second > 1) return "second tool result for call " + t.call_id + at;
                break;
            }
            case TurnKind::ModelThought:
                for (const auto& [id, n] : results_seen) {
                    if (n != 1) return "model thought before result of call " + id + at;
                }
                results_seen.clear();
                break;
            case TurnKind::System:
            case TurnKind::User:
                break;
        }
    }
    if (require_closed) {
        for (const auto& [id, n] : results_seen) {
            if (n != 1) return "tool call " + id + " never received a result";
        }
    }
    return std::nullopt;
}

StateTracker::StateTracker(std::vector<Turn> existing) {
    for (auto& t : existing) append(std::move(t));
}

void StateTracker::append(Turn turn) {
    switch (turn.kind) {
        case TurnKind::ToolCall:
            if (turn.call_id.empty()) throw InternalInvariantViolation("pairing: tool call without id");
            open_calls_.push_back(turn.call_id);
            break;
        case TurnKind::ToolResult: {
            auto it = std::find(open_calls_.begin(), open_calls_.end(), turn.call_id);
            if (it == open_calls_.end()) {
                throw InternalInvariantViolation("pairing: result for unknown or settled call " + turn.call_id);
            }
            open_calls_.erase(it);
            break;
        }
        case TurnKind::ModelThought:
            if (!open_calls_.empty()) {
                throw InternalInvariantViolation("pairing: model thought while call " + open_calls_.front() +
                                                 " is open");
            }
            break;
        case TurnKind::System:
        case TurnKind::User:
            break;
    }
    turns_.push_back(std::move(turn));
}

void StateTracker::require_settled() const {
    if (!open_calls_.empty()) {
        throw InternalInvariantViolation("pairing: call " + open_calls_.front() + " never received a result");
    }
}

int total_tokens(std::span<const Turn> turns) noexcept {
    int total = 0;
    for (const auto& t : turns) total += t.token_estimate;
    return total;
}

int StateTracker::total_tokens() const noexcept { return apdlh::total_tokens(turns_); }

namespace {

// Index one past the turn group starting at `i`: a thought or user turn takes
// the tool calls and results that follow it; a bare call takes its results.
std::size_t group_end(const std::vector<Turn>& turns, std::size_t i) {
    std::size_t j = i + 1;
    while (j < turns.size() && (turns[j].kind == TurnKind::ToolCall || turns[j].kind == TurnKind::ToolResult)) ++j;
    return j;
}

}  // namespace

std::vector<Turn> manage_context(std::vector<Turn> conversation, int token_budget) {
    if (total_tokens(conversation) <= token_budget) return conversation;

    int system_tokens = 0;
    for (const auto& t : conversation) {
        if (t.kind == TurnKind::System) system_tokens += t.token_estimate;
    }
    if (token_budget <= system_tokens) {
        throw BudgetInfeasible("token budget " + std::to_string(token_budget) + " does not exceed the system turn (" +
                               std::to_string(system_tokens) + ")");
    }

    const auto protected_from = conversation.size() >= 2 ? conversation.size() - 2 : 0;

    // Collapse
    for (std::size_t i = 0; i < protected_from; ++i) {
        auto& t = conversation[i];
        if (t.kind != TurnKind::ToolResult || t.payload.contains("collapsed")) continue;
        const auto before = t.token_estimate;
        t.payload = json{{"collapsed", "tool result elided (" + std::to_string(before) + " tokens)"}};
        t.token_estimate = std::min(before, estimate_tokens(t.payload.dump()));
        if (total_tokens(conversation) <= token_budget) return conversation;
    }

    // Trim
    while (total_tokens(conversation) > token_budget) {
        const auto protected_start = conversation.size() >= 2 ? conversation.size() - 2 : 0;
        std::size_t i = 0;
        while (i < conversation.size() && conversation[i].kind == TurnKind::System) ++i;
        if (i >= protected_start) {
            throw BudgetInfeasible("cannot fit " + std::to_string(total_tokens(conversation)) + " tokens into " +
                                   std::to_string(token_budget) + " without dropping protected turns");
        }
        auto end = group_end(conversation, i);
        // A later System turn inside the group stays put.
        for (std::size_t k = i; k < end; ++k) {
            if (conversation[k].kind == TurnKind::System) {
                end = k;
                break;
            }
        }
        if (end > protected_start) {
            throw BudgetInfeasible("oldest removable group overlaps the two most recent turns");
        }
        conversation.erase(conversation.begin() + static_cast<std::ptrdiff_t>(i),
                           conversation.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return conversation;
}

}  // namespace apdlh
