#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace apdlh {

enum class TurnKind { System, User, ModelThought, ToolCall, ToolResult };

std::string_view to_string(TurnKind k) noexcept;
std::optional<TurnKind> parse_turn_kind(std::string_view s) noexcept;

struct Turn {
    TurnKind kind = TurnKind::System;
    nlohmann::json payload;
    int token_estimate = 0;
    std::string call_id;  // ToolCall/ToolResult only

    bool operator==(const Turn&) const = default;
};

// ceil(chars / 4)
int estimate_tokens(std::string_view text) noexcept;

Turn make_turn(TurnKind kind, nlohmann::json payload, std::string call_id = {});

nlohmann::json to_json(const Turn& t);
Turn turn_from_json(const nlohmann::json& j);

// Checks the pairing invariant over a whole sequence: every ToolCall gets
// exactly one matching ToolResult before the next ModelThought, and no
// ToolResult appears without an open call. With `require_closed`, calls still
// open at the end are violations too. Returns the first violation.
std::optional<std::string> find_pairing_violation(std::span<const Turn> turns, bool require_closed);

// Incremental guard used while a run is live: append() rejects any turn that
// would break pairing by throwing InternalInvariantViolation.
class StateTracker {
public:
    StateTracker() = default;
    explicit StateTracker(std::vector<Turn> existing);

    void append(Turn turn);
    // Throws if a ToolCall is still waiting for its result.
    void require_settled() const;

    const std::vector<Turn>& turns() const noexcept { return turns_; }
    std::vector<Turn>& mutable_turns() noexcept { return turns_; }
    int total_tokens() const noexcept;

private:
    std::vector<Turn> turns_;
    std::vector<std::string> open_calls_;
};

int total_tokens(std::span<const Turn> turns) noexcept;

// Shrinks a conversation to fit token_budget. Collapse first (oldest
// ToolResult payloads become one-line summaries), then Trim (oldest turn
// groups are dropped whole, so each ToolCall leaves together with its result).
// System turns and the last two turns are never removed. Throws
// BudgetInfeasible when no invariant-preserving reduction fits.
std::vector<Turn> manage_context(std::vector<Turn> conversation, int token_budget);

}  // namespace apdlh
