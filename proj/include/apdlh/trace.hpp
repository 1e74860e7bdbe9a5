#pragma once

#include "apdlh/recovery.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace apdlh {

enum class EventKind {
    Generated,
    ConfirmationRequested,
    Executed,
    FailureExtracted,
    RulePatched,
    ModelRepaired,
    ForcedRetry,
    ContextEnriched,
    Escalated,
    Stopped,
};

std::string_view to_string(EventKind k) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view s) noexcept;

struct TraceEvent {
    std::string run_id;
    int case_id = 0;
    std::string strategy;
    std::uint64_t seed = 0;
    std::int64_t seq = 0;
    EventKind event = EventKind::Generated;
    nlohmann::json payload = nlohmann::json::object();
    std::string wall_time;  // ISO-8601 UTC; ignored by every comparison below

    // Equality minus wall_time.
    bool same_event(const TraceEvent& other) const;
};

nlohmann::json to_json(const TraceEvent& e);
TraceEvent trace_event_from_json(const nlohmann::json& j);

std::string utc_now_iso8601();

// Append-only JSONL writer, one file per case-run. The terminal Stopped event
// is fsync'ed before append() returns.
class TraceWriter {
public:
    explicit TraceWriter(std::filesystem::path path);
    ~TraceWriter();
    TraceWriter(const TraceWriter&) = delete;
    TraceWriter& operator=(const TraceWriter&) = delete;

    void append(const TraceEvent& e);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

// Drops every event with seq >= next_seq (used when resuming from a
// checkpoint written before those events were durable).
void truncate_trace(const std::filesystem::path& path, std::int64_t next_seq);

// Throws IncompleteTrace on an unparsable line.
std::vector<TraceEvent> read_trace(const std::filesystem::path& path);

struct LintReport {
    std::vector<std::string> pairing_violations;
    std::vector<std::string> budget_violations;
    std::vector<std::string> structure_violations;

    bool clean() const noexcept {
        return pairing_violations.empty() && budget_violations.empty() && structure_violations.empty();
    }
};

// Checks a stored trace on its own terms, without the orchestrator's state
// tracker: turn pairing over the replayed conversation, seq order, the
// strategy's event grammar, and the execution budget.
LintReport lint_trace(const std::vector<TraceEvent>& events, const StrategyConfig& config);

}  // namespace apdlh
