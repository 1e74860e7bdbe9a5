#pragma once

#include "apdlh/orchestrator.hpp"
#include "apdlh/trace.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace apdlh {

struct ScoredRun {
    int case_id = 0;
    std::string strategy;
    int repeat = 0;
    int completed = 0;
    int t = 0;  // task completion 0-4
    int a = 0;  // autonomy 0-3
    int e = 0;  // efficiency 0-3
    int q = 0;  // t + a + e
    int retries = 0;
    bool intervention = false;

    bool operator==(const ScoredRun&) const = default;
};

// 3 fully autonomous, 2 auto-acknowledged confirmations, 1 context enrichment
// needed, 0 escalated or intervention required. Throws IncompleteTrace unless
// the trace ends with Stopped.
int autonomy_score(const std::vector<TraceEvent>& trace);

int efficiency_score(int retries, int completed);

// 4 success with the expected artifact count, 2 success with a different
// count, 0 failure.
int oracle_completion_score(const CaseRunRecord& record, int expected_images);

// Throws InternalInvariantViolation if the parts do not add up.
ScoredRun score_run(const CaseRunRecord& record, const std::vector<TraceEvent>& trace, int t);

inline constexpr std::string_view kScoredRunHeader = "case_id,strategy,repeat,completed,t,a,e,q,retries,intervention";
inline constexpr std::string_view kRaterSheetHeader = "case_id,strategy,repeat,rater,t";

// Canonical order: case_id, then strategy rank, then repeat.
void sort_scored_runs(std::vector<ScoredRun>& runs);

void write_scored_runs(std::ostream& out, const std::vector<ScoredRun>& runs);
void save_scored_runs(const std::filesystem::path& path, const std::vector<ScoredRun>& runs);
// Throws ConfigError on a wrong header or malformed row.
std::vector<ScoredRun> read_scored_runs(std::istream& in);
std::vector<ScoredRun> load_scored_runs(const std::filesystem::path& path);

struct RaterRow {
    int case_id = 0;
    std::string strategy;
    int repeat = 0;
    std::string rater;
    int t = 0;

    bool operator==(const RaterRow&) const = default;
};

// Rejects t outside 0..4 and duplicate (run, rater) rows.
std::vector<RaterRow> read_rater_sheet(std::istream& in);
std::vector<RaterRow> load_rater_sheet(const std::filesystem::path& path);

// (rater_a score, rater_b score) for every run both raters scored.
std::vector<std::pair<int, int>> rater_pairs(const std::vector<RaterRow>& sheet, const std::string& rater_a,
                                             const std::string& rater_b);

// Distinct rater ids in first-seen order.
std::vector<std::string> raters_in(const std::vector<RaterRow>& sheet);

// Mean of all raters' t for the run, rounded half up; nullopt if unrated.
std::optional<int> consensus_t(const std::vector<RaterRow>& sheet, int case_id, const std::string& strategy,
                               int repeat);

}  // namespace apdlh
