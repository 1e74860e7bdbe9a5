#include "apdlh/scoring.hpp"

#include "apdlh/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace apdlh {

int autonomy_score(const std::vector<TraceEvent>& trace) {
    if (trace.empty() || trace.back().event != EventKind::Stopped) {
        throw IncompleteTrace("trace has no terminal Stopped event");
    }
    bool confirmation = false, enriched = false;
    for (const auto& e : trace) {
        switch (e.event) {
            case EventKind::Escalated: return 0;
            case EventKind::ConfirmationRequested: confirmation = true; break;
            case EventKind::ContextEnriched: enriched = true; break;
            default: break;
        }
    }
    const auto& stop = trace.back().payload;
    if (stop.value("intervention_required", false) || stop.value("status", "") == "escalated") return 0;
    if (enriched) return 1;
    if (confirmation) return 2;
    return 3;
}

int efficiency_score(int retries, int completed) {
    if (retries < 0) throw std::invalid_argument("retries must be non-negative");
    if (!completed) return 0;
    if (retries == 0) return 3;
    if (retries == 1) return 2;
    return 1;
}

int oracle_completion_score(const CaseRunRecord& record, int expected_images) {
    if (!record.completed) return 0;
    return record.images == expected_images ? 4 : 2;
}

ScoredRun score_run(const CaseRunRecord& record, const std::vector<TraceEvent>& trace, int t) {
    if (t < 0 || t > 4) throw std::invalid_argument("t must be in 0..4");
    ScoredRun s;
    s.case_id = record.case_id;
    s.strategy = record.strategy;
    s.repeat = record.repeat_index;
    s.completed = record.completed;
    s.t = t;
    s.a = autonomy_score(trace);
    s.e = efficiency_score(record.retries, record.completed);
    s.q = s.t + s.a + s.e;
    s.retries = record.retries;
    s.intervention = record.intervention_required;
    if (s.q < 0 || s.q > 10) throw InternalInvariantViolation("q out of range");
    return s;
}

namespace {

int strategy_rank(const std::string& s) {
    auto p = parse_policy(s);
    return p ? static_cast<int>(*p) : 100;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

int to_int(const std::string& s, const char* field, std::size_t line) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw ConfigError("line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
    }
    return v;
}

std::string header_line(std::istream& in) {
    std::string h;
    std::getline(in, h);
    if (!h.empty() && h.back() == '\r') h.pop_back();
    if (h.size() >= 3 && static_cast<unsigned char>(h[0]) == 0xEF) h.erase(0, 3);
    return h;
}

}  // namespace

void sort_scored_runs(std::vector<ScoredRun>& runs) {
    std::sort(runs.begin(), runs.end(), [](const ScoredRun& x, const ScoredRun& y) {
        return std::tuple(x.case_id, strategy_rank(x.strategy), x.strategy, x.repeat) <
               std::tuple(y.case_id, strategy_rank(y.strategy), y.strategy, y.repeat);
    });
}

void write_scored_runs(std::ostream& out, const std::vector<ScoredRun>& runs) {
    out << kScoredRunHeader << '\n';
    for (const auto& r : runs) {
        out << r.case_id << ',' << r.strategy << ',' << r.repeat << ',' << r.completed << ',' << r.t << ',' << r.a
            << ',' << r.e << ',' << r.q << ',' << r.retries << ',' << (r.intervention ? 1 : 0) << '\n';
    }
}

void save_scored_runs(const std::filesystem::path& path, const std::vector<ScoredRun>& runs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_scored_runs(out, runs);
}

std::vector<ScoredRun> read_scored_runs(std::istream& in) {
    if (header_line(in) != kScoredRunHeader) throw ConfigError("scored-run CSV header mismatch");
    std::vector<ScoredRun> out;
    std::string line;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv(line);
        if (f.size() != 10) throw ConfigError("line " + std::to_string(n) + ": expected 10 fields");
        ScoredRun r;
        r.case_id = to_int(f[0], "case_id", n);
        r.strategy = f[1];
        r.repeat = to_int(f[2], "repeat", n);
        r.completed = to_int(f[3], "completed", n);
        r.t = to_int(f[4], "t", n);
        r.a = to_int(f[5], "a", n);
        r.e = to_int(f[6], "e", n);
        r.q = to_int(f[7], "q", n);
        r.retries = to_int(f[8], "retries", n);
        r.intervention = to_int(f[9], "intervention", n) != 0;
        if (r.q != r.t + r.a + r.e) throw ConfigError("line " + std::to_string(n) + ": q != t + a + e");
        out.push_back(r);
    }
    return out;
}

std::vector<ScoredRun> load_scored_runs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    return read_scored_runs(in);
}

std::vector<RaterRow> read_rater_sheet(std::istream& in) {
    if (header_line(in) != kRaterSheetHeader) throw ConfigError("rater sheet header mismatch");
    std::vector<RaterRow> out;
    std::set<std::tuple<int, std::string, int, std::string>> seen;
    std::string line;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty() || line == "\r") continue;
        auto f = split_csv(line);
        if (f.size() != 5) throw ConfigError("line " + std::to_string(n) + ": expected 5 fields");
        RaterRow r{to_int(f[0], "case_id", n), f[1], to_int(f[2], "repeat", n), f[3], to_int(f[4], "t", n)};
        if (r.t < 0 || r.t > 4) throw ConfigError("line " + std::to_string(n) + ": t outside 0..4");
        if (!seen.emplace(r.case_id, r.strategy, r.repeat, r.rater).second) {
            throw ConfigError("line " + std::to_string(n) + ": duplicate (run, rater) row");
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RaterRow> load_rater_sheet(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    return read_rater_sheet(in);
}

std::vector<std::pair<int, int>> rater_pairs(const std::vector<RaterRow>& sheet, const std::string& rater_a,
                                             const std::string& rater_b) {
    using Key = std::tuple<int, std::string, int>;
    std::map<Key, int> a;
    for (const auto& r : sheet) {
        if (r.rater == rater_a) a[{r.case_id, r.strategy, r.repeat}] = r.t;
    }
    std::vector<std::pair<int, int>> out;
    for (const auto& r : sheet) {
        if (r.rater != rater_b) continue;
        auto it = a.find({r.case_id, r.strategy, r.repeat});
        if (it != a.end()) out.emplace_back(it->second, r.t);
    }
    return out;
}

std::vector<std::string> raters_in(const std::vector<RaterRow>& sheet) {
    std::vector<std::string> out;
    for (const auto& r : sheet) {
        if (std::find(out.begin(), out.end(), r.rater) == out.end()) out.push_back(r.rater);
    }
    return out;
}

std::optional<int> consensus_t(const std::vector<RaterRow>& sheet, int case_id, const std::string& strategy,
                               int repeat) {
    int sum = 0, n = 0;
    for (const auto& r : sheet) {
        if (r.case_id == case_id && r.strategy == strategy && r.repeat == repeat) {
            sum += r.t;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return (2 * sum + n) / (2 * n);
}

}  // namespace apdlh
