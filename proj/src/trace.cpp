#include "apdlh/trace.hpp"

#include "apdlh/errors.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace apdlh {

using nlohmann::json;

namespace {

constexpr std::array<EventKind, 10> kAllEvents = {
    EventKind::Generated,     EventKind::ConfirmationRequested, EventKind::Executed,  EventKind::FailureExtracted,
    EventKind::RulePatched,   EventKind::ModelRepaired,         EventKind::ForcedRetry, EventKind::ContextEnriched,
    EventKind::Escalated,     EventKind::Stopped};

}  // namespace

std::string_view to_string(EventKind k) noexcept {
    switch (k) {
        case EventKind::Generated: return "Generated";
        case EventKind::ConfirmationRequested: return "ConfirmationRequested";
        case EventKind::Executed: return "Executed";
        case EventKind::FailureExtracted: return "FailureExtracted";
        case EventKind::RulePatched: return "RulePatched";
        case EventKind::ModelRepaired: return "ModelRepaired";
        case EventKind::ForcedRetry: return "ForcedRetry";
        case EventKind::ContextEnriched: return "ContextEnriched";
        case EventKind::Escalated: return "Escalated";
        case EventKind::Stopped: return "Stopped";
    }
    return "Stopped";
}

std::optional<EventKind> parse_event_kind(std::string_view s) noexcept {
    for (auto k : kAllEvents) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

bool TraceEvent::same_event(const TraceEvent& o) const {
    return run_id == o.run_id && case_id == o.case_id && strategy == o.strategy && seed == o.seed && seq == o.seq &&
           event == o.event && payload == o.payload;
}

json to_json(const TraceEvent& e) {
    return json{{"run_id", e.run_id},     {"case_id", e.case_id}, {"strategy", e.strategy},
                {"seed", e.seed},         {"seq", e.seq},         {"event", std::string(to_string(e.event))},
                {"payload", e.payload},   {"wall_time", e.wall_time}};
}

TraceEvent trace_event_from_json(const json& j) {
    static const std::set<std::string> kKeys = {"run_id", "case_id", "strategy", "seed",
                                                "seq",    "event",   "payload",  "wall_time"};
    if (!j.is_object() || j.size() != kKeys.size()) throw IncompleteTrace("trace event has the wrong field set");
    for (const auto& k : kKeys) {
        if (!j.contains(k)) throw IncompleteTrace("trace event lacks '" + k + "'");
    }
    TraceEvent e;
    try {
        e.run_id = j.at("run_id").get<std::string>();
        e.case_id = j.at("case_id").get<int>();
        e.strategy = j.at("strategy").get<std::string>();
        e.seed = j.at("seed").get<std::uint64_t>();
        e.seq = j.at("seq").get<std::int64_t>();
        e.payload = j.at("payload");
        e.wall_time = j.at("wall_time").get<std::string>();
    } catch (const json::exception& ex) {
        throw IncompleteTrace(std::string("trace event: ") + ex.what());
    }
    auto kind = parse_event_kind(j.at("event").get<std::string>());
    if (!kind) throw IncompleteTrace("unknown trace event '" + j.at("event").get<std::string>() + "'");
    e.event = *kind;
    return e;
}

std::string utc_now_iso8601() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const auto t = system_clock::to_time_t(now);
    const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

TraceWriter::TraceWriter(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open trace " + path_.string());
}

TraceWriter::~TraceWriter() {
    if (fd_ >= 0) ::close(fd_);
}

void TraceWriter::append(const TraceEvent& e) {
    const std::string line = to_json(e).dump() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
        const auto n = ::write(fd_, line.data() + off, line.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error("write failed on " + path_.string());
        }
        off += static_cast<std::size_t>(n);
    }
    if (e.event == EventKind::Stopped) ::fsync(fd_);
}

void truncate_trace(const std::filesystem::path& path, std::int64_t next_seq) {
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path);
    std::string kept, line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        // A torn final line is exactly what truncation is for.
        if (j.is_discarded() || !j.contains("seq")) break;
        if (j.at("seq").get<std::int64_t>() >= next_seq) break;
        kept += line;
        kept += '\n';
    }
    in.close();
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << kept;
    }
    std::filesystem::rename(tmp, path);
}

std::vector<TraceEvent> read_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IncompleteTrace("cannot read trace " + path.string());
    std::vector<TraceEvent> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw IncompleteTrace(path.string() + ":" + std::to_string(n) + ": not JSON");
        out.push_back(trace_event_from_json(j));
    }
    return out;
}

namespace {

using Allowed = std::map<EventKind, std::set<EventKind>>;

const Allowed& grammar() {
    using E = EventKind;
    static const Allowed kNext = {
        {E::Generated, {E::ConfirmationRequested, E::Executed}},
        {E::ConfirmationRequested, {E::Executed}},
        {E::Executed, {E::FailureExtracted, E::Stopped}},
        {E::FailureExtracted,
         {E::RulePatched, E::ModelRepaired, E::ForcedRetry, E::ContextEnriched, E::Escalated, E::Stopped}},
        {E::RulePatched, {E::ConfirmationRequested, E::Executed, E::ModelRepaired, E::Stopped}},
        {E::ModelRepaired, {E::ConfirmationRequested, E::Executed}},
        {E::ForcedRetry, {E::ModelRepaired}},
        {E::ContextEnriched, {E::ModelRepaired}},
        {E::Escalated, {E::Stopped}},
        {E::Stopped, {}},
    };
    return kNext;
}

std::set<EventKind> forbidden_for(Policy p) {
    using E = EventKind;
    switch (p) {
        case Policy::NoRecovery:
            return {E::RulePatched, E::ModelRepaired, E::ForcedRetry, E::ContextEnriched, E::Escalated};
        case Policy::RuleOnly: return {E::ModelRepaired, E::ForcedRetry, E::ContextEnriched, E::Escalated};
        case Policy::ModelOnly: return {E::RulePatched, E::ContextEnriched, E::Escalated};
        case Policy::FullLadder: return {E::ForcedRetry};
    }
    return {};
}

std::string where(const TraceEvent& e) {
    return "seq " + std::to_string(e.seq) + " (" + std::string(to_string(e.event)) + ")";
}

// Replays the conversation carried in event payloads and checks that every
// tool_call is answered exactly once before the next model_thought.
void lint_pairing(const std::vector<TraceEvent>& events, LintReport& r) {
    std::set<std::string> open;
    std::set<std::string> seen;
    for (const auto& e : events) {
        if (!e.payload.contains("turns")) continue;
        const auto& turns = e.payload.at("turns");
        if (!turns.is_array()) {
            r.pairing_violations.push_back(where(e) + ": turns is not an array");
            continue;
        }
        for (const auto& t : turns) {
            const std::string kind = t.value("kind", "");
            const std::string id = t.value("call_id", "");
            if (kind == "model_thought" && !open.empty()) {
                r.pairing_violations.push_back(where(e) + ": model_thought while call " + *open.begin() +
                                               " is unanswered");
                open.clear();
            } else if (kind == "tool_call") {
                if (id.empty() || seen.count(id)) {
                    r.pairing_violations.push_back(where(e) + ": tool_call id '" + id + "' missing or reused");
                }
                seen.insert(id);
                open.insert(id);
            } else if (kind == "tool_result") {
                if (!open.erase(id)) {
                    r.pairing_violations.push_back(where(e) + ": tool_result '" + id + "' has no open call");
                }
            }
        }
    }
    if (!open.empty()) r.pairing_violations.push_back("call " + *open.begin() + " never answered");
}

}  // namespace

LintReport lint_trace(const std::vector<TraceEvent>& events, const StrategyConfig& config) {
    LintReport r;
    if (events.empty()) {
        r.structure_violations.push_back("empty trace");
        return r;
    }
    const auto& first = events.front();
    if (first.event != EventKind::Generated) r.structure_violations.push_back("trace does not start with Generated");
    if (events.back().event != EventKind::Stopped) r.structure_violations.push_back("trace does not end with Stopped");

    const auto forbidden = forbidden_for(config.policy);
    int executed = 0;
    bool confirmed = false;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.run_id != first.run_id || e.case_id != first.case_id || e.strategy != first.strategy ||
            e.seed != first.seed) {
            r.structure_violations.push_back(where(e) + ": run identity changes mid-trace");
        }
        if (e.strategy != to_string(config.policy)) {
            r.structure_violations.push_back(where(e) + ": strategy does not match the lint config");
        }
        if (i > 0 && e.seq <= events[i - 1].seq) r.structure_violations.push_back(where(e) + ": seq not increasing");
        if (forbidden.count(e.event)) {
            r.structure_violations.push_back(where(e) + ": event not allowed for " +
                                             std::string(to_string(config.policy)));
        }
        if (i + 1 < events.size() && !grammar().at(e.event).count(events[i + 1].event)) {
            r.structure_violations.push_back(where(e) + " -> " + std::string(to_string(events[i + 1].event)) +
                                             ": transition not in the state machine");
        }
        if (e.event == EventKind::ConfirmationRequested) confirmed = true;
        if (e.event == EventKind::Executed) {
            ++executed;
            if (config.rule_confirmation_required && !confirmed) {
                r.structure_violations.push_back(where(e) + ": execution without a logged confirmation");
            }
            confirmed = false;
        }
    }
    if (executed > config.budget_B) {
        r.budget_violations.push_back(std::to_string(executed) + " executions exceed budget " +
                                      std::to_string(config.budget_B));
    }
    if (config.policy == Policy::NoRecovery && executed != 1) {
        r.budget_violations.push_back("no_recovery must execute exactly once, saw " + std::to_string(executed));
    }
    lint_pairing(events, r);
    return r;
}

}  // namespace apdlh
