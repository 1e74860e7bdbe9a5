#include "apdlh/orchestrator.hpp"

#include "apdlh/digest.hpp"
#include "apdlh/errors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace apdlh {

using nlohmann::json;

std::string_view to_string(RunStatus s) noexcept {
    switch (s) {
        case RunStatus::Running: return "running";
        case RunStatus::Succeeded: return "succeeded";
        case RunStatus::Failed: return "failed";
        case RunStatus::Escalated: return "escalated";
    }
    return "running";
}

std::string_view to_string(Phase p) noexcept {
    switch (p) {
        case Phase::Generate: return "generate";
        case Phase::Execute: return "execute";
        case Phase::Recover: return "recover";
        case Phase::Finished: return "finished";
    }
    return "finished";
}

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::array<E, N>& all, const char* what) {
    for (auto v : all) {
        if (to_string(v) == s) return v;
    }
    throw CorruptCheckpoint(std::string("unknown ") + what + " '" + s + "'");
}

constexpr std::array<RunStatus, 4> kStatuses = {RunStatus::Running, RunStatus::Succeeded, RunStatus::Failed,
                                                RunStatus::Escalated};
constexpr std::array<Phase, 4> kPhases = {Phase::Generate, Phase::Execute, Phase::Recover, Phase::Finished};

json signature_json(const FailureSignature& s) {
    json j{{"fault_class", std::string(to_string(s.fault_class))}, {"message", s.message}};
    j["command_ref"] = s.command_ref ? json(*s.command_ref) : json(nullptr);
    return j;
}

FailureSignature signature_from_json(const json& j) {
    FailureSignature s;
    auto c = parse_fault_class(j.at("fault_class").get<std::string>());
    if (!c) throw CorruptCheckpoint("bad fault class in checkpoint");
    s.fault_class = *c;
    s.message = j.at("message").get<std::string>();
    if (!j.at("command_ref").is_null()) s.command_ref = j.at("command_ref").get<std::size_t>();
    return s;
}

std::string log_text(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

}  // namespace

json to_json(const RunState& s) {
    json conv = json::array();
    for (const auto& t : s.conversation) conv.push_back(to_json(t));
    json pending = json::array();
    for (const auto& t : s.pending) pending.push_back(to_json(t));
    json failures = json::array();
    for (const auto& f : s.failures) failures.push_back(signature_json(f));
    return json{
        {"schema_version", kCheckpointSchema},
        {"run_id", s.run_id},
        {"case_id", s.case_id},
        {"strategy", std::string(to_string(s.strategy))},
        {"repeat", s.repeat},
        {"seed", s.seed},
        {"attempt", s.attempt},
        {"react_iter", s.react_iter},
        {"forced_used", s.forced_used},
        {"conversation", conv},
        {"pending", pending},
        {"script", s.script},
        {"exec_by_model", s.exec_by_model},
        {"last_outcome", s.last_outcome ? to_json(*s.last_outcome) : json(nullptr)},
        {"failures", failures},
        {"ladder_pos", s.ladder_pos ? json(std::string(to_string(*s.ladder_pos))) : json(nullptr)},
        {"phase", std::string(to_string(s.phase))},
        {"status", std::string(to_string(s.status))},
        {"next_seq", s.next_seq},
        {"intervention_required", s.intervention_required},
        {"token_estimate", s.token_estimate},
        {"call_counter", s.call_counter},
        {"stop_reason", s.stop_reason},
    };
}

RunState run_state_from_json(const json& j) {
    try {
        if (!j.is_object()) throw CorruptCheckpoint("checkpoint is not an object");
        if (j.at("schema_version").get<int>() != kCheckpointSchema) {
            throw CorruptCheckpoint("unsupported checkpoint schema " + j.at("schema_version").dump());
        }
        RunState s;
        s.run_id = j.at("run_id").get<std::string>();
        s.case_id = j.at("case_id").get<int>();
        auto pol = parse_policy(j.at("strategy").get<std::string>());
        if (!pol) throw CorruptCheckpoint("unknown strategy in checkpoint");
        s.strategy = *pol;
        s.repeat = j.at("repeat").get<int>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.attempt = j.at("attempt").get<int>();
        s.react_iter = j.at("react_iter").get<int>();
        s.forced_used = j.at("forced_used").get<int>();
        for (const auto& t : j.at("conversation")) s.conversation.push_back(turn_from_json(t));
        for (const auto& t : j.at("pending")) s.pending.push_back(turn_from_json(t));
        s.script = j.at("script").get<std::string>();
        s.exec_by_model = j.at("exec_by_model").get<bool>();
        if (!j.at("last_outcome").is_null()) s.last_outcome = sim_outcome_from_json(j.at("last_outcome"));
        for (const auto& f : j.at("failures")) s.failures.push_back(signature_from_json(f));
        if (!j.at("ladder_pos").is_null()) {
            s.ladder_pos = parse_ladder_level(j.at("ladder_pos").get<std::string>());
            if (!s.ladder_pos) throw CorruptCheckpoint("unknown ladder level in checkpoint");
        }
        s.phase = parse_enum(j.at("phase").get<std::string>(), kPhases, "phase");
        s.status = parse_enum(j.at("status").get<std::string>(), kStatuses, "status");
        s.next_seq = j.at("next_seq").get<std::int64_t>();
        s.intervention_required = j.at("intervention_required").get<bool>();
        s.token_estimate = j.at("token_estimate").get<long>();
        s.call_counter = j.at("call_counter").get<int>();
        s.stop_reason = j.at("stop_reason").get<std::string>();
        return s;
    } catch (const CorruptCheckpoint&) {
        throw;
    } catch (const std::exception& e) {
        throw CorruptCheckpoint(std::string("checkpoint: ") + e.what());
    }
}

void checkpoint_save(const RunState& state, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << to_json(state).dump() << '\n';
        if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

RunState checkpoint_resume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptCheckpoint("cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw CorruptCheckpoint("checkpoint " + path.string() + " is not valid JSON");
    return run_state_from_json(j);
}

json to_json(const CaseRunRecord& r) {
    return json{{"run_id", r.run_id},
                {"case_id", r.case_id},
                {"strategy", r.strategy},
                {"repeat_index", r.repeat_index},
                {"seed", r.seed},
                {"status", r.status},
                {"completed", r.completed},
                {"attempts", r.attempts},
                {"retries", r.retries},
                {"intervention_required", r.intervention_required},
                {"images", r.images},
                {"trace_ref", r.trace_ref},
                {"token_estimate", r.token_estimate}};
}

CaseRunRecord case_run_record_from_json(const json& j) {
    CaseRunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.case_id = j.at("case_id").get<int>();
    r.strategy = j.at("strategy").get<std::string>();
    r.repeat_index = j.at("repeat_index").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.status = j.at("status").get<std::string>();
    r.completed = j.at("completed").get<int>();
    r.attempts = j.at("attempts").get<int>();
    r.retries = j.at("retries").get<int>();
    r.intervention_required = j.at("intervention_required").get<bool>();
    r.images = j.at("images").get<int>();
    r.trace_ref = j.at("trace_ref").get<std::string>();
    r.token_estimate = j.at("token_estimate").get<long>();
    return r;
}

std::string make_run_id(int case_id, Policy strategy, int repeat, std::uint64_t seed) {
    const auto id = std::to_string(case_id);
    const auto rep = std::to_string(repeat);
    const auto sd = std::to_string(seed);
    return digest_of({id, to_string(strategy), rep, sd}).substr(0, 16);
}

std::uint64_t run_seed(std::uint64_t seed, int repeat) {
    return mix64(seed, static_cast<std::uint64_t>(repeat));
}

std::filesystem::path trace_path(const std::filesystem::path& out_dir, const std::string& run_id) {
    return out_dir / trace_ref(run_id);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, const std::string& run_id) {
    return out_dir / "checkpoints" / (run_id + ".json");
}

std::string trace_ref(const std::string& run_id) { return "traces/" + run_id + ".jsonl"; }

std::string enrichment_text(const TaskSpec& task, const std::vector<FailureSignature>& failures) {
    std::string doc;
    switch (task.category) {
        case Category::Static:
            doc = "Static structural analysis. Use SOLID185/SOLID186 (or BEAM188/SHELL181) elements, "
                  "ANTYPE,STATIC, AUTOTS,ON with NSUBST for nonlinear loads, and read results with SET,LAST.";
            break;
        case Category::Modal:
            doc = "Modal analysis. Use SOLID185/SOLID186 elements, ANTYPE,MODAL with MODOPT,LANB and MXPAND; "
                  "mode shapes are read with SET,FIRST or SET,<mode>. Mesh with MSHKEY,0 and a coarse ESIZE.";
            break;
        case Category::Thermal:
            doc = "Steady-state thermal analysis. Only thermal solids SOLID70/SOLID90 are valid; structural "
                  "elements are rejected. Use AUTOTS,ON with NSUBST and plot TEMP with PLNSOL.";
            break;
    }
    std::string out = doc + "\nRecent failures:\n";
    const std::size_t from = failures.size() > 2 ? failures.size() - 2 : 0;
    for (std::size_t i = from; i < failures.size(); ++i) {
        out += "- " + std::string(to_string(failures[i].fault_class)) + ": " + failures[i].message + "\n";
    }
    return out;
}

Orchestrator::Orchestrator(std::shared_ptr<const TaskSpec> task, StrategyConfig config, Collaborators collaborators,
                           RunOptions options, RunState state)
    : task_(std::move(task)),
      config_(config),
      collab_(std::move(collaborators)),
      options_(std::move(options)),
      state_(std::move(state)),
      tracker_(state_.conversation) {
    for (const auto& t : state_.pending) tracker_.append(t);
    writer_ = std::make_unique<TraceWriter>(trace_path(options_.out_dir, state_.run_id));
}

RunState Orchestrator::initial_state(const TaskSpec& task, Policy strategy, int repeat, std::uint64_t seed) {
    RunState s;
    s.run_id = make_run_id(task.case_id, strategy, repeat, seed);
    s.case_id = task.case_id;
    s.strategy = strategy;
    s.repeat = repeat;
    s.seed = seed;
    return s;
}

std::string Orchestrator::next_call_id() { return "call-" + std::to_string(++state_.call_counter); }

void Orchestrator::append(Turn turn) {
    tracker_.append(turn);
    state_.token_estimate += turn.token_estimate;
    state_.pending.push_back(std::move(turn));
}

void Orchestrator::emit(EventKind kind, json payload) {
    json turns = json::array();
    for (const auto& t : state_.pending) turns.push_back(to_json(t));
    payload["turns"] = std::move(turns);
    state_.pending.clear();

    TraceEvent e;
    e.run_id = state_.run_id;
    e.case_id = state_.case_id;
    e.strategy = std::string(to_string(state_.strategy));
    e.seed = state_.seed;
    e.seq = state_.next_seq++;
    e.event = kind;
    e.payload = std::move(payload);
    e.wall_time = utc_now_iso8601();
    writer_->append(e);
}

void Orchestrator::finish(RunStatus status, std::string reason) {
    tracker_.require_settled();
    if (status == RunStatus::Succeeded &&
        (!state_.last_outcome || !state_.last_outcome->success || state_.last_outcome->images.empty())) {
        throw InternalInvariantViolation("run marked succeeded without a successful execution");
    }
    state_.status = status;
    state_.phase = Phase::Finished;
    state_.stop_reason = reason;
    const int images =
        status == RunStatus::Succeeded ? static_cast<int>(state_.last_outcome->images.size()) : 0;
    emit(EventKind::Stopped, json{{"status", std::string(to_string(status))},
                                  {"reason", std::move(reason)},
                                  {"attempt", state_.attempt},
                                  {"images", images},
                                  {"intervention_required", state_.intervention_required}});
}

ToolContext Orchestrator::tool_context() const {
    ToolContext ctx;
    ctx.backend = collab_.backend;
    ctx.task = task_;
    ctx.exec.attempt = state_.attempt + 1;
    if (options_.create_artifacts) ctx.exec.artifact_dir = options_.out_dir / "artifacts" / state_.run_id;
    if (state_.last_outcome) ctx.last_log = state_.last_outcome->log;
    ctx.timeout = options_.tool_timeout;
    return ctx;
}

bool Orchestrator::step() {
    if (state_.terminal()) return false;
    if (options_.step_allowance && options_.step_allowance->fetch_sub(1) <= 0) {
        throw RunInterrupted("step allowance exhausted in run " + state_.run_id);
    }
    switch (state_.phase) {
        case Phase::Generate: do_generate(); break;
        case Phase::Execute: do_execute(); break;
        case Phase::Recover: do_recover(); break;
        case Phase::Finished: break;
    }
    if (!state_.pending.empty()) throw InternalInvariantViolation("turns left outside any trace event");
    if (state_.attempt > config_.budget_B) throw InternalInvariantViolation("retry budget exceeded");
    if (state_.react_iter > config_.max_react_iters) throw InternalInvariantViolation("ReAct iteration cap exceeded");

    state_.conversation = manage_context(tracker_.turns(), options_.token_budget);
    tracker_ = StateTracker(state_.conversation);
    checkpoint_save(state_, checkpoint_path(options_.out_dir, state_.run_id));
    return !state_.terminal();
}

CaseRunRecord Orchestrator::run() {
    while (step()) {
    }
    return record();
}

CaseRunRecord Orchestrator::record() const { return record_from_state(state_); }

CaseRunRecord record_from_state(const RunState& s) {
    CaseRunRecord r;
    r.run_id = s.run_id;
    r.case_id = s.case_id;
    r.strategy = std::string(to_string(s.strategy));
    r.repeat_index = s.repeat;
    r.seed = s.seed;
    r.status = std::string(to_string(s.status));
    const bool ok = s.status == RunStatus::Succeeded && s.last_outcome && s.last_outcome->success;
    r.images = ok ? static_cast<int>(s.last_outcome->images.size()) : 0;
    r.completed = r.images >= 1 ? 1 : 0;
    r.attempts = s.attempt;
    r.retries = std::max(s.attempt - 1, 0);
    r.intervention_required = s.intervention_required;
    r.trace_ref = trace_ref(s.run_id);
    r.token_estimate = s.token_estimate;
    return r;
}

void Orchestrator::do_generate() {
    append(make_turn(TurnKind::System,
                     json{{"text", "You write ANSYS APDL input decks. Tools: run_solver, read_error_log, "
                                   "patch_script. The harness owns the retry budget."}}));
    append(make_turn(TurnKind::User, json{{"case_id", task_->case_id}, {"prompt", task_->prompt}}));
    const ApdlScript script = collab_.model->generate_initial(*task_);
    state_.script = render_script(script);
    append(make_turn(TurnKind::ModelThought, json{{"action", "generate"}, {"script", state_.script}}));
    ++state_.react_iter;
    state_.exec_by_model = true;
    state_.phase = Phase::Execute;
    emit(EventKind::Generated, json{{"model", collab_.model->name()}, {"script", state_.script}});
}

void Orchestrator::do_execute() {
    if (state_.attempt >= config_.budget_B) throw InternalInvariantViolation("execution requested past budget");
    if (config_.rule_confirmation_required) {
        emit(EventKind::ConfirmationRequested,
             json{{"attempt", state_.attempt + 1}, {"acknowledged", "auto"}});
    }
    if (state_.exec_by_model) {
        append(make_turn(TurnKind::ModelThought, json{{"action", "run_solver"}}));
        ++state_.react_iter;
    }
    ToolCall call{next_call_id(), std::string(kToolRunSolver), json{{"script", state_.script}}};
    append(make_turn(TurnKind::ToolCall, json{{"name", call.name}, {"args", call.args}}, call.id));
    const ToolResult res = tool_dispatch(call, config_, tool_context());
    ++state_.attempt;

    SimOutcome outcome;
    if (res.status == ToolStatus::Ok) {
        outcome = sim_outcome_from_json(res.payload);
    } else {
        outcome.log.exit_status = ExitStatus::Failure;
        outcome.log.lines = {std::string(kErrorSentinel) + "TOOL run_solver " + std::string(to_string(res.status)) +
                             ": " + res.message};
    }
    json names = json::array();
    for (const auto& img : outcome.images) names.push_back(std::filesystem::path(img).filename().string());
    // The conversation sees artifact names only, so traces do not depend on the output directory.
    json log_lines = json::array();
    for (const auto& line : outcome.log.lines) {
        if (line.rfind(kImageWritten, 0) == 0) {
            log_lines.push_back(std::string(kImageWritten) +
                                std::filesystem::path(line.substr(kImageWritten.size())).filename().string());
        } else {
            log_lines.push_back(line);
        }
    }
    append(make_turn(TurnKind::ToolResult,
                     json{{"status", std::string(to_string(res.status))},
                          {"success", outcome.success},
                          {"images", names},
                          {"log", log_lines}},
                     call.id));
    state_.last_outcome = outcome;
    emit(EventKind::Executed, json{{"attempt", state_.attempt},
                                   {"success", outcome.success},
                                   {"images", static_cast<int>(outcome.images.size())},
                                   {"backend", std::string(to_string(collab_.backend->backend_id()))}});
    if (outcome.success) {
        finish(RunStatus::Succeeded, "solution complete");
        return;
    }
    const FailureSignature sig = extract_failure(outcome.log);
    state_.failures.push_back(sig);
    emit(EventKind::FailureExtracted, signature_json(sig));
    state_.phase = Phase::Recover;
}

void Orchestrator::do_recover() {
    const FailureSignature& sig = state_.failures.back();
    const auto next = ladder_next(state_.ladder_pos, sig, config_);
    if (!next) {
        finish(RunStatus::Failed, state_.ladder_pos ? "recovery exhausted" : "no recovery permitted");
        return;
    }
    if (*next == LadderLevel::L4_Human) {
        state_.ladder_pos = next;
        state_.intervention_required = true;
        state_.status = RunStatus::Escalated;
        json failures = json::array();
        for (const auto& f : state_.failures) failures.push_back(std::string(to_string(f.fault_class)));
        emit(EventKind::Escalated, json{{"level", std::string(to_string(*next))}, {"failures", failures}});
        finish(RunStatus::Escalated, "escalated to a human operator");
        return;
    }
    if (state_.attempt >= config_.budget_B) {
        finish(RunStatus::Failed, "retry budget exhausted");
        return;
    }

    if (*next == LadderLevel::L1_RulePatch) {
        ToolCall call{next_call_id(), std::string(kToolPatchScript),
                      json{{"script", state_.script}, {"failure", std::string(to_string(sig.fault_class))}}};
        append(make_turn(TurnKind::ToolCall, json{{"name", call.name}, {"args", call.args}}, call.id));
        const ToolResult res = tool_dispatch(call, config_, tool_context());
        append(make_turn(TurnKind::ToolResult,
                         json{{"status", std::string(to_string(res.status))}, {"result", res.payload}}, call.id));
        state_.ladder_pos = LadderLevel::L1_RulePatch;
        const bool changed = res.status == ToolStatus::Ok && res.payload.value("changed", false);
        const json rules = res.status == ToolStatus::Ok ? res.payload.at("rules_applied") : json::array();
        emit(EventKind::RulePatched, json{{"rules_applied", rules}, {"changed", changed}});
        if (changed) {
            state_.script = res.payload.at("script").get<std::string>();
            state_.exec_by_model = false;
            state_.phase = Phase::Execute;
        } else if (config_.policy == Policy::RuleOnly) {
            finish(RunStatus::Failed, "no rule applies");
        }
        return;
    }

    // Model rungs. Under forced retries a stop request costs one more thought.
    const bool stop_requested = config_.forced_retries > 0 &&
                                collab_.model->requests_stop_after_failure(*task_, state_.attempt);
    const int cost = 2 + (stop_requested ? 1 : 0);
    if (state_.react_iter + cost > config_.max_react_iters) {
        finish(RunStatus::Failed, "ReAct iteration cap reached");
        return;
    }
    do_model_repair(*next, stop_requested);
}

void Orchestrator::do_model_repair(LadderLevel level, bool stop_requested) {
    if (stop_requested) {
        append(make_turn(TurnKind::ModelThought,
                         json{{"action", "stop"}, {"reason", "simulation failed; proposing to stop"}}));
        ++state_.react_iter;
        if (state_.forced_used >= config_.forced_retries) {
            finish(RunStatus::Failed, "model stopped after forced retries were used up");
            return;
        }
        ++state_.forced_used;
        emit(EventKind::ForcedRetry,
             json{{"forced_used", state_.forced_used}, {"remaining", config_.forced_retries - state_.forced_used}});
        append(make_turn(TurnKind::User,
                         json{{"instruction", "The simulation failed. Read the error log and submit a corrected "
                                              "script; stopping is not permitted yet."}}));
    }

    std::optional<std::string> enrichment;
    if (level == LadderLevel::L3_ContextEnrich) {
        enrichment = enrichment_text(*task_, state_.failures);
        emit(EventKind::ContextEnriched, json{{"enrichment", *enrichment}});
        append(make_turn(TurnKind::User, json{{"context", *enrichment}}));
    }

    append(make_turn(TurnKind::ModelThought, json{{"action", "read_error_log"}}));
    ++state_.react_iter;
    ToolCall call{next_call_id(), std::string(kToolReadErrorLog), json::object()};
    append(make_turn(TurnKind::ToolCall, json{{"name", call.name}, {"args", call.args}}, call.id));
    const ToolResult res = tool_dispatch(call, config_, tool_context());
    append(make_turn(TurnKind::ToolResult,
                     json{{"status", std::string(to_string(res.status))}, {"result", res.payload}}, call.id));
    std::string log;
    if (res.status == ToolStatus::Ok) log = log_text(res.payload.at("log").get<std::vector<std::string>>());

    const ApdlScript before = parse_script(state_.script);
    RepairRequest req{state_.attempt, log, enrichment};
    const ApdlScript after = collab_.model->repair(before, state_.failures.back(), *task_, req);
    const bool changed = !after.command_equal(before);
    state_.script = render_script(after);
    state_.ladder_pos = level;
    state_.exec_by_model = true;
    state_.phase = Phase::Execute;
    emit(EventKind::ModelRepaired, json{{"attempt", state_.attempt},
                                        {"level", std::string(to_string(level))},
                                        {"changed", changed},
                                        {"script", state_.script}});
}

CaseRunRecord run_case(const TaskSpec& task, const StrategyConfig& config, const Collaborators& collaborators,
                       const RunOptions& options, int repeat, std::uint64_t seed) {
    const std::string id = make_run_id(task.case_id, config.policy, repeat, seed);
    const auto ckpt = checkpoint_path(options.out_dir, id);
    const auto trace = trace_path(options.out_dir, id);

    RunState state;
    if (std::filesystem::exists(ckpt)) {
        state = checkpoint_resume(ckpt);
        if (state.run_id != id || state.case_id != task.case_id || state.strategy != config.policy) {
            throw CorruptCheckpoint("checkpoint " + ckpt.string() + " belongs to another run");
        }
        if (state.terminal()) return record_from_state(state);
        truncate_trace(trace, state.next_seq);
    } else {
        std::filesystem::remove(trace);
        state = Orchestrator::initial_state(task, config.policy, repeat, seed);
    }
    Orchestrator orch(std::make_shared<const TaskSpec>(task), config, collaborators, options, std::move(state));
    return orch.run();
}

}  // namespace apdlh
