#include "apdlh/solver.hpp"

#include "apdlh/errors.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace apdlh {

using nlohmann::json;

namespace fs = std::filesystem;

json to_json(const SimOutcome& o) {
    return json{{"success", o.success},
                {"images", o.images},
                {"log", o.log.lines},
                {"exit_status", o.log.exit_status == ExitStatus::Success ? "success" : "failure"},
                {"solve_steps", o.solve_steps}};
}

SimOutcome sim_outcome_from_json(const json& j) {
    SimOutcome o;
    o.success = j.at("success").get<bool>();
    o.images = j.at("images").get<std::vector<std::string>>();
    o.log.lines = j.at("log").get<std::vector<std::string>>();
    o.log.exit_status = j.at("exit_status").get<std::string>() == "success" ? ExitStatus::Success : ExitStatus::Failure;
    o.solve_steps = j.at("solve_steps").get<int>();
    return o;
}

std::string_view to_string(BackendId id) noexcept {
    switch (id) {
        case BackendId::Simulated: return "simulated";
        case BackendId::ExternalCommand: return "external_command";
        case BackendId::Fallback: return "fallback";
    }
    return "simulated";
}

std::optional<BackendId> parse_backend_id(std::string_view s) noexcept {
    for (auto id : {BackendId::Simulated, BackendId::ExternalCommand, BackendId::Fallback}) {
        if (to_string(id) == s) return id;
    }
    return std::nullopt;
}

std::string artifact_name(int case_id, int attempt, int index) {
    return "plot_" + std::to_string(case_id) + "_" + std::to_string(attempt) + "_" + std::to_string(index) + ".png";
}

double mesh_threshold(const TaskSpec& task) {
    const bool rule_fixable = !task.fault_profile.injects(FaultClass::MeshFail) ||
                              task.fault_profile.rule_resolvable.count(FaultClass::MeshFail) > 0;
    return task.geometry.element_size_mm * (rule_fixable ? 2.0 : 4.0);
}

const std::set<std::string>& compatible_elements(Category c) {
    static const std::set<std::string> kStructural = {"SOLID185", "SOLID186", "BEAM188", "SHELL181"};
    static const std::set<std::string> kThermal = {"SOLID70", "SOLID90"};
    return c == Category::Thermal ? kThermal : kStructural;
}

namespace {

std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

bool is_mesh_command(const ApdlCommand& c) {
    return c.name == "VMESH" || c.name == "AMESH" || c.name == "LMESH";
}

bool is_plot_command(const ApdlCommand& c) {
    return c.name == "PLNSOL" || c.name == "PLESOL" || c.name == "PLDISP" || c.name == "PLVECT";
}

std::size_t index_of_first(const ApdlScript& s, std::string_view name) {
    for (std::size_t i = 0; i < s.commands.size(); ++i) {
        if (s.commands[i].name == name) return i;
    }
    return s.commands.size();
}

// MSHKEY in force when the first mesh command runs (or at end of script).
bool effective_free_mesh(const ApdlScript& s) {
    std::size_t limit = s.commands.size();
    for (std::size_t i = 0; i < s.commands.size(); ++i) {
        if (is_mesh_command(s.commands[i])) {
            limit = i;
            break;
        }
    }
    std::optional<double> key;
    for (std::size_t i = 0; i < limit; ++i) {
        const auto& c = s.commands[i];
        if (c.name == "MSHKEY" && !c.args.empty()) key = parse_number(c.args[0]);
    }
    return key && *key == 0.0;
}

// First ESIZE whose size is missing or below the threshold.
const ApdlCommand* undersized_esize(const ApdlScript& s, double threshold) {
    for (const auto& c : s.commands) {
        if (c.name != "ESIZE") continue;
        auto size = c.args.empty() ? std::nullopt : parse_number(c.args[0]);
        if (!size || *size < threshold) return &c;
    }
    return nullptr;
}

int solve_count(const ApdlScript& s) { return static_cast<int>(s.count("SOLVE")); }

// The first SET whose load step is unavailable.
const ApdlCommand* bad_set(const ApdlScript& s) {
    const int steps = solve_count(s);
    for (const auto& c : s.commands) {
        if (c.name != "SET" || c.args.empty() || c.args[0].empty()) continue;
        if (c.arg_is(0, "LAST") || c.arg_is(0, "FIRST")) continue;
        auto step = parse_number(c.args[0]);
        if (step && *step >= 1 && *step <= steps && *step == static_cast<int>(*step)) continue;
        return &c;
    }
    return nullptr;
}

std::string line_ref(std::size_t line_no) { return " AT LINE " + std::to_string(line_no); }

std::string failure_line(FaultClass fault, const ApdlScript& s, const TaskSpec& task) {
    switch (fault) {
        case FaultClass::MeshFail: {
            const double thr = mesh_threshold(task);
            if (const auto* c = undersized_esize(s, thr)) {
                const std::string size = c->args.empty() || c->args[0].empty() ? "UNSET" : c->args[0];
                return std::string(kErrorSentinel) + "MESH FAILURE: ELEMENT SIZE " + size + " BELOW MINIMUM " +
                       format_number(thr) + " FOR MAPPED MESHING" + line_ref(c->line_no);
            }
            std::size_t at = 0;
            for (const auto& c : s.commands) {
                if (is_mesh_command(c)) {
                    at = c.line_no;
                    break;
                }
            }
            return std::string(kErrorSentinel) + "MESH FAILURE: NO ELEMENT SIZE BELOW MINIMUM " + format_number(thr) +
                   (at ? line_ref(at) : std::string());
        }
        case FaultClass::ConvFail: {
            const auto idx = index_of_first(s, "SOLVE");
            const std::string where = idx < s.commands.size() ? line_ref(s.commands[idx].line_no) : std::string();
            return std::string(kErrorSentinel) + "SOLUTION NOT CONVERGED AFTER 25 EQUILIBRIUM ITERATIONS" + where;
        }
        case FaultClass::ElemTypeFail: {
            const std::string analysis = task.category == Category::Thermal ? "THERMAL" : "STRUCTURAL";
            for (const auto& c : s.commands) {
                if (c.name != "ET") continue;
                const std::string elem = c.args.size() > 1 ? upper(c.args[1]) : "NONE";
                if (!compatible_elements(task.category).count(elem)) {
                    return std::string(kErrorSentinel) + "ELEMENT TYPE " + elem + " IS INVALID FOR " + analysis +
                           " ANALYSIS" + line_ref(c.line_no);
                }
            }
            return std::string(kErrorSentinel) + "ELEMENT TYPE NONE IS INVALID FOR " + analysis + " ANALYSIS";
        }
        case FaultClass::MissingResults: {
            const auto* c = bad_set(s);
            const std::string step = c ? c->args[0] : "?";
            return std::string(kErrorSentinel) + "NO RESULTS FOR LOAD STEP " + step + " (" +
                   std::to_string(solve_count(s)) + " AVAILABLE)" + (c ? line_ref(c->line_no) : std::string());
        }
        case FaultClass::HardGeom:
            return std::string(kErrorSentinel) +
                   "GEOMETRY DECOMPOSITION FAILED: THIN-WALL FEATURE BELOW MESHABLE THICKNESS";
        case FaultClass::Unknown:
            break;
    }
    return std::string(kErrorSentinel) + "UNCLASSIFIED SOLVER FAILURE";
}

}  // namespace

bool fault_resolved(FaultClass fault, const ApdlScript& s, const TaskSpec& task) {
    switch (fault) {
        case FaultClass::MeshFail:
            return effective_free_mesh(s) ||
                   (s.count("ESIZE") > 0 && undersized_esize(s, mesh_threshold(task)) == nullptr);
        case FaultClass::ConvFail: {
            const auto limit = index_of_first(s, "SOLVE");
            bool autots = false;
            bool nsubst = false;
            for (std::size_t i = 0; i < limit; ++i) {
                const auto& c = s.commands[i];
                autots = autots || (c.name == "AUTOTS" && c.arg_is(0, "ON"));
                nsubst = nsubst || c.name == "NSUBST";
            }
            return autots && nsubst;
        }
        case FaultClass::ElemTypeFail: {
            bool any = false;
            for (const auto& c : s.commands) {
                if (c.name != "ET") continue;
                any = true;
                if (c.args.size() < 2 || !compatible_elements(task.category).count(upper(c.args[1]))) return false;
            }
            return any;
        }
        case FaultClass::MissingResults:
            return bad_set(s) == nullptr;
        case FaultClass::HardGeom:
        case FaultClass::Unknown:
            return false;
    }
    return false;
}

SimOutcome SimulatedBackend::execute(const ApdlScript& script, const TaskSpec& task,
                                     const ExecutionContext& ctx) const {
    if (script.empty()) throw InvalidScript("cannot execute an empty script");

    SimOutcome out;
    auto& lines = out.log.lines;
    lines.push_back("SIMULATED MAPDL BACKEND (" + std::string(to_string(id_)) + ")");
    lines.push_back("CASE " + std::to_string(task.case_id) + " ATTEMPT " + std::to_string(ctx.attempt) +
                    " CATEGORY " + upper(std::string(to_string(task.category))));
    lines.push_back("READ " + std::to_string(script.commands.size()) + " COMMANDS");

    for (auto fault : kInjectableFaults) {
        if (!task.fault_profile.injects(fault) || fault_resolved(fault, script, task)) continue;
        lines.push_back(failure_line(fault, script, task));
        lines.push_back("RUN TERMINATED");
        out.log.exit_status = ExitStatus::Failure;
        out.success = false;
        out.solve_steps = fault == FaultClass::MissingResults ? solve_count(script) : 0;
        return out;
    }

    out.solve_steps = solve_count(script);
    for (int step = 1; step <= out.solve_steps; ++step) {
        lines.push_back("LOAD STEP " + std::to_string(step) + " OF " + std::to_string(out.solve_steps) + " SOLVED");
    }
    const auto plots = std::count_if(script.commands.begin(), script.commands.end(), is_plot_command);
    const int images = std::max<int>(1, static_cast<int>(plots));
    if (!ctx.artifact_dir.empty()) fs::create_directories(ctx.artifact_dir);
    for (int n = 1; n <= images; ++n) {
        const auto name = artifact_name(task.case_id, ctx.attempt, n);
        const auto path = ctx.artifact_dir.empty() ? fs::path(name) : ctx.artifact_dir / name;
        if (!ctx.artifact_dir.empty()) std::ofstream(path, std::ios::binary | std::ios::trunc);
        out.images.push_back(path.string());
        lines.push_back(std::string(kImageWritten) + path.string());
    }
    lines.emplace_back(kSolutionComplete);
    out.log.exit_status = ExitStatus::Success;
    out.success = true;
    return out;
}

ExternalCommandBackend::ExternalCommandBackend(fs::path command, fs::path workdir)
    : command_(std::move(command)), workdir_(std::move(workdir)) {}

bool ExternalCommandBackend::available(const fs::path& command) {
    if (command.empty()) return false;
    std::error_code ec;
    return fs::is_regular_file(command, ec) && ::access(command.c_str(), X_OK) == 0;
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

}  // namespace

SimOutcome ExternalCommandBackend::execute(const ApdlScript& script, const TaskSpec& task,
                                           const ExecutionContext& ctx) const {
    if (script.empty()) throw InvalidScript("cannot execute an empty script");
    const fs::path dir = workdir_.empty() ? fs::temp_directory_path() : workdir_;
    fs::create_directories(dir);
    const auto input = dir / ("case_" + std::to_string(task.case_id) + "_attempt_" + std::to_string(ctx.attempt) + ".inp");
    {
        std::ofstream f(input, std::ios::binary | std::ios::trunc);
        f << render_script(script);
    }

    const std::string cmd = shell_quote(command_.string()) + " " + shell_quote(input.string()) + " 2>&1";
    SimOutcome out;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (pipe == nullptr) {
        out.log.lines.push_back(std::string(kErrorSentinel) + "EXTERNAL SOLVER COULD NOT BE STARTED");
        out.log.exit_status = ExitStatus::Failure;
        return out;
    }
    std::string pending;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) {
        pending += buf.data();
        if (!pending.empty() && pending.back() == '\n') {
            pending.pop_back();
            out.log.lines.push_back(pending);
            pending.clear();
        }
    }
    if (!pending.empty()) out.log.lines.push_back(pending);
    const int status = ::pclose(pipe);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;

    for (const auto& line : out.log.lines) {
        if (line.rfind(kImageWritten, 0) == 0) out.images.push_back(line.substr(kImageWritten.size()));
    }
    out.solve_steps = static_cast<int>(script.count("SOLVE"));
    out.success = code == 0 && !out.images.empty();
    out.log.exit_status = out.success ? ExitStatus::Success : ExitStatus::Failure;
    if (!out.success) {
        out.images.clear();
        const bool has_error = std::any_of(out.log.lines.begin(), out.log.lines.end(), [](const std::string& l) {
            return l.rfind(kErrorSentinel, 0) == 0;
        });
        if (!has_error) {
            out.log.lines.push_back(std::string(kErrorSentinel) + "EXTERNAL SOLVER EXIT CODE " + std::to_string(code));
        }
    }
    return out;
}

std::shared_ptr<const SolverBackend> select_backend(const BackendConfig& config) {
    for (auto id : config.preference) {
        switch (id) {
            case BackendId::Simulated:
            case BackendId::Fallback:
                return std::make_shared<SimulatedBackend>(id);
            case BackendId::ExternalCommand:
                if (ExternalCommandBackend::available(config.external_command)) {
                    return std::make_shared<ExternalCommandBackend>(config.external_command, config.workdir);
                }
                break;
        }
    }
    return std::make_shared<SimulatedBackend>();
}

}  // namespace apdlh
