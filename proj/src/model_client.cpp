#include "apdlh/model_client.hpp"

#include "apdlh/digest.hpp"
#include "apdlh/errors.hpp"
#include "apdlh/solver.hpp"

#include <algorithm>
#include <sstream>

namespace apdlh {

double CompetenceTable::operator[](FaultClass c) const {
    if (c == FaultClass::HardGeom) return 0.0;
    auto it = p.find(c);
    return it == p.end() ? 0.0 : it->second;
}

CompetenceTable CompetenceTable::benchmark_default() {
    return CompetenceTable{{{FaultClass::MeshFail, 1.0},
                            {FaultClass::ConvFail, 1.0},
                            {FaultClass::ElemTypeFail, 1.0},
                            {FaultClass::MissingResults, 1.0},
                            {FaultClass::HardGeom, 0.0}}};
}

namespace {

constexpr std::uint64_t kRepairSalt = 0x2e9a1;
constexpr std::uint64_t kStopSalt = 0x5709;

struct Defects {
    bool mesh = false;
    bool mesh_mapped = false;  // rule-resistant: mapped meshing pinned before VMESH
    bool conv = false;
    bool elem = false;
    bool elem_unmapped = false;  // rule-resistant: element outside the substitution map
    bool results = false;
};

Defects defects_for(const TaskSpec& task) {
    const auto& fp = task.fault_profile;
    Defects d;
    d.mesh = fp.injects(FaultClass::MeshFail);
    d.mesh_mapped = d.mesh && !fp.rule_resolvable.count(FaultClass::MeshFail);
    d.conv = fp.injects(FaultClass::ConvFail);
    d.elem = fp.injects(FaultClass::ElemTypeFail);
    d.elem_unmapped = d.elem && !fp.rule_resolvable.count(FaultClass::ElemTypeFail);
    d.results = fp.injects(FaultClass::MissingResults);
    return d;
}

std::string element_for(const TaskSpec& task, const Defects& d) {
    if (task.category == Category::Thermal) {
        if (!d.elem) return "SOLID70";
        return d.elem_unmapped ? "SHELL181" : "SOLID185";
    }
    if (task.category == Category::Modal) return "SOLID186";
    return "SOLID185";
}

void emit_geometry(std::ostringstream& s, const Geometry& g) {
    if (g.shape == "cylinder" || g.shape == "pressure_vessel") {
        s << "CYLIND,0," << format_number(g.width_mm / 2.0) << ",0," << format_number(g.length_mm) << "\n";
    } else {
        s << "BLOCK,0," << format_number(g.length_mm) << ",0," << format_number(g.width_mm) << ",0,"
          << format_number(g.height_mm) << "\n";
    }
}

std::string build_template(const TaskSpec& task, const Defects& d, const std::string& header) {
    const auto& g = task.geometry;
    std::ostringstream s;
    s << header;
    s << "ET,1," << element_for(task, d) << "\n";
    if (task.category == Category::Thermal) {
        s << "MP,KXX,1,167\n";
    } else {
        s << "MP,EX,1,210000\nMP,PRXY,1,0.3\n";
        if (task.category == Category::Modal) s << "MP,DENS,1,7.85e-9\n";
    }
    emit_geometry(s, g);
    const double esize = d.mesh ? g.element_size_mm : mesh_threshold(task);
    s << "ESIZE," << format_number(esize) << "\n";
    if (d.mesh_mapped) s << "MSHKEY,1\n";
    s << "VMESH,ALL\n";
    s << "NSEL,S,LOC,X,0\n";
    if (task.category == Category::Thermal) {
        s << "D,ALL,TEMP,20\n";
        s << "NSEL,S,LOC,X," << format_number(g.length_mm) << "\n";
        s << "SF,ALL,HFLUX," << format_number(g.load) << "\n";
    } else {
        s << "D,ALL,ALL\n";
        if (task.category == Category::Static) {
            s << "NSEL,S,LOC,X," << format_number(g.length_mm) << "\n";
            s << "F,ALL,FY,-" << format_number(g.load) << "\n";
        }
    }
    s << "NSEL,ALL\n";
    if (task.category == Category::Modal) {
        s << "ANTYPE,MODAL\nMODOPT,LANB,6\nMXPAND,6\n";
    } else {
        s << "ANTYPE,STATIC\n";
        if (!d.conv) s << "AUTOTS,ON\nNSUBST,5,20,2\n";
    }
    s << "SOLVE\nFINISH\n";
    if (d.results) {
        s << "SET,3,1\n";
    } else {
        s << (task.category == Category::Modal ? "SET,FIRST\n" : "SET,LAST\n");
    }
    switch (task.category) {
        case Category::Static: s << "PLNSOL,U,SUM\nPLNSOL,S,EQV\n"; break;
        case Category::Modal: s << "PLNSOL,U,SUM\n"; break;
        case Category::Thermal: s << "PLNSOL,TEMP\n"; break;
    }
    return s.str();
}

std::string header_for(const TaskSpec& task, std::uint64_t seed) {
    return "! case " + std::to_string(task.case_id) + ": " + std::string(to_string(task.category)) + " analysis of " +
           task.geometry.shape + " (draft " + std::to_string(seed % 1000) + ")\n";
}

using Commands = std::vector<ApdlCommand>;

void correct_mesh(Commands& cmds, const TaskSpec& task) {
    const auto size = format_number(mesh_threshold(task));
    bool any = false;
    for (auto& c : cmds) {
        if (c.name != "ESIZE") continue;
        c.args = {size};
        any = true;
    }
    std::erase_if(cmds, [](const ApdlCommand& c) { return c.name == "MSHKEY"; });
    if (!any) {
        auto at = std::find_if(cmds.begin(), cmds.end(), [](const ApdlCommand& c) {
            return c.name == "VMESH" || c.name == "AMESH" || c.name == "LMESH";
        });
        cmds.insert(at, make_command("ESIZE", {size}));
    }
}

void correct_convergence(Commands& cmds) {
    auto solve = std::find_if(cmds.begin(), cmds.end(), [](const ApdlCommand& c) { return c.name == "SOLVE"; });
    bool autots = false;
    bool nsubst = false;
    for (auto it = cmds.begin(); it != solve; ++it) {
        autots = autots || (it->name == "AUTOTS" && it->arg_is(0, "ON"));
        nsubst = nsubst || it->name == "NSUBST";
    }
    Commands insert;
    if (!autots) insert.push_back(make_command("AUTOTS", {"ON"}));
    if (!nsubst) insert.push_back(make_command("NSUBST", {"20", "200", "10"}));
    cmds.insert(solve, insert.begin(), insert.end());
}

void correct_element(Commands& cmds, const TaskSpec& task) {
    const std::string target = task.category == Category::Thermal ? "SOLID70" : "SOLID185";
    for (auto& c : cmds) {
        if (c.name != "ET") continue;
        if (c.args.size() < 2) c.args.resize(2);
        if (c.args[0].empty()) c.args[0] = "1";
        std::string elem = c.args[1];
        for (auto& ch : elem) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        if (!compatible_elements(task.category).count(elem)) c.args[1] = target;
    }
}

void correct_results(Commands& cmds, int solve_steps) {
    for (auto& c : cmds) {
        if (c.name != "SET" || c.args.empty() || c.args[0].empty()) continue;
        if (c.arg_is(0, "LAST") || c.arg_is(0, "FIRST")) continue;
        auto step = parse_number(c.args[0]);
        if (step && *step >= 1 && *step <= solve_steps) continue;
        c.args = {"LAST"};
    }
}

}  // namespace

ApdlScript reference_script(const TaskSpec& task) {
    return parse_script(build_template(task, Defects{}, header_for(task, 0)));
}

int expected_plot_count(const TaskSpec& task) {
    const auto s = reference_script(task);
    return static_cast<int>(s.count("PLNSOL") + s.count("PLESOL") + s.count("PLDISP") + s.count("PLVECT"));
}

ApdlScript scripted_generate_initial(const TaskSpec& task, std::uint64_t seed) {
    return parse_script(build_template(task, defects_for(task), header_for(task, seed)));
}

RepairOutcome scripted_repair(const ApdlScript& script, const FailureSignature& sig, const TaskSpec& task,
                              const CompetenceTable& competence, std::uint64_t seed, int attempt) {
    const double draw = keyed_unit(seed, static_cast<std::uint64_t>(task.case_id),
                                   static_cast<std::uint64_t>(attempt), kRepairSalt);
    const bool fixable = sig.fault_class != FaultClass::HardGeom && sig.fault_class != FaultClass::Unknown;
    if (!fixable || draw >= competence[sig.fault_class]) return {script, false};

    Commands cmds = script.commands;
    switch (sig.fault_class) {
        case FaultClass::MeshFail: correct_mesh(cmds, task); break;
        case FaultClass::ConvFail: correct_convergence(cmds); break;
        case FaultClass::ElemTypeFail: correct_element(cmds, task); break;
        case FaultClass::MissingResults: correct_results(cmds, static_cast<int>(script.count("SOLVE"))); break;
        case FaultClass::HardGeom:
        case FaultClass::Unknown: break;
    }
    return {ApdlScript::from_commands(std::move(cmds)), true};
}

ScriptedModelClient::ScriptedModelClient(CompetenceTable competence, std::uint64_t seed, double stop_propensity)
    : competence_(std::move(competence)), seed_(seed), stop_propensity_(stop_propensity) {}

ApdlScript ScriptedModelClient::generate_initial(const TaskSpec& task) const {
    return scripted_generate_initial(task, seed_);
}

ApdlScript ScriptedModelClient::repair(const ApdlScript& script, const FailureSignature& sig, const TaskSpec& task,
                                       const RepairRequest& request) const {
    return scripted_repair(script, sig, task, competence_, seed_, request.attempt).script;
}

bool ScriptedModelClient::requests_stop_after_failure(const TaskSpec& task, int attempt) const {
    return keyed_unit(seed_, static_cast<std::uint64_t>(task.case_id), static_cast<std::uint64_t>(attempt),
                      kStopSalt) < stop_propensity_;
}

EscalatingModelClient::EscalatingModelClient(std::shared_ptr<const ModelClient> local,
                                             std::shared_ptr<const ModelClient> external)
    : local_(std::move(local)), external_(std::move(external)) {
    if (!local_ || !external_) throw std::invalid_argument("escalating client needs two clients");
}

ApdlScript EscalatingModelClient::generate_initial(const TaskSpec& task) const {
    try {
        return local_->generate_initial(task);
    } catch (const ParseError&) {
        return external_->generate_initial(task);
    }
}

ApdlScript EscalatingModelClient::repair(const ApdlScript& script, const FailureSignature& sig, const TaskSpec& task,
                                         const RepairRequest& request) const {
    try {
        return local_->repair(script, sig, task, request);
    } catch (const ParseError&) {
        return external_->repair(script, sig, task, request);
    }
}

bool EscalatingModelClient::requests_stop_after_failure(const TaskSpec& task, int attempt) const {
    return local_->requests_stop_after_failure(task, attempt);
}

std::string EscalatingModelClient::name() const { return local_->name() + "->" + external_->name(); }

}  // namespace apdlh
