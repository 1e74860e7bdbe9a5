#include "apdlh/recovery.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>

namespace apdlh {

std::string_view to_string(Policy p) noexcept {
    switch (p) {
        case Policy::NoRecovery: return "no_recovery";
        case Policy::RuleOnly: return "rule_only";
        case Policy::ModelOnly: return "model_only";
        case Policy::FullLadder: return "full_ladder";
    }
    return "no_recovery";
}

std::optional<Policy> parse_policy(std::string_view s) noexcept {
    for (auto p : {Policy::NoRecovery, Policy::RuleOnly, Policy::ModelOnly, Policy::FullLadder}) {
        if (to_string(p) == s) return p;
    }
    return std::nullopt;
}

StrategyConfig StrategyConfig::for_policy(Policy p) {
    StrategyConfig c;
    c.policy = p;
    c.budget_B = budget_for(p);
    switch (p) {
        case Policy::NoRecovery:
            c.max_react_iters = 2;
            c.forced_retries = 0;
            c.log_tool_enabled = false;
            c.rule_confirmation_required = true;
            break;
        case Policy::RuleOnly:
            c.max_react_iters = 12;
            c.forced_retries = 0;
            c.log_tool_enabled = false;
            c.rule_confirmation_required = true;
            break;
        case Policy::ModelOnly:
            c.max_react_iters = 12;
            c.forced_retries = 3;
            c.log_tool_enabled = true;
            c.rule_confirmation_required = false;
            break;
        case Policy::FullLadder:
            c.max_react_iters = 12;
            c.forced_retries = 0;
            c.log_tool_enabled = true;
            c.rule_confirmation_required = false;
            break;
    }
    return c;
}

int budget_for(Policy p) noexcept {
    switch (p) {
        case Policy::NoRecovery: return 1;
        case Policy::RuleOnly: return 2;
        case Policy::ModelOnly: return 4;
        case Policy::FullLadder: return 5;  // initial + one per ladder level
    }
    return 1;
}

CostClass cost_class(LadderLevel level) noexcept {
    switch (level) {
        case LadderLevel::L1_RulePatch: return CostClass::Free;
        case LadderLevel::L2_ModelRegen: return CostClass::Cheap;
        case LadderLevel::L3_ContextEnrich: return CostClass::Paid;
        case LadderLevel::L4_Human: return CostClass::Manual;
    }
    return CostClass::Manual;
}

std::string_view to_string(LadderLevel level) noexcept {
    switch (level) {
        case LadderLevel::L1_RulePatch: return "L1_RulePatch";
        case LadderLevel::L2_ModelRegen: return "L2_ModelRegen";
        case LadderLevel::L3_ContextEnrich: return "L3_ContextEnrich";
        case LadderLevel::L4_Human: return "L4_Human";
    }
    return "L4_Human";
}

std::optional<LadderLevel> parse_ladder_level(std::string_view s) noexcept {
    for (auto l : {LadderLevel::L1_RulePatch, LadderLevel::L2_ModelRegen, LadderLevel::L3_ContextEnrich,
                   LadderLevel::L4_Human}) {
        if (to_string(l) == s) return l;
    }
    return std::nullopt;
}

namespace {

bool has_rule(FaultClass c) {
    return c == FaultClass::MeshFail || c == FaultClass::ConvFail || c == FaultClass::ElemTypeFail ||
           c == FaultClass::MissingResults;
}

}  // namespace

std::optional<LadderLevel> ladder_next(std::optional<LadderLevel> current, const FailureSignature& sig,
                                       const StrategyConfig& config) {
    switch (config.policy) {
        case Policy::NoRecovery:
            return std::nullopt;
        case Policy::RuleOnly:
            if (current) return std::nullopt;
            return LadderLevel::L1_RulePatch;
        case Policy::ModelOnly:
            return LadderLevel::L2_ModelRegen;
        case Policy::FullLadder:
            if (!current) {
                // No rule covers the class: the free rung has nothing to offer.
                return has_rule(sig.fault_class) ? LadderLevel::L1_RulePatch : LadderLevel::L2_ModelRegen;
            }
            switch (*current) {
                case LadderLevel::L1_RulePatch: return LadderLevel::L2_ModelRegen;
                case LadderLevel::L2_ModelRegen: return LadderLevel::L3_ContextEnrich;
                case LadderLevel::L3_ContextEnrich: return LadderLevel::L4_Human;
                case LadderLevel::L4_Human: return std::nullopt;
            }
    }
    return std::nullopt;
}

std::string_view to_string(RuleId r) noexcept {
    switch (r) {
        case RuleId::R1_Mesh: return "R1_Mesh";
        case RuleId::R2_Conv: return "R2_Conv";
        case RuleId::R3_ElemType: return "R3_ElemType";
        case RuleId::R4_SetLast: return "R4_SetLast";
    }
    return "R1_Mesh";
}

std::optional<std::string> rejected_element(const FailureSignature& sig) {
    static const std::regex kElem(R"(ELEMENT TYPE (\S+) IS INVALID FOR)");
    std::smatch m;
    if (std::regex_search(sig.message, m, kElem)) return m[1].str();
    return std::nullopt;
}

namespace {

std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

using Commands = std::vector<ApdlCommand>;

bool apply_mesh_rule(Commands& cmds) {
    bool changed = false;
    std::optional<std::size_t> last_esize;
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        auto& c = cmds[i];
        if (c.name != "ESIZE") continue;
        last_esize = i;
        if (c.args.empty()) continue;
        if (auto v = parse_number(c.args[0])) {
            c.args[0] = format_number(*v * 2.0);
            changed = true;
        }
    }
    const bool has_free_key = std::any_of(cmds.begin(), cmds.end(), [](const ApdlCommand& c) {
        return c.name == "MSHKEY" && !c.args.empty() && parse_number(c.args[0]) == 0.0;
    });
    if (!has_free_key) {
        const auto pos = last_esize ? *last_esize + 1 : 0;
        cmds.insert(cmds.begin() + static_cast<std::ptrdiff_t>(pos), make_command("MSHKEY", {"0"}));
        changed = true;
    }
    return changed;
}

bool apply_conv_rule(Commands& cmds) {
    auto solve = std::find_if(cmds.begin(), cmds.end(), [](const ApdlCommand& c) { return c.name == "SOLVE"; });
    bool autots = false;
    bool nsubst = false;
    for (auto it = cmds.begin(); it != solve; ++it) {
        autots = autots || (it->name == "AUTOTS" && it->arg_is(0, "ON"));
        nsubst = nsubst || it->name == "NSUBST";
    }
    Commands insert;
    if (!autots) insert.push_back(make_command("AUTOTS", {"ON"}));
    if (!nsubst) insert.push_back(make_command("NSUBST", {"10", "100", "5"}));
    if (insert.empty()) return false;
    cmds.insert(solve, insert.begin(), insert.end());
    return true;
}

bool apply_element_rule(Commands& cmds, const FailureSignature& sig) {
    static const std::map<std::string, std::string> kSwap = {
        {"SOLID185", "SOLID70"}, {"SOLID70", "SOLID185"}, {"SOLID186", "SOLID90"}, {"SOLID90", "SOLID186"}};
    const auto target = rejected_element(sig);
    bool changed = false;
    for (auto& c : cmds) {
        if (c.name != "ET" || c.args.size() < 2) continue;
        const auto elem = upper(c.args[1]);
        // With a named element only that element is swapped, which keeps the
        // rule a fixed point under repeated application.
        if (target && elem != *target) continue;
        if (auto it = kSwap.find(elem); it != kSwap.end()) {
            c.args[1] = it->second;
            changed = true;
        }
    }
    return changed;
}

bool apply_set_rule(Commands& cmds) {
    bool changed = false;
    for (auto& c : cmds) {
        if (c.name != "SET" || c.args.empty()) continue;
        const bool explicit_step = std::any_of(c.args.begin(), c.args.end(),
                                               [](const std::string& a) { return parse_number(a).has_value(); });
        if (!explicit_step) continue;
        c.args = {"LAST"};
        changed = true;
    }
    return changed;
}

}  // namespace

PatchResult rule_patch(const ApdlScript& script, const FailureSignature& sig) {
    Commands cmds = script.commands;
    std::optional<RuleId> rule;
    bool changed = false;
    switch (sig.fault_class) {
        case FaultClass::MeshFail:
            rule = RuleId::R1_Mesh;
            changed = apply_mesh_rule(cmds);
            break;
        case FaultClass::ConvFail:
            rule = RuleId::R2_Conv;
            changed = apply_conv_rule(cmds);
            break;
        case FaultClass::ElemTypeFail:
            rule = RuleId::R3_ElemType;
            changed = apply_element_rule(cmds, sig);
            break;
        case FaultClass::MissingResults:
            rule = RuleId::R4_SetLast;
            changed = apply_set_rule(cmds);
            break;
        case FaultClass::HardGeom:
        case FaultClass::Unknown:
            break;
    }
    PatchResult result;
    result.changed = changed;
    if (changed) {
        result.patched = ApdlScript::from_commands(std::move(cmds));
        result.rules_applied.push_back(*rule);
    } else {
        result.patched = script;
    }
    return result;
}

}  // namespace apdlh
