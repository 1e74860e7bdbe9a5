#pragma once

#include "apdlh/apdl.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace apdlh {

enum class Policy { NoRecovery, RuleOnly, ModelOnly, FullLadder };

std::string_view to_string(Policy p) noexcept;  // "no_recovery", "rule_only", ...
std::optional<Policy> parse_policy(std::string_view s) noexcept;

struct StrategyConfig {
    Policy policy = Policy::NoRecovery;
    int budget_B = 1;            // solver execution attempts, initial included
    int max_react_iters = 2;
    int forced_retries = 0;
    bool log_tool_enabled = false;
    // Every solver submission waits for an operator confirmation. Batch runs
    // auto-acknowledge it, but the run is no longer fully autonomous.
    bool rule_confirmation_required = false;

    static StrategyConfig for_policy(Policy p);
};

int budget_for(Policy p) noexcept;

enum class LadderLevel { L1_RulePatch, L2_ModelRegen, L3_ContextEnrich, L4_Human };
enum class CostClass { Free, Cheap, Paid, Manual };

CostClass cost_class(LadderLevel level) noexcept;
std::string_view to_string(LadderLevel level) noexcept;
std::optional<LadderLevel> parse_ladder_level(std::string_view s) noexcept;

// Next rung to try after a failure, or nullopt when the policy has nothing
// left. NoRecovery permits nothing, RuleOnly a single L1, ModelOnly L2 only
// (bounded by the budget), FullLadder walks L1..L4 once.
std::optional<LadderLevel> ladder_next(std::optional<LadderLevel> current, const FailureSignature& sig,
                                       const StrategyConfig& config);

enum class RuleId { R1_Mesh, R2_Conv, R3_ElemType, R4_SetLast };

std::string_view to_string(RuleId r) noexcept;

struct PatchResult {
    ApdlScript patched;
    std::vector<RuleId> rules_applied;
    bool changed = false;
};

// Applies the single deterministic rule matching sig.fault_class:
//   R1 MeshFail        double every ESIZE, insert MSHKEY,0 after the last ESIZE
//   R2 ConvFail        insert AUTOTS,ON and NSUBST,10,100,5 before the first SOLVE
//   R3 ElemTypeFail    swap the rejected element (SOLID185<->SOLID70, SOLID186<->SOLID90)
//   R4 MissingResults  rewrite SET commands with explicit steps to SET,LAST
// HardGeom and Unknown leave the script unchanged.
PatchResult rule_patch(const ApdlScript& script, const FailureSignature& sig);

// Element named as invalid in an element-type error line, if any.
std::optional<std::string> rejected_element(const FailureSignature& sig);

}  // namespace apdlh
