#include "povgen/templates.hpp"

namespace povgen::tpl {

namespace {

const char* kProjectConfigTemplate = R"(# Project Configuration

<!-- STATIC:GOAL:START -->
## Goal
Find proof-of-concept inputs that violate safety properties in C/C++ programs using property-based directed fuzzing
<!-- STATIC:GOAL:END -->

<!-- STATIC:TOOLS_AND_REQUIREMENTS:START -->
## Available Tools
**Analysis MCP Tools**
- `get_callers`, `get_callees`: Call graph analysis
- `get_target_distance`: CFG distance to targets
- `get_reaching_routes`: Routes and input files that reach targets
- `get_corpus_status`: Corpus analysis progress
- `extract_parameters`: Parameter space from reaching testcases
- `detect_deviation`: Find execution deviations from expected paths
- `get_generator_api_doc`: Generator API reference
- `fuzz`: Execute fuzzing with plan and generator
- `launch_gdb`: Launch interactive GDB session for advanced deviation analysis, root cause analysis, and TriggerPlan verification

**Workflow MCP Tools**
- `write_workflow_block(target_block, content_json)`: Write JSON to specific workflow blocks
- `transition_phase(next_phase)`: Transition to next phase with gatekeeper validation
- `check_phase_completion()`: Check if current phase tasks are completed
- `get_current_phase()`: Get current phase information
<!-- STATIC:TOOLS_AND_REQUIREMENTS:END -->

<!-- STATIC:TARGET_INFO:START -->
## Target Information
- **Binary**: {cmd}
- **Source Code**: {source_code_folder}
- **Output Directory**: {output_dir}
- **Reached Pattern**: {reached_pattern}
- **Triggered Pattern**: {triggered_pattern}
<!-- STATIC:TARGET_INFO:END -->

<!-- STATIC:SOURCE_CODE_BLOCKS:START -->
## Source Code Blocks
{source_code_blocks}
<!-- STATIC:SOURCE_CODE_BLOCKS:END -->

<!-- STATIC:TARGET_LOCATIONS:START -->
## Target Locations
{target_locations}
<!-- STATIC:TARGET_LOCATIONS:END -->
)";

const char* kWorkflowStateTemplate = R"(# Workflow State
<!-- STATIC SECTIONS -->
<!-- STATIC:RULES:START -->
## Rules
- **MANDATORY**: Must enforce RULE_MANDATORY
- **Phase Gating**: Only allowed transitions:
```mermaid
graph LR
    PLAN --> IMPLEMENT
    IMPLEMENT --> EXECUTE
    EXECUTE --> REFLECT
    EXECUTE --> SUCCESS[PoC Found]
    REFLECT --> PLAN
```

### PLAN Phase Rules
- **R-PL1**: On first entry, must read project_config.md Source Code blocks (entry + target functions) and Target Locations
- **R-PL2**: Must write/update BugPredicates based on Target Locations
- **R-PL3**: Must write/update Preconditions, RootCauses, and TriggerPlans based on Source Code analysis and reflection insights
- **R-PL4**: Forbidden to perform any manual test. Must apply RULE_FLOW to verify your hypothesis.
- **R-PL5**: Must apply RULE_IMPLICIT_BEHAVIOR and RULE_MULTI_TARGETS
- **R-PL6**: ALLOWED TOOLS: get_callers, get_callees, get_reaching_routes, get_corpus_status, and Workflow MCP Tools

### IMPLEMENT Phase Rules
- **R-IM1**: Must take ALL TriggerPlans and convert input constraints into concrete ParameterSpace
- **R-IM2**: Must enumerate every possible way the bug condition can be met in ParameterSpace. Must grep and consider all other values for categorical parameters
- **R-IM3**: Must generate FuzzPlan with 5-10 concrete tests covering ALL TriggerPlans. Must apply RULE_POC_WINDOW
- **R-IM4**: Must define Breakpoints for validating preconditions and capturing runtime state at bug sites
- **R-IM5**: ALLOWED TOOLS: extract_parameters, get_generator_api_doc, and Workflow MCP Tools

### EXECUTE Phase Rules
- **R-EX1**: Must execute fuzz MCP tool using FuzzPlan and Breakpoints from IMPLEMENT phase
- **R-EX2**: Must update Metrics after fuzzing completes
- **R-EX3**: If bug triggered (pattern matched), must transition to SUCCESS
- **R-EX4**: If bug not triggered, must transition to REFLECT
- **R-EX5**: ALLOWED TOOLS: fuzz, get_generator_api_doc, and Workflow MCP Tools; other actions are forbidden

### REFLECT Phase Rules
- **R-RF1**: Must analyze why testcases in FuzzPlan failed to trigger the bug. Focus only on testcase failure analysis, not memory updates. Transition to PLAN when ready to update memory based on findings.
- **R-RF2**: For no-reach testcases in FuzzPlan, must use detect_deviation to identify which preconditions were not satisfied
- **R-RF3**: For reach/no-trigger testcases in FuzzPlan, must identify why bug predicate was not triggered by tracing variable dependencies backward
- **R-RF4**: Must transition to PLAN phase if performed more than THREE manual test. This budget resets upon re-entering REFLECT.
- **R-RF5**: ALLOWED TOOLS: detect_deviation, launch_gdb, get_callers, get_callees, and Workflow MCP Tools

### RULE_IMPLICIT_BEHAVIOR:
- Never assume explicit code paths are the only ones
- Always account for implicit library behavior, special cases and compatibility hacks.
- Perform broader related code reading across the codebase.

### GATEKEEPER Rules (STRICTLY ENFORCED)
- **G-1**: RULE_PHASE_GATING
- **G-2**: Memory data modification permissions: PLAN (BugPredicates, Preconditions, RootCauses, TriggerPlans), IMPLEMENT (ParameterSpace, FuzzPlan, Breakpoints), EXECUTE (Metrics, ParameterSpace), REFLECT (none - read-only)
- **G-3**: RULE_FLOW
- **G-4**: Auto-transition when phase tasks completed

### RULE_FLOW: PLAN->IMPLEMENT->EXECUTE->{REFLECT->PLAN | SUCCESS}
### RULE_POC_WINDOW: Prioritize malformed or boundary-skewed inputs that can bypass format checks to trigger bugs, not fully valid ones.
### RULE_MANDATORY: Always read workflow_state.md before every phase transition. Use workflow MCP server tools to update it.
### RULE_FILE_OPS: Must use workflow MCP server tools (write_workflow_block, transition_phase) for safe reading/writing
### RULE_SAFE_UPDATE: Never overwrite whole blocks unintentionally.
### RULE_PHASE_GATING: Each MCP tool blocked unless in correct phase with required prerequisites
### RULE_MEMORY: All state persisted in workflow_state.md; no ephemeral memory allowed
### RULE_DOCS: Do not create any extra markdown document other than workflow_state.md and project_config.md
### RULE_MAGMA: Do not analyze Magma benchmark instrumentation. See magma.md.
### RULE_FUZZ_TOOL: Only fuzz MCP tool in EXECUTE phase can declare PoC
### RULE_MULTI_TARGETS: Triggering one target is sufficient. If a target has multiple triggering conditions, satisfy any bug predicate is sufficient. Prioritize simpler bug predicates.
<!-- STATIC:RULES:END -->

<!-- DYNAMIC SECTIONS -->
<!-- These sections are managed by the AI during workflow execution -->
<!-- DYNAMIC:STATE:START -->
## State
```json
{
  "phase": "PLAN",
  "status": "Starting directed fuzzing workflow",
  "current_task": "Analyze target and create initial plan",
  "next_action": "Read project_config.md and extract BugPredicates"
}
```
<!-- DYNAMIC:STATE:END -->

<!-- DYNAMIC:BUG_PREDICATES:START -->
## BugPredicates
```json
[]
```
<!-- DYNAMIC:BUG_PREDICATES:END -->

<!-- DYNAMIC:PRECONDITIONS:START -->
## Preconditions
```json
[]
```
<!-- DYNAMIC:PRECONDITIONS:END -->

<!-- DYNAMIC:ROOT_CAUSES:START -->
## RootCauses
```json
[]
```
<!-- DYNAMIC:ROOT_CAUSES:END -->

<!-- DYNAMIC:PARAMETER_SPACE:START -->
## ParameterSpace
```json
{}
```
<!-- DYNAMIC:PARAMETER_SPACE:END -->

<!-- DYNAMIC:TRIGGER_PLANS:START -->
## TriggerPlans
```json
[]
```
<!-- DYNAMIC:TRIGGER_PLANS:END -->

<!-- DYNAMIC:FUZZ_PLAN:START -->
## FuzzPlan
```json
[]
```
<!-- DYNAMIC:FUZZ_PLAN:END -->

<!-- DYNAMIC:BREAKPOINTS:START -->
## Breakpoints
```json
[]
```
<!-- DYNAMIC:BREAKPOINTS:END -->

<!-- DYNAMIC:METRICS:START -->
## Metrics
```json
{
  "total_iterations": 0,
  "total_reached_count": 0,
  "last_reached_count": 0,
  "triggered_count": 0,
  "timeout_count": 0,
  "error_count": 0,
  "last_updated": ""
}
```
<!-- DYNAMIC:METRICS:END -->
)";

const char* kMissionPrompt = R"(# Security Research Autonomous Agent
## Mission
You are a security expert specializing in C/C++ vulnerabilities.
Your goal is to find a PoV input that can reproduce the target vulnerability.

## Configuration-Driven Workflow
**CRITICAL**: Your entire task is defined in two configuration files:
1. **`./project_config.md`**: Contains project info, goal, patterns, and technical details
2. **`./workflow_state.md`**: Contains workflow rules, phase transitions, and dynamic state

## Startup Protocol
1. **Read Configuration**: Always start by reading both configuration files
2. **Follow Workflow Rules**: All rules are defined in workflow_state.md STATIC sections

## Core Principle
Let the configuration files guide you completely.
Don't assume requirements - read and follow them exactly.
)";

}  // namespace

Result<std::string> render_project_config(const std::map<std::string, std::string>& values) {
    static const char* kPlaceholders[] = {"cmd",
                                          "source_code_folder",
                                          "output_dir",
                                          "reached_pattern",
                                          "triggered_pattern",
                                          "source_code_blocks",
                                          "target_locations"};
    std::string out = kProjectConfigTemplate;
    for (const char* name : kPlaceholders) {
        auto it = values.find(name);
        if (it == values.end()) {
            return make_error(ErrCode::InvalidConfig,
                              std::string("missing template value {") + name + "}",
                              {{"placeholder", name}});
        }
        const std::string token = std::string("{") + name + "}";
        for (std::size_t pos = out.find(token); pos != std::string::npos;
             pos = out.find(token, pos + it->second.size())) {
            out.replace(pos, token.size(), it->second);
        }
    }
    return out;
}

std::string render_workflow_state_initial() { return kWorkflowStateTemplate; }

std::string mission_prompt() { return kMissionPrompt; }

}  // namespace povgen::tpl
