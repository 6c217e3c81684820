#pragma once
// Campaign document templates: the project configuration, the initial
// workflow state document and the agent mission prompt. Rendering is
// placeholder substitution; the marker layout is fixed.

#include "povgen/errors.hpp"

#include <map>
#include <string>

namespace povgen::tpl {

// Placeholders: {cmd}, {source_code_folder}, {output_dir}, {reached_pattern},
// {triggered_pattern}, {source_code_blocks}, {target_locations}.
Result<std::string> render_project_config(const std::map<std::string, std::string>& values);

// The pristine workflow state document (phase PLAN, empty blocks, zero metrics).
std::string render_workflow_state_initial();

// The system prompt handed to the agent backend at launch.
std::string mission_prompt();

}  // namespace povgen::tpl
