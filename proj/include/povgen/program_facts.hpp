#pragma once
// Static program facts over a pre-built interprocedural graph: type-based
// indirect call resolution, target reachability by backward BFS, critical
// branch locations on the reachable/unreachable boundary, and debugger-driven
// deviation diagnosis for inputs that fail to reach the target.

#include "povgen/errors.hpp"
#include "povgen/harness.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace povgen::facts {

// "file:line" or "file:lo-hi" spans.
struct SourceSpan {
    std::string file;
    int line_lo = 0;
    int line_hi = 0;

    static Result<SourceSpan> parse(const std::string& text);
    bool covers(const std::string& f, int line) const;
    std::string str() const;
    int first_line() const { return line_lo; }
};

struct Callsite {
    std::optional<std::string> direct;              // callee name
    std::optional<std::string> indirect_signature;  // type string
    std::vector<std::string> resolved;              // materialized indirect edges
    bool flagged_unresolved = false;
};

struct BasicBlock {
    std::string id;
    std::string location;  // source span text
    std::vector<std::string> successors;
    std::vector<Callsite> callsites;
    bool is_exit = false;
};

struct Function {
    std::string name;
    std::string signature;
    bool address_taken = false;
    std::string entry_block;
    std::map<std::string, BasicBlock> blocks;
};

struct BlockRef {
    std::string function;
    std::string block;

    auto operator<=>(const BlockRef&) const = default;
    std::string str() const { return function + "/" + block; }
};

struct ProgramGraph {
    int version = 1;
    std::map<std::string, Function> functions;
    std::set<std::string> entry_functions;
    std::set<BlockRef> exit_points;
    bool indirect_resolved = false;

    Json to_json() const;
    const BasicBlock* find_block(const BlockRef& ref) const;
};

Result<ProgramGraph> parse_graph(const Json& j);
Result<ProgramGraph> load_graph(const std::filesystem::path& path);

// Materializes indirect call edges: every callsite with type signature T
// gains edges to all address-taken functions of signature T. Idempotent.
ProgramGraph resolve_indirect_calls(const ProgramGraph& graph);

Result<std::vector<std::string>> get_callers(const ProgramGraph& graph, const std::string& fn);
Result<std::vector<std::string>> get_callees(const ProgramGraph& graph, const std::string& fn);

struct TargetSpec {
    std::vector<std::string> locations;  // "file:line"
};

struct ReachSet {
    std::set<BlockRef> members;
    TargetSpec targets;

    bool contains(const BlockRef& ref) const { return members.count(ref) != 0; }
};

// Blocks with an interprocedural path to a target location. Paths traverse
// intra-procedural successors, call edges into callee entries, and return
// edges from callee terminal blocks to callsite successors.
Result<ReachSet> compute_reach_set(const ProgramGraph& graph, const TargetSpec& targets);

struct CriticalLocation {
    BlockRef branch_block;
    std::string branch_location;
    std::string reachable_successor;
    std::string unreachable_successor;

    Json to_json() const;
    static Result<CriticalLocation> from_json(const Json& j);
};

// Branch blocks with successors on both sides of the reachability boundary,
// one entry per (reachable, unreachable) successor pair, deterministic order.
std::vector<CriticalLocation> compute_critical_locations(const ProgramGraph& graph,
                                                         const ReachSet& reach);

struct DeviationReport {
    std::optional<CriticalLocation> divergence;
    bool reached = false;  // the input actually reached/triggered the target
    std::vector<harness::StackFrame> callstack;  // at the divergence point
    std::vector<harness::BreakpointHit> hits;    // every critical-location hit

    Json to_json() const;
};

// Runs a no-reach input under the debugger with breakpoints at every critical
// branch, probing which successor each hit takes; reports the last hit whose
// taken successor cannot reach the target.
Result<DeviationReport> diagnose_deviation(const ProgramGraph& graph,
                                           const harness::TargetConfig& target,
                                           const std::filesystem::path& input_file,
                                           const std::vector<CriticalLocation>& criticals);

}  // namespace povgen::facts
