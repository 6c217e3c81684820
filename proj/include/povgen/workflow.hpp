#pragma once
// The workflow state document and its gatekeeper. Every agent-proposed state
// change passes through here: block writes are schema- and permission-checked,
// phase changes are gated by the automaton and per-phase completion criteria,
// and all successful mutations persist atomically. Rejections come back as
// machine-readable values, never as partial state.

#include "povgen/errors.hpp"

#include "povgen/json.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace povgen::workflow {

enum class Phase { Plan, Implement, Execute, Reflect, Success };

constexpr std::array<Phase, 5> kAllPhases = {Phase::Plan, Phase::Implement, Phase::Execute,
                                             Phase::Reflect, Phase::Success};

const char* to_string(Phase p);
std::optional<Phase> phase_from_string(const std::string& s);
bool is_terminal(Phase p);
bool transition_legal(Phase from, Phase to);

enum class BlockId {
    State,
    BugPredicates,
    Preconditions,
    RootCauses,
    ParameterSpace,
    TriggerPlans,
    FuzzPlan,
    Breakpoints,
    Metrics,
};

constexpr std::array<BlockId, 9> kAllBlocks = {
    BlockId::State,        BlockId::BugPredicates, BlockId::Preconditions,
    BlockId::RootCauses,   BlockId::ParameterSpace, BlockId::TriggerPlans,
    BlockId::FuzzPlan,     BlockId::Breakpoints,    BlockId::Metrics,
};

// Heading name as it appears after "## " in the document.
const char* block_name(BlockId b);
// Marker name as it appears in <!-- DYNAMIC:<NAME>:START -->.
const char* block_marker(BlockId b);
std::optional<BlockId> block_from_name(const std::string& s);

bool block_writable(Phase phase, BlockId block);

struct MetricsRecord {
    std::uint64_t total_iterations = 0;
    std::uint64_t total_reached_count = 0;
    std::uint64_t last_reached_count = 0;
    std::uint64_t triggered_count = 0;
    std::uint64_t timeout_count = 0;
    std::uint64_t error_count = 0;
    std::string last_updated;

    Json to_json() const;
    static Result<MetricsRecord> from_json(const Json& j);
    bool operator==(const MetricsRecord&) const = default;
};

// A parsed workflow document. Block order and surrounding prose are kept so
// rendering reproduces the file byte-for-byte (with canonical JSON payloads).
class WorkflowDocument {
  public:
    struct Segment {
        enum class Kind { Raw, Static, Dynamic } kind;
        std::string name;  // static marker name or dynamic block marker
        std::string text;  // raw run or static block body (verbatim, with markers)
    };

    static Result<WorkflowDocument> parse(const std::string& text);
    std::string render() const;

    Phase phase() const;
    std::uint64_t revision() const { return revision_; }
    void set_revision(std::uint64_t r) { revision_ = r; }

    const Json& block(BlockId b) const;
    void set_block(BlockId b, Json content);
    bool block_empty(BlockId b) const;  // [] and {} count as empty

    const std::map<std::string, std::string>& static_blocks() const { return static_blocks_; }

    bool operator==(const WorkflowDocument& other) const;

  private:
    std::vector<Segment> segments_;
    std::map<std::string, std::string> static_blocks_;  // name -> body text
    std::map<BlockId, Json> dynamic_;
    std::uint64_t revision_ = 0;
};

// Stateless schema validation for one block's content. `doc` supplies
// cross-block context (referential integrity, monotonic counters).
Result<void> validate_block_content(const WorkflowDocument& doc, BlockId block,
                                    const Json& content);

// Session-scoped facts the document does not carry (see module notes):
// generator registration, REFLECT diagnosis evidence, the engine-recorded PoV
// and the Metrics stamp captured when EXECUTE was entered.
struct SessionContext {
    bool generator_registered = false;
    int diagnosis_count = 0;
    bool pov_recorded = false;
    std::string metrics_stamp_on_execute_entry;
};

struct CompletionReport {
    Phase phase;
    bool satisfied = false;
    std::vector<std::string> unmet;

    Json to_json() const;
};

CompletionReport check_phase_completion(const WorkflowDocument& doc,
                                        const SessionContext& session);

// Pure transition check: automaton edge first, then the completion criteria
// that gate this specific edge.
Result<void> check_transition(const WorkflowDocument& doc, const SessionContext& session,
                              Phase next);

// Atomic file replacement (write temp + rename). Exposed so tests can inject
// crashes between the two steps.
Result<std::filesystem::path> write_temp_file(const std::filesystem::path& target,
                                              const std::string& bytes);
Result<void> commit_temp_file(const std::filesystem::path& temp,
                              const std::filesystem::path& target);
Result<void> atomic_write_file(const std::filesystem::path& target, const std::string& bytes);

// Owns one campaign's document: validates, applies and persists writes and
// transitions. All mutations are serialized through this object.
class Gatekeeper {
  public:
    static Result<Gatekeeper> open(const std::filesystem::path& path);

    const WorkflowDocument& doc() const { return doc_; }
    const std::filesystem::path& path() const { return path_; }
    SessionContext& session() { return session_; }
    const SessionContext& session() const { return session_; }

    Result<void> write_block(BlockId block, const Json& content);
    Result<void> transition(Phase next);
    CompletionReport check_completion() const;

  private:
    Result<void> persist();

    std::filesystem::path path_;
    WorkflowDocument doc_;
    SessionContext session_;
};

}  // namespace povgen::workflow
