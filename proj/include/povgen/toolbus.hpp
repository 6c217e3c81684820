#pragma once
// The agent-facing tool bus: JSON-RPC 2.0 dispatch with per-phase gating,
// a write-ahead transcript, and the campaign session that owns every
// module's state for one campaign.

#include "povgen/campaign.hpp"
#include "povgen/corpus.hpp"
#include "povgen/workflow.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace povgen::bus {

// Tool names exposed over the bus, gating table included.
std::vector<std::string> tool_names();
bool tool_allowed(const std::string& method, workflow::Phase phase);

class CampaignSession {
  public:
    static Result<std::unique_ptr<CampaignSession>> create(const campaign::CampaignConfig& cfg);
    ~CampaignSession();

    // Full JSON-RPC handling for one request line (server transport).
    std::string handle_line(const std::string& line);

    // In-process dispatch used by scripted backends and tests; runs the same
    // gating, counting and transcript path as the wire surface.
    Json call(const std::string& method, const Json& params);

    workflow::Phase phase() const { return gatekeeper_.doc().phase(); }
    bool pov_recorded() const { return gatekeeper_.session().pov_recorded; }
    std::optional<std::chrono::milliseconds> time_to_exposure() const { return tte_; }
    int plan_entries() const { return plan_entries_; }
    const std::map<std::string, int>& tool_call_counts() const { return tool_call_counts_; }
    const campaign::CampaignConfig& config() const { return cfg_; }
    const std::filesystem::path& dir() const { return dir_; }
    std::optional<std::string> pov_file() const;
    bool analysis_available() const { return graph_.has_value(); }

  private:
    CampaignSession() = default;

    Json dispatch(const std::string& method, const Json& params);
    void refresh_generator_registration();
    void transcribe(const std::string& kind, const Json& payload);

    // Tool handlers.
    Json tool_write_block(const Json& params);
    Json tool_transition(const Json& params);
    Json tool_check_completion(const Json& params);
    Json tool_current_phase(const Json& params);
    Json tool_get_callers(const Json& params, bool callees);
    Json tool_reaching_routes(const Json& params);
    Json tool_corpus_status(const Json& params);
    Json tool_extract_parameters(const Json& params);
    Json tool_api_doc(const Json& params);
    Json tool_fuzz(const Json& params);
    Json tool_detect_deviation(const Json& params);
    Json tool_launch_gdb(const Json& params);
    Json tool_gdb_send(const Json& params);
    Json tool_gdb_close(const Json& params);

    campaign::CampaignConfig cfg_;
    std::filesystem::path dir_;
    workflow::Gatekeeper gatekeeper_;

    std::optional<facts::ProgramGraph> graph_;
    std::vector<facts::CriticalLocation> criticals_;
    std::string graph_warning_;

    corpus::CorpusJobs corpus_jobs_;
    std::optional<std::string> corpus_job_;

    std::map<std::string, std::unique_ptr<harness::DebugSession>> gdb_sessions_;
    int next_gdb_id_ = 1;
    int manual_tests_in_reflect_ = 0;

    std::optional<engine::FuzzReport> last_fuzz_;
    std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
    std::optional<std::chrono::milliseconds> tte_;
    int plan_entries_ = 1;  // the campaign starts in PLAN

    std::map<std::string, int> tool_call_counts_;
    std::ofstream transcript_;
    std::uint64_t transcript_seq_ = 0;
    int extractor_counter_ = 0;
};

// Newline-delimited JSON-RPC server on stdin/stdout. Returns 0 on clean EOF.
int serve_stdio(CampaignSession& session);

// Agent backends: deterministic scripted policies plus an external process
// speaking JSON-RPC on its stdio (prompt delivered as the first frame).
class AgentBackend {
  public:
    virtual ~AgentBackend() = default;
    virtual Result<void> run(CampaignSession& session,
                             std::chrono::steady_clock::time_point deadline) = 0;
};

Result<std::unique_ptr<AgentBackend>> make_backend(const std::string& descriptor);

}  // namespace povgen::bus
