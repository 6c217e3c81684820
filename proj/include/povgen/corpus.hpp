#pragma once
// Corpus processing: background jobs that replay corpus files against the
// target with breakpoints at the target locations, collecting deduplicated
// reaching routes, plus parameter-observation extraction over those routes.

#include "povgen/errors.hpp"
#include "povgen/generator.hpp"
#include "povgen/harness.hpp"
#include "povgen/program_facts.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace povgen::corpus {

struct ReachingRoute {
    std::vector<harness::StackFrame> callstack;
    std::filesystem::path testcase_file;

    Json to_json() const;
};

enum class JobState { Idle, Running, Done, Failed };

const char* to_string(JobState s);

struct CorpusStatus {
    std::size_t total = 0;
    std::size_t processed = 0;
    std::size_t routes_found = 0;
    JobState state = JobState::Idle;

    Json to_json() const;
};

// Registry of analysis jobs. One job per campaign is the expected cardinality;
// queries are safe while a job runs.
class CorpusJobs {
  public:
    CorpusJobs() = default;
    ~CorpusJobs();
    CorpusJobs(const CorpusJobs&) = delete;
    CorpusJobs& operator=(const CorpusJobs&) = delete;

    Result<std::string> start(const harness::TargetConfig& target,
                              const std::filesystem::path& corpus_dir,
                              const facts::TargetSpec& targets);
    Result<CorpusStatus> status(const std::string& handle) const;
    Result<std::vector<ReachingRoute>> routes(const std::string& handle) const;

    // Blocks until every job has finished (test and shutdown support).
    void wait_all();

  private:
    struct Job;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    int next_id_ = 1;
};

// Runs the extractor program once per reaching testcase (testcase bytes on
// stdin, one JSON object of observations on stdout) and merges per key:
// all-numeric observations fold to {min,max}, anything else to a value set.
Result<Json> extract_parameters(const gen::GeneratorSpec& extractor,
                                const std::vector<ReachingRoute>& routes);

}  // namespace povgen::corpus
