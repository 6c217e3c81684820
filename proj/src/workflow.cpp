#include "povgen/workflow.hpp"

#include "povgen/paramspace.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <regex>
#include <sstream>

namespace povgen::workflow {

namespace {

constexpr const char* kPhaseNames[] = {"PLAN", "IMPLEMENT", "EXECUTE", "REFLECT", "SUCCESS"};

struct BlockInfo {
    BlockId id;
    const char* name;    // heading
    const char* marker;  // DYNAMIC marker
};

constexpr BlockInfo kBlockInfo[] = {
    {BlockId::State, "State", "STATE"},
    {BlockId::BugPredicates, "BugPredicates", "BUG_PREDICATES"},
    {BlockId::Preconditions, "Preconditions", "PRECONDITIONS"},
    {BlockId::RootCauses, "RootCauses", "ROOT_CAUSES"},
    {BlockId::ParameterSpace, "ParameterSpace", "PARAMETER_SPACE"},
    {BlockId::TriggerPlans, "TriggerPlans", "TRIGGER_PLANS"},
    {BlockId::FuzzPlan, "FuzzPlan", "FUZZ_PLAN"},
    {BlockId::Breakpoints, "Breakpoints", "BREAKPOINTS"},
    {BlockId::Metrics, "Metrics", "METRICS"},
};

const BlockInfo& info(BlockId b) { return kBlockInfo[static_cast<int>(b)]; }

const std::regex& location_regex() {
    static const std::regex re("^[^:]+:[0-9]+$");
    return re;
}

Error schema_error(BlockId block, const std::string& path, const std::string& reason) {
    return make_error(ErrCode::SchemaViolation,
                      std::string(block_name(block)) + ": " + reason + " (at " + path + ")",
                      {{"block", block_name(block)}, {"path", path}, {"reason", reason}});
}

// Common record-list checks: array of objects with a fixed key set and a
// unique string "id".
Result<void> check_records(BlockId block, const Json& content,
                           const std::vector<std::string>& required_keys) {
    if (!content.is_array()) {
        return schema_error(block, "", "content must be a JSON array");
    }
    std::set<std::string> ids;
    for (std::size_t i = 0; i < content.size(); ++i) {
        const auto& rec = content[i];
        const std::string at = "[" + std::to_string(i) + "]";
        if (!rec.is_object()) return schema_error(block, at, "entry must be an object");
        for (const auto& key : required_keys) {
            if (!rec.contains(key)) return schema_error(block, at + "." + key, "missing field");
        }
        for (const auto& [key, _] : rec.items()) {
            if (std::find(required_keys.begin(), required_keys.end(), key) ==
                required_keys.end()) {
                return schema_error(block, at + "." + key, "unknown field");
            }
        }
        if (rec.contains("id")) {
            if (!rec["id"].is_string()) return schema_error(block, at + ".id", "must be a string");
            if (!ids.insert(rec["id"].get<std::string>()).second) {
                return schema_error(block, at + ".id", "duplicate id");
            }
        }
    }
    return {};
}

std::set<std::string> record_ids(const Json& arr) {
    std::set<std::string> out;
    if (arr.is_array()) {
        for (const auto& rec : arr) {
            if (rec.is_object() && rec.contains("id") && rec["id"].is_string()) {
                out.insert(rec["id"].get<std::string>());
            }
        }
    }
    return out;
}

int status_rank(const std::string& s) {
    if (s == "pending") return 0;
    if (s == "in_progress") return 1;
    return 2;  // completed / failed
}

bool status_step_ok(const std::string& from, const std::string& to) {
    if (from == to) return true;
    if (from == "completed" || from == "failed") return false;
    return status_rank(to) > status_rank(from);
}

}  // namespace

const char* to_string(Phase p) { return kPhaseNames[static_cast<int>(p)]; }

std::optional<Phase> phase_from_string(const std::string& s) {
    for (Phase p : kAllPhases) {
        if (s == to_string(p)) return p;
    }
    return std::nullopt;
}

bool is_terminal(Phase p) { return p == Phase::Success; }

bool transition_legal(Phase from, Phase to) {
    switch (from) {
        case Phase::Plan: return to == Phase::Implement;
        case Phase::Implement: return to == Phase::Execute;
        case Phase::Execute: return to == Phase::Reflect || to == Phase::Success;
        case Phase::Reflect: return to == Phase::Plan;
        case Phase::Success: return false;
    }
    return false;
}

const char* block_name(BlockId b) { return info(b).name; }
const char* block_marker(BlockId b) { return info(b).marker; }

std::optional<BlockId> block_from_name(const std::string& s) {
    for (const auto& bi : kBlockInfo) {
        if (s == bi.name || s == bi.marker) return bi.id;
    }
    return std::nullopt;
}

bool block_writable(Phase phase, BlockId block) {
    if (is_terminal(phase)) return false;
    if (block == BlockId::State) return true;
    switch (phase) {
        case Phase::Plan:
            return block == BlockId::BugPredicates || block == BlockId::Preconditions ||
                   block == BlockId::RootCauses || block == BlockId::TriggerPlans;
        case Phase::Implement:
            return block == BlockId::ParameterSpace || block == BlockId::FuzzPlan ||
                   block == BlockId::Breakpoints;
        case Phase::Execute:
            return block == BlockId::Metrics || block == BlockId::ParameterSpace;
        case Phase::Reflect:
        case Phase::Success:
            return false;
    }
    return false;
}

Json MetricsRecord::to_json() const {
    return {{"total_iterations", total_iterations},
            {"total_reached_count", total_reached_count},
            {"last_reached_count", last_reached_count},
            {"triggered_count", triggered_count},
            {"timeout_count", timeout_count},
            {"error_count", error_count},
            {"last_updated", last_updated}};
}

Result<MetricsRecord> MetricsRecord::from_json(const Json& j) {
    static const std::vector<std::string> counters = {
        "total_iterations", "total_reached_count", "last_reached_count",
        "triggered_count",  "timeout_count",       "error_count"};
    if (!j.is_object()) {
        return schema_error(BlockId::Metrics, "", "content must be a JSON object");
    }
    MetricsRecord m;
    for (const auto& key : counters) {
        if (!j.contains(key) || !j[key].is_number_integer() ||
            (j[key].is_number_integer() && !j[key].is_number_unsigned() &&
             j[key].get<std::int64_t>() < 0)) {
            return schema_error(BlockId::Metrics, "." + key, "must be a non-negative integer");
        }
    }
    if (!j.contains("last_updated") || !j["last_updated"].is_string()) {
        return schema_error(BlockId::Metrics, ".last_updated", "must be a string");
    }
    for (const auto& [key, _] : j.items()) {
        if (key != "last_updated" &&
            std::find(counters.begin(), counters.end(), key) == counters.end()) {
            return schema_error(BlockId::Metrics, "." + key, "unknown field");
        }
    }
    m.total_iterations = j["total_iterations"].get<std::uint64_t>();
    m.total_reached_count = j["total_reached_count"].get<std::uint64_t>();
    m.last_reached_count = j["last_reached_count"].get<std::uint64_t>();
    m.triggered_count = j["triggered_count"].get<std::uint64_t>();
    m.timeout_count = j["timeout_count"].get<std::uint64_t>();
    m.error_count = j["error_count"].get<std::uint64_t>();
    m.last_updated = j["last_updated"].get<std::string>();
    if (m.triggered_count > m.total_reached_count ||
        m.total_reached_count > m.total_iterations) {
        return schema_error(BlockId::Metrics, ".triggered_count",
                            "requires triggered_count <= total_reached_count <= total_iterations");
    }
    return m;
}

// --- document parsing ---------------------------------------------------

Result<WorkflowDocument> WorkflowDocument::parse(const std::string& text) {
    WorkflowDocument doc;
    std::istringstream in(text);
    std::string line;
    std::string raw;

    auto flush_raw = [&] {
        if (!raw.empty()) {
            doc.segments_.push_back({Segment::Kind::Raw, "", raw});
            raw.clear();
        }
    };
    auto next_line = [&](std::string& out) -> bool {
        if (!std::getline(in, out)) return false;
        return true;
    };

    static const std::regex static_start("^<!-- STATIC:([A-Z_]+):START -->$");
    static const std::regex dynamic_start("^<!-- DYNAMIC:([A-Z_]+):START -->$");
    static const std::regex any_end("^<!-- (STATIC|DYNAMIC):([A-Z_]+):END -->$");
    static const std::regex revision_re("^<!-- REVISION:([0-9]+) -->$");

    while (next_line(line)) {
        std::smatch m;
        if (std::regex_match(line, m, revision_re)) {
            doc.revision_ = std::stoull(m[1].str());
            continue;
        }
        if (std::regex_match(line, m, static_start)) {
            flush_raw();
            const std::string name = m[1].str();
            std::string body;
            bool closed = false;
            while (next_line(line)) {
                std::smatch em;
                if (std::regex_match(line, em, any_end)) {
                    if (em[1].str() != "STATIC" || em[2].str() != name) {
                        return make_error(ErrCode::ParseError,
                                          "mismatched end marker in STATIC:" + name,
                                          {{"block", name}});
                    }
                    closed = true;
                    break;
                }
                body += line;
                body += '\n';
            }
            if (!closed) {
                return make_error(ErrCode::ParseError, "unterminated STATIC:" + name,
                                  {{"block", name}});
            }
            doc.segments_.push_back({Segment::Kind::Static, name, body});
            doc.static_blocks_[name] = body;
            continue;
        }
        if (std::regex_match(line, m, dynamic_start)) {
            flush_raw();
            const std::string marker = m[1].str();
            auto id = block_from_name(marker);
            if (!id) {
                return make_error(ErrCode::ParseError, "unknown DYNAMIC block " + marker,
                                  {{"block", marker}});
            }
            auto fail = [&](const std::string& why) {
                return make_error(ErrCode::ParseError, "DYNAMIC:" + marker + ": " + why,
                                  {{"block", marker}});
            };
            if (!next_line(line) || line != "## " + std::string(block_name(*id))) {
                return fail("expected heading '## " + std::string(block_name(*id)) + "'");
            }
            if (!next_line(line) || line != "```json") return fail("expected ```json fence");
            std::string payload;
            bool fence_closed = false;
            while (next_line(line)) {
                if (line == "```") {
                    fence_closed = true;
                    break;
                }
                payload += line;
                payload += '\n';
            }
            if (!fence_closed) return fail("unterminated JSON fence");
            if (!next_line(line) ||
                line != "<!-- DYNAMIC:" + marker + ":END -->") {
                return fail("expected end marker");
            }
            Json content = Json::parse(payload, nullptr, false);
            if (content.is_discarded()) return fail("invalid JSON payload");
            if (doc.dynamic_.count(*id) != 0) return fail("duplicate block");
            doc.dynamic_[*id] = std::move(content);
            doc.segments_.push_back({Segment::Kind::Dynamic, marker, ""});
            continue;
        }
        if (std::regex_match(line, m, any_end)) {
            return make_error(ErrCode::ParseError, "stray end marker " + m[2].str(),
                              {{"block", m[2].str()}});
        }
        raw += line;
        raw += '\n';
    }
    flush_raw();

    for (const auto& bi : kBlockInfo) {
        if (doc.dynamic_.count(bi.id) == 0) {
            return make_error(ErrCode::ParseError,
                              std::string("missing DYNAMIC block ") + bi.marker,
                              {{"block", bi.marker}});
        }
    }
    const auto& state = doc.dynamic_.at(BlockId::State);
    if (!state.is_object() || !state.contains("phase") || !state["phase"].is_string() ||
        !phase_from_string(state["phase"].get<std::string>())) {
        return schema_error(BlockId::State, ".phase", "missing or invalid phase");
    }
    // Every stored payload must satisfy its schema on reload.
    for (const auto& bi : kBlockInfo) {
        if (auto r = validate_block_content(doc, bi.id, doc.dynamic_.at(bi.id)); !r) {
            return r.error();
        }
    }
    return doc;
}

std::string WorkflowDocument::render() const {
    std::string out;
    bool revision_emitted = revision_ == 0;
    for (const auto& seg : segments_) {
        switch (seg.kind) {
            case Segment::Kind::Raw:
                out += seg.text;
                if (!revision_emitted) {
                    // Placed after the leading raw run (the document title).
                    out += "<!-- REVISION:" + std::to_string(revision_) + " -->\n";
                    revision_emitted = true;
                }
                break;
            case Segment::Kind::Static:
                out += "<!-- STATIC:" + seg.name + ":START -->\n";
                out += seg.text;
                out += "<!-- STATIC:" + seg.name + ":END -->\n";
                break;
            case Segment::Kind::Dynamic: {
                auto id = block_from_name(seg.name);
                out += "<!-- DYNAMIC:" + seg.name + ":START -->\n";
                out += "## " + std::string(block_name(*id)) + "\n";
                out += "```json\n";
                out += dynamic_.at(*id).dump(2);
                out += "\n```\n";
                out += "<!-- DYNAMIC:" + seg.name + ":END -->\n";
                break;
            }
        }
    }
    if (!revision_emitted) out += "<!-- REVISION:" + std::to_string(revision_) + " -->\n";
    return out;
}

Phase WorkflowDocument::phase() const {
    return *phase_from_string(dynamic_.at(BlockId::State)["phase"].get<std::string>());
}

const Json& WorkflowDocument::block(BlockId b) const { return dynamic_.at(b); }

void WorkflowDocument::set_block(BlockId b, Json content) { dynamic_[b] = std::move(content); }

bool WorkflowDocument::block_empty(BlockId b) const {
    const auto& j = dynamic_.at(b);
    return (j.is_array() || j.is_object()) ? j.empty() : j.is_null();
}

bool WorkflowDocument::operator==(const WorkflowDocument& other) const {
    return revision_ == other.revision_ && static_blocks_ == other.static_blocks_ &&
           dynamic_ == other.dynamic_;
}

// --- block schemas --------------------------------------------------------

Result<void> validate_block_content(const WorkflowDocument& doc, BlockId block,
                                    const Json& content) {
    switch (block) {
        case BlockId::State: {
            if (!content.is_object()) {
                return schema_error(block, "", "content must be a JSON object");
            }
            static const std::vector<std::string> keys = {"phase", "status", "current_task",
                                                          "next_action"};
            for (const auto& key : keys) {
                if (!content.contains(key) || !content[key].is_string()) {
                    return schema_error(block, "." + key, "must be a string");
                }
            }
            for (const auto& [key, _] : content.items()) {
                if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
                    return schema_error(block, "." + key, "unknown field");
                }
            }
            const std::string phase = content["phase"].get<std::string>();
            if (!phase_from_string(phase)) {
                return schema_error(block, ".phase", "not a phase name");
            }
            if (phase != to_string(doc.phase())) {
                return schema_error(block, ".phase",
                                    "phase changes go through transition_phase");
            }
            return {};
        }
        case BlockId::BugPredicates: {
            if (auto r = check_records(block, content, {"id", "location", "bug_condition"}); !r)
                return r;
            for (std::size_t i = 0; i < content.size(); ++i) {
                const auto& rec = content[i];
                const std::string at = "[" + std::to_string(i) + "]";
                if (!rec["location"].is_string() ||
                    !std::regex_match(rec["location"].get<std::string>(), location_regex())) {
                    return schema_error(block, at + ".location", "must match file:line");
                }
                if (!rec["bug_condition"].is_string()) {
                    return schema_error(block, at + ".bug_condition", "must be a string");
                }
            }
            return {};
        }
        case BlockId::Preconditions: {
            if (auto r = check_records(block, content, {"id", "statement", "input_constraints"});
                !r)
                return r;
            for (std::size_t i = 0; i < content.size(); ++i) {
                const auto& rec = content[i];
                const std::string at = "[" + std::to_string(i) + "]";
                if (!rec["statement"].is_string()) {
                    return schema_error(block, at + ".statement", "must be a string");
                }
                const auto& ic = rec["input_constraints"];
                if (!ic.is_array() || ic.empty()) {
                    return schema_error(block, at + ".input_constraints",
                                        "must be a non-empty array");
                }
                for (const auto& c : ic) {
                    if (!c.is_string()) {
                        return schema_error(block, at + ".input_constraints",
                                            "entries must be strings");
                    }
                }
            }
            return {};
        }
        case BlockId::RootCauses: {
            if (auto r = check_records(block, content,
                                       {"id", "category", "description",
                                        "related_precondition_ids"});
                !r)
                return r;
            const auto known = record_ids(doc.block(BlockId::Preconditions));
            for (std::size_t i = 0; i < content.size(); ++i) {
                const auto& rec = content[i];
                const std::string at = "[" + std::to_string(i) + "]";
                if (!rec["category"].is_string() || !rec["description"].is_string()) {
                    return schema_error(block, at, "category and description must be strings");
                }
                const auto& ids = rec["related_precondition_ids"];
                if (!ids.is_array()) {
                    return schema_error(block, at + ".related_precondition_ids",
                                        "must be an array");
                }
                for (const auto& id : ids) {
                    if (!id.is_string() || known.count(id.get<std::string>()) == 0) {
                        return make_error(
                            ErrCode::ReferentialIntegrity,
                            "RootCauses: unknown precondition id " + id.dump() + " (at " + at +
                                ")",
                            {{"block", "RootCauses"}, {"path", at}, {"id", id}});
                    }
                }
            }
            return {};
        }
        case BlockId::TriggerPlans: {
            if (auto r = check_records(block, content,
                                       {"id", "precondition_ids", "description", "complexity",
                                        "status"});
                !r)
                return r;
            const auto known = record_ids(doc.block(BlockId::Preconditions));
            const auto& old = doc.block(BlockId::TriggerPlans);
            std::map<std::string, std::string> old_status;
            if (old.is_array()) {
                for (const auto& rec : old) {
                    if (rec.is_object() && rec.contains("id") && rec.contains("status")) {
                        old_status[rec["id"].get<std::string>()] =
                            rec["status"].get<std::string>();
                    }
                }
            }
            static const std::set<std::string> statuses = {"pending", "in_progress", "completed",
                                                           "failed"};
            for (std::size_t i = 0; i < content.size(); ++i) {
                const auto& rec = content[i];
                const std::string at = "[" + std::to_string(i) + "]";
                if (!rec["description"].is_string()) {
                    return schema_error(block, at + ".description", "must be a string");
                }
                if (!rec["complexity"].is_number_integer() ||
                    rec["complexity"].get<std::int64_t>() < 1 ||
                    rec["complexity"].get<std::int64_t>() > 10) {
                    return schema_error(block, at + ".complexity",
                                        "must be an integer in [1,10]");
                }
                if (!rec["status"].is_string() ||
                    statuses.count(rec["status"].get<std::string>()) == 0) {
                    return schema_error(block, at + ".status",
                                        "must be pending|in_progress|completed|failed");
                }
                const auto& ids = rec["precondition_ids"];
                if (!ids.is_array()) {
                    return schema_error(block, at + ".precondition_ids", "must be an array");
                }
                for (const auto& id : ids) {
                    if (!id.is_string() || known.count(id.get<std::string>()) == 0) {
                        return make_error(
                            ErrCode::ReferentialIntegrity,
                            "TriggerPlans: unknown precondition id " + id.dump() + " (at " + at +
                                ")",
                            {{"block", "TriggerPlans"}, {"path", at}, {"id", id}});
                    }
                }
                auto prev = old_status.find(rec["id"].get<std::string>());
                if (prev != old_status.end() &&
                    !status_step_ok(prev->second, rec["status"].get<std::string>())) {
                    return schema_error(block, at + ".status",
                                        "status may not regress (was " + prev->second + ")");
                }
            }
            return {};
        }
        case BlockId::ParameterSpace: {
            auto space = param::ParameterSpace::from_json(content);
            if (!space) {
                Error e = space.error();
                e.data["block"] = "ParameterSpace";
                return e;
            }
            auto violations = param::validate_space(*space);
            if (!violations.empty()) {
                return schema_error(block, "." + violations[0].parameter,
                                    violations[0].message);
            }
            return {};
        }
        case BlockId::FuzzPlan: {
            if (!content.is_array()) {
                return schema_error(block, "", "content must be a JSON array");
            }
            for (std::size_t i = 0; i < content.size(); ++i) {
                auto p = param::ConcreteParams::from_json(content[i]);
                if (!p) {
                    Error e = p.error();
                    e.data["block"] = "FuzzPlan";
                    e.data["index"] = i;
                    return e;
                }
            }
            return {};
        }
        case BlockId::Breakpoints: {
            if (!content.is_array()) {
                return schema_error(block, "", "content must be a JSON array");
            }
            for (std::size_t i = 0; i < content.size(); ++i) {
                const auto& rec = content[i];
                const std::string at = "[" + std::to_string(i) + "]";
                if (!rec.is_object()) return schema_error(block, at, "entry must be an object");
                static const std::vector<std::string> keys = {"location", "inline_expr",
                                                              "hit_limit"};
                for (const auto& key : keys) {
                    if (!rec.contains(key)) {
                        return schema_error(block, at + "." + key, "missing field");
                    }
                }
                for (const auto& [key, _] : rec.items()) {
                    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
                        return schema_error(block, at + "." + key, "unknown field");
                    }
                }
                if (!rec["location"].is_string() ||
                    !std::regex_match(rec["location"].get<std::string>(), location_regex())) {
                    return schema_error(block, at + ".location", "must match file:line");
                }
                if (!rec["inline_expr"].is_array()) {
                    return schema_error(block, at + ".inline_expr", "must be an array");
                }
                for (const auto& e : rec["inline_expr"]) {
                    if (!e.is_string()) {
                        return schema_error(block, at + ".inline_expr",
                                            "entries must be strings");
                    }
                }
                if (!rec["hit_limit"].is_number_integer() ||
                    rec["hit_limit"].get<std::int64_t>() < 1) {
                    return schema_error(block, at + ".hit_limit", "must be an integer >= 1");
                }
            }
            return {};
        }
        case BlockId::Metrics: {
            auto m = MetricsRecord::from_json(content);
            if (!m) return m.error();
            auto old = MetricsRecord::from_json(doc.block(BlockId::Metrics));
            if (old) {
                // last_reached_count tracks the current fuzz call and may reset.
                const bool monotone = m->total_iterations >= old->total_iterations &&
                                      m->total_reached_count >= old->total_reached_count &&
                                      m->triggered_count >= old->triggered_count &&
                                      m->timeout_count >= old->timeout_count &&
                                      m->error_count >= old->error_count;
                if (!monotone) {
                    return schema_error(block, "", "counters may not decrease within a campaign");
                }
            }
            return {};
        }
    }
    return {};
}

// --- completion & transitions ----------------------------------------------

namespace {

std::vector<std::string> unmet_for_edge(const WorkflowDocument& doc,
                                        const SessionContext& session, Phase from, Phase to) {
    std::vector<std::string> unmet;
    switch (from) {
        case Phase::Plan:
            for (BlockId b : {BlockId::BugPredicates, BlockId::Preconditions,
                              BlockId::RootCauses, BlockId::TriggerPlans}) {
                if (doc.block_empty(b)) unmet.push_back(std::string(block_name(b)) + " empty");
            }
            break;
        case Phase::Implement: {
            if (doc.block_empty(BlockId::ParameterSpace)) unmet.push_back("ParameterSpace empty");
            const auto& plan = doc.block(BlockId::FuzzPlan);
            const std::size_t n = plan.is_array() ? plan.size() : 0;
            if (n < 5 || n > 10) unmet.push_back("FuzzPlan requires 5-10 entries");
            if (doc.block_empty(BlockId::Breakpoints)) unmet.push_back("Breakpoints empty");
            if (!session.generator_registered) unmet.push_back("generator artifact not registered");
            break;
        }
        case Phase::Execute: {
            auto m = MetricsRecord::from_json(doc.block(BlockId::Metrics));
            const bool advanced =
                m && m->last_updated != session.metrics_stamp_on_execute_entry &&
                !m->last_updated.empty();
            if (!advanced) unmet.push_back("Metrics not updated since entering EXECUTE");
            if (to == Phase::Success) {
                if (!session.pov_recorded) {
                    unmet.push_back("SUCCESS requires a PoV recorded by the fuzz tool");
                }
                if (m && m->triggered_count == 0) {
                    unmet.push_back("Metrics.triggered_count is 0");
                }
            } else if (session.pov_recorded) {
                unmet.push_back("a PoV was recorded; transition to SUCCESS instead");
            }
            break;
        }
        case Phase::Reflect:
            if (session.diagnosis_count < 1) {
                unmet.push_back("no diagnosis recorded in this REFLECT phase");
            }
            break;
        case Phase::Success:
            break;
    }
    return unmet;
}

}  // namespace

Json CompletionReport::to_json() const {
    return {{"phase", to_string(phase)}, {"satisfied", satisfied}, {"unmet", unmet}};
}

CompletionReport check_phase_completion(const WorkflowDocument& doc,
                                        const SessionContext& session) {
    CompletionReport report;
    report.phase = doc.phase();
    Phase forward = Phase::Plan;
    switch (report.phase) {
        case Phase::Plan: forward = Phase::Implement; break;
        case Phase::Implement: forward = Phase::Execute; break;
        case Phase::Execute:
            forward = session.pov_recorded ? Phase::Success : Phase::Reflect;
            break;
        case Phase::Reflect: forward = Phase::Plan; break;
        case Phase::Success:
            report.satisfied = true;
            return report;
    }
    report.unmet = unmet_for_edge(doc, session, report.phase, forward);
    report.satisfied = report.unmet.empty();
    return report;
}

Result<void> check_transition(const WorkflowDocument& doc, const SessionContext& session,
                              Phase next) {
    const Phase from = doc.phase();
    if (!transition_legal(from, next)) {
        return make_error(ErrCode::IllegalTransition,
                          std::string("illegal transition ") + to_string(from) + " -> " +
                              to_string(next),
                          {{"from", to_string(from)}, {"to", to_string(next)}});
    }
    auto unmet = unmet_for_edge(doc, session, from, next);
    if (!unmet.empty()) {
        return make_error(ErrCode::IncompletePhase,
                          std::string(to_string(from)) + " phase incomplete",
                          {{"from", to_string(from)}, {"to", to_string(next)}, {"unmet", unmet}});
    }
    return {};
}

// --- persistence ------------------------------------------------------------

Result<std::filesystem::path> write_temp_file(const std::filesystem::path& target,
                                              const std::string& bytes) {
    static std::atomic<unsigned> counter{0};
    auto temp = target;
    temp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) return make_error(ErrCode::IoError, "cannot open " + temp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) return make_error(ErrCode::IoError, "short write to " + temp.string());
    return temp;
}

Result<void> commit_temp_file(const std::filesystem::path& temp,
                              const std::filesystem::path& target) {
    std::error_code ec;
    std::filesystem::rename(temp, target, ec);
    if (ec) return make_error(ErrCode::IoError, "rename failed: " + ec.message());
    return {};
}

Result<void> atomic_write_file(const std::filesystem::path& target, const std::string& bytes) {
    auto temp = write_temp_file(target, bytes);
    if (!temp) return temp.error();
    return commit_temp_file(*temp, target);
}

// --- gatekeeper ---------------------------------------------------------------

Result<Gatekeeper> Gatekeeper::open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return make_error(ErrCode::IoError, "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    auto doc = WorkflowDocument::parse(buf.str());
    if (!doc) return doc.error();
    Gatekeeper gk;
    gk.path_ = path;
    gk.doc_ = std::move(*doc);
    return gk;
}

Result<void> Gatekeeper::persist() { return atomic_write_file(path_, doc_.render()); }

Result<void> Gatekeeper::write_block(BlockId block, const Json& content) {
    const Phase phase = doc_.phase();
    if (!block_writable(phase, block)) {
        return make_error(ErrCode::PermissionDenied,
                          std::string("block ") + block_name(block) + " is not writable in " +
                              to_string(phase),
                          {{"phase", to_string(phase)}, {"block", block_name(block)}});
    }
    if (auto r = validate_block_content(doc_, block, content); !r) return r;

    WorkflowDocument backup = doc_;
    doc_.set_block(block, content);
    doc_.set_revision(doc_.revision() + 1);
    if (auto r = persist(); !r) {
        doc_ = std::move(backup);
        return r;
    }
    return {};
}

Result<void> Gatekeeper::transition(Phase next) {
    if (auto r = check_transition(doc_, session_, next); !r) return r;

    WorkflowDocument backup = doc_;
    Json state = doc_.block(BlockId::State);
    state["phase"] = to_string(next);
    doc_.set_block(BlockId::State, std::move(state));
    doc_.set_revision(doc_.revision() + 1);
    if (auto r = persist(); !r) {
        doc_ = std::move(backup);
        return r;
    }
    if (next == Phase::Execute) {
        auto m = MetricsRecord::from_json(doc_.block(BlockId::Metrics));
        session_.metrics_stamp_on_execute_entry = m ? m->last_updated : "";
    }
    if (next == Phase::Reflect) {
        session_.diagnosis_count = 0;
    }
    return {};
}

CompletionReport Gatekeeper::check_completion() const {
    return check_phase_completion(doc_, session_);
}

}  // namespace povgen::workflow
