#include "povgen/program_facts.hpp"

#include "povgen/gdb_mi.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

namespace povgen::facts {

namespace {

Error format_error(const std::string& path, const std::string& reason) {
    return make_error(ErrCode::ParseError, "graph format: " + reason + " (at " + path + ")",
                      {{"path", path}, {"reason", reason}});
}

Error dangling(const std::string& path, const std::string& reference) {
    return make_error(ErrCode::DanglingReference,
                      "graph: dangling reference " + reference + " (at " + path + ")",
                      {{"path", path}, {"reference", reference}});
}

// Forward interprocedural edges, the relation both BFS and diagnosis share.
// Return edges come from callee terminal blocks that are not program exits.
std::map<BlockRef, std::vector<BlockRef>> forward_edges(const ProgramGraph& g) {
    std::map<BlockRef, std::vector<BlockRef>> out;
    auto add = [&](const BlockRef& from, const BlockRef& to) { out[from].push_back(to); };

    std::map<std::string, std::vector<BlockRef>> returns;  // function -> return blocks
    for (const auto& [fname, fn] : g.functions) {
        for (const auto& [bid, block] : fn.blocks) {
            if (block.successors.empty() && !block.is_exit) {
                returns[fname].push_back({fname, bid});
            }
        }
    }

    for (const auto& [fname, fn] : g.functions) {
        for (const auto& [bid, block] : fn.blocks) {
            const BlockRef here{fname, bid};
            for (const auto& succ : block.successors) add(here, {fname, succ});
            for (const auto& cs : block.callsites) {
                std::vector<std::string> callees;
                if (cs.direct) callees.push_back(*cs.direct);
                callees.insert(callees.end(), cs.resolved.begin(), cs.resolved.end());
                for (const auto& callee : callees) {
                    auto it = g.functions.find(callee);
                    if (it == g.functions.end()) continue;
                    add(here, {callee, it->second.entry_block});
                    auto rit = returns.find(callee);
                    if (rit == returns.end()) continue;
                    for (const auto& ret : rit->second) {
                        for (const auto& succ : block.successors) add(ret, {fname, succ});
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

Result<SourceSpan> SourceSpan::parse(const std::string& text) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= text.size()) {
        return make_error(ErrCode::ParseError, "location must be file:line[-line]: " + text);
    }
    SourceSpan span;
    span.file = text.substr(0, colon);
    const std::string lines = text.substr(colon + 1);
    auto dash = lines.find('-');
    try {
        if (dash == std::string::npos) {
            span.line_lo = span.line_hi = std::stoi(lines);
        } else {
            span.line_lo = std::stoi(lines.substr(0, dash));
            span.line_hi = std::stoi(lines.substr(dash + 1));
        }
    } catch (const std::exception&) {
        return make_error(ErrCode::ParseError, "bad line number in location: " + text);
    }
    if (span.line_lo <= 0 || span.line_hi < span.line_lo) {
        return make_error(ErrCode::ParseError, "bad line span in location: " + text);
    }
    return span;
}

bool SourceSpan::covers(const std::string& f, int line) const {
    if (line < line_lo || line > line_hi) return false;
    // Producers may emit full paths while targets use basenames (or the
    // reverse); match on the basename.
    auto base = [](const std::string& p) {
        auto slash = p.rfind('/');
        return slash == std::string::npos ? p : p.substr(slash + 1);
    };
    return base(file) == base(f);
}

std::string SourceSpan::str() const {
    if (line_lo == line_hi) return file + ":" + std::to_string(line_lo);
    return file + ":" + std::to_string(line_lo) + "-" + std::to_string(line_hi);
}

const BasicBlock* ProgramGraph::find_block(const BlockRef& ref) const {
    auto fit = functions.find(ref.function);
    if (fit == functions.end()) return nullptr;
    auto bit = fit->second.blocks.find(ref.block);
    return bit == fit->second.blocks.end() ? nullptr : &bit->second;
}

Json ProgramGraph::to_json() const {
    Json fns = Json::object();
    for (const auto& [fname, fn] : functions) {
        Json blocks = Json::object();
        for (const auto& [bid, block] : fn.blocks) {
            Json callsites = Json::array();
            for (const auto& cs : block.callsites) {
                Json c = Json::object();
                if (cs.direct) c["direct"] = *cs.direct;
                if (cs.indirect_signature) c["indirect"] = *cs.indirect_signature;
                if (!cs.resolved.empty()) c["resolved"] = cs.resolved;
                callsites.push_back(c);
            }
            blocks[bid] = {{"location", block.location},
                           {"successors", block.successors},
                           {"callsites", callsites},
                           {"is_exit", block.is_exit}};
        }
        fns[fname] = {{"signature", fn.signature},
                      {"address_taken", fn.address_taken},
                      {"entry_block", fn.entry_block},
                      {"blocks", blocks}};
    }
    Json exits = Json::array();
    for (const auto& e : exit_points) {
        exits.push_back({{"function", e.function}, {"block", e.block}});
    }
    return {{"version", version},
            {"entry_functions", std::vector<std::string>(entry_functions.begin(),
                                                         entry_functions.end())},
            {"exit_points", exits},
            {"functions", fns}};
}

Result<ProgramGraph> parse_graph(const Json& j) {
    if (!j.is_object()) return format_error("", "document must be an object");
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"] != 1) {
        return format_error(".version", "missing or unsupported version (expected 1)");
    }
    if (!j.contains("functions") || !j["functions"].is_object()) {
        return format_error(".functions", "missing functions object");
    }
    ProgramGraph g;
    for (const auto& [fname, fj] : j["functions"].items()) {
        Function fn;
        fn.name = fname;
        fn.signature = fj.value("signature", "");
        fn.address_taken = fj.value("address_taken", false);
        if (!fj.contains("entry_block") || !fj["entry_block"].is_string()) {
            return format_error(".functions." + fname + ".entry_block", "missing entry block");
        }
        fn.entry_block = fj["entry_block"].get<std::string>();
        if (!fj.contains("blocks") || !fj["blocks"].is_object() || fj["blocks"].empty()) {
            return format_error(".functions." + fname + ".blocks", "missing blocks");
        }
        for (const auto& [bid, bj] : fj["blocks"].items()) {
            BasicBlock block;
            block.id = bid;
            block.location = bj.value("location", "");
            if (auto span = SourceSpan::parse(block.location); !span) {
                return format_error(".functions." + fname + ".blocks." + bid + ".location",
                                    span.error().message);
            }
            if (bj.contains("successors")) {
                for (const auto& s : bj["successors"]) {
                    block.successors.push_back(s.get<std::string>());
                }
            }
            if (bj.contains("callsites")) {
                for (const auto& cj : bj["callsites"]) {
                    Callsite cs;
                    if (cj.contains("direct")) cs.direct = cj["direct"].get<std::string>();
                    if (cj.contains("indirect")) {
                        cs.indirect_signature = cj["indirect"].get<std::string>();
                    }
                    if (!cs.direct && !cs.indirect_signature) {
                        return format_error(
                            ".functions." + fname + ".blocks." + bid + ".callsites",
                            "callsite needs a direct callee or an indirect signature");
                    }
                    block.callsites.push_back(std::move(cs));
                }
            }
            block.is_exit = bj.value("is_exit", false);
            fn.blocks.emplace(bid, std::move(block));
        }
        if (fn.blocks.count(fn.entry_block) == 0) {
            return dangling(".functions." + fname + ".entry_block", fn.entry_block);
        }
        g.functions.emplace(fname, std::move(fn));
    }

    // Cross-references resolve only after all functions are known.
    for (const auto& [fname, fn] : g.functions) {
        for (const auto& [bid, block] : fn.blocks) {
            const std::string at = ".functions." + fname + ".blocks." + bid;
            for (const auto& succ : block.successors) {
                if (fn.blocks.count(succ) == 0) return dangling(at + ".successors", succ);
            }
            for (const auto& cs : block.callsites) {
                if (cs.direct && g.functions.count(*cs.direct) == 0) {
                    return dangling(at + ".callsites", *cs.direct);
                }
            }
            if (block.is_exit) g.exit_points.insert({fname, bid});
        }
    }

    if (!j.contains("entry_functions") || !j["entry_functions"].is_array() ||
        j["entry_functions"].empty()) {
        return format_error(".entry_functions", "must be a non-empty array");
    }
    for (const auto& e : j["entry_functions"]) {
        const auto name = e.get<std::string>();
        if (g.functions.count(name) == 0) return dangling(".entry_functions", name);
        g.entry_functions.insert(name);
    }
    if (j.contains("exit_points")) {
        for (const auto& e : j["exit_points"]) {
            BlockRef ref{e.value("function", ""), e.value("block", "")};
            auto* block = g.find_block(ref);
            if (block == nullptr) return dangling(".exit_points", ref.str());
            g.exit_points.insert(ref);
            const_cast<BasicBlock*>(block)->is_exit = true;
        }
    }
    return g;
}

Result<ProgramGraph> load_graph(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return make_error(ErrCode::IoError, "cannot read graph file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    Json j = Json::parse(buf.str(), nullptr, false);
    if (j.is_discarded()) {
        return make_error(ErrCode::ParseError, "graph file is not valid JSON: " + path.string());
    }
    return parse_graph(j);
}

ProgramGraph resolve_indirect_calls(const ProgramGraph& graph) {
    ProgramGraph out = graph;
    // Signature -> address-taken functions, in sorted name order so the
    // result is independent of input iteration order.
    std::map<std::string, std::vector<std::string>> by_signature;
    for (const auto& [fname, fn] : out.functions) {
        if (fn.address_taken) by_signature[fn.signature].push_back(fname);
    }
    for (auto& [_, fn] : out.functions) {
        for (auto& [__, block] : fn.blocks) {
            for (auto& cs : block.callsites) {
                if (!cs.indirect_signature) continue;
                cs.resolved.clear();
                auto it = by_signature.find(*cs.indirect_signature);
                if (it != by_signature.end()) cs.resolved = it->second;
                cs.flagged_unresolved = cs.resolved.empty();
            }
        }
    }
    out.indirect_resolved = true;
    return out;
}

Result<std::vector<std::string>> get_callees(const ProgramGraph& graph, const std::string& fn) {
    auto it = graph.functions.find(fn);
    if (it == graph.functions.end()) {
        return make_error(ErrCode::UnknownFunction, "unknown function " + fn,
                          {{"function", fn}});
    }
    std::set<std::string> callees;
    for (const auto& [_, block] : it->second.blocks) {
        for (const auto& cs : block.callsites) {
            if (cs.direct) callees.insert(*cs.direct);
            callees.insert(cs.resolved.begin(), cs.resolved.end());
        }
    }
    return std::vector<std::string>(callees.begin(), callees.end());
}

Result<std::vector<std::string>> get_callers(const ProgramGraph& graph, const std::string& fn) {
    if (graph.functions.count(fn) == 0) {
        return make_error(ErrCode::UnknownFunction, "unknown function " + fn,
                          {{"function", fn}});
    }
    std::set<std::string> callers;
    for (const auto& [caller, f] : graph.functions) {
        for (const auto& [_, block] : f.blocks) {
            for (const auto& cs : block.callsites) {
                if ((cs.direct && *cs.direct == fn) ||
                    std::find(cs.resolved.begin(), cs.resolved.end(), fn) !=
                        cs.resolved.end()) {
                    callers.insert(caller);
                }
            }
        }
    }
    return std::vector<std::string>(callers.begin(), callers.end());
}

Result<ReachSet> compute_reach_set(const ProgramGraph& graph, const TargetSpec& targets) {
    ReachSet reach;
    reach.targets = targets;

    std::vector<BlockRef> target_blocks;
    for (const auto& loc : targets.locations) {
        auto span = SourceSpan::parse(loc);
        if (!span) return span.error();
        bool mapped = false;
        for (const auto& [fname, fn] : graph.functions) {
            for (const auto& [bid, block] : fn.blocks) {
                auto bspan = SourceSpan::parse(block.location);
                if (bspan && bspan->covers(span->file, span->line_lo)) {
                    target_blocks.push_back({fname, bid});
                    mapped = true;
                }
            }
        }
        if (!mapped) {
            return make_error(ErrCode::TargetUnmapped, "no block at target location " + loc,
                              {{"location", loc}});
        }
    }

    // Backward BFS over the reversed interprocedural edges.
    std::map<BlockRef, std::vector<BlockRef>> reversed;
    for (const auto& [from, tos] : forward_edges(graph)) {
        for (const auto& to : tos) reversed[to].push_back(from);
    }
    std::deque<BlockRef> queue(target_blocks.begin(), target_blocks.end());
    for (const auto& t : target_blocks) reach.members.insert(t);
    while (!queue.empty()) {
        BlockRef cur = queue.front();
        queue.pop_front();
        auto it = reversed.find(cur);
        if (it == reversed.end()) continue;
        for (const auto& pred : it->second) {
            if (reach.members.insert(pred).second) queue.push_back(pred);
        }
    }
    return reach;
}

Json CriticalLocation::to_json() const {
    return {{"function", branch_block.function},
            {"block", branch_block.block},
            {"branch_location", branch_location},
            {"reachable_successor", reachable_successor},
            {"unreachable_successor", unreachable_successor}};
}

Result<CriticalLocation> CriticalLocation::from_json(const Json& j) {
    CriticalLocation c;
    if (!j.is_object() || !j.contains("function") || !j.contains("block")) {
        return make_error(ErrCode::SchemaViolation, "critical location requires function/block");
    }
    c.branch_block = {j["function"].get<std::string>(), j["block"].get<std::string>()};
    c.branch_location = j.value("branch_location", "");
    c.reachable_successor = j.value("reachable_successor", "");
    c.unreachable_successor = j.value("unreachable_successor", "");
    return c;
}

std::vector<CriticalLocation> compute_critical_locations(const ProgramGraph& graph,
                                                         const ReachSet& reach) {
    std::vector<CriticalLocation> out;
    for (const auto& [fname, fn] : graph.functions) {
        for (const auto& [bid, block] : fn.blocks) {
            std::vector<std::string> in, outside;
            for (const auto& succ : block.successors) {
                (reach.contains({fname, succ}) ? in : outside).push_back(succ);
            }
            if (in.empty() || outside.empty()) continue;
            std::sort(in.begin(), in.end());
            std::sort(outside.begin(), outside.end());
            for (const auto& r : in) {
                for (const auto& u : outside) {
                    out.push_back({{fname, bid}, block.location, r, u});
                }
            }
        }
    }
    return out;  // maps iterate sorted, so order is (function, block, pair)
}

Json DeviationReport::to_json() const {
    Json stack = Json::array();
    for (const auto& f : callstack) stack.push_back(f.to_json());
    Json hit_list = Json::array();
    for (const auto& h : hits) hit_list.push_back(h.to_json());
    return {{"divergence", divergence ? divergence->to_json() : Json()},
            {"reached", reached},
            {"callstack", stack},
            {"hits", hit_list}};
}

Result<DeviationReport> diagnose_deviation(const ProgramGraph& graph,
                                           const harness::TargetConfig& target,
                                           const std::filesystem::path& input_file,
                                           const std::vector<CriticalLocation>& criticals) {
    if (criticals.empty()) {
        return make_error(ErrCode::NoCriticalHit, "no critical locations to observe");
    }

    // Branch breakpoint line -> criticals anchored there.
    std::map<std::string, std::vector<const CriticalLocation*>> by_line;
    auto block_line = [&](const std::string& function,
                          const std::string& block) -> std::optional<std::string> {
        const auto* b = graph.find_block({function, block});
        if (b == nullptr) return std::nullopt;
        auto span = SourceSpan::parse(b->location);
        if (!span) return std::nullopt;
        return span->file + ":" + std::to_string(span->first_line());
    };
    for (const auto& c : criticals) {
        auto line = block_line(c.branch_block.function, c.branch_block.block);
        if (!line) {
            return make_error(ErrCode::DanglingReference,
                              "critical location references unknown block " +
                                  c.branch_block.str());
        }
        by_line[*line].push_back(&c);
    }

    auto scratch = std::filesystem::temp_directory_path() /
                   ("povgen_dev_" + std::to_string(::getpid()));
    std::filesystem::create_directories(scratch);
    struct Cleanup {
        std::filesystem::path p;
        ~Cleanup() {
            std::error_code ec;
            std::filesystem::remove_all(p, ec);
        }
    } cleanup{scratch};

    auto argv = target.argv_for(input_file.string());
    if (!argv) return argv.error();

    mi::GdbSession gdb;
    if (auto r = gdb.start(*argv, target.cwd, target.env, target.run_timeout); !r) {
        return r.error();
    }

    std::map<int, std::string> branch_bps;  // gdb number -> branch line
    for (const auto& [line, _] : by_line) {
        auto num = gdb.insert_breakpoint(line);
        if (num) branch_bps[*num] = line;
    }
    if (branch_bps.empty()) {
        return make_error(ErrCode::SpawnError, "no critical breakpoint could be registered");
    }
    if (auto r = gdb.run_redirected(scratch / "out.txt", scratch / "err.txt"); !r) {
        return r.error();
    }

    DeviationReport report;
    bool any_branch_hit = false;

    // Probes armed after a branch hit: one temporary breakpoint per successor
    // first-line. A successor line can coincide with another critical branch
    // line, so stops are matched by their source line, not by number.
    struct Probe {
        int bp_number;
        const CriticalLocation* critical;
        bool unreachable_side;
        std::string line;
    };
    std::vector<Probe> probes;
    std::vector<harness::StackFrame> pending_stack;

    auto clear_probes = [&] {
        for (const auto& p : probes) gdb.delete_breakpoint(p.bp_number);
        probes.clear();
    };
    auto arm_probes = [&](const std::string& line) {
        clear_probes();
        for (const CriticalLocation* c : by_line[line]) {
            for (bool unreachable_side : {false, true}) {
                const auto& succ =
                    unreachable_side ? c->unreachable_successor : c->reachable_successor;
                auto succ_line = block_line(c->branch_block.function, succ);
                if (!succ_line) continue;
                auto num = gdb.insert_breakpoint(*succ_line, /*temporary=*/true);
                if (num) probes.push_back({*num, c, unreachable_side, *succ_line});
            }
        }
    };
    auto basename = [](const std::string& p) {
        auto slash = p.rfind('/');
        return slash == std::string::npos ? p : p.substr(slash + 1);
    };

    for (;;) {
        auto stop = gdb.wait_stop();
        if (!stop) {
            gdb.kill();
            if (stop.error().code == ErrCode::Aborted) break;  // deadline: report what we have
            return stop.error();
        }
        const std::string reason = stop->results.value("reason", "");
        if (reason == "breakpoint-hit") {
            std::string stop_line;
            if (stop->results.contains("frame")) {
                const auto& frame = stop->results["frame"];
                stop_line = basename(frame.value("file", "?")) + ":" + frame.value("line", "0");
            }
            // A pending probe consumes the stop first.
            if (!probes.empty()) {
                auto hit = std::find_if(probes.begin(), probes.end(), [&](const Probe& p) {
                    return p.line == stop_line;
                });
                if (hit != probes.end()) {
                    const Probe taken = *hit;
                    clear_probes();
                    if (taken.unreachable_side) {
                        // The last divergence wins.
                        report.divergence = *taken.critical;
                        report.callstack = pending_stack;
                    }
                }
            }
            // The same line may itself be a critical branch.
            if (by_line.count(stop_line) != 0) {
                any_branch_hit = true;
                pending_stack.clear();
                for (const auto& f : gdb.frames()) {
                    pending_stack.push_back({f.function, f.location});
                }
                harness::BreakpointHit hit;
                hit.location = stop_line;
                hit.hit_index = report.hits.size() + 1;
                hit.callstack = pending_stack;
                report.hits.push_back(std::move(hit));
                arm_probes(stop_line);
            }
            if (auto r = gdb.resume(); !r) break;
            continue;
        }
        if (reason == "signal-received") {
            gdb.kill();
            break;
        }
        if (reason.rfind("exited", 0) == 0 || gdb.inferior_exited()) break;
        if (auto r = gdb.resume(); !r) break;
    }
    (void)branch_bps;

    // Classify the captured output to detect the reached case.
    {
        std::ifstream out_f(scratch / "out.txt"), err_f(scratch / "err.txt");
        std::ostringstream ob, eb;
        ob << out_f.rdbuf();
        eb << err_f.rdbuf();
        auto cls = harness::classify(target, ob.str(), eb.str(), false, false, 0);
        report.reached = cls == harness::Classification::Reached ||
                         cls == harness::Classification::Triggered;
    }

    if (!any_branch_hit && !report.reached) {
        return make_error(ErrCode::NoCriticalHit,
                          "execution never reached a critical location");
    }
    return report;
}

}  // namespace povgen::facts
