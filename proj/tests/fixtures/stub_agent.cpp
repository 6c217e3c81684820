// Minimal external agent for the process backend: consumes the prompt frame,
// asks for the current phase, writes one empty block, and exits.

#include <nlohmann/json.hpp>

#include <iostream>
#include <string>

using nlohmann::json;

namespace {

json read_frame() {
    std::string line;
    if (!std::getline(std::cin, line)) return {};
    return json::parse(line, nullptr, false);
}

}  // namespace

int main() {
    auto prompt = read_frame();
    if (prompt.value("method", "") != "session/prompt") return 10;
    if (prompt["params"].value("text", "").find("Mission") == std::string::npos) return 11;

    std::cout << R"({"jsonrpc":"2.0","id":1,"method":"get_current_phase","params":{}})"
              << "\n"
              << std::flush;
    auto phase = read_frame();
    if (phase.value("id", 0) != 1) return 12;
    if (phase["result"].value("phase", "") != "PLAN") return 13;

    std::cout << R"({"jsonrpc":"2.0","id":2,"method":"write_workflow_block,)";
    // Deliberately malformed line above: the server must answer with a parse
    // error and keep serving.
    std::cout << "\n" << std::flush;
    auto parse_err = read_frame();
    if (!parse_err.contains("error") || parse_err["error"].value("code", 0) != -32700) {
        return 14;
    }

    json write = {{"jsonrpc", "2.0"},
                  {"id", 3},
                  {"method", "write_workflow_block"},
                  {"params",
                   {{"target_block", "BugPredicates"}, {"content_json", json::array()}}}};
    std::cout << write.dump() << "\n" << std::flush;
    auto ok = read_frame();
    if (!ok.contains("result") || ok["result"].value("ok", false) != true) return 15;
    return 0;
}
