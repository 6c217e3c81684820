#pragma once
// Access to compiled fixture binaries and their source anchors.

#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <string>

namespace test_support {

inline std::filesystem::path fixture_bin(const std::string& name) {
    return std::filesystem::path(FIXTURE_BIN_DIR) / name;
}

inline std::filesystem::path fixture_src(const std::string& name) {
    return std::filesystem::path(FIXTURE_SRC_DIR) / name;
}

// Scans a source file for trailing anchors of the form [<kind>:<name>] inside
// comments and returns name -> 1-based line number.
inline std::map<std::string, int> scan_anchors(const std::filesystem::path& src,
                                               const std::string& kind) {
    std::map<std::string, int> out;
    std::ifstream in(src);
    std::string line;
    const std::regex re("\\[" + kind + ":([A-Za-z0-9_]+)\\]");
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::smatch m;
        if (std::regex_search(line, m, re)) out[m[1].str()] = lineno;
    }
    return out;
}

}  // namespace test_support
