// Parameterized DTD content-model generator. Builds an XML document whose
// DOCTYPE declares a recursively nested element content model with qualified
// names, shaped by five parameters:
//   element_prefix_length, element_name_length  (0 prefix: unqualified names)
//   nesting_depth, num_elements, content_model_type (SEQ | OR | MIXED)
// The first child at every level always recurses, so the emitted model's
// maximum nesting equals nesting_depth; remaining children recurse at random
// from the injected _rng_seed.

#include "povgen/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <iostream>
#include <sstream>
#include <string>

namespace {

struct Params {
    long prefix_len = 50;
    long name_len = 50;
    long depth = 5;
    long num_elements = 5;
    std::string model_type = "SEQ";
    std::uint64_t rng_seed = 0;
};

std::string qualified_name(const Params& p) {
    std::string out;
    if (p.prefix_len > 0) {
        out.append(static_cast<std::size_t>(p.prefix_len), 'p');
        out.push_back(':');
    }
    out.append(static_cast<std::size_t>(std::max(p.name_len, 1L)), 'n');
    return out;
}

std::string separator(const std::string& model_type, long depth) {
    if (model_type == "OR") return " | ";
    if (model_type == "MIXED") return depth % 2 == 0 ? " | " : " , ";
    return " , ";
}

std::string build_content_model(const Params& p, povgen::SplitMix64& rng, long depth,
                                long num_elems) {
    if (depth <= 0) return qualified_name(p);
    const long n = std::clamp(num_elems, 1L, 10L);
    std::string out;
    for (long i = 0; i < n; ++i) {
        if (i > 0) out += separator(p.model_type, depth);
        if (depth > 1 && (i == 0 || rng.next_unit() > 0.5)) {
            out += "(" + build_content_model(p, rng, depth - 1, num_elems / 2) + ")";
        } else {
            out += qualified_name(p);
        }
    }
    return out;
}

}  // namespace

int main() {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    auto j = nlohmann::json::parse(buf.str(), nullptr, false);
    if (j.is_discarded()) return 2;

    Params p;
    p.prefix_len = j.value("element_prefix_length", 50);
    p.name_len = j.value("element_name_length", 50);
    p.depth = j.value("nesting_depth", 5);
    p.num_elements = j.value("num_elements", 5);
    p.model_type = j.value("content_model_type", "SEQ");
    p.rng_seed = j.value("_rng_seed", 0ULL);

    povgen::SplitMix64 rng(p.rng_seed);
    const std::string model = build_content_model(p, rng, p.depth, p.num_elements);
    std::cout << "<!DOCTYPE root [<!ELEMENT root (" << model << ")>]><root></root>";
    return 0;
}
