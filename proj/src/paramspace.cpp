#include "povgen/paramspace.hpp"

#include "povgen/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace povgen::param {

namespace {

using povgen::Json;

bool valid_param_name(const std::string& name) {
    if (name.empty()) return false;
    if (!(std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_')) return false;
    for (char c : name) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    }
    return true;
}

void domain_violations(const std::string& name, const Domain& d, std::vector<Violation>& out) {
    if (const auto* r = std::get_if<IntRange>(&d.v)) {
        if (r->min > r->max) out.push_back({name, "int_range requires min <= max"});
    } else if (const auto* f = std::get_if<FloatRange>(&d.v)) {
        if (!(f->min <= f->max)) out.push_back({name, "float_range requires min <= max"});
        if (!std::isfinite(f->min) || !std::isfinite(f->max))
            out.push_back({name, "float_range bounds must be finite"});
    } else if (const auto* c = std::get_if<Categorical>(&d.v)) {
        if (c->values.empty()) out.push_back({name, "categorical requires non-empty values"});
        std::set<std::string> seen;
        for (const auto& v : c->values) {
            if (!seen.insert(v).second) {
                out.push_back({name, "categorical has duplicate value \"" + v + "\""});
            }
        }
    } else if (const auto* s = std::get_if<Segments>(&d.v)) {
        if (s->count_min < 0) out.push_back({name, "segments requires count_min >= 0"});
        if (s->count_min > s->count_max)
            out.push_back({name, "segments requires count_min <= count_max"});
        if (!s->element) {
            out.push_back({name, "segments requires an element domain"});
        } else if (std::holds_alternative<BaseSeed>(s->element->v)) {
            out.push_back({name, "segments element must not be base_seed"});
        } else {
            domain_violations(name + ".element", *s->element, out);
        }
    } else if (const auto* b = std::get_if<BaseSeed>(&d.v)) {
        if (b->corpus_ref.empty()) out.push_back({name, "base_seed requires a corpus_ref"});
    }
}

std::optional<std::int64_t> as_int(const Json& v) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_unsigned()) {
        auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
            return std::nullopt;
        return static_cast<std::int64_t>(u);
    }
    return std::nullopt;
}

// Parameter-value shape: scalar or (nested) list; objects are never values.
bool valid_value_shape(const Json& v) {
    if (v.is_number() || v.is_string() || v.is_boolean()) return true;
    if (v.is_array()) {
        return std::all_of(v.begin(), v.end(), [](const Json& e) { return valid_value_shape(e); });
    }
    return false;
}

std::uint64_t domain_stream_seed(const SamplerConfig& cfg, std::uint64_t iteration,
                                 const std::string& name) {
    return mix_seed(cfg.rng_seed, iteration, fnv1a64(name));
}

Result<Value> sample_domain(const Domain& d, SplitMix64& rng, const SamplerConfig& cfg,
                            std::uint64_t iteration, const std::string& name);

Result<Value> sample_uniform(const Domain& d, SplitMix64& rng, const SamplerConfig& cfg,
                             std::uint64_t iteration, const std::string& name) {
    if (const auto* r = std::get_if<IntRange>(&d.v)) {
        const auto span = static_cast<std::uint64_t>(r->max) - static_cast<std::uint64_t>(r->min);
        // span+1 wraps to 0 on the full 64-bit range; next_below treats 0 as full range.
        const std::uint64_t off = rng.next_below(span + 1);
        return Value(static_cast<std::int64_t>(static_cast<std::uint64_t>(r->min) + off));
    }
    if (const auto* f = std::get_if<FloatRange>(&d.v)) {
        return Value(f->min + rng.next_unit() * (f->max - f->min));
    }
    if (const auto* c = std::get_if<Categorical>(&d.v)) {
        return Value(c->values[rng.next_below(c->values.size())]);
    }
    if (const auto* s = std::get_if<Segments>(&d.v)) {
        const auto span = static_cast<std::uint64_t>(s->count_max - s->count_min);
        const auto len = static_cast<std::uint64_t>(s->count_min) + rng.next_below(span + 1);
        Json arr = Json::array();
        for (std::uint64_t i = 0; i < len; ++i) {
            auto e = sample_domain(*s->element, rng, cfg, iteration, name);
            if (!e) return e.error();
            arr.push_back(std::move(*e));
        }
        return Value(std::move(arr));
    }
    const auto& b = std::get<BaseSeed>(d.v);
    auto pool_it = cfg.seed_pools.find(b.corpus_ref);
    if (pool_it == cfg.seed_pools.end() || pool_it->second.empty()) {
        return make_error(ErrCode::UnresolvedSeed,
                          "base_seed corpus_ref \"" + b.corpus_ref + "\" resolves to no files",
                          {{"parameter", name}});
    }
    const std::string& chosen = pool_it->second[rng.next_below(pool_it->second.size())];
    if (!cfg.mutation_workdir) return Value(chosen);

    std::ifstream in(chosen, std::ios::binary);
    if (!in) return make_error(ErrCode::IoError, "cannot read seed file " + chosen);
    std::ostringstream buf;
    buf << in.rdbuf();
    auto mutated = mutate_seed(buf.str(), cfg, iteration);
    if (!mutated) return mutated.error();
    auto path = *cfg.mutation_workdir /
                ("seed_" + name + "_" + std::to_string(iteration) + ".bin");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) return make_error(ErrCode::IoError, "cannot write mutated seed " + path.string());
    out.write(mutated->data(), static_cast<std::streamsize>(mutated->size()));
    return Value(path.string());
}

Result<Value> sample_domain(const Domain& d, SplitMix64& rng, const SamplerConfig& cfg,
                            std::uint64_t iteration, const std::string& name) {
    const double u = rng.next_unit();  // always drawn, keeps streams aligned
    if (u < cfg.boundary_weight) {
        auto bvals = boundary_values(d);
        if (!bvals.empty()) return bvals[rng.next_below(bvals.size())];
    }
    return sample_uniform(d, rng, cfg, iteration, name);
}

}  // namespace

const char* Domain::kind() const {
    if (std::holds_alternative<IntRange>(v)) return "int_range";
    if (std::holds_alternative<FloatRange>(v)) return "float_range";
    if (std::holds_alternative<Categorical>(v)) return "categorical";
    if (std::holds_alternative<Segments>(v)) return "segments";
    return "base_seed";
}

Json Domain::to_json() const {
    if (const auto* r = std::get_if<IntRange>(&v)) {
        return {{"type", "int_range"}, {"min", r->min}, {"max", r->max}};
    }
    if (const auto* f = std::get_if<FloatRange>(&v)) {
        return {{"type", "float_range"}, {"min", f->min}, {"max", f->max}};
    }
    if (const auto* c = std::get_if<Categorical>(&v)) {
        return {{"type", "categorical"}, {"values", c->values}};
    }
    if (const auto* s = std::get_if<Segments>(&v)) {
        return {{"type", "segments"},
                {"count_min", s->count_min},
                {"count_max", s->count_max},
                {"element", s->element ? s->element->to_json() : Json()}};
    }
    return {{"type", "base_seed"}, {"corpus_ref", std::get<BaseSeed>(v).corpus_ref}};
}

Result<Domain> Domain::from_json(const Json& j) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        return make_error(ErrCode::SchemaViolation, "domain must be an object with a type field",
                          {{"path", ".type"}});
    }
    const std::string type = j["type"].get<std::string>();
    auto check_keys = [&](std::initializer_list<const char*> allowed) -> std::optional<Error> {
        for (const auto& [key, _] : j.items()) {
            if (key == "type") continue;
            if (std::find_if(allowed.begin(), allowed.end(),
                             [&](const char* a) { return key == a; }) == allowed.end()) {
                return make_error(ErrCode::SchemaViolation,
                                  "unknown field \"" + key + "\" in " + type + " domain",
                                  {{"path", "." + key}});
            }
        }
        return std::nullopt;
    };

    if (type == "int_range") {
        if (auto e = check_keys({"min", "max"})) return *e;
        auto mn = j.contains("min") ? as_int(j["min"]) : std::nullopt;
        auto mx = j.contains("max") ? as_int(j["max"]) : std::nullopt;
        if (!mn || !mx) {
            return make_error(ErrCode::SchemaViolation, "int_range requires integer min and max",
                              {{"path", ".min/.max"}});
        }
        return make_int_range(*mn, *mx);
    }
    if (type == "float_range") {
        if (auto e = check_keys({"min", "max"})) return *e;
        if (!j.contains("min") || !j.contains("max") || !j["min"].is_number() ||
            !j["max"].is_number()) {
            return make_error(ErrCode::SchemaViolation, "float_range requires numeric min and max",
                              {{"path", ".min/.max"}});
        }
        return make_float_range(j["min"].get<double>(), j["max"].get<double>());
    }
    if (type == "categorical") {
        if (auto e = check_keys({"values"})) return *e;
        if (!j.contains("values") || !j["values"].is_array()) {
            return make_error(ErrCode::SchemaViolation, "categorical requires a values array",
                              {{"path", ".values"}});
        }
        std::vector<std::string> values;
        for (const auto& v : j["values"]) {
            if (!v.is_string()) {
                return make_error(ErrCode::SchemaViolation, "categorical values must be strings",
                                  {{"path", ".values"}});
            }
            values.push_back(v.get<std::string>());
        }
        return make_categorical(std::move(values));
    }
    if (type == "segments") {
        if (auto e = check_keys({"count_min", "count_max", "element"})) return *e;
        auto mn = j.contains("count_min") ? as_int(j["count_min"]) : std::nullopt;
        auto mx = j.contains("count_max") ? as_int(j["count_max"]) : std::nullopt;
        if (!mn || !mx || !j.contains("element")) {
            return make_error(ErrCode::SchemaViolation,
                              "segments requires count_min, count_max and element",
                              {{"path", ".count_min/.count_max/.element"}});
        }
        auto elem = Domain::from_json(j["element"]);
        if (!elem) return elem.error();
        return make_segments(*mn, *mx, std::move(*elem));
    }
    if (type == "base_seed") {
        if (auto e = check_keys({"corpus_ref"})) return *e;
        if (!j.contains("corpus_ref") || !j["corpus_ref"].is_string()) {
            return make_error(ErrCode::SchemaViolation, "base_seed requires a corpus_ref string",
                              {{"path", ".corpus_ref"}});
        }
        return make_base_seed(j["corpus_ref"].get<std::string>());
    }
    return make_error(ErrCode::SchemaViolation, "unknown domain type \"" + type + "\"",
                      {{"path", ".type"}});
}

Domain make_int_range(std::int64_t min, std::int64_t max) { return Domain{IntRange{min, max}}; }
Domain make_float_range(double min, double max) { return Domain{FloatRange{min, max}}; }
Domain make_categorical(std::vector<std::string> values) {
    return Domain{Categorical{std::move(values)}};
}
Domain make_segments(std::int64_t count_min, std::int64_t count_max, Domain element) {
    return Domain{Segments{count_min, count_max, std::make_shared<Domain>(std::move(element))}};
}
Domain make_base_seed(std::string corpus_ref) { return Domain{BaseSeed{std::move(corpus_ref)}}; }

Json ParameterSpace::to_json() const {
    Json out = Json::object();
    for (const auto& [name, domain] : params) out[name] = domain.to_json();
    return out;
}

Result<ParameterSpace> ParameterSpace::from_json(const Json& j) {
    if (!j.is_object()) {
        return make_error(ErrCode::SchemaViolation, "parameter space must be a JSON object",
                          {{"path", ""}});
    }
    ParameterSpace space;
    for (const auto& [name, dj] : j.items()) {
        auto d = Domain::from_json(dj);
        if (!d) {
            Error e = d.error();
            e.data["parameter"] = name;
            return e;
        }
        space.params.emplace(name, std::move(*d));
    }
    return space;
}

Json ConcreteParams::to_json() const {
    Json out = Json::object();
    if (plan_description) out["plan_description"] = *plan_description;
    for (const auto& [k, v] : values) out[k] = v;
    return out;
}

Result<ConcreteParams> ConcreteParams::from_json(const Json& j) {
    if (!j.is_object()) {
        return make_error(ErrCode::SchemaViolation, "concrete parameters must be a JSON object",
                          {{"path", ""}});
    }
    ConcreteParams p;
    for (const auto& [k, v] : j.items()) {
        if (k == "plan_description") {
            if (!v.is_string()) {
                return make_error(ErrCode::SchemaViolation, "plan_description must be a string",
                                  {{"path", ".plan_description"}});
            }
            p.plan_description = v.get<std::string>();
            continue;
        }
        if (!valid_value_shape(v)) {
            return make_error(ErrCode::SchemaViolation,
                              "parameter value must be a scalar or list", {{"path", "." + k}});
        }
        p.values[k] = v;
    }
    return p;
}

const char* to_string(MutationOp op) {
    switch (op) {
        case MutationOp::BitFlip: return "bit_flip";
        case MutationOp::ByteReplace: return "byte_replace";
        case MutationOp::Truncate: return "truncate";
        case MutationOp::Extend: return "extend";
        case MutationOp::ChunkDuplicate: return "chunk_duplicate";
    }
    return "?";
}

std::optional<MutationOp> mutation_op_from_string(const std::string& s) {
    if (s == "bit_flip") return MutationOp::BitFlip;
    if (s == "byte_replace") return MutationOp::ByteReplace;
    if (s == "truncate") return MutationOp::Truncate;
    if (s == "extend") return MutationOp::Extend;
    if (s == "chunk_duplicate") return MutationOp::ChunkDuplicate;
    return std::nullopt;
}

std::vector<Violation> validate_space(const ParameterSpace& space) {
    std::vector<Violation> out;
    for (const auto& [name, domain] : space.params) {
        if (!valid_param_name(name)) {
            out.push_back({name, "parameter name must match ^[A-Za-z_][A-Za-z0-9_]*$"});
        }
        domain_violations(name, domain, out);
    }
    return out;
}

bool contains(const Domain& domain, const Value& value) {
    if (const auto* r = std::get_if<IntRange>(&domain.v)) {
        auto v = as_int(value);
        return v && *v >= r->min && *v <= r->max;
    }
    if (const auto* f = std::get_if<FloatRange>(&domain.v)) {
        if (!value.is_number()) return false;
        double x = value.get<double>();
        return x >= f->min && x <= f->max;
    }
    if (const auto* c = std::get_if<Categorical>(&domain.v)) {
        if (!value.is_string()) return false;
        const auto s = value.get<std::string>();
        return std::find(c->values.begin(), c->values.end(), s) != c->values.end();
    }
    if (const auto* s = std::get_if<Segments>(&domain.v)) {
        if (!value.is_array() || !s->element) return false;
        auto n = static_cast<std::int64_t>(value.size());
        if (n < s->count_min || n > s->count_max) return false;
        return std::all_of(value.begin(), value.end(),
                           [&](const Value& e) { return contains(*s->element, e); });
    }
    return value.is_string();  // base_seed: a resolved file path
}

std::vector<Violation> check_membership(const ParameterSpace& space, const ConcreteParams& p) {
    std::vector<Violation> out;
    for (const auto& [name, domain] : space.params) {
        auto it = p.values.find(name);
        if (it == p.values.end()) {
            out.push_back({name, "missing parameter"});
        } else if (!contains(domain, it->second)) {
            out.push_back({name, "value " + it->second.dump() + " outside " +
                                     std::string(domain.kind()) + " domain"});
        }
    }
    for (const auto& [name, _] : p.values) {
        if (space.params.count(name) == 0) out.push_back({name, "extraneous parameter"});
    }
    return out;
}

std::vector<Value> boundary_values(const Domain& domain) {
    std::vector<Value> out;
    auto push_unique = [&](const Value& v) {
        if (!contains(domain, v)) return;
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    };

    if (const auto* r = std::get_if<IntRange>(&domain.v)) {
        const std::int64_t mid = r->min + static_cast<std::int64_t>(
                                              (static_cast<std::uint64_t>(r->max) -
                                               static_cast<std::uint64_t>(r->min)) /
                                              2);
        push_unique(r->min);
        push_unique(r->max);
        if (r->min < std::numeric_limits<std::int64_t>::max()) push_unique(r->min + 1);
        if (r->max > std::numeric_limits<std::int64_t>::min()) push_unique(r->max - 1);
        push_unique(mid);

        // Overflow-prone extras: 0/±1, the largest in-range power of two with
        // its predecessor, and the 8/16/32/64-bit type extrema.
        std::vector<std::int64_t> extras = {0, 1, -1};
        if (r->max >= 2) {
            std::int64_t p = 1;
            while (p <= r->max / 2) p *= 2;
            extras.push_back(p);
            extras.push_back(p - 1);
        }
        for (int k : {7, 8, 15, 16, 31, 32}) {
            const std::int64_t p = std::int64_t{1} << k;
            extras.push_back(p);
            extras.push_back(p - 1);
            extras.push_back(-p);
        }
        extras.push_back(std::numeric_limits<std::int64_t>::max());
        extras.push_back(std::numeric_limits<std::int64_t>::min());
        std::sort(extras.begin(), extras.end());
        for (std::int64_t v : extras) push_unique(v);
        return out;
    }
    if (const auto* f = std::get_if<FloatRange>(&domain.v)) {
        push_unique(f->min);
        push_unique(f->max);
        push_unique(0.0);
        push_unique(f->min + (f->max - f->min) / 2.0);
        return out;
    }
    if (const auto* c = std::get_if<Categorical>(&domain.v)) {
        for (const auto& v : c->values) out.emplace_back(v);
        return out;
    }
    if (const auto* s = std::get_if<Segments>(&domain.v)) {
        if (!s->element) return out;
        const auto elems = boundary_values(*s->element);
        auto cycled = [&](std::int64_t len) {
            Json arr = Json::array();
            for (std::int64_t i = 0; i < len; ++i) {
                arr.push_back(elems[static_cast<std::size_t>(i) % elems.size()]);
            }
            return arr;
        };
        if (elems.empty()) {
            if (s->count_min == 0) out.emplace_back(Json::array());
            return out;
        }
        push_unique(cycled(s->count_min));
        push_unique(cycled(s->count_max));
        return out;
    }
    return out;  // base_seed has no enumerable boundaries
}

Result<ConcreteParams> sample(const ParameterSpace& space, const SamplerConfig& config,
                              std::uint64_t iteration) {
    if (space.params.empty()) {
        return make_error(ErrCode::EmptySpace, "parameter space has no parameters");
    }
    ConcreteParams out;
    for (const auto& [name, domain] : space.params) {
        SplitMix64 rng(domain_stream_seed(config, iteration, name));
        auto v = sample_domain(domain, rng, config, iteration, name);
        if (!v) return v.error();
        out.values[name] = std::move(*v);
    }
    return out;
}

Result<MutationTrace> mutate_seed_traced(const std::string& seed, const SamplerConfig& config,
                                         std::uint64_t iteration) {
    if (seed.empty()) return make_error(ErrCode::EmptySeed, "seed is empty");
    MutationTrace trace;
    trace.bytes = seed;
    if (config.mutation_ops.empty()) return trace;

    SplitMix64 rng(mix_seed(config.rng_seed ^ fnv1a64(seed), iteration, seed.size()));
    const std::size_t max_len = seed.size() * 4;
    const std::uint64_t op_count = 1 + rng.next_below(8);
    std::set<std::size_t> flipped_bits;

    for (std::uint64_t k = 0; k < op_count; ++k) {
        auto& bytes = trace.bytes;
        const MutationOp op = config.mutation_ops[rng.next_below(config.mutation_ops.size())];
        switch (op) {
            case MutationOp::BitFlip: {
                const std::size_t total_bits = bytes.size() * 8;
                if (flipped_bits.size() >= total_bits) break;
                std::size_t pos = rng.next_below(total_bits);
                while (flipped_bits.count(pos) != 0) pos = (pos + 1) % total_bits;
                flipped_bits.insert(pos);
                bytes[pos / 8] = static_cast<char>(
                    static_cast<unsigned char>(bytes[pos / 8]) ^ (1u << (pos % 8)));
                trace.records.push_back({op, pos, 0});
                break;
            }
            case MutationOp::ByteReplace: {
                const std::size_t pos = rng.next_below(bytes.size());
                const auto delta = static_cast<unsigned char>(1 + rng.next_below(255));
                bytes[pos] = static_cast<char>(
                    static_cast<unsigned char>(bytes[pos]) + delta);
                trace.records.push_back({op, pos, 1});
                break;
            }
            case MutationOp::Truncate: {
                const std::size_t keep = 1 + rng.next_below(bytes.size());
                bytes.resize(keep);
                trace.records.push_back({op, 0, keep});
                break;
            }
            case MutationOp::Extend: {
                if (bytes.size() >= max_len) break;
                const std::size_t room = max_len - bytes.size();
                const std::size_t n =
                    1 + rng.next_below(std::min(room, std::max<std::size_t>(seed.size(), 1)));
                const std::size_t at = bytes.size();
                for (std::size_t i = 0; i < n; ++i) {
                    bytes.push_back(static_cast<char>(rng.next() & 0xFF));
                }
                trace.records.push_back({op, at, n});
                break;
            }
            case MutationOp::ChunkDuplicate: {
                if (bytes.size() >= max_len) break;
                std::size_t clen = 1 + rng.next_below(bytes.size());
                clen = std::min(clen, max_len - bytes.size());
                if (clen == 0) break;
                const std::size_t off = rng.next_below(bytes.size() - clen + 1);
                const std::string chunk = bytes.substr(off, clen);
                bytes.insert(off + clen, chunk);
                trace.records.push_back({op, off, clen});
                break;
            }
        }
    }
    return trace;
}

Result<std::string> mutate_seed(const std::string& seed, const SamplerConfig& config,
                                std::uint64_t iteration) {
    auto t = mutate_seed_traced(seed, config, iteration);
    if (!t) return t.error();
    return std::move(t->bytes);
}

}  // namespace povgen::param
