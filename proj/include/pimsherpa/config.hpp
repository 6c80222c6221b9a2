#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pimsherpa/address_map.hpp"
#include "pimsherpa/cost_model.hpp"
#include "pimsherpa/error.hpp"
#include "pimsherpa/memory_system.hpp"
#include "pimsherpa/model.hpp"
#include "pimsherpa/runtime.hpp"
#include "pimsherpa/weight_layout.hpp"

namespace sherpa {

using json = nlohmann::json;

/// Invalid configuration. Each diagnostic is "<key path>: <problem>".
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> diags) : Error(ErrorCode::Config, join(diags)), diags_(std::move(diags)) {}

    [[nodiscard]] const std::vector<std::string>& diagnostics() const { return diags_; }

private:
    static std::string join(const std::vector<std::string>& d) {
        std::string s;
        for (const auto& x : d) s += (s.empty() ? "" : "; ") + x;
        return s;
    }
    std::vector<std::string> diags_;
};

struct RunConfig {
    ModelSpec model = presets::toy64();
    HardwareSpec hw = presets::s24plus();
    CacheConfig cache;
    AddressMap map = desk_1k_map();
    PlacementPolicy placement;
    ScenarioKind scenario = ScenarioKind::S_DDB;
    std::uint64_t in_len = 64;
    std::uint64_t out_len = 64;
    CostMode mode = CostMode::Calibrated;
    std::uint64_t seed = 1;

    [[nodiscard]] MemoryConfig memory() const {
        MemoryConfig m;
        m.map = map;
        m.cache = cache;
        return m;
    }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

class Reader {
public:
    std::vector<std::string> diags;

    void fail(const std::string& path, const std::string& what) { diags.push_back(path + ": " + what); }

    /// Checks that `j` is an object holding only `allowed` keys.
    bool object(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
        if (!j.is_object()) {
            fail(path, "expected an object");
            return false;
        }
        for (const auto& [k, v] : j.items()) {
            if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) fail(path + "." + k, "unknown key");
        }
        return true;
    }

    void u64(const json& o, const char* key, const std::string& path, std::uint64_t& out, std::uint64_t min = 0) {
        if (!o.contains(key)) return;
        const auto& v = o.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            fail(path + "." + key, "expected a non-negative integer");
            return;
        }
        const auto x = v.get<std::uint64_t>();
        if (x < min) {
            fail(path + "." + key, "must be >= " + std::to_string(min));
            return;
        }
        out = x;
    }

    void real(const json& o, const char* key, const std::string& path, double& out) {
        if (!o.contains(key)) return;
        const auto& v = o.at(key);
        if (!v.is_number()) {
            fail(path + "." + key, "expected a number");
            return;
        }
        out = v.get<double>();
    }

    void opt_u64(const json& o, const char* key, const std::string& path, std::optional<std::uint64_t>& out) {
        if (!o.contains(key)) return;
        if (o.at(key).is_null()) {
            out.reset();
            return;
        }
        std::uint64_t x = 0;
        const auto before = diags.size();
        u64(o, key, path, x);
        if (diags.size() == before) out = x;
    }

    bool str(const json& o, const char* key, const std::string& path, std::string& out) {
        if (!o.contains(key)) return false;
        if (!o.at(key).is_string()) {
            fail(path + "." + key, "expected a string");
            return false;
        }
        out = o.at(key).get<std::string>();
        return true;
    }
};

inline void read_model(Reader& r, const json& j, ModelSpec& m) {
    if (j.is_string()) {
        auto p = presets::by_name(j.get<std::string>());
        if (!p) return r.fail("model", "unknown preset '" + j.get<std::string>() + "' (llama3.2-1b, llama3.2-3b, toy-64)");
        m = *p;
        return;
    }
    if (!r.object(j, "model", {"preset", "name", "hidden", "intermediate", "layers", "kv_ratio", "vocab", "element_bytes",
                               "reported_host_bytes", "reported_padding_bytes"})) {
        return;
    }
    std::string preset;
    if (r.str(j, "preset", "model", preset)) {
        auto p = presets::by_name(preset);
        if (!p) return r.fail("model.preset", "unknown preset '" + preset + "'");
        m = *p;
    }
    r.str(j, "name", "model", m.name);
    r.u64(j, "hidden", "model", m.hidden, 1);
    r.u64(j, "intermediate", "model", m.intermediate, 1);
    r.u64(j, "layers", "model", m.layers);
    r.u64(j, "vocab", "model", m.vocab, 1);
    r.u64(j, "element_bytes", "model", m.element_bytes, 1);
    r.opt_u64(j, "reported_host_bytes", "model", m.reported_host_bytes);
    r.opt_u64(j, "reported_padding_bytes", "model", m.reported_padding_bytes);
    std::string kv;
    if (r.str(j, "kv_ratio", "model", kv)) {
        unsigned long long num = 0, den = 0;
        char slash = 0;
        std::istringstream is(kv);
        if (!(is >> num >> slash >> den) || slash != '/' || num == 0 || den == 0 || !is.eof()) {
            r.fail("model.kv_ratio", "expected a fraction such as \"1/4\"");
        } else {
            m.kv_num = num;
            m.kv_den = den;
        }
    }
}

inline void read_cache(Reader& r, const json& j, CacheConfig& c) {
    if (!r.object(j, "hw.cache", {"capacity", "line_bytes", "ways"})) return;
    r.u64(j, "capacity", "hw.cache", c.capacity, 1);
    r.u64(j, "line_bytes", "hw.cache", c.line_bytes, 1);
    r.u64(j, "ways", "hw.cache", c.ways, 1);
}

inline void read_hw(Reader& r, const json& j, HardwareSpec& hw, CacheConfig& cache) {
    if (j.is_string()) {
        auto p = presets::hardware_by_name(j.get<std::string>());
        if (!p) return r.fail("hw", "unknown preset '" + j.get<std::string>() + "' (s24plus)");
        hw = *p;
        return;
    }
    if (!r.object(j, "hw", {"preset", "name", "peak_gflops", "dram_bw", "flop_per_byte", "table_flop_per_byte", "pim_bw_multiplier",
                            "gemm_effective_gflops", "smc_bw_2agents", "smc_bw_4agents", "nc_read_penalty", "nc_gemm_bw",
                            "nc_tile_reuse", "host_overhead_per_token", "attention_time_per_layer", "ddb_copy_agents",
                            "owr_copy_agents", "dram_capacity_bytes", "cache"})) {
        return;
    }
    std::string preset;
    if (r.str(j, "preset", "hw", preset)) {
        auto p = presets::hardware_by_name(preset);
        if (!p) return r.fail("hw.preset", "unknown preset '" + preset + "'");
        hw = *p;
    }
    r.str(j, "name", "hw", hw.name);
    r.real(j, "peak_gflops", "hw", hw.peak_gflops);
    r.real(j, "dram_bw", "hw", hw.dram_bw);
    r.real(j, "flop_per_byte", "hw", hw.flop_per_byte);
    if (j.contains("table_flop_per_byte")) {
        std::uint64_t v = static_cast<std::uint64_t>(hw.table_flop_per_byte);
        r.u64(j, "table_flop_per_byte", "hw", v, 1);
        hw.table_flop_per_byte = static_cast<std::int64_t>(v);
    }
    r.real(j, "pim_bw_multiplier", "hw", hw.pim_bw_multiplier);
    r.real(j, "gemm_effective_gflops", "hw", hw.gemm_effective_gflops);
    r.real(j, "smc_bw_2agents", "hw", hw.smc_bw_2agents);
    r.real(j, "smc_bw_4agents", "hw", hw.smc_bw_4agents);
    r.real(j, "nc_read_penalty", "hw", hw.nc_read_penalty);
    r.real(j, "nc_gemm_bw", "hw", hw.nc_gemm_bw);
    r.u64(j, "nc_tile_reuse", "hw", hw.nc_tile_reuse, 1);
    r.real(j, "host_overhead_per_token", "hw", hw.host_overhead_per_token);
    r.real(j, "attention_time_per_layer", "hw", hw.attention_time_per_layer);
    r.u64(j, "ddb_copy_agents", "hw", hw.ddb_copy_agents, 1);
    r.u64(j, "owr_copy_agents", "hw", hw.owr_copy_agents, 1);
    r.u64(j, "dram_capacity_bytes", "hw", hw.dram_capacity_bytes, 1);
    if (j.contains("cache")) read_cache(r, j.at("cache"), cache);
}

inline void read_map(Reader& r, const json& j, AddressMap& map, PlacementPolicy& pol, bool& channels_given) {
    if (j.is_string()) {
        auto p = map_by_name(j.get<std::string>());
        if (!p) return r.fail("map", "unknown preset '" + j.get<std::string>() + "' (desk, desk-1k, s24plus)");
        map = *p;
        return;
    }
    if (!r.object(j, "map", {"preset", "geometry", "field_order", "active_banks", "active_channels", "input_tile"})) return;
    std::string preset;
    if (r.str(j, "preset", "map", preset)) {
        auto p = map_by_name(preset);
        if (!p) return r.fail("map.preset", "unknown preset '" + preset + "'");
        map = *p;
    }
    if (j.contains("geometry")) {
        const auto& g = j.at("geometry");
        if (r.object(g, "map.geometry", {"channels", "ranks", "banks", "rows", "columns", "burst_bytes", "element_bytes"})) {
            auto& G = map.geometry;
            r.u64(g, "channels", "map.geometry", G.channels, 1);
            r.u64(g, "ranks", "map.geometry", G.ranks_per_channel, 1);
            r.u64(g, "banks", "map.geometry", G.banks_per_rank, 1);
            r.u64(g, "rows", "map.geometry", G.rows_per_bank, 1);
            r.u64(g, "columns", "map.geometry", G.columns_per_row, 1);
            r.u64(g, "burst_bytes", "map.geometry", G.burst_bytes, 1);
            r.u64(g, "element_bytes", "map.geometry", G.element_bytes, 1);
            const auto v = validate_map(AddressMap{G, {}});
            if (v.violation == MapViolation::ZeroCount || v.violation == MapViolation::NonPowerOfTwo ||
                v.violation == MapViolation::BurstElementMismatch) {
                r.fail("map.geometry", v.message);
            } else {
                map = make_interleaved_map(G);
            }
        }
    }
    if (j.contains("field_order")) {
        const auto& fo = j.at("field_order");
        if (!fo.is_array()) {
            r.fail("map.field_order", "expected an array, least significant field first");
        } else {
            std::vector<FieldSlice> order;
            for (std::size_t i = 0; i < fo.size(); ++i) {
                const std::string path = "map.field_order[" + std::to_string(i) + "]";
                const auto& e = fo[i];
                std::string name;
                std::optional<unsigned> width;
                if (e.is_string()) {
                    name = e.get<std::string>();
                } else if (r.object(e, path, {"field", "width"})) {
                    r.str(e, "field", path, name);
                    std::uint64_t w = 0;
                    if (e.contains("width")) {
                        const auto before = r.diags.size();
                        r.u64(e, "width", path, w);
                        if (r.diags.size() == before) width = static_cast<unsigned>(w);
                    }
                } else {
                    continue;
                }
                auto f = field_from_string(name);
                if (!f) {
                    r.fail(path, "unknown field '" + name + "' (channel, rank, bank, row, column)");
                    continue;
                }
                const auto count = field_count(map.geometry, *f);
                order.push_back({*f, width.value_or(is_pow2(count) ? log2_exact(count) : 0)});
            }
            map.field_order = std::move(order);
        }
    }
    if (j.contains("active_channels")) channels_given = true;
    r.u64(j, "active_banks", "map", pol.active_banks, 1);
    r.u64(j, "active_channels", "map", pol.active_channels, 1);
    r.u64(j, "input_tile", "map", pol.input_tile, 1);
}

inline void read_run(Reader& r, const json& j, RunConfig& c) {
    if (!r.object(j, "run", {"scenario", "in_len", "out_len", "mode", "seed"})) return;
    std::string s;
    if (r.str(j, "scenario", "run", s)) {
        auto k = scenario_from_string(s);
        if (!k) {
            r.fail("run.scenario", "unknown scenario '" + s + "' (WD, FACIL_O, S_DDB, S_OWR, C_GEMM, NC_GEMM)");
        } else {
            c.scenario = *k;
        }
    }
    r.u64(j, "in_len", "run", c.in_len, 1);
    r.u64(j, "out_len", "run", c.out_len);
    if (r.str(j, "mode", "run", s)) {
        if (s == "analytical") {
            c.mode = CostMode::Analytical;
        } else if (s == "calibrated") {
            c.mode = CostMode::Calibrated;
        } else {
            r.fail("run.mode", "expected \"analytical\" or \"calibrated\"");
        }
    }
    r.u64(j, "seed", "run", c.seed);
}

}  // namespace detail

/// Semantic checks that span sections. Returns field-level diagnostics.
inline std::vector<std::string> check_config(const RunConfig& c) {
    std::vector<std::string> d;
    auto guard = [&](const char* path, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            d.push_back(std::string(path) + ": " + e.what());
        }
    };
    guard("model", [&] { validate_model(c.model); });
    guard("hw", [&] { validate_hardware(c.hw); });
    guard("hw.cache", [&] { CacheModel probe(c.cache); });
    guard("map", [&] { require_valid(c.map); });
    const auto& g = c.map.geometry;
    if (c.placement.active_banks > g.banks_per_rank || !is_pow2(c.placement.active_banks)) {
        d.push_back("map.active_banks: must be a power of two <= banks per rank (" + std::to_string(g.banks_per_rank) + ")");
    }
    if (c.placement.active_channels > g.channels || !is_pow2(c.placement.active_channels)) {
        d.push_back("map.active_channels: must be a power of two <= channels (" + std::to_string(g.channels) + ")");
    }
    if (g.elements_per_burst() > 0 && c.placement.input_tile % g.elements_per_burst() != 0) {
        d.push_back("map.input_tile: must be a multiple of the elements per burst");
    }
    if (c.model.element_bytes != g.element_bytes) d.push_back("model.element_bytes: differs from map.geometry.element_bytes");
    if (c.in_len == 0) d.push_back("run.in_len: must be >= 1");
    return d;
}

/// Parses a configuration document. Missing sections keep their defaults.
inline RunConfig parse_config(const json& j) {
    detail::Reader r;
    RunConfig c;
    bool channels_given = false;
    if (r.object(j, "config", {"model", "hw", "map", "run"})) {
        if (j.contains("model")) detail::read_model(r, j.at("model"), c.model);
        if (j.contains("hw")) detail::read_hw(r, j.at("hw"), c.hw, c.cache);
        if (j.contains("map")) detail::read_map(r, j.at("map"), c.map, c.placement, channels_given);
        if (j.contains("run")) detail::read_run(r, j.at("run"), c);
    }
    if (!channels_given) c.placement.active_channels = c.map.geometry.channels;
    if (r.diags.empty()) r.diags = check_config(c);
    if (!r.diags.empty()) throw ConfigError(r.diags);
    return c;
}

/// Parses JSON text; `//` and `/* */` comments are allowed.
inline RunConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("config: ") + e.what()});
    }
    return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"config: cannot open '" + path + "'"});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

inline json to_json(const ModelSpec& m) {
    json j{{"name", m.name},   {"hidden", m.hidden}, {"intermediate", m.intermediate},
           {"layers", m.layers}, {"kv_ratio", std::to_string(m.kv_num) + "/" + std::to_string(m.kv_den)},
           {"vocab", m.vocab},  {"element_bytes", m.element_bytes}};
    j["reported_host_bytes"] = m.reported_host_bytes ? json(*m.reported_host_bytes) : json(nullptr);
    j["reported_padding_bytes"] = m.reported_padding_bytes ? json(*m.reported_padding_bytes) : json(nullptr);
    return j;
}

inline json to_json(const HardwareSpec& h, const CacheConfig& c) {
    return json{{"name", h.name},
                {"peak_gflops", h.peak_gflops},
                {"dram_bw", h.dram_bw},
                {"flop_per_byte", h.flop_per_byte},
                {"table_flop_per_byte", h.table_flop_per_byte},
                {"pim_bw_multiplier", h.pim_bw_multiplier},
                {"gemm_effective_gflops", h.gemm_effective_gflops},
                {"smc_bw_2agents", h.smc_bw_2agents},
                {"smc_bw_4agents", h.smc_bw_4agents},
                {"nc_read_penalty", h.nc_read_penalty},
                {"nc_gemm_bw", h.nc_gemm_bw},
                {"nc_tile_reuse", h.nc_tile_reuse},
                {"host_overhead_per_token", h.host_overhead_per_token},
                {"attention_time_per_layer", h.attention_time_per_layer},
                {"ddb_copy_agents", h.ddb_copy_agents},
                {"owr_copy_agents", h.owr_copy_agents},
                {"dram_capacity_bytes", h.dram_capacity_bytes},
                {"cache", {{"capacity", c.capacity}, {"line_bytes", c.line_bytes}, {"ways", c.ways}}}};
}

inline json to_json(const AddressMap& m, const PlacementPolicy& p) {
    const auto& g = m.geometry;
    json order = json::array();
    for (const auto& s : m.field_order) order.push_back({{"field", std::string(to_string(s.field))}, {"width", s.width}});
    return json{{"geometry",
                 {{"channels", g.channels},
                  {"ranks", g.ranks_per_channel},
                  {"banks", g.banks_per_rank},
                  {"rows", g.rows_per_bank},
                  {"columns", g.columns_per_row},
                  {"burst_bytes", g.burst_bytes},
                  {"element_bytes", g.element_bytes}}},
                {"field_order", order},
                {"active_banks", p.active_banks},
                {"active_channels", p.active_channels},
                {"input_tile", p.input_tile}};
}

/// Fully resolved configuration; parse_config(to_json(c)) == c.
inline json to_json(const RunConfig& c) {
    return json{{"model", to_json(c.model)},
                {"hw", to_json(c.hw, c.cache)},
                {"map", to_json(c.map, c.placement)},
                {"run",
                 {{"scenario", std::string(to_string(c.scenario))},
                  {"in_len", c.in_len},
                  {"out_len", c.out_len},
                  {"mode", to_string(c.mode)},
                  {"seed", c.seed}}}};
}

}  // namespace sherpa
