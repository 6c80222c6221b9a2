#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "pimsherpa/converter.hpp"
#include "pimsherpa/report.hpp"

namespace {

using namespace sherpa;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitCheckFailed = 2;

std::vector<std::byte> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Config, "cannot open '" + path + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

void write_file(const std::string& path, std::span<const std::byte> data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Config, "cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void write_text(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Config, "cannot write '" + path + "'");
    out << text;
}

/// Config file plus command-line overrides shared by every subcommand.
struct CommonOptions {
    std::string config;
    std::string model;
    std::string map;
    std::string scenario;
    std::string mode;
    std::optional<std::uint64_t> in_len;
    std::optional<std::uint64_t> out_len;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config, "JSON configuration file (comments allowed)");
        app->add_option("--model", model, "model preset: llama3.2-1b, llama3.2-3b, toy-64");
        app->add_option("--map", map, "address map preset: desk, desk-1k, s24plus");
        app->add_option("--scenario", scenario, "WD, FACIL_O, S_DDB, S_OWR, C_GEMM, NC_GEMM");
        app->add_option("--mode", mode, "analytical or calibrated");
        app->add_option("--in-len", in_len, "input sequence length");
        app->add_option("--out-len", out_len, "output sequence length");
        app->add_option("--seed", seed, "seed for randomized work");
    }

    [[nodiscard]] RunConfig resolve() const {
        json j = config.empty() ? json::object() : to_json(load_config(config));
        if (!model.empty()) j["model"] = model;
        if (!map.empty()) j["map"] = map;
        if (!scenario.empty()) j["run"]["scenario"] = scenario;
        if (!mode.empty()) j["run"]["mode"] = mode;
        if (in_len) j["run"]["in_len"] = *in_len;
        if (out_len) j["run"]["out_len"] = *out_len;
        if (seed) j["run"]["seed"] = *seed;
        return parse_config(j);
    }
};

int cmd_run(const CommonOptions& co, const std::string& out, const std::string& csv, const std::string& timeline, unsigned threads) {
    const RunConfig c = co.resolve();
    const json rep = run_report(c, threads);
    write_text(out.empty() ? "-" : out, rep.dump(2) + "\n");
    if (!csv.empty()) write_text(csv, sweep_csv(run_sweep({c}, 1)));
    if (!timeline.empty() && !rep.contains("error")) {
        write_text(timeline, timeline_json(run_prefill(c.scenario, system_of(c), c.in_len).timeline).dump(2) + "\n");
    }
    return rep.contains("error") ? kExitInvalid : kExitOk;
}

int cmd_sweep(const CommonOptions& co, const std::string& axis, const std::vector<std::string>& values, const std::string& out,
              unsigned threads) {
    const auto ax = sweep_axis_from_string(axis);
    if (!ax) throw ConfigError({"sweep.axis: expected in_len, out_len or scenario, got '" + axis + "'"});
    std::vector<std::string> vals = values;
    if (vals.empty() && *ax == SweepAxis::Scenario) {
        for (auto k : kAllScenarios) vals.emplace_back(to_string(k));
    }
    const auto rows = run_sweep(sweep_configs(co.resolve(), *ax, vals), threads);
    write_text(out.empty() ? "-" : out, sweep_csv(rows));
    return kExitOk;
}

int cmd_convert(const CommonOptions& co, const std::string& blob, const std::string& image, const std::string& manifest,
                bool manifest_only) {
    const RunConfig c = co.resolve();
    const auto pad = padded_size(c.model, c.map, c.placement);
    const json man = conversion_manifest(c.model, c.map, c.placement, pad);
    if (!manifest_only) {
        if (blob.empty() || image.empty()) throw ConfigError({"convert: --blob and --image are required unless --manifest-only"});
        const auto host = read_file(blob);
        write_file(image, convert_blob(host, c.model, c.map, c.placement));
    }
    write_text(manifest.empty() ? "-" : manifest, man.dump(2) + "\n");
    return kExitOk;
}

int cmd_verify(const CommonOptions& co, const std::string& blob, const std::string& image) {
    const RunConfig c = co.resolve();
    const auto bad = verify_conversion(read_file(blob), read_file(image), c.model, c.map, c.placement);
    if (!bad.empty()) {
        std::cout << "round-trip FAILED at " << bad << "\n";
        return kExitCheckFailed;
    }
    std::cout << "round-trip OK (" << c.model.name << ")\n";
    return kExitOk;
}

int cmd_make_blob(const CommonOptions& co, const std::string& out) {
    const RunConfig c = co.resolve();
    std::vector<std::byte> blob(expected_blob_bytes(c.model));
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<float> val(-1.0f, 1.0f);
    for (std::size_t off = 0; off < blob.size(); off += 2) store_bf16(blob, off, Bf16::from_float(val(rng)));
    write_file(out, blob);
    return kExitOk;
}

struct GemvCheckOptions {
    std::uint64_t jobs = 1000;
    std::string arithmetic = "exact";
    bool cacheable = false;
    bool twice = false;
    bool corrupt = false;
    std::string report;
    std::string trace;
    std::string dump;
};

int cmd_gemv_check(const CommonOptions& co, const GemvCheckOptions& g) {
    const RunConfig c = co.resolve();
    GemvBatteryOptions o;
    o.jobs = g.jobs;
    o.seed = c.seed;
    if (g.arithmetic != "exact" && g.arithmetic != "bf16") throw ConfigError({"gemv-check.arithmetic: expected exact or bf16"});
    o.arithmetic = g.arithmetic == "exact" ? Arithmetic::Exact : Arithmetic::Bf16;
    o.weight_attribute = g.cacheable ? Attribute::Cacheable : Attribute::NonCacheable;
    o.runs_per_job_twice = g.twice;
    o.corrupt_mac_order = g.corrupt;
    if (!co.config.empty() || !co.map.empty()) {
        o.memory = c.memory();
        o.policy = c.placement;
    }
    const auto r = run_gemv_battery(o);
    const json j = gemv_battery_json(o, r);
    write_text(g.report.empty() ? "-" : g.report, j.dump(2) + "\n");
    if (!g.trace.empty()) write_text(g.trace, trace_ndjson(r.first_trace));
    if (!g.dump.empty()) {
        // Engine state after re-running job 0 alone.
        const auto job = make_battery_job(o, 0);
        PimEngineOptions eo;
        eo.arithmetic = o.arithmetic;
        PimSetup s(o.memory, o.policy, job.w.out_dim, job.w.in_dim, o.weight_attribute, eo);
        s.load_weights(job.w);
        s.run(job.x);
        write_text(g.dump, engine_state_json(s.engine, o.memory.map.geometry).dump(2) + "\n");
    }
    if (!r.passed()) {
        std::cerr << "gemv-check FAILED: " << r.mismatched_jobs << " mismatched jobs, " << r.integrity_failures
                  << " trigger-integrity failures\n";
        if (r.first_failure) {
            std::cerr << "first mismatch: job " << r.first_failure->job << " (job seed " << r.first_failure->job_seed << "), m = "
                      << r.first_failure->m << "\n";
        }
        return kExitCheckFailed;
    }
    return kExitOk;
}

int cmd_table(const CommonOptions& co) {
    std::cout << overhead_table_text(co.resolve().hw);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PIM-aware weight layout and inference simulator"};
    app.require_subcommand(1);
    CommonOptions co;

    auto* run = app.add_subcommand("run", "prefill/decode report for one configuration");
    co.attach(run);
    std::string run_out, run_csv, run_timeline;
    unsigned threads = 1;
    run->add_option("-o,--out", run_out, "report JSON path (default stdout)");
    run->add_option("--csv", run_csv, "also write the CSV row");
    run->add_option("--timeline", run_timeline, "prefill timeline JSON path");
    run->add_option("-j,--threads", threads, "internal parallelism")->check(CLI::PositiveNumber);

    auto* sweep = app.add_subcommand("sweep", "CSV over one axis");
    co.attach(sweep);
    std::string axis, sweep_out;
    std::vector<std::string> values;
    sweep->add_option("--axis", axis, "in_len, out_len or scenario")->required();
    sweep->add_option("--values", values, "axis values (default for scenario: all six)")->delimiter(',');
    sweep->add_option("-o,--out", sweep_out, "CSV path (default stdout)");
    sweep->add_option("-j,--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    auto* convert = app.add_subcommand("convert", "host blob to PIM-aware image plus manifest");
    co.attach(convert);
    std::string blob, image, manifest;
    bool manifest_only = false;
    convert->add_option("--blob", blob, "host-friendly weight blob");
    convert->add_option("--image", image, "output image path");
    convert->add_option("--manifest", manifest, "manifest JSON path (default stdout)");
    convert->add_flag("--manifest-only", manifest_only, "only compute the layout");

    auto* verify = app.add_subcommand("verify", "check that an image unswizzles back to its blob");
    co.attach(verify);
    verify->add_option("--blob", blob)->required();
    verify->add_option("--image", image)->required();

    auto* make_blob = app.add_subcommand("make-blob", "seeded random host blob for a model");
    co.attach(make_blob);
    std::string blob_out;
    make_blob->add_option("-o,--out", blob_out)->required();

    auto* gemv = app.add_subcommand("gemv-check", "seeded GEMV battery against the oracle");
    co.attach(gemv);
    GemvCheckOptions g;
    gemv->add_option("--jobs", g.jobs);
    gemv->add_option("--arithmetic", g.arithmetic, "exact or bf16");
    gemv->add_flag("--cacheable", g.cacheable, "place weights in a cacheable region");
    gemv->add_flag("--twice", g.twice, "check the second of two back-to-back runs");
    gemv->add_flag("--corrupt-mac-order", g.corrupt, "test hook: feed MACs the wrong input");
    gemv->add_option("-o,--out", g.report, "report JSON path (default stdout)");
    gemv->add_option("--trace", g.trace, "NDJSON command trace of job 0");
    gemv->add_option("--dump-engine", g.dump, "engine state JSON after job 0");

    auto* table = app.add_subcommand("table", "rearrangement overhead table in t-units");
    co.attach(table);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInvalid;
    }

    try {
        if (*run) return cmd_run(co, run_out, run_csv, run_timeline, threads);
        if (*sweep) return cmd_sweep(co, axis, values, sweep_out, threads);
        if (*convert) return cmd_convert(co, blob, image, manifest, manifest_only);
        if (*verify) return cmd_verify(co, blob, image);
        if (*make_blob) return cmd_make_blob(co, blob_out);
        if (*gemv) return cmd_gemv_check(co, g);
        if (*table) return cmd_table(co);
    } catch (const ConfigError& e) {
        for (const auto& d : e.diagnostics()) std::cerr << "error: " << d << "\n";
        return kExitInvalid;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
    return kExitInvalid;
}
