// Double-buffered prefill of the 1B model at a few prompt lengths.
// Prints, per length, how much of the copy stream the GEMMs hide and
// the first few barrier intervals of the shortest run.

#include <cstdio>

#include "pimsherpa/runtime.hpp"

using namespace sherpa;

int main() {
    PlacementPolicy pol;
    pol.active_channels = 4;
    const System sys = make_system(presets::llama32_1b(), presets::s24plus(), s24plus_map(), pol);

    std::printf("%6s %10s %10s %10s %8s %9s\n", "in_len", "facil_s", "ddb_s", "owr_s", "gap%", "critical");
    for (std::uint64_t sl : {32, 64, 96, 128, 160, 192}) {
        const auto f = run_prefill(ScenarioKind::FACIL_O, sys, sl);
        const auto d = run_prefill(ScenarioKind::S_DDB, sys, sl);
        const auto o = run_prefill(ScenarioKind::S_OWR, sys, sl);
        int critical = 0;
        for (const auto& s : d.steps) critical += s.copy_critical() ? 1 : 0;
        std::printf("%6llu %10.4f %10.4f %10.4f %8.2f %5d/%zu\n", static_cast<unsigned long long>(sl), f.ttft_seconds(),
                    d.ttft_seconds(), o.ttft_seconds(), 100.0 * (d.ttft_seconds() / f.ttft_seconds() - 1.0), critical, d.steps.size());
        if (o.ttft != f.ttft + o.smc_total) return 1;
    }

    // first layer of the SL 32 run
    const auto d = run_prefill(ScenarioKind::S_DDB, sys, 32);
    std::printf("\n%-8s %-8s %-12s %12s %12s %4s\n", "agent", "role", "tag", "start_ms", "end_ms", "buf");
    int shown = 0;
    for (const auto& s : d.timeline.segments) {
        if (s.start > to_picos(0.5)) break;
        std::printf("%-8s %-8s %-12s %12.3f %12.3f %4d\n", s.agent.c_str(), std::string(to_string(s.role)).c_str(), s.tag.c_str(),
                    to_seconds(s.start) * 1e3, to_seconds(s.end) * 1e3, s.buffer);
        if (++shown == 20) break;
    }
    return 0;
}
