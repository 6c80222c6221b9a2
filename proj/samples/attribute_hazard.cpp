// Why PIM weights must be non-cacheable: the second GEMV over cached weights
// never reaches DRAM, so the PIM blocks never see their MAC triggers.

#include <cstdio>
#include <random>

#include "pimsherpa/gemv_check.hpp"

using namespace sherpa;

namespace {

void show(const char* label, const GemvResult& r, const std::vector<double>& want) {
    std::printf("%-22s issued %5llu  applied %5llu  deficit %5llu  surplus %5llu  %-26s %s\n", label,
                static_cast<unsigned long long>(r.issued.mac_reads), static_cast<unsigned long long>(r.applied.mac_reads),
                static_cast<unsigned long long>(r.integrity.deficit), static_cast<unsigned long long>(r.integrity.surplus),
                to_string(r.integrity.status), r.output == want ? "correct" : "WRONG");
}

}  // namespace

int main() {
    MemoryConfig mc;
    mc.map = desk_1k_map();
    const std::uint64_t m = 256, k = 256;
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> v(-8, 8);
    WeightMatrix w(m, k);
    for (auto& e : w.data) e = Bf16::from_float(static_cast<float>(v(rng)));
    std::vector<Bf16> x(k);
    for (auto& e : x) e = Bf16::from_float(static_cast<float>(v(rng)));
    const auto want = oracle_gemv(w, x);

    PimEngineOptions eo;
    eo.arithmetic = Arithmetic::Exact;
    bool ok = true;
    for (auto attr : {Attribute::NonCacheable, Attribute::Cacheable}) {
        PimSetup s(mc, PlacementPolicy{}, m, k, attr, eo);
        s.load_weights(w);
        std::printf("weights %s\n", to_string(attr));
        const auto first = s.run(x);
        show("  first gemv", first, want);
        const auto second = s.run(x);
        show("  second gemv", second, want);
        ok = ok && (attr == Attribute::NonCacheable ? second.integrity.ok() : !second.integrity.ok());
    }
    return ok ? 0 : 1;
}
