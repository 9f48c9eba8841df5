#pragma once

#include <cstdint>
#include <string_view>

namespace bdsde {

/// Counter-based seeding: every component derives its own stream from
/// (master seed, component name, index), so ensembles reproduce under
/// any parallel schedule.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t hash_combine(std::uint64_t seed, std::string_view name, std::uint64_t index);

/// xoshiro256++ with an explicit Box-Muller normal sampler. We avoid
/// std::normal_distribution because its draw sequence is
/// implementation-defined and the serialization contract requires
/// bit-identical output for identical seeds.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    Rng(std::uint64_t master, std::string_view name, std::uint64_t index)
        : Rng(hash_combine(master, name, index)) {}

    std::uint64_t next_u64();
    /// Uniform on (0,1]; never returns 0 so log() is always safe.
    double uniform01();
    double normal();

private:
    std::uint64_t s_[4];
    double cached_ = 0.0;
    bool has_cached_ = false;
};

} // namespace bdsde
