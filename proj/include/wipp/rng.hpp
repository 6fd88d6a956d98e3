#pragma once

#include <cstdint>
#include <random>

namespace wipp {

using RandomEngine = std::mt19937_64;

enum class StreamRole : std::uint64_t {
    Regular = 0,
};

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Identifier of the random stream for draw `draw` on `level`. Every random
/// number of a run derives from (seed, level, draw, role), so results do not
/// depend on how samples are scheduled across workers.
inline std::uint64_t stream_id(std::uint64_t seed, int level, std::uint64_t draw,
                               StreamRole role = StreamRole::Regular)
{
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(level));
    h = splitmix64(h ^ draw);
    h = splitmix64(h ^ static_cast<std::uint64_t>(role));
    return h;
}

inline RandomEngine make_engine(std::uint64_t id)
{
    std::seed_seq seq{static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)};
    return RandomEngine(seq);
}

} // namespace wipp
