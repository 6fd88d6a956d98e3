#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "wipp/mlmc.hpp"
#include "wipp/rng.hpp"

namespace wipp::testing {

/// Q_l = integral over [0, 1] of exp(sigma * W * x), W ~ N(0, 1), by the
/// midpoint rule with 2 * 2^l intervals. Fine and coarse share W.
struct LognormalIntegrand {
    double sigma = 0.5;
    std::uint64_t seed = 1;
    int levels = 12;
    /// Use the same W for sample i on every level.
    bool common_draws = false;

    static constexpr std::uint64_t kBlock = 1;

    static double quadrature(double s, int intervals)
    {
        const double h = 1.0 / intervals;
        double sum = 0.0;
        for (int k = 0; k < intervals; ++k) sum += std::exp(s * (k + 0.5) * h);
        return sum * h;
    }

    double exact_mean() const
    {
        double term = 1.0;
        double sum = 0.0;
        const double a = 0.5 * sigma * sigma;
        for (int k = 0; k < 60; ++k) {
            sum += term / (2 * k + 1);
            term *= a / (k + 1);
        }
        return sum;
    }

    std::vector<SampleResult> sample_block(int level, std::uint64_t first, std::uint64_t count,
                                           bool fine_only) const
    {
        std::vector<SampleResult> out;
        for (std::uint64_t i = first; i < first + count; ++i) {
            auto eng = make_engine(stream_id(seed, common_draws ? 0 : level, i));
            std::normal_distribution<double> normal;
            const double w = normal(eng);
            SampleResult r;
            r.q = quadrature(sigma * w, 2 << level);
            if (level > 0 && !fine_only) {
                r.q_coarse = quadrature(sigma * w, 1 << level);
                r.y = r.q - r.q_coarse;
            } else {
                r.y = r.q;
            }
            out.push_back(r);
        }
        return out;
    }

    /// Scaled as (cells)^2 so the M-to-h rate mapping matches the 2-D model.
    double standard_cost(int level) const
    {
        const double n = 2 << level;
        return n * n;
    }
    int max_level() const { return levels; }
};

/// Noise-free stub: Q_l = value(l) for every sample.
template <class F>
struct DeterministicSampler {
    F value;
    int levels = 20;
    static constexpr std::uint64_t kBlock = 1;

    std::vector<SampleResult> sample_block(int level, std::uint64_t, std::uint64_t count, bool fine_only) const
    {
        std::vector<SampleResult> out(count);
        for (auto& r : out) {
            r.q = value(level);
            r.q_coarse = level > 0 && !fine_only ? value(level - 1) : 0.0;
            r.y = level > 0 && !fine_only ? r.q - r.q_coarse : r.q;
        }
        return out;
    }
    double standard_cost(int level) const { return std::pow(4.0, level); }
    int max_level() const { return levels; }
};

template <class F>
DeterministicSampler<F> deterministic(F f)
{
    return DeterministicSampler<F>{f};
}

inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("wipp_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace wipp::testing
