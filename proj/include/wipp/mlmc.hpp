#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "wipp/error.hpp"

namespace wipp {

/// One coupled evaluation Y_l = Q_l - Q_{l-1} (Y_0 = Q_0). For antithetic
/// sampling y, q and q_coarse are pair averages and the partners are kept.
struct SampleResult {
    bool ok = true;
    std::string failure;
    double y = 0.0;
    double q = 0.0;
    double q_coarse = 0.0;
    bool paired = false;
    double y_plus = 0.0;
    double y_minus = 0.0;
    double q_plus = 0.0;
    double q_minus = 0.0;
    int solver_iterations = 0;
    double seconds = 0.0;
};

/// Anything that produces coupled level samples. Samples [first, first+count)
/// must depend only on (level, index); kBlock is the natural batch size.
template <class S>
concept LevelSampler = requires(const S& s, int level, std::uint64_t first, std::uint64_t count,
                                bool fine_only) {
    { s.sample_block(level, first, count, fine_only) } -> std::same_as<std::vector<SampleResult>>;
    { s.standard_cost(level) } -> std::convertible_to<double>;
    { s.max_level() } -> std::convertible_to<int>;
    { S::kBlock } -> std::convertible_to<std::uint64_t>;
};

/// Welford running mean and sum of squared deviations.
struct Moments {
    std::uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x)
    {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }

    /// Unbiased sample variance; zero below two samples.
    double variance() const { return n > 1 ? std::max(0.0, m2 / static_cast<double>(n - 1)) : 0.0; }
};

/// Running co-moment of two paired series.
struct CoMoments {
    Moments a;
    Moments b;
    double c = 0.0;

    void add(double x, double y)
    {
        const double da = x - a.mean;
        a.add(x);
        b.add(y);
        c += da * (y - b.mean);
    }

    double covariance() const { return a.n > 1 ? c / static_cast<double>(a.n - 1) : 0.0; }
};

struct LevelStats {
    int level = 0;
    std::uint64_t attempts = 0;
    std::uint64_t rejects = 0;
    /// Next unused sample index on this level.
    std::uint64_t next_index = 0;
    Moments y;
    Moments q;
    Moments q_coarse;
    /// Antithetic partners (Y+, Y-) and (Q+, Q-), when sampled in pairs.
    CoMoments y_pair;
    CoMoments q_pair;
    double cost_per_sample = 0.0;
    double seconds = 0.0;
    std::uint64_t solver_iterations = 0;
    std::vector<double> y_records;
    std::vector<double> q_records;
    std::string last_failure;

    std::uint64_t n() const { return y.n; }
    double cost() const { return static_cast<double>(n()) * cost_per_sample; }
    double reject_rate() const
    {
        return attempts > 0 ? static_cast<double>(rejects) / static_cast<double>(attempts) : 0.0;
    }
};

/// Least-squares decay rates of |E[Y_l]| and V[Y_l] against M_l (and h_l).
struct Rates {
    double alpha = 0.0;
    double beta = 0.0;
    bool has_alpha = false;
    bool has_beta = false;
    /// Per-h slopes: with M = N^2 in 2-D, h-slope = 2 * M-slope.
    double alpha_h() const { return 2.0 * alpha; }
    double beta_h() const { return 2.0 * beta; }
};

struct RatePoint {
    double m = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

namespace detail {

inline double ls_slope(std::span<const double> x, std::span<const double> y)
{
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

} // namespace detail

/// alpha = -slope of log|E[Y]| vs log M, beta = -slope of log V[Y] vs log M.
/// Points with a zero mean (or variance) are skipped for that rate.
inline Rates fit_rates(std::span<const RatePoint> points)
{
    std::vector<double> xm, ym, xv, yv;
    for (const auto& p : points) {
        require(p.m > 0.0, ErrorKind::InvalidArgument, "M must be > 0");
        if (std::abs(p.mean) > 0.0 && std::isfinite(p.mean)) {
            xm.push_back(std::log(p.m));
            ym.push_back(std::log(std::abs(p.mean)));
        }
        if (p.variance > 0.0 && std::isfinite(p.variance)) {
            xv.push_back(std::log(p.m));
            yv.push_back(std::log(p.variance));
        }
    }
    require(xm.size() >= 2 || xv.size() >= 2, ErrorKind::InvalidArgument,
            "rate fit needs at least 2 usable levels");
    Rates r;
    if (xm.size() >= 2) {
        r.alpha = -detail::ls_slope(xm, ym);
        r.has_alpha = true;
    }
    if (xv.size() >= 2) {
        r.beta = -detail::ls_slope(xv, yv);
        r.has_beta = true;
    }
    return r;
}

/// Rates from levels 1..L of a level table (level 0 holds Q_0, not a correction).
inline Rates fit_rates(std::span<const LevelStats> levels, std::span<const double> m)
{
    std::vector<RatePoint> pts;
    for (std::size_t l = 1; l < levels.size(); ++l)
        pts.push_back({m[l], levels[l].y.mean, levels[l].y.variance()});
    return fit_rates(pts);
}

/// N_l = ceil((2/eps^2) sqrt(V_l/C_l) sum_k sqrt(V_k C_k)), so that sum V_l/N_l <= eps^2/2.
inline std::vector<std::uint64_t> optimal_allocation(std::span<const double> v, std::span<const double> c,
                                                     double eps)
{
    require(eps > 0.0, ErrorKind::Range, "eps must be > 0");
    require(v.size() == c.size() && !v.empty(), ErrorKind::InvalidArgument,
            "variance and cost lists must be non-empty and of equal length");
    double sum = 0.0;
    for (std::size_t l = 0; l < v.size(); ++l) {
        require(v[l] >= 0.0 && c[l] > 0.0, ErrorKind::Range, "need V >= 0 and C > 0");
        sum += std::sqrt(v[l] * c[l]);
    }
    std::vector<std::uint64_t> n(v.size());
    for (std::size_t l = 0; l < v.size(); ++l)
        n[l] = static_cast<std::uint64_t>(std::ceil(2.0 / (eps * eps) * std::sqrt(v[l] / c[l]) * sum));
    return n;
}

/// Plain Monte Carlo sample count for variance eps^2/2: max(2, ceil(2V/eps^2)).
inline std::uint64_t mc_sample_count(double variance, double eps)
{
    require(eps > 0.0, ErrorKind::Range, "eps must be > 0");
    require(variance >= 0.0, ErrorKind::Range, "variance must be >= 0");
    return std::max<std::uint64_t>(2, static_cast<std::uint64_t>(std::ceil(2.0 * variance / (eps * eps))));
}

enum class Estimator { MC, MLMC };

struct CostModel {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 1.0;
};

struct CostExponent {
    double exponent = 0.0;
    /// True in the beta == gamma regime, where the cost carries a (log eps)^2 factor.
    bool log_squared = false;
};

/// Exponent e of the cost C eps^e to reach RMSE eps.
/// MC: -2 - gamma/alpha. MLMC: -2 (beta > gamma), -2 with log^2 (beta == gamma),
/// -2 - (gamma - beta)/alpha (beta < gamma).
inline CostExponent predicted_cost_exponent(const CostModel& m, Estimator e)
{
    require(m.alpha > 0.0 && m.beta > 0.0 && m.gamma > 0.0, ErrorKind::Range,
            "alpha, beta, gamma must be > 0");
    require(m.alpha >= 0.5 * std::min(m.beta, m.gamma), ErrorKind::Range,
            "cost theorem needs alpha >= min(beta, gamma)/2");
    if (e == Estimator::MC) return {-2.0 - m.gamma / m.alpha, false};
    if (m.beta > m.gamma) return {-2.0, false};
    if (m.beta == m.gamma) return {-2.0, true};
    return {-2.0 - (m.gamma - m.beta) / m.alpha, false};
}

struct MlmcOptions {
    double eps = 1e-2;
    std::uint64_t n_init = 100;
    /// Finest level of the initial hierarchy; the bias test needs L >= 1.
    int min_level = 2;
    int max_level = 8;
    /// Fixed per-level decay rate of |E[Y_l]| (h-rate); empty means fitted.
    std::optional<double> bias_rate;
    double bias_rate_floor = 0.5;
    double max_reject_rate = 0.05;
    int workers = 1;
    bool keep_records = true;

    void validate() const
    {
        require(eps > 0.0 && std::isfinite(eps), ErrorKind::Range, "eps must be > 0");
        require(n_init >= 2, ErrorKind::Range, "n_init must be >= 2");
        require(min_level >= 1, ErrorKind::Range, "min_level must be >= 1");
        require(max_level >= min_level, ErrorKind::Range, "max_level must be >= min_level");
        require(workers >= 1, ErrorKind::Range, "workers must be >= 1");
        require(!bias_rate || *bias_rate > 0.0, ErrorKind::Range, "bias_rate must be > 0");
        require(max_reject_rate >= 0.0 && max_reject_rate < 1.0, ErrorKind::Range,
                "max_reject_rate must lie in [0, 1)");
    }
};

struct MlmcState {
    Estimator estimator = Estimator::MLMC;
    double eps = 0.0;
    int finest_level = 0;
    std::vector<LevelStats> levels;
    double estimate = 0.0;
    /// sum_l V[Y_l] / N_l.
    double variance = 0.0;
    double bias_estimate = 0.0;
    double bias_rate_used = 0.0;
    Rates rates;
    bool converged = false;
    std::string failure;
    /// sum_l N_l C_l over accepted samples, and including rejected attempts.
    double cost = 0.0;
    double work = 0.0;
    double wall_seconds = 0.0;
};

/// Draws and accumulates samples of one sampler. Results depend only on the
/// sample indices, never on the worker count: blocks are evaluated in
/// parallel and folded into the accumulators in index order.
template <LevelSampler S>
class SampleRunner {
public:
    SampleRunner(const S& sampler, int workers, double max_reject_rate, bool keep_records)
        : sampler_(sampler), workers_(workers), max_reject_rate_(max_reject_rate), keep_(keep_records)
    {
    }

    /// Adds `count` accepted samples to `stats`, replacing rejected ones.
    void extend(LevelStats& stats, std::uint64_t count, bool fine_only = false) const
    {
        stats.cost_per_sample = sampler_.standard_cost(stats.level);
        const std::uint64_t target = stats.n() + count;
        while (stats.n() < target) {
            const std::uint64_t deficit = target - stats.n();
            const std::uint64_t blk = S::kBlock;
            const std::uint64_t todo = (deficit + blk - 1) / blk * blk;
            const auto results = run(stats.level, stats.next_index, todo, fine_only);
            stats.next_index += todo;
            for (const auto& r : results) fold(stats, r);
            if (stats.attempts >= 20 && stats.reject_rate() > max_reject_rate_) {
                fail(ErrorKind::RejectionRate,
                     "rejection rate " + std::to_string(stats.reject_rate()) + " on level " +
                         std::to_string(stats.level) + " exceeds " + std::to_string(max_reject_rate_) +
                         "; last failure: " + stats.last_failure);
            }
        }
    }

private:
    std::vector<SampleResult> run(int level, std::uint64_t first, std::uint64_t count, bool fine_only) const
    {
        const std::uint64_t blk = S::kBlock;
        const std::uint64_t blocks = count / blk;
        if (workers_ <= 1 || blocks <= 1) return sampler_.sample_block(level, first, count, fine_only);

        std::vector<std::vector<SampleResult>> parts(blocks);
        std::atomic<std::uint64_t> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        auto work = [&] {
            for (;;) {
                const std::uint64_t b = next.fetch_add(1);
                if (b >= blocks) return;
                try {
                    parts[b] = sampler_.sample_block(level, first + b * blk, blk, fine_only);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(blocks);
                    return;
                }
            }
        };
        const int n = static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(workers_), blocks));
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
        if (error) std::rethrow_exception(error);
        std::vector<SampleResult> out;
        out.reserve(count);
        for (auto& p : parts)
            for (auto& r : p) out.push_back(std::move(r));
        return out;
    }

    void fold(LevelStats& s, const SampleResult& r) const
    {
        ++s.attempts;
        s.seconds += r.seconds;
        s.solver_iterations += static_cast<std::uint64_t>(r.solver_iterations);
        if (!r.ok) {
            ++s.rejects;
            s.last_failure = r.failure;
            return;
        }
        s.y.add(r.y);
        s.q.add(r.q);
        if (s.level > 0) s.q_coarse.add(r.q_coarse);
        if (r.paired) {
            s.y_pair.add(r.y_plus, r.y_minus);
            s.q_pair.add(r.q_plus, r.q_minus);
        }
        if (keep_) {
            s.y_records.push_back(r.y);
            s.q_records.push_back(r.q);
        }
    }

    const S& sampler_;
    int workers_;
    double max_reject_rate_;
    bool keep_;
};

namespace detail {

inline void finalize(MlmcState& st)
{
    st.estimate = 0.0;
    st.variance = 0.0;
    st.cost = 0.0;
    st.work = 0.0;
    for (const auto& l : st.levels) {
        st.estimate += l.y.mean;
        if (l.n() > 0) st.variance += l.y.variance() / static_cast<double>(l.n());
        st.cost += l.cost();
        st.work += static_cast<double>(l.attempts) * l.cost_per_sample;
    }
}

} // namespace detail

/// Fixed-size level table: `n` accepted samples on each of `levels`.
template <LevelSampler S>
std::vector<LevelStats> level_table(const S& sampler, std::span<const int> levels, std::uint64_t n,
                                    int workers = 1, double max_reject_rate = 0.05)
{
    SampleRunner<S> runner(sampler, workers, max_reject_rate, true);
    std::vector<LevelStats> out;
    for (int l : levels) {
        LevelStats s;
        s.level = l;
        runner.extend(s, n);
        out.push_back(std::move(s));
    }
    return out;
}

/// Adaptive MLMC: warm up n_init samples per level, allocate N_l optimally,
/// add levels until |E[Y_L]| / (2^a - 1) <= eps / sqrt(2).
/// Hitting max_level first returns an unconverged state with the diagnostic in `failure`.
template <LevelSampler S>
MlmcState run_mlmc(const S& sampler, const MlmcOptions& opts)
{
    opts.validate();
    require(opts.max_level <= sampler.max_level(), ErrorKind::LevelCap,
            "max_level exceeds the sampler's maximum level");
    const auto t0 = std::chrono::steady_clock::now();
    SampleRunner<S> runner(sampler, opts.workers, opts.max_reject_rate, opts.keep_records);
    MlmcState st;
    st.eps = opts.eps;
    int L = opts.min_level;
    std::vector<std::uint64_t> add(static_cast<std::size_t>(L) + 1, opts.n_init);
    for (int l = 0; l <= L; ++l) {
        LevelStats s;
        s.level = l;
        st.levels.push_back(std::move(s));
    }
    const double bias_target = opts.eps / std::sqrt(2.0);

    for (;;) {
        for (int l = 0; l <= L; ++l) {
            if (add[static_cast<std::size_t>(l)] > 0)
                runner.extend(st.levels[static_cast<std::size_t>(l)], add[static_cast<std::size_t>(l)]);
        }
        std::vector<double> v, c;
        for (const auto& s : st.levels) {
            v.push_back(s.y.variance());
            c.push_back(s.cost_per_sample);
        }
        const auto target = optimal_allocation(v, c, opts.eps);
        bool done = true;
        for (int l = 0; l <= L; ++l) {
            const auto have = st.levels[static_cast<std::size_t>(l)].n();
            const auto want = target[static_cast<std::size_t>(l)];
            add[static_cast<std::size_t>(l)] = want > have ? want - have : 0;
            if (add[static_cast<std::size_t>(l)] > 0) done = false;
        }
        if (!done) continue;

        std::vector<RatePoint> pts;
        for (int l = 1; l <= L; ++l) {
            const auto& s = st.levels[static_cast<std::size_t>(l)];
            pts.push_back({sampler.standard_cost(l) / sampler.standard_cost(0), s.y.mean, s.y.variance()});
        }
        double rate = opts.bias_rate.value_or(0.0);
        if (pts.size() >= 2) {
            try {
                st.rates = fit_rates(pts);
            } catch (const Error&) {
                st.rates = Rates{};
            }
        }
        if (!opts.bias_rate) rate = st.rates.has_alpha ? st.rates.alpha_h() : opts.bias_rate_floor;
        rate = std::max(rate, opts.bias_rate_floor);
        st.bias_rate_used = rate;
        st.bias_estimate = std::abs(st.levels.back().y.mean) / (std::pow(2.0, rate) - 1.0);
        if (st.bias_estimate <= bias_target) {
            st.converged = true;
            break;
        }
        if (L >= opts.max_level) {
            st.converged = false;
            st.failure = "level cap " + std::to_string(opts.max_level) +
                         " reached with bias estimate " + std::to_string(st.bias_estimate) +
                         " above eps/sqrt(2) = " + std::to_string(bias_target);
            break;
        }
        ++L;
        LevelStats s;
        s.level = L;
        st.levels.push_back(std::move(s));
        add.assign(static_cast<std::size_t>(L) + 1, 0);
        add[static_cast<std::size_t>(L)] = opts.n_init;
    }
    st.finest_level = L;
    detail::finalize(st);
    st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return st;
}

struct McOptions {
    double eps = 1e-2;
    int level = 0;
    std::uint64_t n_init = 100;
    double max_reject_rate = 0.05;
    int workers = 1;
    bool keep_records = true;
};

/// Plain Monte Carlo on one level: pilot of n_init samples, then
/// N = max(2, ceil(2 V[Q_L] / eps^2)) samples in total.
template <LevelSampler S>
MlmcState run_mc(const S& sampler, const McOptions& opts)
{
    require(opts.eps > 0.0, ErrorKind::Range, "eps must be > 0");
    require(opts.level >= 0 && opts.level <= sampler.max_level(), ErrorKind::LevelCap,
            "MC level outside the sampler's range");
    require(opts.n_init >= 2, ErrorKind::Range, "n_init must be >= 2");
    const auto t0 = std::chrono::steady_clock::now();
    SampleRunner<S> runner(sampler, opts.workers, opts.max_reject_rate, opts.keep_records);
    MlmcState st;
    st.estimator = Estimator::MC;
    st.eps = opts.eps;
    st.finest_level = opts.level;
    LevelStats s;
    s.level = opts.level;
    runner.extend(s, opts.n_init, true);
    const std::uint64_t need = mc_sample_count(s.q.variance(), opts.eps);
    if (need > s.n()) runner.extend(s, need - s.n(), true);
    st.estimate = s.q.mean;
    st.variance = s.q.variance() / static_cast<double>(s.n());
    st.cost = static_cast<double>(need) * s.cost_per_sample;
    st.work = static_cast<double>(s.attempts) * s.cost_per_sample;
    st.converged = true;
    st.levels.push_back(std::move(s));
    st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return st;
}

} // namespace wipp
