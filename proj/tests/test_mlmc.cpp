#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "support.hpp"
#include "wipp/mlmc.hpp"

using namespace wipp;
using namespace wipp::testing;
using Catch::Approx;

namespace {

/// Gaussian noise around zero with a fraction of failed samples.
struct FlakySampler {
    double fail_rate = 0.0;
    static constexpr std::uint64_t kBlock = 1;

    std::vector<SampleResult> sample_block(int level, std::uint64_t first, std::uint64_t count, bool) const
    {
        std::vector<SampleResult> out;
        for (std::uint64_t i = first; i < first + count; ++i) {
            auto eng = make_engine(stream_id(4, level, i));
            std::uniform_real_distribution<double> u;
            SampleResult r;
            r.q = r.y = u(eng);
            if (u(eng) < fail_rate) {
                r.ok = false;
                r.failure = "stagnated";
            }
            out.push_back(r);
        }
        return out;
    }
    double standard_cost(int level) const { return std::pow(4.0, level); }
    int max_level() const { return 6; }
};

bool same_state(const MlmcState& a, const MlmcState& b)
{
    if (a.levels.size() != b.levels.size() || a.estimate != b.estimate || a.variance != b.variance ||
        a.finest_level != b.finest_level)
        return false;
    for (std::size_t l = 0; l < a.levels.size(); ++l) {
        if (a.levels[l].n() != b.levels[l].n() || a.levels[l].y_records != b.levels[l].y_records) return false;
    }
    return true;
}

} // namespace

TEST_CASE("optimal allocation examples")
{
    const std::vector<double> v{4.0, 1.0}, c{1.0, 4.0};
    const auto n = optimal_allocation(v, c, 0.05);
    CHECK(static_cast<double>(n[0]) / static_cast<double>(n[1]) == Approx(4.0).epsilon(1e-3));

    const std::vector<double> v1{3.0}, c1{7.0};
    CHECK(optimal_allocation(v1, c1, 0.1)[0] == static_cast<std::uint64_t>(std::ceil(2.0 * 3.0 / 0.01)));

    const std::vector<double> v2{1.0, 1.0}, c2{1.0, 4.0};
    const auto n2 = optimal_allocation(v2, c2, 0.1);
    CHECK(n2[0] == 600);
    CHECK(n2[1] == 300);

    CHECK_THROWS_AS(optimal_allocation(v2, c2, 0.0), Error);
    const std::vector<double> bad{1.0, 1.0}, zero{1.0, 0.0};
    CHECK_THROWS_AS(optimal_allocation(bad, zero, 0.1), Error);
}

TEST_CASE("allocation meets the variance target and is cost-optimal")
{
    const std::vector<double> v{2.0, 0.7, 0.2, 0.05}, c{1.0, 4.0, 16.0, 64.0};
    const double eps = 0.02;
    const auto n = optimal_allocation(v, c, eps);
    double var = 0.0;
    for (std::size_t l = 0; l < v.size(); ++l) var += v[l] / static_cast<double>(n[l]);
    CHECK(var <= eps * eps / 2.0 * (1.0 + 1e-12));

    // Continuous optimum: moving cost between levels never lowers the variance.
    double sum = 0.0;
    for (std::size_t l = 0; l < v.size(); ++l) sum += std::sqrt(v[l] * c[l]);
    std::vector<double> star(v.size());
    for (std::size_t l = 0; l < v.size(); ++l) star[l] = 2.0 / (eps * eps) * std::sqrt(v[l] / c[l]) * sum;
    auto model_var = [&](const std::vector<double>& nn) {
        double s = 0.0;
        for (std::size_t l = 0; l < v.size(); ++l) s += v[l] / nn[l];
        return s;
    };
    const double base = model_var(star);
    CHECK(base == Approx(eps * eps / 2.0).epsilon(1e-12));
    for (std::size_t a = 0; a < v.size(); ++a)
        for (std::size_t b = 0; b < v.size(); ++b) {
            if (a == b) continue;
            auto moved = star;
            moved[a] += 1.0;
            moved[b] -= c[a] / c[b];
            CHECK(model_var(moved) >= base * (1.0 - 1e-12));
        }
    for (std::size_t l = 0; l < v.size(); ++l) CHECK(n[l] == static_cast<std::uint64_t>(std::ceil(star[l])));
}

TEST_CASE("Monte Carlo sample count")
{
    CHECK(mc_sample_count(1.0, 0.1) == 200);
    CHECK(mc_sample_count(0.0, 0.1) == 2);
    const auto stub = deterministic([](int) { return 7.0; });
    McOptions o;
    o.eps = 1e-3;
    o.level = 2;
    const auto st = run_mc(stub, o);
    CHECK(st.estimate == 7.0);
    CHECK(st.variance == 0.0);
    CHECK(st.cost == 2.0 * stub.standard_cost(2));
}

TEST_CASE("rate fits")
{
    std::vector<RatePoint> pts;
    for (int l = 0; l < 6; ++l) {
        const double m = std::pow(4.0, l);
        pts.push_back({m, std::pow(m, -0.65), std::pow(m, -0.75)});
    }
    const Rates r = fit_rates(pts);
    CHECK(r.has_alpha);
    CHECK(r.has_beta);
    CHECK(std::abs(r.beta - 0.75) <= 1e-12);
    CHECK(std::abs(r.alpha - 0.65) <= 1e-12);
    CHECK(r.beta_h() == Approx(1.5));

    std::mt19937_64 eng(12);
    std::normal_distribution<double> nd(0.0, 0.01);
    for (auto& p : pts) p.variance *= 1.0 + nd(eng);
    CHECK(std::abs(fit_rates(pts).beta - 0.75) <= 0.05);

    const std::vector<RatePoint> one{{4.0, 1.0, 1.0}};
    CHECK_THROWS_AS(fit_rates(one), Error);
}

TEST_CASE("predicted cost exponents")
{
    const auto mc = predicted_cost_exponent({0.65, 0.75, 1.0}, Estimator::MC);
    const auto ml = predicted_cost_exponent({0.65, 0.75, 1.0}, Estimator::MLMC);
    CHECK(std::round(mc.exponent * 1000.0) / 1000.0 == Approx(-3.538).margin(1e-12));
    CHECK(std::round(ml.exponent * 1000.0) / 1000.0 == Approx(-2.385).margin(1e-12));
    CHECK_FALSE(ml.log_squared);

    const auto mid = predicted_cost_exponent({0.8, 1.0, 1.0}, Estimator::MLMC);
    CHECK(mid.exponent == -2.0);
    CHECK(mid.log_squared);
    const auto fast = predicted_cost_exponent({1.0, 2.0, 1.0}, Estimator::MLMC);
    CHECK(fast.exponent == -2.0);
    CHECK_FALSE(fast.log_squared);
    CHECK_THROWS_AS(predicted_cost_exponent({0.1, 0.75, 1.0}, Estimator::MLMC), Error);
}

TEST_CASE("deterministic stub converges on the first hierarchy")
{
    const auto stub = deterministic([](int) { return 7.0; });
    MlmcOptions o;
    o.min_level = 1;
    o.eps = 1e-3;
    const auto st = run_mlmc(stub, o);
    CHECK(st.converged);
    CHECK(st.finest_level == 1);
    CHECK(st.estimate == 7.0);
    CHECK(st.variance == 0.0);
    CHECK(st.levels[0].n() == o.n_init);
}

TEST_CASE("bias control alone drives the finest level")
{
    const auto stub = deterministic([](int l) { return 1.0 - std::pow(2.0, -l); });
    for (double eps : {0.1, 0.01, 1e-3}) {
        int expected = 1;
        while (std::pow(2.0, -expected) / (std::pow(2.0, 1.0) - 1.0) > eps / std::sqrt(2.0)) ++expected;
        MlmcOptions o;
        o.eps = eps;
        o.min_level = 1;
        o.max_level = 15;
        o.bias_rate = 1.0;
        const auto fixed = run_mlmc(stub, o);
        CHECK(fixed.converged);
        CHECK(fixed.finest_level == expected);
        CHECK(fixed.estimate == Approx(1.0 - std::pow(2.0, -expected)).epsilon(1e-14));

        // Fitted: E[Y_l] = 2^-l = M_l^-1/2, so the h-rate is 1 as well.
        o.bias_rate.reset();
        const auto fitted = run_mlmc(stub, o);
        CHECK(fitted.finest_level == expected);
        if (fitted.finest_level >= 2) CHECK(fitted.bias_rate_used == Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("reaching the level cap reports an unconverged state")
{
    const auto stub = deterministic([](int l) { return 1.0 - std::pow(2.0, -l); });
    MlmcOptions o;
    o.eps = 1e-6;
    o.min_level = 1;
    o.max_level = 3;
    const auto st = run_mlmc(stub, o);
    CHECK_FALSE(st.converged);
    CHECK(st.finest_level == 3);
    CHECK(st.failure.find("level cap") != std::string::npos);

    o.max_level = 40;
    CHECK_THROWS_AS(run_mlmc(stub, o), Error);
}

TEST_CASE("option validation")
{
    MlmcOptions o;
    o.min_level = 0;
    CHECK_THROWS_AS(o.validate(), Error);
    MlmcOptions p;
    p.eps = -1.0;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("lognormal toy integrand: MLMC against the analytic mean")
{
    int hits = 0;
    const double eps = 0.01;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
        LognormalIntegrand toy;
        toy.seed = 1000 + rep;
        MlmcOptions o;
        o.eps = eps;
        o.min_level = 1;
        o.keep_records = false;
        const auto st = run_mlmc(toy, o);
        if (std::abs(st.estimate - toy.exact_mean()) <= 3.0 * eps) ++hits;
    }
    CHECK(hits >= 95);
}

TEST_CASE("toy integrand: MC and MLMC agree")
{
    LognormalIntegrand toy;
    toy.seed = 77;
    MlmcOptions o;
    o.eps = 0.005;
    o.min_level = 1;
    const auto ml = run_mlmc(toy, o);
    McOptions m;
    m.eps = 0.005;
    m.level = ml.finest_level;
    const auto mc = run_mc(toy, m);
    CHECK(std::abs(ml.estimate - mc.estimate) <= 2.0 * std::sqrt(ml.variance + mc.variance) + 2.0 * ml.bias_estimate);
    CHECK(mc.estimator == Estimator::MC);
    CHECK(mc.levels.size() == 1);
}

TEST_CASE("variance bookkeeping matches the raw records")
{
    LognormalIntegrand toy;
    MlmcOptions o;
    o.eps = 0.01;
    o.min_level = 2;
    const auto st = run_mlmc(toy, o);
    double var = 0.0, est = 0.0;
    for (const auto& l : st.levels) {
        const auto& y = l.y_records;
        REQUIRE(y.size() == l.n());
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(y.size());
        double ss = 0.0;
        for (double v : y) ss += (v - mean) * (v - mean);
        var += ss / static_cast<double>(y.size() - 1) / static_cast<double>(y.size());
        est += mean;
    }
    CHECK(st.variance == Approx(var).epsilon(1e-10));
    CHECK(st.estimate == Approx(est).epsilon(1e-12));
    CHECK(st.variance <= o.eps * o.eps / 2.0 * (1.0 + 1e-9));
}

TEST_CASE("telescoping sum equals the finest-level mean on common draws")
{
    LognormalIntegrand toy;
    toy.common_draws = true;
    const std::vector<int> levels{0, 1, 2, 3, 4};
    const auto table = level_table(toy, levels, 500);
    double sum = 0.0;
    for (const auto& l : table) sum += l.y.mean;
    CHECK(std::abs(sum - table.back().q.mean) <= 1e-9);
}

TEST_CASE("results do not depend on the worker count")
{
    LognormalIntegrand toy;
    MlmcOptions o;
    o.eps = 0.005;
    o.min_level = 1;
    const auto one = run_mlmc(toy, o);
    o.workers = 4;
    const auto four = run_mlmc(toy, o);
    CHECK(same_state(one, four));
    const auto again = run_mlmc(toy, o);
    CHECK(same_state(four, again));
}

TEST_CASE("rejected samples are replaced and counted, excess rejection aborts")
{
    FlakySampler some{0.02};
    const std::vector<int> levels{0};
    const auto t = level_table(some, levels, 1000);
    CHECK(t[0].n() == 1000);
    CHECK(t[0].rejects > 0);
    CHECK(t[0].attempts == 1000 + t[0].rejects);

    FlakySampler many{0.2};
    try {
        level_table(many, levels, 1000);
        FAIL("expected a rejection-rate error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::RejectionRate);
    }
}

TEST_CASE("moment accumulators")
{
    Moments m;
    for (double x : {1.0, 2.0, 4.0, 8.0}) m.add(x);
    CHECK(m.mean == Approx(3.75));
    CHECK(m.variance() == Approx((7.5625 + 3.0625 + 0.0625 + 18.0625) / 3.0));
    CoMoments c;
    for (int k = 0; k < 10; ++k) c.add(k, 2.0 * k + 1.0);
    CHECK(c.covariance() == Approx(2.0 * c.a.variance()));
}
