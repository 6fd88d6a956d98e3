#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "wipp/iodata.hpp"
#include "wipp/model.hpp"

using namespace wipp;
using Catch::Approx;

namespace {

ObservationSet wipp_observations()
{
    ObservationSet obs;
    obs.records = load_boreholes(default_borehole_path());
    return obs;
}

ModelOptions small(bool conditional, bool av)
{
    ModelOptions mo;
    mo.n0 = 8;
    mo.max_level = 2;
    mo.snap_cells = 128;
    mo.conditional = conditional;
    mo.antithetic = av;
    mo.seed = 21;
    return mo;
}

} // namespace

TEST_CASE("model costs and validation")
{
    const WippModel plain(small(true, false), wipp_observations());
    CHECK(plain.cells(2) == 32);
    CHECK(plain.standard_cost(2) == 1024.0);
    const WippModel av(small(true, true), wipp_observations());
    CHECK(av.standard_cost(2) == 2048.0);
    CHECK_THROWS_AS(plain.resources(3), Error);

    ModelOptions bad = small(true, false);
    bad.snap_cells = 96;
    CHECK_THROWS_AS(WippModel(bad, wipp_observations()), Error);
    CHECK_THROWS_AS(WippModel(small(true, false), ObservationSet{}), Error);
    CHECK_NOTHROW(WippModel(small(false, false), ObservationSet{}));
}

TEST_CASE("sample blocks reproduce single realizations")
{
    const WippModel model(small(true, false), wipp_observations());
    const auto block = model.sample_block(1, 4, 4);
    const auto& r = model.resources(1);
    for (std::uint64_t k = 0; k < 4; ++k) {
        const auto z = model.realization(1, 4 + k);
        const double qf = quantity_of_interest(model.travel_time(r.fine, z.field.fine));
        const double qc = quantity_of_interest(model.travel_time(r.coarse, z.field.coarse));
        REQUIRE(block[k].ok);
        CHECK(block[k].q == qf);
        CHECK(block[k].q_coarse == qc);
        CHECK(block[k].y == qf - qc);
    }
    CHECK(model.realization(1, 4).field.fine != model.realization(1, 5).field.fine);
    CHECK(model.draw(1, 4).stream_id == model.draw(1, 5).stream_id);
}

TEST_CASE("antithetic samples pair each field with its reflection")
{
    const WippModel model(small(true, true), wipp_observations());
    const auto& r = model.resources(1);
    const auto block = model.sample_block(1, 0, 100);
    double mean_plain = 0.0, mean_av = 0.0;
    int used = 0;
    for (std::uint64_t k = 0; k < block.size(); ++k) {
        const auto& s = block[k];
        REQUIRE(s.ok);
        REQUIRE(s.paired);
        mean_plain += s.y_plus + s.y_minus;
        mean_av += s.y;
        ++used;
        if (k < 5) {
            // Independent route to the partner: reflect and solve directly.
            const auto z = model.realization(1, k);
            const auto m = antithetic(z, r.conditioner);
            const double qf = quantity_of_interest(model.travel_time(r.fine, m.field.fine));
            const double qc = quantity_of_interest(model.travel_time(r.coarse, m.field.coarse));
            CHECK(s.y_minus == Approx(qf - qc).epsilon(1e-12));
            const auto back = antithetic(m, r.conditioner);
            const double qb = quantity_of_interest(model.travel_time(r.fine, back.field.fine));
            CHECK(qb == Approx(s.q_plus).epsilon(1e-12));
        }
    }
    CHECK(mean_plain / (2.0 * used) == Approx(mean_av / used).epsilon(1e-9));

    const std::vector<int> levels{1};
    const auto t = level_table(model, levels, 60);
    const auto& l = t[0];
    const double identity =
        (l.y_pair.a.variance() + l.y_pair.b.variance() + 2.0 * l.y_pair.covariance()) / 4.0;
    CHECK(l.y.variance() == Approx(identity).epsilon(1e-9));
}

TEST_CASE("degenerate randomness gives zero level variance")
{
    ModelOptions mo = small(false, false);
    mo.cov.variance = 1e-14;
    const WippModel model(mo, ObservationSet{});
    const std::vector<int> levels{1, 2};
    const auto t = level_table(model, levels, 20);
    for (const auto& l : t) {
        CHECK(l.y.variance() <= 1e-12);
        CHECK(l.q.variance() <= 1e-12);
    }
}

TEST_CASE("level tables do not depend on the worker count")
{
    const WippModel model(small(true, false), wipp_observations());
    const std::vector<int> levels{0, 1};
    const auto a = level_table(model, levels, 12, 1);
    const auto b = level_table(model, levels, 12, 3);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].y_records == b[k].y_records);
        CHECK(a[k].q_records == b[k].q_records);
    }
}

TEST_CASE("unconditional fields ignore the boreholes")
{
    const WippModel model(small(false, false), wipp_observations());
    const auto z = model.realization(0, 0);
    CHECK(z.field.obs.empty());
    const auto s = model.sample_block(0, 0, 2);
    CHECK(s.size() == 2);
}
