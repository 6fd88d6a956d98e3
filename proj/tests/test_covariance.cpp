#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "wipp/covariance.hpp"
#include "wipp/iodata.hpp"

using namespace wipp;
using Catch::Approx;

TEST_CASE("default covariance parameters")
{
    CovarianceParams p;
    CHECK(p.mean == -4.934);
    CHECK(p.variance == 6.4791);
    CHECK(p.correlation_length == 12390.0);
}

TEST_CASE("kernel values")
{
    CovarianceParams p;
    const Point a{0.0, 0.0};
    CHECK(kernel(a, a, p) == 6.4791);
    const Point b{p.correlation_length * 0.6, p.correlation_length * 0.8};
    CHECK(kernel(a, b, p) == Approx(6.4791 * std::exp(-1.0)).epsilon(1e-14));
    CHECK(kernel(a, b, p) == Approx(2.38352).margin(5e-5));
    CHECK(kernel(a, b, p) == kernel(b, a, p));

    double last = kernel(a, a, p);
    for (double r = 100.0; r < 1e7; r *= 1.7) {
        const double v = kernel(a, {r, 0.0}, p);
        CHECK(v > 0.0);
        CHECK(v < last);
        last = v;
    }
    CHECK(kernel(a, {1e9, 0.0}, p) < 1e-300);
}

TEST_CASE("parameter validation")
{
    CovarianceParams p;
    p.correlation_length = -1.0;
    CHECK_THROWS_AS(p.validate(), Error);
    CovarianceParams q;
    q.variance = 0.0;
    CHECK_THROWS_AS(q.validate(), Error);
}

TEST_CASE("observation blocks")
{
    CovarianceParams p;
    const std::vector<Point> one{{10.0, 20.0}};
    const std::vector<Point> targets{{0.0, 0.0}, {5.0, 5.0}};
    auto b = assemble_obs_blocks(targets, one, p);
    REQUIRE(b.r22.rows() == 1);
    CHECK(b.r22(0, 0) == p.variance);
    CHECK(b.r12.rows() == 2);

    const std::vector<Point> two{{0.0, 0.0}, {p.correlation_length, 0.0}};
    b = assemble_obs_blocks(targets, two, p);
    CHECK(b.r22(0, 1) == Approx(p.variance * std::exp(-1.0)).epsilon(1e-14));
    CHECK(b.r22(1, 0) == b.r22(0, 1));

    const std::vector<Point> three{{0.0, 0.0}, {300.0, 50.0}, {-800.0, 1200.0}};
    const std::vector<Point> swapped{three[2], three[0], three[1]};
    const auto b1 = assemble_obs_blocks(targets, three, p);
    const auto b2 = assemble_obs_blocks(targets, swapped, p);
    const int perm[3] = {2, 0, 1};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(b2.r22(i, j) == b1.r22(perm[i], perm[j]));

    CovarianceParams scaled = p;
    scaled.variance *= 3.0;
    const auto b3 = assemble_obs_blocks(targets, three, scaled);
    CHECK((b3.r22 - 3.0 * b1.r22).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((b3.r12 - 3.0 * b1.r12).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("observation covariance of the bundled boreholes is positive definite")
{
    CovarianceParams p;
    const auto rows = load_boreholes(default_borehole_path());
    std::vector<Point> pts;
    for (const auto& r : rows) pts.push_back(r.location());
    const Eigen::MatrixXd r22 = cross_covariance(pts, pts, p);
    Eigen::LLT<Eigen::MatrixXd> llt(r22);
    CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("dense covariance is capped to oracle sizes")
{
    CovarianceParams p;
    std::vector<Point> pts(kDenseCovarianceCap + 1);
    CHECK_THROWS_AS(dense_covariance(pts, p), Error);
}
