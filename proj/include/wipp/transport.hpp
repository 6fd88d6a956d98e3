#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "wipp/error.hpp"
#include "wipp/flow.hpp"
#include "wipp/grid.hpp"

namespace wipp {

enum class Termination { ExitedInnerBoundary, Stagnated, MaxTimeExceeded, ExitedOuterDomain };

inline const char* to_string(Termination t)
{
    switch (t) {
    case Termination::ExitedInnerBoundary: return "exited_inner_boundary";
    case Termination::Stagnated: return "stagnated";
    case Termination::MaxTimeExceeded: return "max_time_exceeded";
    case Termination::ExitedOuterDomain: return "exited_outer_domain";
    }
    return "unknown";
}

struct PathPoint {
    Point position;
    int i = 0;
    int j = 0;
    double time = 0.0;
};

struct TravelTimeResult {
    double exit_time = 0.0;
    Point exit_point;
    Termination termination = Termination::Stagnated;
    int cells_visited = 0;
    std::vector<PathPoint> path;

    bool ok() const { return termination == Termination::ExitedInnerBoundary; }
};

struct TrackOptions {
    double thickness = 8.0;
    double porosity = 0.16;
    double max_time = 1e25;
    bool record_path = false;
    /// Stop when the particle leaves this rectangle; defaults to the domain's inner boundary.
    double box_x_min = 0.0;
    double box_x_max = 0.0;
    double box_y_min = 0.0;
    double box_y_max = 0.0;

    static TrackOptions for_domain(const DomainSpec& d)
    {
        TrackOptions o;
        o.box_x_min = d.inner_x_min();
        o.box_x_max = d.inner_x_max();
        o.box_y_min = d.inner_y_min();
        o.box_y_max = d.inner_y_max();
        return o;
    }
};

namespace detail {

/// expm1(z)/z, continuous at 0.
inline double expm1_ratio(double z)
{
    return z == 0.0 ? 1.0 : std::expm1(z) / z;
}

/// Time to move a distance d (same sign as v0) when the velocity is v0 + a*s
/// after moving s; infinite if the velocity vanishes on the way.
inline double time_to_reach(double v0, double a, double d)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (v0 == 0.0 || d == 0.0) return d == 0.0 ? 0.0 : inf;
    const double u = a * d / v0;
    if (u <= -1.0) return inf;
    const double base = d / v0;
    return u == 0.0 ? base : base * std::log1p(u) / u;
}

/// Displacement after time t from velocity v0 with gradient a.
inline double displacement(double v0, double a, double t)
{
    return v0 * t * expm1_ratio(a * t);
}

/// One axis of a cell: faces at lo/hi, face velocities vlo/vhi, and the
/// tracking box clipping the reachable interval.
struct Axis {
    double lo, hi, vlo, vhi, box_lo, box_hi;

    double gradient() const { return (vhi - vlo) / (hi - lo); }
    double velocity(double x) const { return vlo + gradient() * (x - lo); }
};

struct AxisExit {
    double time = std::numeric_limits<double>::infinity();
    int step = 0;
    bool leaves_box = false;
    double target = 0.0;
};

inline AxisExit axis_exit(const Axis& ax, double x)
{
    AxisExit e;
    const double v = ax.velocity(x);
    if (v > 0.0) {
        const bool box = ax.box_hi < ax.hi;
        e.target = box ? ax.box_hi : ax.hi;
        e.step = 1;
        e.leaves_box = box;
    } else if (v < 0.0) {
        const bool box = ax.box_lo > ax.lo;
        e.target = box ? ax.box_lo : ax.lo;
        e.step = -1;
        e.leaves_box = box;
    } else {
        return e;
    }
    if (ax.velocity(e.target) * v <= 0.0) return e;
    e.time = time_to_reach(v, ax.gradient(), e.target - x);
    return e;
}

} // namespace detail

/// Semi-analytic (Pollock) particle tracking through the two-point flux field.
/// Velocity is q/(b*phi); within a cell each component is linear in its own
/// coordinate, so the exit time of every cell is exact.
class Tracker {
public:
    Tracker(const HeadSolution& flow, const LevelGrid& grid, TrackOptions opts)
        : flow_(flow), grid_(grid), opts_(opts), scale_(1.0 / (opts.thickness * opts.porosity))
    {
        require(opts.thickness > 0.0 && opts.porosity > 0.0, ErrorKind::Range,
                "thickness and porosity must be > 0");
        require(grid.hx() > 0.0 && grid.hy() > 0.0, ErrorKind::InvalidArgument,
                "degenerate zero-size cell");
        require(flow.n == grid.cells(), ErrorKind::InvalidArgument, "flux field does not match the grid");
        require(opts.max_time > 0.0, ErrorKind::Range, "max_time must be > 0");
    }

    TravelTimeResult track(Point start) const
    {
        const int n = grid_.cells();
        require(start.x >= opts_.box_x_min && start.x <= opts_.box_x_max &&
                    start.y >= opts_.box_y_min && start.y <= opts_.box_y_max,
                ErrorKind::Range, "start point lies outside the tracking box");
        TravelTimeResult res;
        Point p = start;
        int i = 0;
        int j = 0;
        locate(p, i, j);
        double t = 0.0;
        if (opts_.record_path) res.path.push_back({p, i, j, t});

        for (;;) {
            ++res.cells_visited;
            const detail::Axis ax = x_axis(i, j);
            const detail::Axis ay = y_axis(i, j);
            const detail::AxisExit ex = detail::axis_exit(ax, p.x);
            const detail::AxisExit ey = detail::axis_exit(ay, p.y);
            const double dt = std::min(ex.time, ey.time);
            if (!std::isfinite(dt)) {
                res.termination = Termination::Stagnated;
                break;
            }
            if (t + dt > opts_.max_time) {
                const double rest = opts_.max_time - t;
                p.x += detail::displacement(ax.velocity(p.x), ax.gradient(), rest);
                p.y += detail::displacement(ay.velocity(p.y), ay.gradient(), rest);
                t = opts_.max_time;
                res.termination = Termination::MaxTimeExceeded;
                break;
            }
            // Both axes exit together when the times agree to rounding: a corner crossing.
            const double tol = 1e-13 * dt;
            const bool via_x = ex.time <= dt + tol;
            const bool via_y = ey.time <= dt + tol;
            p.x = via_x ? ex.target : p.x + detail::displacement(ax.velocity(p.x), ax.gradient(), dt);
            p.y = via_y ? ey.target : p.y + detail::displacement(ay.velocity(p.y), ay.gradient(), dt);
            t += dt;
            if ((via_x && ex.leaves_box) || (via_y && ey.leaves_box)) {
                res.termination = Termination::ExitedInnerBoundary;
                break;
            }
            if (via_x) i += ex.step;
            if (via_y) j += ey.step;
            if (opts_.record_path) res.path.push_back({p, i, j, t});
            if (i < 0 || i >= n || j < 0 || j >= n) {
                res.termination = Termination::ExitedOuterDomain;
                break;
            }
        }
        res.exit_time = t;
        res.exit_point = p;
        if (opts_.record_path) res.path.push_back({p, i, j, t});
        return res;
    }

    /// Velocity at p inside cell (i, j), from the linear interpolation of its face velocities.
    Point velocity(Point p, int i, int j) const
    {
        return {x_axis(i, j).velocity(p.x), y_axis(i, j).velocity(p.y)};
    }

    /// Cell containing p; a point on a grid line goes to the side its
    /// normal velocity points to and is nudged 1e-12 of a cell inward.
    void locate(Point& p, int& i, int& j) const
    {
        const int n = grid_.cells();
        const double fx = (p.x - grid_.x_min()) / grid_.hx();
        const double fy = (p.y - grid_.y_min()) / grid_.hy();
        i = std::clamp(static_cast<int>(std::floor(fx)), 0, n - 1);
        j = std::clamp(static_cast<int>(std::floor(fy)), 0, n - 1);
        const double rx = std::round(fx);
        const double ry = std::round(fy);
        const bool on_x = std::abs(fx - rx) < 1e-12 * std::max(1.0, std::abs(fx)) && rx > 0 && rx < n;
        const bool on_y = std::abs(fy - ry) < 1e-12 * std::max(1.0, std::abs(fy)) && ry > 0 && ry < n;
        if (!on_x && !on_y) return;
        const int fi = static_cast<int>(rx);
        const int fj = static_cast<int>(ry);
        const double hx = grid_.hx();
        const double hy = grid_.hy();
        if (on_x) {
            // Mean normal velocity over the x-faces touching p.
            double v = 0.0;
            if (on_y) {
                v = 0.5 * (vx(fi, fj - 1) + vx(fi, fj));
            } else {
                v = vx(fi, j);
            }
            i = v >= 0.0 ? fi : fi - 1;
            p.x = grid_.x_min() + fi * hx + (v >= 0.0 ? 1.0 : -1.0) * 1e-12 * hx;
        }
        if (on_y) {
            double v = 0.0;
            if (on_x) {
                v = 0.5 * (vy(fi - 1, fj) + vy(fi, fj));
            } else {
                v = vy(i, fj);
            }
            j = v >= 0.0 ? fj : fj - 1;
            p.y = grid_.y_min() + fj * hy + (v >= 0.0 ? 1.0 : -1.0) * 1e-12 * hy;
        }
    }

private:
    double vx(int face, int row) const
    {
        return flow_.qx[static_cast<std::size_t>(row) * (grid_.cells() + 1) + face] * scale_;
    }
    double vy(int col, int face) const
    {
        return flow_.qy[static_cast<std::size_t>(face) * grid_.cells() + col] * scale_;
    }

    detail::Axis x_axis(int i, int j) const
    {
        const double lo = grid_.x_min() + i * grid_.hx();
        return {lo, lo + grid_.hx(), vx(i, j), vx(i + 1, j), opts_.box_x_min, opts_.box_x_max};
    }
    detail::Axis y_axis(int i, int j) const
    {
        const double lo = grid_.y_min() + j * grid_.hy();
        return {lo, lo + grid_.hy(), vy(i, j), vy(i, j + 1), opts_.box_y_min, opts_.box_y_max};
    }

    const HeadSolution& flow_;
    const LevelGrid& grid_;
    TrackOptions opts_;
    double scale_;
};

inline TravelTimeResult track(const HeadSolution& flow, const LevelGrid& grid, const DomainSpec& domain,
                              Point start, TrackOptions opts)
{
    if (opts.box_x_max <= opts.box_x_min) {
        const TrackOptions box = TrackOptions::for_domain(domain);
        opts.box_x_min = box.box_x_min;
        opts.box_x_max = box.box_x_max;
        opts.box_y_min = box.box_y_min;
        opts.box_y_max = box.box_y_max;
    }
    return Tracker(flow, grid, opts).track(start);
}

/// Q = log10 of the travel time.
inline double quantity_of_interest(const TravelTimeResult& r)
{
    require(r.ok(), ErrorKind::InvalidArgument,
            std::string("travel time unavailable: particle ") + to_string(r.termination));
    require(r.exit_time > 0.0, ErrorKind::Range, "travel time must be > 0");
    return std::log10(r.exit_time);
}

} // namespace wipp
