#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "wipp/error.hpp"

namespace wipp {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(Point a, Point b)
{
    return std::hypot(a.x - b.x, a.y - b.y);
}

/// Rectangular model domain D in UTM meters, with the inner site rectangle
/// whose boundary terminates particle tracking.
struct DomainSpec {
    double center_x = 613490.5;
    double center_y = 3581067.0;
    double extent_x = 21500.0;
    double extent_y = 30500.0;
    double inner_half_width = 3200.0;
    double inner_half_height = 3200.0;
    std::optional<Point> release;

    double x_min() const { return center_x - 0.5 * extent_x; }
    double x_max() const { return center_x + 0.5 * extent_x; }
    double y_min() const { return center_y - 0.5 * extent_y; }
    double y_max() const { return center_y + 0.5 * extent_y; }

    double inner_x_min() const { return center_x - inner_half_width; }
    double inner_x_max() const { return center_x + inner_half_width; }
    double inner_y_min() const { return center_y - inner_half_height; }
    double inner_y_max() const { return center_y + inner_half_height; }

    Point release_point() const { return release.value_or(Point{center_x, center_y}); }

    bool contains(Point p) const
    {
        return p.x >= x_min() && p.x <= x_max() && p.y >= y_min() && p.y <= y_max();
    }

    bool strictly_inside_inner(Point p) const
    {
        return p.x > inner_x_min() && p.x < inner_x_max() && p.y > inner_y_min() &&
               p.y < inner_y_max();
    }

    void validate() const
    {
        require(std::isfinite(center_x) && std::isfinite(center_y), ErrorKind::Range,
                "domain center must be finite");
        require(extent_x > 0.0 && extent_y > 0.0, ErrorKind::Range, "domain extents must be > 0");
        require(inner_half_width > 0.0 && inner_half_height > 0.0, ErrorKind::Range,
                "inner boundary half sizes must be > 0");
        require(inner_x_min() > x_min() && inner_x_max() < x_max() && inner_y_min() > y_min() &&
                    inner_y_max() < y_max(),
                ErrorKind::Range, "inner boundary rectangle must lie strictly inside the domain");
        require(strictly_inside_inner(release_point()), ErrorKind::Range,
                "release point must lie strictly inside the inner boundary rectangle");
    }
};

/// Node lattice at half cell spacing of a grid with `cells` cells per direction.
/// Node (kx, ky), 1 <= k <= 2*cells-1, sits at (x_min + kx*dx, y_min + ky*dy).
/// Array storage uses offset k-1 with x fastest.
struct Lattice {
    int cells = 0;
    double x_min = 0.0;
    double y_min = 0.0;
    double dx = 0.0;
    double dy = 0.0;

    int nodes_per_dir() const { return 2 * cells - 1; }
    std::size_t size() const
    {
        return static_cast<std::size_t>(nodes_per_dir()) * static_cast<std::size_t>(nodes_per_dir());
    }
    Point node(int kx, int ky) const { return {x_min + kx * dx, y_min + ky * dy}; }
    std::size_t offset(int kx, int ky) const
    {
        return static_cast<std::size_t>(ky - 1) * static_cast<std::size_t>(nodes_per_dir()) +
               static_cast<std::size_t>(kx - 1);
    }
};

inline constexpr int kRefinement = 2;
inline constexpr int kDefaultMaxLevel = 8;

/// Cell-centered N x N grid of one level plus the lattices used to sample it.
///
/// The random field for a level is drawn on the auxiliary lattice of
/// `sample_cells` (>= cells), which contains this level's cell centers, the
/// next-coarser level's cell centers and the snapped observation nodes.
class LevelGrid {
public:
    LevelGrid() = default;

    LevelGrid(const DomainSpec& domain, int level, int cells, int sample_cells)
        : level_(level),
          cells_(cells),
          sample_cells_(sample_cells),
          x_min_(domain.x_min()),
          y_min_(domain.y_min()),
          hx_(domain.extent_x / cells),
          hy_(domain.extent_y / cells)
    {
    }

    int level() const { return level_; }
    int cells() const { return cells_; }
    std::size_t cell_count() const
    {
        return static_cast<std::size_t>(cells_) * static_cast<std::size_t>(cells_);
    }
    double hx() const { return hx_; }
    double hy() const { return hy_; }
    double x_min() const { return x_min_; }
    double y_min() const { return y_min_; }
    double x_max() const { return x_min_ + cells_ * hx_; }
    double y_max() const { return y_min_ + cells_ * hy_; }
    bool has_coarse() const { return level_ > 0; }
    int coarse_cells() const { return cells_ / kRefinement; }
    int sample_cells() const { return sample_cells_; }

    Point cell_center(int i, int j) const
    {
        return {x_min_ + (i + 0.5) * hx_, y_min_ + (j + 0.5) * hy_};
    }

    Lattice aux() const { return {cells_, x_min_, y_min_, 0.5 * hx_, 0.5 * hy_}; }

    Lattice sampling() const
    {
        const double ex = cells_ * hx_;
        const double ey = cells_ * hy_;
        return {sample_cells_, x_min_, y_min_, 0.5 * ex / sample_cells_, 0.5 * ey / sample_cells_};
    }

    /// Sampling-lattice coordinate of fine cell index i along one axis.
    int fine_node(int i) const { return (2 * i + 1) * ratio(); }
    /// Sampling-lattice coordinate of coarse (level-1) cell index i along one axis.
    int coarse_node(int i) const { return (4 * i + 2) * ratio(); }

private:
    int ratio() const { return sample_cells_ / cells_; }

    int level_ = 0;
    int cells_ = 0;
    int sample_cells_ = 0;
    double x_min_ = 0.0;
    double y_min_ = 0.0;
    double hx_ = 0.0;
    double hy_ = 0.0;
};

/// Builds the level-`level` grid with n0 * 2^level cells per direction.
/// `snap_cells` is the cell count whose aux lattice holds the observation
/// nodes; it must belong to the same hierarchy (n0 * 2^p). Zero means none.
inline LevelGrid build_level_grid(const DomainSpec& domain, int level, int n0,
                                  int max_level = kDefaultMaxLevel, int snap_cells = 0)
{
    require(n0 >= 2, ErrorKind::Range, "n0 must be >= 2");
    require(level >= 0, ErrorKind::Range, "level must be >= 0");
    require(level <= max_level, ErrorKind::LevelCap,
            "level " + std::to_string(level) + " exceeds the configured maximum level " +
                std::to_string(max_level));
    require(level < 20, ErrorKind::LevelCap, "level too large for the cell counter");
    const int cells = n0 << level;
    int sample_cells = cells;
    if (snap_cells > 0) {
        require(snap_cells % n0 == 0 && ((snap_cells / n0) & (snap_cells / n0 - 1)) == 0,
                ErrorKind::InvalidArgument,
                "snap_cells must equal n0 * 2^p to nest with the level hierarchy");
        sample_cells = std::max(cells, snap_cells);
    }
    return LevelGrid(domain, level, cells, sample_cells);
}

struct Borehole {
    std::string name;
    double easting = 0.0;
    double northing = 0.0;
    double log10_t = 0.0;

    Point location() const { return {easting, northing}; }
};

/// Borehole data plus, once snapped, the lattice node of each borehole on
/// the aux lattice of a grid with `snap_cells` cells per direction.
struct ObservationSet {
    std::vector<Borehole> records;
    int snap_cells = 0;
    std::vector<std::array<int, 2>> nodes;
    std::vector<Point> snapped;

    std::size_t size() const { return records.size(); }
    bool is_snapped() const { return snap_cells > 0 && nodes.size() == records.size(); }

    std::vector<double> values() const
    {
        std::vector<double> z;
        z.reserve(records.size());
        for (const auto& r : records) z.push_back(r.log10_t);
        return z;
    }

    /// Lattice coordinate of observation j on the aux lattice of a grid with
    /// `cells` cells per direction (requires cells to be a multiple of snap_cells).
    std::array<int, 2> node_on(std::size_t j, int cells) const
    {
        require(is_snapped(), ErrorKind::InvalidArgument, "observations are not snapped");
        require(cells % snap_cells == 0, ErrorKind::InvalidArgument,
                "lattice does not contain the snapping lattice");
        const int r = cells / snap_cells;
        return {nodes[j][0] * r, nodes[j][1] * r};
    }
};

/// Nearest node along one axis; ties go to the smaller index.
inline int nearest_lattice_coordinate(double t, double spacing, int max_k)
{
    const int k = static_cast<int>(std::ceil(t / spacing - 0.5));
    return std::clamp(k, 1, max_k);
}

/// Moves every observation to the nearest node of `grid`'s aux lattice.
/// Because aux lattices nest, the node exists on every finer level.
inline ObservationSet snap_observations(ObservationSet obs, const LevelGrid& grid)
{
    const Lattice lat = grid.aux();
    const int kmax = lat.nodes_per_dir();
    obs.snap_cells = grid.cells();
    obs.nodes.clear();
    obs.snapped.clear();
    for (const auto& r : obs.records) {
        require(std::isfinite(r.easting) && std::isfinite(r.northing), ErrorKind::Range,
                "non-finite coordinates for borehole " + r.name);
        require(r.easting >= grid.x_min() && r.easting <= grid.x_max() &&
                    r.northing >= grid.y_min() && r.northing <= grid.y_max(),
                ErrorKind::Range, "borehole " + r.name + " lies outside the domain");
        const int kx = nearest_lattice_coordinate(r.easting - lat.x_min, lat.dx, kmax);
        const int ky = nearest_lattice_coordinate(r.northing - lat.y_min, lat.dy, kmax);
        obs.nodes.push_back({kx, ky});
        obs.snapped.push_back(lat.node(kx, ky));
    }
    for (std::size_t a = 0; a < obs.nodes.size(); ++a) {
        for (std::size_t b = a + 1; b < obs.nodes.size(); ++b) {
            if (obs.nodes[a] == obs.nodes[b]) {
                fail(ErrorKind::DuplicateObservation,
                     "boreholes " + obs.records[a].name + " and " + obs.records[b].name +
                         " snap to the same node on the " + std::to_string(grid.cells()) +
                         "-cell lattice");
            }
        }
    }
    return obs;
}

} // namespace wipp
