#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wipp/error.hpp"
#include "wipp/grid.hpp"
#include "wipp/multigrid.hpp"

namespace wipp {

/// Gaussian head surface g_D used as Dirichlet data on the whole outer boundary.
struct BoundaryHead {
    double a0 = 1134.61;
    double a1 = 73559.35;
    double a2 = 73559.35;
    double x0 = 611011.89;
    double y0 = 3580891.50;

    double operator()(Point p) const
    {
        const double sx = (p.x - x0) / a1;
        const double sy = (p.y - y0) / a2;
        return a0 * std::exp(-0.5 * (sx * sx + sy * sy));
    }

    void validate() const
    {
        require(a1 > 0.0 && a2 > 0.0, ErrorKind::Range, "g_D widths a1, a2 must be > 0");
        require(std::isfinite(a0) && std::isfinite(x0) && std::isfinite(y0), ErrorKind::Range,
                "g_D parameters must be finite");
    }
};

enum class FaceAveraging { Harmonic, Geometric };

inline double face_average(double t1, double t2, FaceAveraging mode)
{
    if (mode == FaceAveraging::Geometric) return std::sqrt(t1 * t2);
    return 2.0 * t1 * t2 / (t1 + t2);
}

using BoundaryFunction = std::function<double(Point)>;
using SourceFunction = std::function<double(Point)>;

/// Two-point-flux finite-volume system on an n x n cell grid.
///
/// Face conductances carry the face geometry: an interior x-face between
/// cells with transmissivities T1, T2 has tx = avg(T1, T2) * hy / hx, a
/// boundary x-face has tx = T * hy / (hx / 2). The volumetric flux through an
/// x-face in the +x direction is tx * (u_left - u_right).
struct FlowSystem {
    int n = 0;
    double x_min = 0.0;
    double y_min = 0.0;
    double hx = 0.0;
    double hy = 0.0;
    /// (n+1) x n, index j*(n+1) + i for face i of row j (face i lies left of cell i).
    std::vector<double> tx;
    /// n x (n+1), index j*n + i for face j of column i (face j lies below cell j).
    std::vector<double> ty;
    std::vector<double> west;
    std::vector<double> east;
    std::vector<double> south;
    std::vector<double> north;
    Stencil5 matrix;
    std::vector<double> rhs;

    std::size_t x_face(int i, int j) const { return static_cast<std::size_t>(j) * (n + 1) + i; }
    std::size_t y_face(int i, int j) const { return static_cast<std::size_t>(j) * n + i; }
    std::size_t cell(int i, int j) const { return static_cast<std::size_t>(j) * n + i; }
};

/// Assembles the Darcy system for log10 T given per fine cell (x fastest).
/// `source` is an optional volumetric source density, integrated with the
/// midpoint rule.
inline FlowSystem assemble(const LevelGrid& grid, std::span<const double> log10_t,
                           const BoundaryFunction& boundary,
                           FaceAveraging averaging = FaceAveraging::Harmonic,
                           const SourceFunction& source = {})
{
    const int n = grid.cells();
    require(log10_t.size() == grid.cell_count(), ErrorKind::InvalidArgument,
            "log10 T field does not cover the grid");
    FlowSystem s;
    s.n = n;
    s.x_min = grid.x_min();
    s.y_min = grid.y_min();
    s.hx = grid.hx();
    s.hy = grid.hy();

    std::vector<double> t(grid.cell_count());
    for (std::size_t k = 0; k < t.size(); ++k) {
        t[k] = std::pow(10.0, log10_t[k]);
        if (!std::isfinite(t[k]) || t[k] <= 0.0) {
            fail(ErrorKind::NonFiniteField,
                 "transmissivity 10^" + std::to_string(log10_t[k]) + " is not a positive finite number");
        }
    }

    const double rx = s.hy / s.hx;
    const double ry = s.hx / s.hy;
    s.tx.assign(static_cast<std::size_t>(n + 1) * n, 0.0);
    s.ty.assign(static_cast<std::size_t>(n + 1) * n, 0.0);
    for (int j = 0; j < n; ++j) {
        s.tx[s.x_face(0, j)] = 2.0 * rx * t[s.cell(0, j)];
        s.tx[s.x_face(n, j)] = 2.0 * rx * t[s.cell(n - 1, j)];
        for (int i = 1; i < n; ++i)
            s.tx[s.x_face(i, j)] = rx * face_average(t[s.cell(i - 1, j)], t[s.cell(i, j)], averaging);
    }
    for (int i = 0; i < n; ++i) {
        s.ty[s.y_face(i, 0)] = 2.0 * ry * t[s.cell(i, 0)];
        s.ty[s.y_face(i, n)] = 2.0 * ry * t[s.cell(i, n - 1)];
        for (int j = 1; j < n; ++j)
            s.ty[s.y_face(i, j)] = ry * face_average(t[s.cell(i, j - 1)], t[s.cell(i, j)], averaging);
    }

    s.west.resize(n);
    s.east.resize(n);
    s.south.resize(n);
    s.north.resize(n);
    for (int k = 0; k < n; ++k) {
        const double yc = s.y_min + (k + 0.5) * s.hy;
        const double xc = s.x_min + (k + 0.5) * s.hx;
        s.west[k] = boundary({grid.x_min(), yc});
        s.east[k] = boundary({grid.x_max(), yc});
        s.south[k] = boundary({xc, grid.y_min()});
        s.north[k] = boundary({xc, grid.y_max()});
    }

    Stencil5& a = s.matrix;
    a.nx = n;
    a.ny = n;
    a.diag.assign(grid.cell_count(), 0.0);
    a.cx.assign(grid.cell_count(), 0.0);
    a.cy.assign(grid.cell_count(), 0.0);
    s.rhs.assign(grid.cell_count(), 0.0);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const std::size_t k = s.cell(i, j);
            const double w = s.tx[s.x_face(i, j)];
            const double e = s.tx[s.x_face(i + 1, j)];
            const double so = s.ty[s.y_face(i, j)];
            const double no = s.ty[s.y_face(i, j + 1)];
            a.diag[k] = w + e + so + no;
            if (i + 1 < n) a.cx[k] = e;
            if (j + 1 < n) a.cy[k] = no;
            if (i == 0) s.rhs[k] += w * s.west[j];
            if (i == n - 1) s.rhs[k] += e * s.east[j];
            if (j == 0) s.rhs[k] += so * s.south[i];
            if (j == n - 1) s.rhs[k] += no * s.north[i];
            if (source) s.rhs[k] += source(grid.cell_center(i, j)) * s.hx * s.hy;
        }
    }
    return s;
}

inline FlowSystem assemble(const LevelGrid& grid, std::span<const double> log10_t,
                           const BoundaryHead& bc, FaceAveraging averaging = FaceAveraging::Harmonic)
{
    return assemble(grid, log10_t, BoundaryFunction(bc), averaging);
}

/// Head per cell and normal face fluxes q.n (m^2/s, positive along +x / +y).
struct HeadSolution {
    int n = 0;
    std::vector<double> head;
    /// Same layout as FlowSystem::tx.
    std::vector<double> qx;
    /// Same layout as FlowSystem::ty.
    std::vector<double> qy;
    int iterations = 0;
    double residual = 0.0;
};

/// Two-point fluxes from a head field, consistent with the system's conductances.
inline void face_fluxes(const FlowSystem& s, std::span<const double> head, std::vector<double>& qx,
                        std::vector<double>& qy)
{
    const int n = s.n;
    qx.assign(s.tx.size(), 0.0);
    qy.assign(s.ty.size(), 0.0);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i <= n; ++i) {
            const double left = i == 0 ? s.west[j] : head[s.cell(i - 1, j)];
            const double right = i == n ? s.east[j] : head[s.cell(i, j)];
            qx[s.x_face(i, j)] = s.tx[s.x_face(i, j)] * (left - right) / s.hy;
        }
    }
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double below = j == 0 ? s.south[i] : head[s.cell(i, j - 1)];
            const double above = j == n ? s.north[i] : head[s.cell(i, j)];
            qy[s.y_face(i, j)] = s.ty[s.y_face(i, j)] * (below - above) / s.hx;
        }
    }
}

/// Largest per-cell net outflow relative to the mean face flux magnitude
/// (volumetric, sources excluded).
inline double max_cell_imbalance(const FlowSystem& s, const HeadSolution& h)
{
    const int n = s.n;
    double worst = 0.0;
    double total = 0.0;
    for (double q : h.qx) total += std::abs(q) * s.hy;
    for (double q : h.qy) total += std::abs(q) * s.hx;
    const double mean = total / static_cast<double>(h.qx.size() + h.qy.size());
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double net = (h.qx[s.x_face(i + 1, j)] - h.qx[s.x_face(i, j)]) * s.hy +
                               (h.qy[s.y_face(i, j + 1)] - h.qy[s.y_face(i, j)]) * s.hx;
            worst = std::max(worst, std::abs(net));
        }
    }
    return mean > 0.0 ? worst / mean : worst;
}

/// Solves the system with multigrid-preconditioned CG and reconstructs fluxes.
inline HeadSolution solve(const FlowSystem& s, SolverOptions opts = {})
{
    HeadSolution h;
    h.n = s.n;
    h.head.assign(s.rhs.size(), 0.0);
    MultigridPcg pcg(s.matrix, opts);
    const SolveReport rep = pcg.solve(s.rhs, h.head);
    if (!rep.converged) {
        fail(ErrorKind::MaxIterations, "flow solver stopped after " + std::to_string(rep.iterations) +
                                           " iterations at relative residual " +
                                           std::to_string(rep.relative_residual));
    }
    h.iterations = rep.iterations;
    h.residual = rep.relative_residual;
    face_fluxes(s, h.head, h.qx, h.qy);
    return h;
}

} // namespace wipp
