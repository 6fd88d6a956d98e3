#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "wipp/error.hpp"

namespace wipp {

/// Symmetric 5-point operator on an nx x ny cell grid (x fastest):
/// (A u)_k = diag_k u_k - cx_{k-1} u_{k-1} - cx_k u_{k+1} - cy_{k-nx} u_{k-nx} - cy_k u_{k+nx}.
/// cx_k couples cell k with its east neighbour, cy_k with its north neighbour;
/// couplings across the outer boundary are zero.
struct Stencil5 {
    int nx = 0;
    int ny = 0;
    std::vector<double> diag;
    std::vector<double> cx;
    std::vector<double> cy;

    std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }

    void apply(std::span<const double> x, std::span<double> y) const
    {
        for (int j = 0; j < ny; ++j) {
            const std::size_t row = static_cast<std::size_t>(j) * nx;
            for (int i = 0; i < nx; ++i) {
                const std::size_t k = row + i;
                double v = diag[k] * x[k];
                if (i > 0) v -= cx[k - 1] * x[k - 1];
                if (i + 1 < nx) v -= cx[k] * x[k + 1];
                if (j > 0) v -= cy[k - nx] * x[k - nx];
                if (j + 1 < ny) v -= cy[k] * x[k + nx];
                y[k] = v;
            }
        }
    }

    Eigen::MatrixXd dense() const
    {
        const auto n = static_cast<Eigen::Index>(size());
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                const Eigen::Index k = static_cast<Eigen::Index>(j) * nx + i;
                a(k, k) = diag[static_cast<std::size_t>(k)];
                if (i + 1 < nx) a(k, k + 1) = a(k + 1, k) = -cx[static_cast<std::size_t>(k)];
                if (j + 1 < ny) a(k, k + nx) = a(k + nx, k) = -cy[static_cast<std::size_t>(k)];
            }
        }
        return a;
    }
};

/// Galerkin coarsening P^T A P with P the 2x2 cell-aggregation (piecewise constant) prolongation.
/// Keeps the 5-point structure and the coefficient jumps of the fine operator.
inline Stencil5 aggregate(const Stencil5& f)
{
    Stencil5 c;
    c.nx = f.nx / 2;
    c.ny = f.ny / 2;
    c.diag.assign(c.size(), 0.0);
    c.cx.assign(c.size(), 0.0);
    c.cy.assign(c.size(), 0.0);
    auto at = [&](int i, int j) { return static_cast<std::size_t>(j) * f.nx + i; };
    for (int jc = 0; jc < c.ny; ++jc) {
        for (int ic = 0; ic < c.nx; ++ic) {
            const int i = 2 * ic;
            const int j = 2 * jc;
            const std::size_t k = static_cast<std::size_t>(jc) * c.nx + ic;
            const double inner = f.cx[at(i, j)] + f.cx[at(i, j + 1)] + f.cy[at(i, j)] + f.cy[at(i + 1, j)];
            c.diag[k] = f.diag[at(i, j)] + f.diag[at(i + 1, j)] + f.diag[at(i, j + 1)] +
                        f.diag[at(i + 1, j + 1)] - 2.0 * inner;
            if (ic + 1 < c.nx) c.cx[k] = f.cx[at(i + 1, j)] + f.cx[at(i + 1, j + 1)];
            if (jc + 1 < c.ny) c.cy[k] = f.cy[at(i, j + 1)] + f.cy[at(i + 1, j + 1)];
        }
    }
    return c;
}

struct SolverOptions {
    double relative_tolerance = 1e-10;
    int max_iterations = 500;
    int smoothing_sweeps = 2;
    /// Scaling of the aggregation coarse-grid correction.
    double coarse_correction_weight = 1.8;
    int coarsest_size = 4;
};

struct SolveReport {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

/// Conjugate gradients preconditioned by one symmetric multigrid V-cycle
/// (red-black Gauss-Seidel pre-smoothing, black-red post-smoothing, aggregation
/// coarse operators, dense Cholesky on the coarsest grid).
class MultigridPcg {
public:
    explicit MultigridPcg(Stencil5 fine, SolverOptions opts = {}) : opts_(opts)
    {
        levels_.push_back(std::move(fine));
        while (levels_.back().nx % 2 == 0 && levels_.back().ny % 2 == 0 &&
               levels_.back().nx > opts_.coarsest_size && levels_.back().ny > opts_.coarsest_size) {
            levels_.push_back(aggregate(levels_.back()));
        }
        coarsest_ = Eigen::LLT<Eigen::MatrixXd>(levels_.back().dense());
        require(coarsest_.info() == Eigen::Success, ErrorKind::Factorization,
                "coarsest multigrid operator is not positive definite");
        work_.resize(levels_.size());
        inv_diag_.resize(levels_.size());
        for (std::size_t l = 0; l < levels_.size(); ++l) {
            inv_diag_[l].resize(levels_[l].size());
            for (std::size_t k = 0; k < levels_[l].size(); ++k) inv_diag_[l][k] = 1.0 / levels_[l].diag[k];
            work_[l].x.assign(levels_[l].size(), 0.0);
            work_[l].b.assign(levels_[l].size(), 0.0);
            work_[l].r.assign(levels_[l].size(), 0.0);
        }
    }

    const Stencil5& matrix() const { return levels_.front(); }
    std::size_t depth() const { return levels_.size(); }

    /// Solves A x = b; x holds the initial guess on entry.
    SolveReport solve(std::span<const double> b, std::span<double> x)
    {
        const Stencil5& a = levels_.front();
        const std::size_t n = a.size();
        SolveReport rep;
        const double bnorm = norm(b);
        if (bnorm == 0.0) {
            std::fill(x.begin(), x.end(), 0.0);
            rep.converged = true;
            return rep;
        }
        std::vector<double> r(n), z(n), p(n), q(n);
        a.apply(x, r);
        for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - r[k];
        rep.relative_residual = norm(r) / bnorm;
        if (rep.relative_residual <= opts_.relative_tolerance) {
            rep.converged = true;
            return rep;
        }
        precondition(r, z);
        p = z;
        double rz = dot(r, z);
        for (int it = 1; it <= opts_.max_iterations; ++it) {
            a.apply(p, q);
            const double alpha = rz / dot(p, q);
            for (std::size_t k = 0; k < n; ++k) {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            rep.iterations = it;
            rep.relative_residual = norm(r) / bnorm;
            if (rep.relative_residual <= opts_.relative_tolerance) {
                rep.converged = true;
                return rep;
            }
            precondition(r, z);
            const double rz_new = dot(r, z);
            const double beta = rz_new / rz;
            rz = rz_new;
            for (std::size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
        }
        return rep;
    }

    /// z = M^{-1} r for one V-cycle.
    void precondition(std::span<const double> r, std::span<double> z)
    {
        std::copy(r.begin(), r.end(), work_[0].b.begin());
        vcycle(0);
        std::copy(work_[0].x.begin(), work_[0].x.end(), z.begin());
    }

private:
    struct Work {
        std::vector<double> x;
        std::vector<double> b;
        std::vector<double> r;
    };

    static double dot(std::span<const double> a, std::span<const double> b)
    {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
        return s;
    }
    static double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

    void vcycle(std::size_t l)
    {
        const Stencil5& a = levels_[l];
        Work& w = work_[l];
        if (l + 1 == levels_.size()) {
            Eigen::Map<const Eigen::VectorXd> b(w.b.data(), static_cast<Eigen::Index>(w.b.size()));
            Eigen::Map<Eigen::VectorXd>(w.x.data(), static_cast<Eigen::Index>(w.x.size())) =
                coarsest_.solve(b);
            return;
        }
        std::fill(w.x.begin(), w.x.end(), 0.0);
        for (int s = 0; s < opts_.smoothing_sweeps; ++s) gauss_seidel(a, inv_diag_[l], w.b, w.x, true);
        a.apply(w.x, w.r);
        for (std::size_t k = 0; k < w.r.size(); ++k) w.r[k] = w.b[k] - w.r[k];

        Work& c = work_[l + 1];
        const Stencil5& ac = levels_[l + 1];
        for (int jc = 0; jc < ac.ny; ++jc) {
            for (int ic = 0; ic < ac.nx; ++ic) {
                const std::size_t f = static_cast<std::size_t>(2 * jc) * a.nx + 2 * ic;
                c.b[static_cast<std::size_t>(jc) * ac.nx + ic] =
                    w.r[f] + w.r[f + 1] + w.r[f + a.nx] + w.r[f + a.nx + 1];
            }
        }
        vcycle(l + 1);
        const double omega = opts_.coarse_correction_weight;
        for (int jc = 0; jc < ac.ny; ++jc) {
            for (int ic = 0; ic < ac.nx; ++ic) {
                const double e = omega * c.x[static_cast<std::size_t>(jc) * ac.nx + ic];
                const std::size_t f = static_cast<std::size_t>(2 * jc) * a.nx + 2 * ic;
                w.x[f] += e;
                w.x[f + 1] += e;
                w.x[f + a.nx] += e;
                w.x[f + a.nx + 1] += e;
            }
        }
        for (int s = 0; s < opts_.smoothing_sweeps; ++s) gauss_seidel(a, inv_diag_[l], w.b, w.x, false);
    }

    /// Red-black Gauss-Seidel sweep; the backward sweep visits the colors in
    /// reverse order so that pre- and post-smoothing are adjoint.
    static void gauss_seidel(const Stencil5& a, const std::vector<double>& inv_diag,
                             std::span<const double> b, std::span<double> x, bool forward)
    {
        const int nx = a.nx;
        const int ny = a.ny;
        auto sweep_color = [&](int color) {
            for (int j = 0; j < ny; ++j) {
                const std::size_t row = static_cast<std::size_t>(j) * nx;
                for (int i = (j + color) % 2; i < nx; i += 2) {
                    const std::size_t k = row + i;
                    double s = b[k];
                    if (i > 0) s += a.cx[k - 1] * x[k - 1];
                    if (i + 1 < nx) s += a.cx[k] * x[k + 1];
                    if (j > 0) s += a.cy[k - nx] * x[k - nx];
                    if (j + 1 < ny) s += a.cy[k] * x[k + nx];
                    x[k] = s * inv_diag[k];
                }
            }
        };
        sweep_color(forward ? 0 : 1);
        sweep_color(forward ? 1 : 0);
    }

    SolverOptions opts_;
    std::vector<Stencil5> levels_;
    std::vector<Work> work_;
    std::vector<std::vector<double>> inv_diag_;
    Eigen::LLT<Eigen::MatrixXd> coarsest_;
};

} // namespace wipp
