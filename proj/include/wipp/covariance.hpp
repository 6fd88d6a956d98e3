#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "wipp/error.hpp"
#include "wipp/grid.hpp"

namespace wipp {

/// Stationary log10-transmissivity prior: constant mean and isotropic
/// exponential covariance.
struct CovarianceParams {
    double mean = -4.934;
    double variance = 6.4791;
    double correlation_length = 12390.0;

    void validate() const
    {
        require(std::isfinite(mean), ErrorKind::Range, "mean must be finite");
        require(variance > 0.0 && std::isfinite(variance), ErrorKind::Range, "sigma2 must be > 0");
        require(correlation_length > 0.0 && std::isfinite(correlation_length), ErrorKind::Range,
                "lambda must be > 0");
    }
};

inline double covariance_at_distance(double r, const CovarianceParams& p)
{
    return p.variance * std::exp(-r / p.correlation_length);
}

inline double kernel(Point a, Point b, const CovarianceParams& p)
{
    return covariance_at_distance(distance(a, b), p);
}

/// Dense kernel matrices are reserved for small oracle problems.
inline constexpr std::size_t kDenseCovarianceCap = 64 * 64;

/// Covariance blocks between target nodes (1) and observation nodes (2).
/// R11 is never stored; use dense_covariance() for small oracle grids.
struct CovBlocks {
    Eigen::MatrixXd r12;
    Eigen::MatrixXd r22;
};

inline Eigen::MatrixXd cross_covariance(std::span<const Point> rows, std::span<const Point> cols,
                                        const CovarianceParams& p)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            m(i, j) = kernel(rows[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)], p);
        }
    }
    return m;
}

inline Eigen::MatrixXd dense_covariance(std::span<const Point> nodes, const CovarianceParams& p)
{
    require(nodes.size() <= kDenseCovarianceCap, ErrorKind::InvalidArgument,
            "dense covariance requested for more than 64x64 nodes");
    return cross_covariance(nodes, nodes, p);
}

inline CovBlocks assemble_obs_blocks(std::span<const Point> targets,
                                     std::span<const Point> observations,
                                     const CovarianceParams& p)
{
    require(!observations.empty(), ErrorKind::InvalidArgument, "no observation nodes");
    CovBlocks blocks;
    blocks.r12 = cross_covariance(targets, observations, p);
    blocks.r22 = cross_covariance(observations, observations, p);
    return blocks;
}

} // namespace wipp
