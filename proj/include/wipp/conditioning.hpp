#pragma once

#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "wipp/covariance.hpp"
#include "wipp/error.hpp"
#include "wipp/fieldgen.hpp"
#include "wipp/grid.hpp"

namespace wipp {

/// Simple-kriging conditioning of a set of target nodes on observation data.
///
/// weights = R12 * R22^{-1} (targets x observations), obtained by solving
/// against the Cholesky factor of R22; conditional_mean = mu + weights (z - mu).
struct ConditioningOperator {
    Eigen::MatrixXd weights;
    Eigen::VectorXd conditional_mean;
    Eigen::VectorXd observed;
    double prior_mean = 0.0;

    Eigen::Index targets() const { return weights.rows(); }
    Eigen::Index observations() const { return weights.cols(); }
};

inline Eigen::LLT<Eigen::MatrixXd> factor_observation_covariance(const Eigen::MatrixXd& r22)
{
    Eigen::LLT<Eigen::MatrixXd> llt(r22);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
        fail(ErrorKind::Factorization,
             "observation covariance is not positive definite; duplicate or near-duplicate "
             "observation points");
    }
    return llt;
}

inline ConditioningOperator build_operator(const CovBlocks& blocks, std::span<const double> z2,
                                           const CovarianceParams& p)
{
    require(static_cast<Eigen::Index>(z2.size()) == blocks.r22.rows(), ErrorKind::InvalidArgument,
            "observation vector does not match R22");
    require(blocks.r12.cols() == blocks.r22.rows(), ErrorKind::InvalidArgument,
            "R12 and R22 disagree on the observation count");
    const auto llt = factor_observation_covariance(blocks.r22);

    ConditioningOperator op;
    op.prior_mean = p.mean;
    op.observed = Eigen::Map<const Eigen::VectorXd>(z2.data(), static_cast<Eigen::Index>(z2.size()));
    // R22 is symmetric, so P^T = R22^{-1} R12^T.
    op.weights = llt.solve(blocks.r12.transpose()).transpose();
    const Eigen::VectorXd innovation = op.observed.array() - p.mean;
    op.conditional_mean = (op.weights * innovation).array() + p.mean;
    return op;
}

/// Conditional variance diag(R11 - R12 R22^{-1} R21) at the operator's targets.
inline Eigen::VectorXd conditional_variance(const ConditioningOperator& op, const CovBlocks& blocks,
                                            const CovarianceParams& p)
{
    return (p.variance - (op.weights.array() * blocks.r12.array()).rowwise().sum()).matrix();
}

/// Applies z_target <- mean~ + (z_target - mu) - P (z_obs - mu) in place.
inline void apply_conditioning(std::span<double> target, std::span<const double> obs_values,
                               const ConditioningOperator& op)
{
    require(static_cast<Eigen::Index>(target.size()) == op.targets(), ErrorKind::InvalidArgument,
            "field view does not match the conditioning operator");
    require(static_cast<Eigen::Index>(obs_values.size()) == op.observations(),
            ErrorKind::InvalidArgument, "observation view does not match the conditioning operator");
    const Eigen::VectorXd obs0 =
        Eigen::Map<const Eigen::VectorXd>(obs_values.data(), op.observations()).array() -
        op.prior_mean;
    Eigen::Map<Eigen::VectorXd> z(target.data(), op.targets());
    z.array() += op.conditional_mean.array() - op.prior_mean;
    z.noalias() -= op.weights * obs0;
}

/// Operators for the three views of a level: fine cells, coarse cells and
/// observation nodes. All share the same observation set and data.
struct LevelConditioner {
    ConditioningOperator fine;
    ConditioningOperator coarse;
    ConditioningOperator obs;
};

inline std::vector<Point> fine_nodes(const LevelGrid& grid)
{
    const Lattice lat = grid.sampling();
    std::vector<Point> pts;
    pts.reserve(grid.cell_count());
    for (int j = 0; j < grid.cells(); ++j) {
        for (int i = 0; i < grid.cells(); ++i) pts.push_back(lat.node(grid.fine_node(i), grid.fine_node(j)));
    }
    return pts;
}

inline std::vector<Point> coarse_nodes(const LevelGrid& grid)
{
    const Lattice lat = grid.sampling();
    std::vector<Point> pts;
    if (!grid.has_coarse()) return pts;
    for (int j = 0; j < grid.coarse_cells(); ++j) {
        for (int i = 0; i < grid.coarse_cells(); ++i)
            pts.push_back(lat.node(grid.coarse_node(i), grid.coarse_node(j)));
    }
    return pts;
}

inline std::vector<Point> observation_nodes(const LevelGrid& grid, const ObservationSet& obs)
{
    const Lattice lat = grid.sampling();
    std::vector<Point> pts;
    pts.reserve(obs.size());
    for (std::size_t k = 0; k < obs.size(); ++k) {
        const auto node = obs.node_on(k, lat.cells);
        pts.push_back(lat.node(node[0], node[1]));
    }
    return pts;
}

inline LevelConditioner build_level_conditioner(const LevelGrid& grid, const ObservationSet& obs,
                                                const CovarianceParams& p)
{
    require(obs.is_snapped(), ErrorKind::InvalidArgument, "observations must be snapped");
    const auto z = obs.values();
    const auto obs_pts = observation_nodes(grid, obs);
    LevelConditioner lc;
    lc.fine = build_operator(assemble_obs_blocks(fine_nodes(grid), obs_pts, p), z, p);
    if (grid.has_coarse())
        lc.coarse = build_operator(assemble_obs_blocks(coarse_nodes(grid), obs_pts, p), z, p);
    lc.obs = build_operator(assemble_obs_blocks(obs_pts, obs_pts, p), z, p);
    return lc;
}

/// A realization with every view conditioned on the observations.
struct ConditionalSample {
    FieldSample field;
    bool antithetic = false;
};

inline ConditionalSample condition(const FieldSample& sample, const LevelConditioner& lc)
{
    ConditionalSample out{sample, false};
    apply_conditioning(out.field.fine, sample.obs, lc.fine);
    if (!out.field.coarse.empty()) apply_conditioning(out.field.coarse, sample.obs, lc.coarse);
    apply_conditioning(out.field.obs, sample.obs, lc.obs);
    return out;
}

namespace detail {

inline void reflect(std::vector<double>& values, const Eigen::VectorXd& center)
{
    for (std::size_t k = 0; k < values.size(); ++k)
        values[k] = 2.0 * center[static_cast<Eigen::Index>(k)] - values[k];
}

inline void reflect(std::vector<double>& values, double center)
{
    for (double& v : values) v = 2.0 * center - v;
}

} // namespace detail

/// Antithetic partner 2*mean~ - Z_C: the kriging error changes sign, the
/// conditional mean stays. Applying it twice returns the original sample.
inline ConditionalSample antithetic(const ConditionalSample& sample, const LevelConditioner& lc)
{
    ConditionalSample out = sample;
    detail::reflect(out.field.fine, lc.fine.conditional_mean);
    if (!out.field.coarse.empty()) detail::reflect(out.field.coarse, lc.coarse.conditional_mean);
    detail::reflect(out.field.obs, lc.obs.conditional_mean);
    out.antithetic = !sample.antithetic;
    return out;
}

/// Antithetic partner of an unconditional realization: reflection about the prior mean.
inline FieldSample antithetic_unconditional(const FieldSample& sample, double mean)
{
    FieldSample out = sample;
    detail::reflect(out.fine, mean);
    detail::reflect(out.coarse, mean);
    detail::reflect(out.obs, mean);
    return out;
}

} // namespace wipp
