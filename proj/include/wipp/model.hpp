#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "wipp/conditioning.hpp"
#include "wipp/covariance.hpp"
#include "wipp/error.hpp"
#include "wipp/fieldgen.hpp"
#include "wipp/flow.hpp"
#include "wipp/grid.hpp"
#include "wipp/mlmc.hpp"
#include "wipp/rng.hpp"
#include "wipp/transport.hpp"

namespace wipp {

/// Everything needed to turn a random draw into a travel-time sample.
struct ModelOptions {
    DomainSpec domain;
    CovarianceParams cov;
    BoundaryHead head;
    FaceAveraging averaging = FaceAveraging::Harmonic;
    double thickness = 8.0;
    double porosity = 0.16;
    double max_time = 1e25;
    /// Cells per direction on level 0.
    int n0 = 32;
    int max_level = kDefaultMaxLevel;
    /// Cell count whose aux lattice carries the observation nodes.
    int snap_cells = 128;
    bool conditional = true;
    bool antithetic = false;
    SolverOptions solver;
    std::uint64_t seed = 1;

    void validate() const
    {
        domain.validate();
        cov.validate();
        head.validate();
        require(thickness > 0.0 && porosity > 0.0 && porosity <= 1.0, ErrorKind::Range,
                "thickness must be > 0 and porosity in (0, 1]");
        require(max_time > 0.0, ErrorKind::Range, "max_time must be > 0");
        require(n0 >= 2, ErrorKind::Range, "n0 must be >= 2");
        require(max_level >= 0, ErrorKind::Range, "max_level must be >= 0");
    }
};

/// Per-level immutable state shared by all workers.
struct LevelResources {
    LevelGrid fine;
    LevelGrid coarse;
    std::shared_ptr<const CirculantSpectrum> spectrum;
    LevelConditioner conditioner;
};

/// Travel-time sampler for the WIPP problem: draws a (conditioned) log10 T
/// field on the level's sampling lattice, solves flow on the fine and coarse
/// grids from the same realization and tracks a particle from the release point.
class WippModel {
public:
    WippModel(ModelOptions opts, ObservationSet observations)
        : opts_(std::move(opts)), levels_(static_cast<std::size_t>(opts_.max_level) + 1)
    {
        opts_.validate();
        if (opts_.conditional) {
            require(!observations.records.empty(), ErrorKind::EmptyDataset,
                    "conditional sampling needs observations");
            const int snap = opts_.snap_cells;
            require(snap >= opts_.n0, ErrorKind::InvalidArgument, "snap_cells must be >= n0");
            int snap_level = 0;
            while ((opts_.n0 << snap_level) < snap) ++snap_level;
            require((opts_.n0 << snap_level) == snap, ErrorKind::InvalidArgument,
                    "snap_cells must equal n0 * 2^p");
            const LevelGrid g = build_level_grid(opts_.domain, snap_level, opts_.n0, 30);
            obs_ = snap_observations(std::move(observations), g);
        }
        for (auto& slot : levels_) slot = std::make_unique<Slot>();
    }

    const ModelOptions& options() const { return opts_; }
    const ObservationSet& observations() const { return obs_; }
    int max_level() const { return opts_.max_level; }
    int cells(int level) const { return opts_.n0 << level; }

    /// Samples per block: one complex FFT draw yields two fields.
    static constexpr std::uint64_t kBlock = 2;

    /// Standardized work per sample, M_l = N_l^2 (doubled for antithetic pairs).
    double standard_cost(int level) const
    {
        const double m = static_cast<double>(cells(level)) * cells(level);
        return opts_.antithetic ? 2.0 * m : m;
    }

    const LevelResources& resources(int level) const
    {
        require(level >= 0 && level <= opts_.max_level, ErrorKind::LevelCap,
                "level " + std::to_string(level) + " exceeds the maximum level " +
                    std::to_string(opts_.max_level));
        Slot& s = *levels_[static_cast<std::size_t>(level)];
        std::call_once(s.once, [&] { s.res = build_resources(level); });
        return *s.res;
    }

    /// Log10 T realization for sample `index` on `level` (before conditioning
    /// when the model is unconditional). Sample 2k and 2k+1 share one FFT draw.
    FieldSample draw(int level, std::uint64_t index) const
    {
        const LevelResources& r = resources(level);
        FieldStream stream(r.spectrum, stream_id(opts_.seed, level, index / kBlock));
        if (index % kBlock == 1) stream.next();
        return field_from(stream, r);
    }

    /// Conditioned (or, for unconditional models, plain) field views.
    ConditionalSample realization(int level, std::uint64_t index) const
    {
        const LevelResources& r = resources(level);
        FieldStream stream(r.spectrum, stream_id(opts_.seed, level, index / kBlock));
        if (index % kBlock == 1) stream.next();
        return realization_from(stream, r);
    }

    /// Samples [first, first + count) on `level`, in index order. With
    /// `fine_only` the coarse solve is skipped and y = q (plain MC on one level).
    std::vector<SampleResult> sample_block(int level, std::uint64_t first, std::uint64_t count,
                                           bool fine_only = false) const
    {
        const LevelResources& r = resources(level);
        std::vector<SampleResult> out;
        out.reserve(count);
        std::unique_ptr<FieldStream> stream;
        std::uint64_t draw_index = ~std::uint64_t{0};
        for (std::uint64_t i = first; i < first + count; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            SampleResult s;
            try {
                if (!stream || i / kBlock != draw_index) {
                    draw_index = i / kBlock;
                    stream = std::make_unique<FieldStream>(r.spectrum,
                                                           stream_id(opts_.seed, level, draw_index));
                    if (i % kBlock == 1) stream->next();
                }
                const ConditionalSample z = realization_from(*stream, r);
                s = evaluate(fine_only ? 0 : level, r, z);
            } catch (const Error& e) {
                s.ok = false;
                s.failure = e.what();
            }
            s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            out.push_back(std::move(s));
        }
        return out;
    }

    /// Travel time on `grid` for one log10 T field.
    TravelTimeResult travel_time(const LevelGrid& grid, std::span<const double> log10_t,
                                 int* iterations = nullptr, bool record_path = false) const
    {
        const FlowSystem sys = assemble(grid, log10_t, BoundaryFunction(opts_.head), opts_.averaging);
        const HeadSolution h = solve(sys, opts_.solver);
        if (iterations != nullptr) *iterations += h.iterations;
        TrackOptions t = TrackOptions::for_domain(opts_.domain);
        t.thickness = opts_.thickness;
        t.porosity = opts_.porosity;
        t.max_time = opts_.max_time;
        t.record_path = record_path;
        return Tracker(h, grid, t).track(opts_.domain.release_point());
    }

private:
    struct Slot {
        std::once_flag once;
        std::unique_ptr<LevelResources> res;
    };

    std::unique_ptr<LevelResources> build_resources(int level) const
    {
        auto r = std::make_unique<LevelResources>();
        const int snap = opts_.conditional ? opts_.snap_cells : 0;
        r->fine = build_level_grid(opts_.domain, level, opts_.n0, opts_.max_level, snap);
        if (level > 0) r->coarse = build_level_grid(opts_.domain, level - 1, opts_.n0, opts_.max_level, snap);
        r->spectrum = std::make_shared<const CirculantSpectrum>(build_spectrum(r->fine.sampling(), opts_.cov));
        if (opts_.conditional) r->conditioner = build_level_conditioner(r->fine, obs_, opts_.cov);
        return r;
    }

    ConditionalSample realization_from(FieldStream& stream, const LevelResources& r) const
    {
        FieldSample f = field_from(stream, r);
        if (opts_.conditional) return condition(f, r.conditioner);
        return ConditionalSample{std::move(f), false};
    }

    FieldSample field_from(FieldStream& stream, const LevelResources& r) const
    {
        return sample_unconditional(stream, r.fine, opts_.conditional ? &obs_ : nullptr, opts_.cov.mean);
    }

    ConditionalSample partner(const ConditionalSample& z, const LevelResources& r) const
    {
        if (opts_.conditional) return antithetic(z, r.conditioner);
        ConditionalSample out{antithetic_unconditional(z.field, opts_.cov.mean), !z.antithetic};
        return out;
    }

    /// Q on the fine grid and, above level 0, on the coarse grid.
    std::pair<double, double> fine_and_coarse(int level, const LevelResources& r,
                                              const ConditionalSample& z, int& iterations) const
    {
        const double qf = quantity_of_interest(travel_time(r.fine, z.field.fine, &iterations));
        const double qc =
            level > 0 ? quantity_of_interest(travel_time(r.coarse, z.field.coarse, &iterations)) : 0.0;
        return {qf, qc};
    }

    SampleResult evaluate(int level, const LevelResources& r, const ConditionalSample& z) const
    {
        SampleResult s;
        const auto [qf, qc] = fine_and_coarse(level, r, z, s.solver_iterations);
        if (!opts_.antithetic) {
            s.q = qf;
            s.q_coarse = qc;
            s.y = level > 0 ? qf - qc : qf;
            return s;
        }
        const ConditionalSample zm = partner(z, r);
        const auto [qfm, qcm] = fine_and_coarse(level, r, zm, s.solver_iterations);
        s.paired = true;
        s.q_plus = qf;
        s.q_minus = qfm;
        s.y_plus = level > 0 ? qf - qc : qf;
        s.y_minus = level > 0 ? qfm - qcm : qfm;
        s.q = 0.5 * (qf + qfm);
        s.q_coarse = 0.5 * (qc + qcm);
        s.y = 0.5 * (s.y_plus + s.y_minus);
        return s;
    }

    ModelOptions opts_;
    ObservationSet obs_;
    std::vector<std::unique_ptr<Slot>> levels_;
};

} // namespace wipp
