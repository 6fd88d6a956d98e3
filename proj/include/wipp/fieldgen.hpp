#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include <boost/random/normal_distribution.hpp>
#include <fftw3.h>

#include "wipp/covariance.hpp"
#include "wipp/error.hpp"
#include "wipp/grid.hpp"
#include "wipp/rng.hpp"

namespace wipp {

namespace detail {

// FFTW's planner is not re-entrant; execution with new arrays is.
inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

struct FftwBufferDeleter {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwBufferDeleter>;

inline FftwBuffer make_fftw_buffer(std::size_t n)
{
    auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (p == nullptr) throw std::bad_alloc();
    return FftwBuffer(p);
}

/// In-place 2-D complex transform plan (x fastest). FFTW_ESTIMATE keeps the
/// chosen algorithm, and therefore the rounding, identical between runs.
class Fft2d {
public:
    Fft2d(int nx, int ny, int sign) : nx_(nx), ny_(ny)
    {
        auto scratch = make_fftw_buffer(size());
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        plan_ = fftw_plan_dft_2d(ny, nx, scratch.get(), scratch.get(), sign, FFTW_ESTIMATE);
        if (plan_ == nullptr) throw std::runtime_error("fftw planning failed");
    }
    Fft2d(const Fft2d&) = delete;
    Fft2d& operator=(const Fft2d&) = delete;
    ~Fft2d()
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
    }

    std::size_t size() const { return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_); }

    void execute(fftw_complex* data) const { fftw_execute_dft(plan_, data, data); }

private:
    int nx_;
    int ny_;
    fftw_plan plan_ = nullptr;
};

inline bool is_smooth_size(int n)
{
    for (int f : {2, 3, 5, 7}) {
        while (n % f == 0) n /= f;
    }
    return n == 1;
}

/// Smallest even FFT-friendly length >= n.
inline int embedding_length(int n)
{
    int m = std::max(n, 2);
    if (m % 2 != 0) ++m;
    while (!is_smooth_size(m)) m += 2;
    return m;
}

} // namespace detail

/// Lag coordinate used to fill the embedding row. Lags inside the lattice
/// (u <= extent) are kept exactly; lags in the gap up to the half period are
/// folded back with zero slope at the half period, so the periodic extension
/// is C^1 there instead of kinked.
inline double folded_lag(double u, double extent, double half_period)
{
    if (u <= extent) return u;
    const double width = half_period - extent;
    const double s = (u - extent) / width;
    return extent + width * (s - 0.5 * s * s);
}

/// Eigenvalues of the nonnegative-definite block-circulant extension of the
/// covariance of an nx x ny node lattice with spacings (dx, dy).
struct CirculantSpectrum {
    int nx = 0;
    int ny = 0;
    double dx = 0.0;
    double dy = 0.0;
    int mx = 0;
    int my = 0;
    int padding_rounds = 0;
    double padding_factor = 1.0;
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    double max_imag_residue = 0.0;
    std::vector<double> eigenvalues;  // clamped to >= 0, x fastest
    std::vector<double> amplitude;    // sqrt(eigenvalue / (mx * my))
    std::shared_ptr<const detail::Fft2d> transform;

    std::size_t embedding_size() const
    {
        return static_cast<std::size_t>(mx) * static_cast<std::size_t>(my);
    }
    std::size_t lattice_size() const
    {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    }

    /// First row of the circulant covariance implied by the clamped spectrum.
    /// Entry (a, b) is the covariance between nodes separated by (a*dx, b*dy)
    /// for a < nx, b < ny.
    std::vector<double> implied_covariance_row() const
    {
        auto buf = detail::make_fftw_buffer(embedding_size());
        for (std::size_t k = 0; k < embedding_size(); ++k) {
            buf[k][0] = eigenvalues[k];
            buf[k][1] = 0.0;
        }
        detail::Fft2d inverse(mx, my, FFTW_BACKWARD);
        inverse.execute(buf.get());
        std::vector<double> row(embedding_size());
        const double scale = 1.0 / static_cast<double>(embedding_size());
        for (std::size_t k = 0; k < row.size(); ++k) row[k] = buf[k][0] * scale;
        return row;
    }
};

inline constexpr double kEigenvalueTolerance = 1e-12;
inline constexpr int kMaxPaddingRounds = 12;
inline constexpr double kPaddingGrowth = 1.25;

namespace detail {

inline int padded_length(int n, int round)
{
    if (n == 1) return 1;
    return embedding_length(static_cast<int>(std::ceil(2.0 * n * std::pow(kPaddingGrowth, round))));
}

} // namespace detail

/// Builds the circulant spectrum for an nx x ny lattice. The embedding starts
/// at the smallest FFT-friendly even length >= 2n per direction and grows by
/// kPaddingGrowth while eigenvalues below -tol * max_eigenvalue remain.
inline CirculantSpectrum build_spectrum(int nx, int ny, double dx, double dy,
                                        const CovarianceParams& p,
                                        int max_rounds = kMaxPaddingRounds,
                                        double tol = kEigenvalueTolerance)
{
    require(nx >= 1 && ny >= 1, ErrorKind::InvalidArgument, "lattice must have at least one node");
    p.validate();

    CirculantSpectrum s;
    s.nx = nx;
    s.ny = ny;
    s.dx = dx;
    s.dy = dy;
    const double extent_x = (nx - 1) * dx;
    const double extent_y = (ny - 1) * dy;

    for (int round = 0;; ++round) {
        s.mx = detail::padded_length(nx, round);
        s.my = detail::padded_length(ny, round);
        const std::size_t total = s.embedding_size();
        const double half_x = 0.5 * s.mx * dx;
        const double half_y = 0.5 * s.my * dy;
        auto buf = detail::make_fftw_buffer(total);
        for (int b = 0; b < s.my; ++b) {
            const double ry = folded_lag(std::min(b, s.my - b) * dy, extent_y, half_y);
            for (int a = 0; a < s.mx; ++a) {
                const double rx = folded_lag(std::min(a, s.mx - a) * dx, extent_x, half_x);
                const std::size_t k = static_cast<std::size_t>(b) * s.mx + a;
                buf[k][0] = covariance_at_distance(std::hypot(rx, ry), p);
                buf[k][1] = 0.0;
            }
        }
        auto forward = std::make_shared<const detail::Fft2d>(s.mx, s.my, FFTW_FORWARD);
        forward->execute(buf.get());

        double lo = buf[0][0];
        double hi = buf[0][0];
        double imag = 0.0;
        for (std::size_t k = 0; k < total; ++k) {
            lo = std::min(lo, buf[k][0]);
            hi = std::max(hi, buf[k][0]);
            imag = std::max(imag, std::abs(buf[k][1]));
        }
        s.min_eigenvalue = lo;
        s.max_eigenvalue = hi;
        s.max_imag_residue = hi > 0.0 ? imag / hi : imag;
        s.padding_rounds = round;
        s.padding_factor = nx > 1 ? static_cast<double>(s.mx) / nx : 1.0;

        if (lo >= -tol * hi) {
            require(s.max_imag_residue <= 1e-10, ErrorKind::EmbeddingNotPD,
                    "circulant eigenvalues are not real");
            s.eigenvalues.resize(total);
            s.amplitude.resize(total);
            const double inv_total = 1.0 / static_cast<double>(total);
            for (std::size_t k = 0; k < total; ++k) {
                s.eigenvalues[k] = std::max(buf[k][0], 0.0);
                s.amplitude[k] = std::sqrt(s.eigenvalues[k] * inv_total);
            }
            s.transform = std::move(forward);
            return s;
        }
        if (round >= max_rounds) {
            fail(ErrorKind::EmbeddingNotPD,
                 "circulant embedding still indefinite after " + std::to_string(max_rounds) +
                     " padding rounds; minimum eigenvalue " + std::to_string(lo));
        }
    }
}

inline CirculantSpectrum build_spectrum(const Lattice& lattice, const CovarianceParams& p)
{
    return build_spectrum(lattice.nodes_per_dir(), lattice.nodes_per_dir(), lattice.dx, lattice.dy, p);
}

/// Draws zero-mean realizations on the spectrum's lattice. One complex draw
/// gives two independent real fields; the imaginary part is queued and
/// returned by the next call. Owns its transform workspace, so each worker
/// needs its own stream.
class FieldStream {
public:
    FieldStream(std::shared_ptr<const CirculantSpectrum> spectrum, std::uint64_t id)
        : spectrum_(std::move(spectrum)),
          id_(id),
          engine_(make_engine(id)),
          work_(detail::make_fftw_buffer(spectrum_->embedding_size()))
    {
    }

    std::uint64_t id() const { return id_; }

    /// Next realization of the zero-mean field, x fastest, nx * ny values.
    std::vector<double> next()
    {
        if (queued_) {
            std::vector<double> out = std::move(*queued_);
            queued_.reset();
            return out;
        }
        draw();
        std::vector<double> first(spectrum_->lattice_size());
        std::vector<double> second(spectrum_->lattice_size());
        const auto& s = *spectrum_;
        for (int b = 0; b < s.ny; ++b) {
            for (int a = 0; a < s.nx; ++a) {
                const std::size_t k = static_cast<std::size_t>(b) * s.mx + a;
                const std::size_t o = static_cast<std::size_t>(b) * s.nx + a;
                first[o] = work_[k][0];
                second[o] = work_[k][1];
            }
        }
        queued_ = std::move(second);
        return first;
    }

private:
    void draw()
    {
        boost::random::normal_distribution<double> normal(0.0, 1.0);
        const auto& s = *spectrum_;
        const std::size_t total = s.embedding_size();
        for (std::size_t k = 0; k < total; ++k) {
            const double re = normal(engine_);
            const double im = normal(engine_);
            work_[k][0] = s.amplitude[k] * re;
            work_[k][1] = s.amplitude[k] * im;
        }
        s.transform->execute(work_.get());
    }

    std::shared_ptr<const CirculantSpectrum> spectrum_;
    std::uint64_t id_;
    RandomEngine engine_;
    detail::FftwBuffer work_;
    std::optional<std::vector<double>> queued_;
};

/// One realization restricted to the nodes a level needs. All views come
/// from the same lattice realization.
struct FieldSample {
    std::vector<double> fine;
    std::vector<double> coarse;
    std::vector<double> obs;
    std::uint64_t stream_id = 0;
};

/// Restricts lattice values (sampling lattice of `grid`, x fastest) to fine
/// cell centers, coarse cell centers (levels > 0) and observation nodes.
inline FieldSample extract_views(std::span<const double> lattice_values, const LevelGrid& grid,
                                 const ObservationSet* obs = nullptr)
{
    const Lattice lat = grid.sampling();
    require(lattice_values.size() == lat.size(), ErrorKind::InvalidArgument,
            "lattice values do not cover the sampling lattice");
    FieldSample out;
    const int n = grid.cells();
    out.fine.resize(grid.cell_count());
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            out.fine[static_cast<std::size_t>(j) * n + i] =
                lattice_values[lat.offset(grid.fine_node(i), grid.fine_node(j))];
        }
    }
    if (grid.has_coarse()) {
        const int nc = grid.coarse_cells();
        out.coarse.resize(static_cast<std::size_t>(nc) * nc);
        for (int j = 0; j < nc; ++j) {
            for (int i = 0; i < nc; ++i) {
                out.coarse[static_cast<std::size_t>(j) * nc + i] =
                    lattice_values[lat.offset(grid.coarse_node(i), grid.coarse_node(j))];
            }
        }
    }
    if (obs != nullptr && obs->is_snapped()) {
        out.obs.reserve(obs->size());
        for (std::size_t k = 0; k < obs->size(); ++k) {
            const auto node = obs->node_on(k, lat.cells);
            require(node[0] >= 1 && node[0] <= lat.nodes_per_dir() && node[1] >= 1 &&
                        node[1] <= lat.nodes_per_dir(),
                    ErrorKind::Range, "observation node outside the sampling lattice");
            out.obs.push_back(lattice_values[lat.offset(node[0], node[1])]);
        }
    }
    return out;
}

/// Adds the constant mean and extracts the level views.
inline FieldSample sample_unconditional(FieldStream& stream, const LevelGrid& grid,
                                        const ObservationSet* obs, double mean)
{
    std::vector<double> z = stream.next();
    for (double& v : z) v += mean;
    FieldSample s = extract_views(z, grid, obs);
    s.stream_id = stream.id();
    return s;
}

} // namespace wipp
