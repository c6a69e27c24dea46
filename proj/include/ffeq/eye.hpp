#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "ffeq/error.hpp"
#include "ffeq/signal.hpp"
#include "ffeq/waveform.hpp"

namespace ffeq {

/// Overlapping 2-UI slices of a received waveform. Trace k is centred on the
/// nominal sampling instant of one transmitted bit (`labels[k]`), so column
/// `oversample` is that bit's sampling point and the other columns are
/// earlier/later sampling phases relative to the same bit.
struct EyeRaster {
    double window = 0.0;         // 2 UI
    double dt = 0.0;
    int oversample = 0;
    double center_lag = 0.0;     // bit start to window centre, seconds
    std::size_t n_traces = 0;
    std::vector<double> traces;  // row-major, n_traces x 2*oversample
    std::vector<std::uint8_t> labels;

    std::size_t samples_per_window() const noexcept { return 2 * static_cast<std::size_t>(oversample); }

    std::span<const double> trace(std::size_t k) const
    {
        return {traces.data() + k * samples_per_window(), samples_per_window()};
    }

    /// Adds one trace; used to assemble rasters from other sources.
    void append(std::span<const double> samples, std::uint8_t label)
    {
        if (samples.size() != samples_per_window())
            throw Error(ErrorCode::Shape, "trace length must be 2 * oversample");
        traces.insert(traces.end(), samples.begin(), samples.end());
        labels.push_back(label);
        ++n_traces;
    }
};

struct EyeMetrics {
    double height = 0.0;        // V
    double width = 0.0;         // s
    double sample_phase = 0.0;  // s within [0, UI)

    bool operator==(const EyeMetrics&) const = default;
};

inline constexpr std::size_t min_eye_traces = 16;

namespace detail {

inline std::ptrdiff_t bit_zero_index(const Waveform& w)
{
    return static_cast<std::ptrdiff_t>(std::llround(-w.t0 / w.dt));
}

// Samples past the last transmitted bit slot carry the channel's decay tail
// rather than data, so eye windows stop there.
inline std::ptrdiff_t steady_limit(const Waveform& w, std::size_t n_bits, std::ptrdiff_t os)
{
    return std::min(static_cast<std::ptrdiff_t>(w.size()),
                    bit_zero_index(w) + static_cast<std::ptrdiff_t>(n_bits) * os);
}

// Index of the largest value; on an exact plateau, the plateau's midpoint.
inline std::size_t plateau_argmax(std::span<const double> v)
{
    std::size_t best = 0;
    for (std::size_t c = 1; c < v.size(); ++c)
        if (v[c] > v[best])
            best = c;
    std::size_t end = best;
    while (end + 1 < v.size() && v[end + 1] == v[best])
        ++end;
    return best + (end - best) / 2;
}

} // namespace detail

/// Sample offset from bit start at which the received signal correlates best
/// with the transmitted symbols, searched over [0, max_lag_ui] UI.
inline std::size_t estimate_lag(const Waveform& w, std::span<const std::uint8_t> bits, const DataRateSettings& rate,
                                std::size_t discard, std::size_t max_lag_ui = 64)
{
    const auto os = static_cast<std::ptrdiff_t>(rate.oversample);
    const std::ptrdiff_t base = detail::bit_zero_index(w);
    const std::ptrdiff_t limit = detail::steady_limit(w, bits.size(), os);
    const auto first = static_cast<std::ptrdiff_t>(discard);
    const auto min_traces = static_cast<std::ptrdiff_t>(min_eye_traces);

    // One bit range serves every lag so the scores are comparable.
    const std::ptrdiff_t lag_limit =
        std::min(static_cast<std::ptrdiff_t>(max_lag_ui) * os, limit - base - (first + min_traces) * os - os);
    if (lag_limit < 0)
        throw Error(ErrorCode::Length, "waveform too short to align");
    const std::ptrdiff_t last =
        std::min(static_cast<std::ptrdiff_t>(bits.size()), (limit - base - lag_limit - os) / os + 1);

    std::size_t best_lag = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::ptrdiff_t lag = 0; lag <= lag_limit; ++lag) {
        double score = 0.0;
        for (std::ptrdiff_t k = first; k < last; ++k) {
            const std::ptrdiff_t idx = base + k * os + lag;
            if (idx < 0)
                continue;
            const double v = w.samples[static_cast<std::size_t>(idx)];
            score += bits[static_cast<std::size_t>(k)] ? v : -v;
        }
        if (score > best) {
            best = score;
            best_lag = static_cast<std::size_t>(lag);
        }
    }
    return best_lag;
}

/// Folds `w` into 2-UI traces centred on each bit's sampling instant at sample
/// offset `lag` from the bit start. The first `discard` UI are dropped, and only
/// windows that end before the last transmitted bit's slot are kept.
inline EyeRaster fold_at(const Waveform& w, std::span<const std::uint8_t> bits, const DataRateSettings& rate,
                         std::size_t discard, std::size_t lag)
{
    w.validate();
    rate.validate();
    const auto os = static_cast<std::ptrdiff_t>(rate.oversample);
    const std::ptrdiff_t base = detail::bit_zero_index(w);
    const std::ptrdiff_t limit = detail::steady_limit(w, bits.size(), os);

    EyeRaster raster;
    raster.window = 2.0 * rate.ui;
    raster.dt = w.dt;
    raster.oversample = rate.oversample;
    raster.center_lag = static_cast<double>(lag) * w.dt;
    for (std::size_t k = discard; k < bits.size(); ++k) {
        const std::ptrdiff_t start = base + static_cast<std::ptrdiff_t>(k) * os + static_cast<std::ptrdiff_t>(lag) - os;
        if (start < 0)
            continue;
        if (start + 2 * os > limit)
            break;
        raster.append({w.samples.data() + start, static_cast<std::size_t>(2 * os)}, bits[k]);
    }
    return raster;
}

/// Vertical opening per column: lowest '1' trace minus highest '0' trace.
inline std::vector<double> opening_profile(const EyeRaster& raster)
{
    if (raster.n_traces < min_eye_traces)
        throw Error(ErrorCode::InsufficientData, "eye needs at least 16 traces");
    const std::size_t cols = raster.samples_per_window();
    std::vector<double> lo1(cols, std::numeric_limits<double>::infinity());
    std::vector<double> hi0(cols, -std::numeric_limits<double>::infinity());
    bool any1 = false, any0 = false;
    for (std::size_t k = 0; k < raster.n_traces; ++k) {
        const auto tr = raster.trace(k);
        if (raster.labels[k]) {
            any1 = true;
            for (std::size_t c = 0; c < cols; ++c)
                lo1[c] = std::min(lo1[c], tr[c]);
        } else {
            any0 = true;
            for (std::size_t c = 0; c < cols; ++c)
                hi0[c] = std::max(hi0[c], tr[c]);
        }
    }
    if (!any1 || !any0)
        throw Error(ErrorCode::InsufficientTransitions, "eye needs both symbol values");
    std::vector<double> opening(cols);
    for (std::size_t c = 0; c < cols; ++c)
        opening[c] = lo1[c] - hi0[c];
    return opening;
}

/// Eye construction with automatic bit alignment: a correlation search finds
/// the main cursor, then the window is re-centred on the widest opening so the
/// whole eye lies inside it.
inline EyeRaster fold(const Waveform& w, std::span<const std::uint8_t> bits, const DataRateSettings& rate,
                      std::size_t discard)
{
    w.validate();
    rate.validate();
    const auto needed = (discard + min_eye_traces) * static_cast<std::size_t>(rate.oversample);
    if (w.size() < needed || bits.size() < discard + min_eye_traces)
        throw Error(ErrorCode::Length, "waveform shorter than (discard + 16) UI");
    const std::size_t coarse = estimate_lag(w, bits, rate, discard);
    const EyeRaster first = fold_at(w, bits, rate, discard, coarse);
    const auto profile = opening_profile(first);
    const auto shift = static_cast<std::ptrdiff_t>(detail::plateau_argmax(profile)) - rate.oversample;
    const auto lag = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(coarse) + shift);
    return fold_at(w, bits, rate, discard, static_cast<std::size_t>(lag));
}

/// Worst-case eye height and width. Height is the largest vertical opening over
/// sampling phases; width is the longest run of open phases, capped at one UI.
inline EyeMetrics metrics(const EyeRaster& raster, const DataRateSettings& rate)
{
    const auto opening = opening_profile(raster);
    const std::size_t cols = opening.size();
    const std::size_t best_col = detail::plateau_argmax(opening);

    std::size_t run = 0, longest = 0;
    for (std::size_t c = 0; c < cols; ++c) {
        run = opening[c] > 0.0 ? run + 1 : 0;
        longest = std::max(longest, run);
    }
    longest = std::min(longest, static_cast<std::size_t>(raster.oversample));

    EyeMetrics m;
    if (opening[best_col] > 0.0) {
        m.height = opening[best_col];
        m.width = static_cast<double>(longest) * raster.dt;
    }
    const double t = raster.center_lag + (static_cast<double>(best_col) - raster.oversample) * raster.dt;
    m.sample_phase = t - std::floor(t / rate.ui) * rate.ui;
    if (m.sample_phase >= rate.ui)
        m.sample_phase = 0.0;
    return m;
}

/// One trace per row.
inline void write_csv(std::ostream& os, const EyeRaster& raster)
{
    os.precision(17);
    for (std::size_t k = 0; k < raster.n_traces; ++k) {
        const auto tr = raster.trace(k);
        for (std::size_t c = 0; c < tr.size(); ++c)
            os << (c ? "," : "") << tr[c];
        os << '\n';
    }
}

} // namespace ffeq
