#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "ffeq/channel.hpp"
#include "ffeq/error.hpp"
#include "ffeq/signal.hpp"
#include "ffeq/waveform.hpp"

namespace ffeq {

/// FIR pre-emphasis taps. `weights[0]` fires at t = 0 and tap i > 0 fires after
/// the cumulative delay delays[0] + ... + delays[i-1]. Weights are signed; a
/// negative weight drives inverted data.
struct TapConfig {
    std::vector<double> weights{1.0};
    std::vector<double> delays;  // seconds, one per tap after the first

    std::size_t tap_count() const noexcept { return weights.size(); }

    void validate() const
    {
        if (weights.empty())
            throw Error(ErrorCode::Configuration, "tap configuration needs at least one weight");
        if (delays.size() + 1 != weights.size())
            throw Error(ErrorCode::Configuration, "need exactly one delay per tap after the first");
        for (double d : delays)
            if (!(d > 0.0))
                throw Error(ErrorCode::Configuration, "tap delays must be positive");
        for (double c : weights)
            if (!std::isfinite(c))
                throw Error(ErrorCode::Configuration, "tap weights must be finite");
    }

    /// Firing time of each tap.
    std::vector<double> offsets() const
    {
        std::vector<double> out(weights.size(), 0.0);
        for (std::size_t i = 1; i < out.size(); ++i)
            out[i] = out[i - 1] + delays[i - 1];
        return out;
    }

    double total_delay() const
    {
        double s = 0.0;
        for (double d : delays)
            s += d;
        return s;
    }

    /// Conventional FFE: every inter-tap delay equal to one UI.
    static TapConfig uniform(std::vector<double> weights, double ui)
    {
        TapConfig t{std::move(weights), {}};
        t.delays.assign(t.weights.size() - 1, ui);
        return t;
    }
};

inline std::vector<double> normalize(std::span<const double> weights)
{
    double sum = 0.0;
    for (double c : weights)
        sum += std::abs(c);
    if (!(sum > 0.0) || !std::isfinite(sum))
        throw Error(ErrorCode::DegenerateWeights, "cannot normalize an all-zero weight vector");
    std::vector<double> out(weights.begin(), weights.end());
    for (double& c : out)
        c /= sum;
    return out;
}

inline Complex ffe_transfer_at(const TapConfig& taps, double f)
{
    const auto offsets = taps.offsets();
    Complex h = taps.weights[0];
    for (std::size_t i = 1; i < taps.weights.size(); ++i)
        h += taps.weights[i] * std::polar(1.0, -2.0 * std::numbers::pi * f * offsets[i]);
    return h;
}

/// H(f) = c0 + sum_i c_i exp(-j 2 pi f (tau_1 + ... + tau_i)).
inline Spectrum ffe_transfer(const TapConfig& taps, const FrequencyGrid& grid)
{
    taps.validate();
    grid.validate();
    Spectrum out(grid.n_points);
    for (std::size_t k = 0; k < grid.n_points; ++k)
        out[k] = ffe_transfer_at(taps, grid.frequency(k));
    return out;
}

/// Channel response cascaded with the FFE on the same grid.
inline Spectrum equalized_response(std::span<const Complex> channel_resp, const TapConfig& taps,
                                   const FrequencyGrid& grid)
{
    if (channel_resp.size() != grid.n_points)
        throw Error(ErrorCode::Shape, "channel response does not match grid");
    Spectrum out = ffe_transfer(taps, grid);
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] *= channel_resp[k];
    return out;
}

/// Sample offset of each tap; non-integer delays round to the nearest sample.
inline std::vector<std::size_t> tap_sample_offsets(const TapConfig& taps, double dt)
{
    std::vector<std::size_t> out;
    for (double t : taps.offsets())
        out.push_back(static_cast<std::size_t>(std::llround(t / dt)));
    return out;
}

/// Transmitter output: the NRZ waveform of `bits` passed through the taps.
/// Each delayed copy holds the first bit's level before it starts.
inline Waveform synth_waveform(std::span<const std::uint8_t> bits, const TapConfig& taps,
                               const DataRateSettings& rate, double swing, double rise)
{
    taps.validate();
    if (taps.total_delay() > 4.0 * rate.ui * (1.0 + 1e-12))
        throw Error(ErrorCode::Configuration, "sum of tap delays exceeds 4 UI");
    const Waveform base = nrz(bits, rate, swing, rise);
    const auto shifts = tap_sample_offsets(taps, base.dt);
    Waveform out{base.t0, base.dt, std::vector<double>(base.size(), 0.0)};
    for (std::size_t i = 0; i < taps.weights.size(); ++i) {
        const double c = taps.weights[i];
        if (c == 0.0)
            continue;
        const std::size_t s = shifts[i];
        for (std::size_t n = 0; n < out.size(); ++n)
            out.samples[n] += c * base.samples[n >= s ? n - s : 0];
    }
    return out;
}

inline Waveform synth_waveform(std::span<const std::uint8_t> bits, const TapConfig& taps,
                               const DataRateSettings& rate, double swing)
{
    return synth_waveform(bits, taps, rate, swing, rate.ui / 10.0);
}

} // namespace ffeq
