#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ffeq/error.hpp"
#include "ffeq/fft.hpp"
#include "ffeq/waveform.hpp"

namespace ffeq {

using Bits = std::vector<std::uint8_t>;

namespace detail {

// Feedback taps (1-based register stages) of a maximal-length polynomial per
// register order; order 7 is x^7 + x^6 + 1.
struct PrbsTaps {
    std::array<int, 4> taps;
    int count;
};

inline constexpr std::array<PrbsTaps, 32> prbs_taps = {{
    {{0, 0, 0, 0}, 0},     {{0, 0, 0, 0}, 0},      {{0, 0, 0, 0}, 0},      {{3, 2, 0, 0}, 2},
    {{4, 3, 0, 0}, 2},     {{5, 3, 0, 0}, 2},      {{6, 5, 0, 0}, 2},      {{7, 6, 0, 0}, 2},
    {{8, 6, 5, 4}, 4},     {{9, 5, 0, 0}, 2},      {{10, 7, 0, 0}, 2},     {{11, 9, 0, 0}, 2},
    {{12, 6, 4, 1}, 4},    {{13, 4, 3, 1}, 4},     {{14, 5, 3, 1}, 4},     {{15, 14, 0, 0}, 2},
    {{16, 15, 13, 4}, 4},  {{17, 14, 0, 0}, 2},    {{18, 11, 0, 0}, 2},    {{19, 6, 2, 1}, 4},
    {{20, 17, 0, 0}, 2},   {{21, 19, 0, 0}, 2},    {{22, 21, 0, 0}, 2},    {{23, 18, 0, 0}, 2},
    {{24, 23, 22, 17}, 4}, {{25, 22, 0, 0}, 2},    {{26, 6, 2, 1}, 4},     {{27, 5, 2, 1}, 4},
    {{28, 25, 0, 0}, 2},   {{29, 27, 0, 0}, 2},    {{30, 6, 4, 1}, 4},     {{31, 28, 0, 0}, 2},
}};

} // namespace detail

/// Fibonacci LFSR. Stage k of the register is bit k-1 of the state; each step
/// XORs the tapped stages, shifts toward the high stages and inserts the
/// feedback at stage 1. The emitted bit is the feedback bit.
class Lfsr {
public:
    Lfsr(int order, std::uint64_t seed)
        : order_(order)
    {
        if (order < 3 || order > 31)
            throw Error(ErrorCode::Domain, "PRBS order must lie in [3, 31]");
        mask_ = (std::uint64_t{1} << order) - 1;
        state_ = seed & mask_;
        if (state_ == 0)
            throw Error(ErrorCode::DegenerateSeed, "LFSR seed must be nonzero in the low " + std::to_string(order) + " bits");
    }

    std::uint8_t next() noexcept
    {
        const auto& t = detail::prbs_taps[static_cast<std::size_t>(order_)];
        std::uint64_t fb = 0;
        for (int i = 0; i < t.count; ++i)
            fb ^= (state_ >> (t.taps[static_cast<std::size_t>(i)] - 1)) & 1u;
        state_ = ((state_ << 1) | fb) & mask_;
        return static_cast<std::uint8_t>(fb);
    }

    std::uint64_t state() const noexcept { return state_; }
    int order() const noexcept { return order_; }

private:
    int order_;
    std::uint64_t mask_ = 0;
    std::uint64_t state_ = 0;
};

inline Bits prbs(int order, std::size_t length, std::uint64_t seed)
{
    Lfsr lfsr(order, seed);
    Bits out(length);
    for (auto& b : out)
        b = lfsr.next();
    return out;
}

/// NRZ line signal: bit b sits at (2b-1)*swing/2; each transition is a linear
/// ramp of duration `rise` starting at the bit boundary. The level before the
/// first bit is the first bit's level, so no edge occurs at t = 0.
inline Waveform nrz(std::span<const std::uint8_t> bits, const DataRateSettings& rate, double swing, double rise)
{
    rate.validate();
    if (bits.empty())
        throw Error(ErrorCode::EmptyInput, "no bits to encode");
    if (!(rise >= 0.0) || !(rise < rate.ui / 2.0))
        throw Error(ErrorCode::EdgeRate, "rise time must lie in [0, UI/2)");
    const auto os = static_cast<std::size_t>(rate.oversample);
    const double dt = rate.dt();
    Waveform w{0.0, dt, std::vector<double>(bits.size() * os)};
    double prev = (2.0 * bits[0] - 1.0) * swing / 2.0;
    for (std::size_t k = 0; k < bits.size(); ++k) {
        const double level = (2.0 * bits[k] - 1.0) * swing / 2.0;
        for (std::size_t m = 0; m < os; ++m) {
            const double tau = static_cast<double>(m) * dt;
            w.samples[k * os + m] = tau >= rise ? level : prev + (level - prev) * (tau / rise);
        }
        prev = level;
    }
    return w;
}

namespace detail {

inline std::vector<double> direct_convolution(std::span<const double> x, std::span<const double> h)
{
    std::vector<double> y(x.size() + h.size() - 1, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        for (std::size_t j = 0; j < h.size(); ++j)
            y[i + j] += xi * h[j];
    }
    return y;
}

inline std::vector<double> fft_convolution(std::span<const double> x, std::span<const double> h)
{
    const std::size_t out_len = x.size() + h.size() - 1;
    const std::size_t n = fft::good_size(out_len);
    std::vector<double> xp(n, 0.0), hp(n, 0.0);
    std::copy(x.begin(), x.end(), xp.begin());
    std::copy(h.begin(), h.end(), hp.begin());
    auto xf = fft::rfft(xp);
    const auto hf = fft::rfft(hp);
    for (std::size_t k = 0; k < xf.size(); ++k)
        xf[k] *= hf[k];
    auto y = fft::irfft(xf, n);
    y.resize(out_len);
    return y;
}

} // namespace detail

/// Linear convolution sum_j h[j] x[i-j]. Long inputs go through the transform
/// path, which agrees with the direct sum to ~1e-13 relative to the energy.
inline Waveform convolve(const Waveform& x, const Waveform& h)
{
    x.validate();
    h.validate();
    if (std::abs(x.dt - h.dt) > 1e-12 * std::max(x.dt, h.dt))
        throw Error(ErrorCode::Grid, "convolution operands have different time steps");
    constexpr double direct_limit = 1 << 16;
    const double work = static_cast<double>(x.size()) * static_cast<double>(h.size());
    auto y = (work <= direct_limit || std::min(x.size(), h.size()) <= 16)
                 ? detail::direct_convolution(x.samples, h.samples)
                 : detail::fft_convolution(x.samples, h.samples);
    return Waveform{x.t0 + h.t0, x.dt, std::move(y)};
}

} // namespace ffeq
