#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ffeq/error.hpp"
#include "ffeq/fft.hpp"
#include "ffeq/waveform.hpp"

namespace ffeq {

using Complex = std::complex<double>;
using Spectrum = std::vector<Complex>;

/// Uniform frequency axis f_i = f_start + i * f_step, i < n_points.
struct FrequencyGrid {
    double f_start = 0.0;
    double f_step = 1e6;
    std::size_t n_points = 2;

    /// Grid from 0 Hz up to and including `f_max` (rounded up to a whole step).
    static FrequencyGrid up_to(double f_max, double f_step)
    {
        FrequencyGrid grid{0.0, f_step, static_cast<std::size_t>(std::ceil(f_max / f_step - 1e-9)) + 1};
        grid.validate();
        return grid;
    }

    double frequency(std::size_t i) const noexcept { return f_start + static_cast<double>(i) * f_step; }
    double max_frequency() const noexcept { return frequency(n_points - 1); }

    void validate() const
    {
        if (!(f_step > 0.0))
            throw Error(ErrorCode::Grid, "frequency step must be positive");
        if (n_points < 2)
            throw Error(ErrorCode::Grid, "frequency grid needs at least two points");
        if (f_start < 0.0)
            throw Error(ErrorCode::Domain, "negative frequency in grid");
    }

    bool operator==(const FrequencyGrid&) const = default;
};

/// Smooth lossy line: skin-effect (sqrt f) plus dielectric (linear f) loss in
/// dB, and a linear phase for the propagation delay.
struct ParametricChannel {
    static constexpr double speed_of_light = 299792458.0;

    double length = 3.0;            // m
    double loss_db_per_m = 7.0;     // dB/m at f_ref (magnitude; applied as attenuation)
    double f_ref = 1e9;             // Hz
    double skin_fraction = 0.5;     // share of the loss that scales with sqrt(f)
    double bulk_delay = default_delay(3.0);

    static constexpr double default_delay(double length_m) { return length_m / (0.6 * speed_of_light); }

    /// The 3 m cable with 7 dB/m loss at 1 GHz.
    static ParametricChannel reference_cable() { return {}; }

    static ParametricChannel with_length(double length_m, double loss_db_per_m = 7.0, double f_ref = 1e9)
    {
        return {length_m, loss_db_per_m, f_ref, 0.5, default_delay(length_m)};
    }

    void validate() const
    {
        if (!(length > 0.0))
            throw Error(ErrorCode::Domain, "channel length must be positive");
        if (!(loss_db_per_m >= 0.0))
            throw Error(ErrorCode::Domain, "loss must be non-negative");
        if (!(f_ref > 0.0))
            throw Error(ErrorCode::Domain, "reference frequency must be positive");
        if (!(skin_fraction >= 0.0 && skin_fraction <= 1.0))
            throw Error(ErrorCode::Domain, "skin fraction must lie in [0, 1]");
        if (!(bulk_delay >= 0.0))
            throw Error(ErrorCode::Domain, "bulk delay must be non-negative");
    }

    double loss_db(double f) const
    {
        const double x = f / f_ref;
        return -length * loss_db_per_m * (skin_fraction * std::sqrt(x) + (1.0 - skin_fraction) * x);
    }

    Complex response(double f) const
    {
        if (f < 0.0)
            throw Error(ErrorCode::Domain, "negative frequency");
        const double mag = std::pow(10.0, loss_db(f) / 20.0);
        return std::polar(mag, -2.0 * std::numbers::pi * f * bulk_delay);
    }
};

/// Measured or externally simulated response, DC-normalized. Frequencies are
/// strictly increasing but need not be uniform.
struct TabulatedChannel {
    std::vector<double> frequencies;
    std::vector<Complex> values;

    Complex response(double f) const
    {
        if (f < 0.0)
            throw Error(ErrorCode::Domain, "negative frequency");
        const auto& fs = frequencies;
        if (f <= fs.front())
            return values.front();
        if (f >= fs.back()) {
            // Hold |H| and continue the phase slope of the last segment.
            const std::size_t n = fs.size();
            const double slope = std::arg(values[n - 1] / values[n - 2]) / (fs[n - 1] - fs[n - 2]);
            return values.back() * std::polar(1.0, slope * (f - fs.back()));
        }
        const auto hi = static_cast<std::size_t>(std::upper_bound(fs.begin(), fs.end(), f) - fs.begin());
        const std::size_t lo = hi - 1;
        const double a = (f - fs[lo]) / (fs[hi] - fs[lo]);
        return values[lo] + a * (values[hi] - values[lo]);
    }
};

using ChannelModel = std::variant<ParametricChannel, TabulatedChannel>;

/// Closed-form response of a parametric model sampled on `grid`.
inline Spectrum parametric_response(const ChannelModel& model, const FrequencyGrid& grid)
{
    const auto* p = std::get_if<ParametricChannel>(&model);
    if (!p)
        throw Error(ErrorCode::Variant, "parametric_response needs a parametric model");
    p->validate();
    grid.validate();
    Spectrum out(grid.n_points);
    for (std::size_t i = 0; i < grid.n_points; ++i)
        out[i] = p->response(grid.frequency(i));
    return out;
}

/// Response of either model variant on `grid`.
inline Spectrum channel_response(const ChannelModel& model, const FrequencyGrid& grid)
{
    if (std::holds_alternative<ParametricChannel>(model))
        return parametric_response(model, grid);
    grid.validate();
    const auto& tab = std::get<TabulatedChannel>(model);
    Spectrum out(grid.n_points);
    for (std::size_t i = 0; i < grid.n_points; ++i)
        out[i] = tab.response(grid.frequency(i));
    return out;
}

/// Builds a tabulated model from (frequency, real, imag) triples, enforcing
/// ordering and normalizing |H| at the lowest tabulated frequency to one.
inline TabulatedChannel make_tabulated(std::vector<double> frequencies, std::vector<Complex> values)
{
    if (frequencies.size() != values.size())
        throw Error(ErrorCode::Shape, "frequency and value counts differ");
    if (frequencies.empty())
        throw Error(ErrorCode::EmptyInput, "tabulated channel has no rows");
    if (frequencies.size() < 2)
        throw Error(ErrorCode::EmptyInput, "tabulated channel needs at least two rows to interpolate");
    for (std::size_t i = 0; i < frequencies.size(); ++i) {
        if (frequencies[i] < 0.0)
            throw Error(ErrorCode::Domain, "negative frequency at row " + std::to_string(i + 1));
        if (i > 0 && !(frequencies[i] > frequencies[i - 1]))
            throw Error(ErrorCode::Ordering, "frequencies must be strictly increasing (row " + std::to_string(i + 1) + ")");
    }
    const double dc = std::abs(values.front());
    if (!(dc > 0.0))
        throw Error(ErrorCode::Degenerate, "tabulated response is zero at its lowest frequency");
    for (auto& v : values)
        v /= dc;
    return {std::move(frequencies), std::move(values)};
}

/// Parses CSV rows `frequency_hz, real, imag`. Blank lines and lines starting
/// with '#' are skipped; a non-numeric first line is treated as a header.
inline TabulatedChannel parse_tabulated(std::istream& in)
{
    std::vector<double> fs;
    std::vector<Complex> vs;
    std::string line;
    std::size_t line_no = 0;
    bool seen_data = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#')
            continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        double f = 0, re = 0, im = 0;
        std::string extra;
        if (!(row >> f >> re >> im) || (row >> extra)) {
            if (!seen_data && fs.empty() && std::isalpha(static_cast<unsigned char>(line[first])))
                continue;
            throw Error(ErrorCode::Parse, "malformed row at line " + std::to_string(line_no));
        }
        seen_data = true;
        fs.push_back(f);
        vs.emplace_back(re, im);
    }
    if (fs.empty())
        throw Error(ErrorCode::EmptyInput, "no data rows");
    return make_tabulated(std::move(fs), std::move(vs));
}

inline ChannelModel load_tabulated(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    return parse_tabulated(in);
}

/// Real impulse response sampled at `dt` from a response given on a grid that
/// starts at DC. The transform period is 1/f_step, so 1/(f_step*dt) must be an
/// integer; the response is Hermitian-extended before the inverse transform.
inline Waveform impulse_response(std::span<const Complex> response, const FrequencyGrid& grid, double dt,
                                 std::size_t n_samples, double max_tail_fraction = 1e-4)
{
    grid.validate();
    if (response.size() != grid.n_points)
        throw Error(ErrorCode::Shape, "response length does not match grid");
    if (!(dt > 0.0))
        throw Error(ErrorCode::Domain, "dt must be positive");
    if (grid.f_start != 0.0)
        throw Error(ErrorCode::Grid, "impulse response needs a grid starting at DC");
    const double periods = 1.0 / (grid.f_step * dt);
    const auto m = static_cast<std::size_t>(std::llround(periods));
    if (m < 2 || std::abs(periods - static_cast<double>(m)) > 1e-6 * periods)
        throw Error(ErrorCode::Grid, "1/(f_step*dt) must be an integer transform length");
    if (grid.n_points - 1 < m / 2)
        throw Error(ErrorCode::Bandwidth, "grid does not reach the Nyquist frequency 1/(2 dt)");
    if (n_samples == 0 || n_samples > m)
        throw Error(ErrorCode::Grid, "n_samples must lie in [1, " + std::to_string(m) + "]");

    Spectrum half(response.begin(), response.begin() + static_cast<std::ptrdiff_t>(m / 2 + 1));
    half.front() = half.front().real();
    if (m % 2 == 0)
        half.back() = half.back().real();
    std::vector<double> h = fft::irfft(half, m);

    double freq_energy = std::norm(half.front());
    for (std::size_t k = 1; k < half.size(); ++k)
        freq_energy += (m % 2 == 0 && k == m / 2 ? 1.0 : 2.0) * std::norm(half[k]);
    freq_energy /= static_cast<double>(m);

    double total = 0.0, kept = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        total += h[i] * h[i];
        if (i < n_samples)
            kept += h[i] * h[i];
    }
    if (std::abs(total - freq_energy) > 1e-6 * std::max(freq_energy, 1e-300))
        throw Error(ErrorCode::Domain, "energy mismatch between time and frequency domain");
    if (total > 0.0 && (total - kept) > max_tail_fraction * total)
        throw Error(ErrorCode::Truncation,
                    "impulse tail beyond " + std::to_string(n_samples) + " samples holds " +
                        std::to_string((total - kept) / total) + " of the energy; increase n_samples");
    h.resize(n_samples);
    return Waveform{0.0, dt, std::move(h)};
}

/// Uniform grid whose transform period and Nyquist match a sample step `dt`:
/// f_step = 1/(m dt), covering 0 .. 1/(2 dt).
inline FrequencyGrid transform_grid(double dt, std::size_t period_samples)
{
    return FrequencyGrid{0.0, 1.0 / (static_cast<double>(period_samples) * dt), period_samples / 2 + 1};
}

/// Impulse response of a channel model at step `dt` using a transform period
/// of `period_samples`. The window starts `pre_samples` before t = 0 so the
/// acausal part of a zero-phase loss is kept instead of wrapping around.
inline Waveform channel_impulse(const ChannelModel& model, double dt, std::size_t period_samples,
                                std::size_t n_samples, std::size_t pre_samples = 0)
{
    const FrequencyGrid grid = transform_grid(dt, period_samples);
    Spectrum h = channel_response(model, grid);
    if (pre_samples > 0) {
        const double lead = static_cast<double>(pre_samples) * dt;
        for (std::size_t k = 0; k < h.size(); ++k)
            h[k] *= std::polar(1.0, -2.0 * std::numbers::pi * grid.frequency(k) * lead);
    }
    Waveform w = impulse_response(h, grid, dt, n_samples + pre_samples);
    w.t0 = -static_cast<double>(pre_samples) * dt;
    return w;
}

} // namespace ffeq
