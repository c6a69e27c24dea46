#pragma once

#include <cmath>
#include <cstddef>
#include <ostream>
#include <vector>

#include "ffeq/error.hpp"

namespace ffeq {

/// Clocking of the serial link. `ui` is stored alongside `f_clk` so the
/// sample step can be derived without repeated division.
struct DataRateSettings {
    double f_clk = 1e9;
    double ui = 1e-9;
    int oversample = 32;

    static DataRateSettings from_clock(double f_clk, int oversample = 32)
    {
        DataRateSettings rate{f_clk, 1.0 / f_clk, oversample};
        rate.validate();
        return rate;
    }

    double dt() const noexcept { return ui / oversample; }

    void validate() const
    {
        if (!(f_clk > 0.0) || !std::isfinite(f_clk))
            throw Error(ErrorCode::Domain, "clock frequency must be positive");
        if (std::abs(ui * f_clk - 1.0) > 4e-16)
            throw Error(ErrorCode::Domain, "unit interval must equal 1/f_clk");
        if (oversample < 8 || (oversample & (oversample - 1)) != 0)
            throw Error(ErrorCode::Domain, "oversample must be a power of two >= 8");
    }
};

/// Uniformly sampled real signal starting at `t0`.
struct Waveform {
    double t0 = 0.0;
    double dt = 1.0;
    std::vector<double> samples;

    std::size_t size() const noexcept { return samples.size(); }
    double time(std::size_t i) const noexcept { return t0 + static_cast<double>(i) * dt; }

    void validate() const
    {
        if (!(dt > 0.0))
            throw Error(ErrorCode::Domain, "waveform time step must be positive");
        if (samples.empty())
            throw Error(ErrorCode::EmptyInput, "waveform has no samples");
        for (double v : samples)
            if (!std::isfinite(v))
                throw Error(ErrorCode::Domain, "waveform contains non-finite samples");
    }
};

inline void write_csv(std::ostream& os, const Waveform& w)
{
    os.precision(17);
    os << "t,v\n";
    for (std::size_t i = 0; i < w.size(); ++i)
        os << w.time(i) << ',' << w.samples[i] << '\n';
}

} // namespace ffeq
