#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ffeq/error.hpp"
#include "ffeq/waveform.hpp"

namespace ffeq::dll {

inline constexpr int stage_count = 8;

using TapPhases = std::array<double, stage_count>;  // [0] is tap 1

/// Where the delay line settled. `mismatch[j]` is the fractional deviation of
/// stage j from the nominal total_delay/8; the deviations sum to zero.
struct DllState {
    double total_delay = 1e-9;
    double ui = 1e-9;
    std::array<double, stage_count> mismatch{};
    double mismatch_bound = 0.05;

    void validate() const
    {
        if (!(total_delay > 0.0))
            throw Error(ErrorCode::Domain, "total delay must be positive");
        if (!(ui > 0.0))
            throw Error(ErrorCode::Domain, "UI must be positive");
        double sum = 0.0;
        for (double m : mismatch) {
            if (!(std::abs(m) <= mismatch_bound))
                throw Error(ErrorCode::Domain, "stage mismatch exceeds bound");
            sum += m;
        }
        if (std::abs(sum) > 1e-12)
            throw Error(ErrorCode::Domain, "stage mismatches must sum to zero");
    }
};

/// Rising-edge delay of each tap relative to the most recent input clock edge.
/// The last tap sits at exactly total_delay; results within a few ulps of a
/// whole UI are taken as zero.
inline TapPhases tap_phases(const DllState& state)
{
    state.validate();
    const double stage = state.total_delay / stage_count;
    TapPhases phases{};
    double partial = 0.0;
    for (int i = 0; i < stage_count; ++i) {
        partial += state.mismatch[static_cast<std::size_t>(i)];
        const double cum = i + 1 == stage_count ? state.total_delay : stage * ((i + 1) + partial);
        double r = std::fmod(cum, state.ui);
        if (r < 0.0)
            r += state.ui;
        if (state.ui - r <= 1e-12 * state.ui || r <= 1e-12 * state.ui)
            r = 0.0;
        phases[static_cast<std::size_t>(i)] = r;
    }
    return phases;
}

struct FldVerdict {
    enum class Outcome { Pass, FailIntegerLock, FailNonInteger };
    Outcome outcome = Outcome::Pass;
    int index = 0;  // violating comparison i in {1,2,3} for FailIntegerLock

    bool operator==(const FldVerdict&) const = default;
};

inline std::string to_string(const FldVerdict& v)
{
    switch (v.outcome) {
    case FldVerdict::Outcome::Pass: return "pass";
    case FldVerdict::Outcome::FailIntegerLock: return "fail-integer-lock(" + std::to_string(v.index) + ")";
    case FldVerdict::Outcome::FailNonInteger: return "fail-non-integer";
    }
    return "unknown";
}

/// Single-shot false-lock check: taps 1..4 must have strictly increasing
/// phase, then tap 8 must not lag tap 4.
inline FldVerdict fld(const TapPhases& phases, double ui)
{
    for (double p : phases)
        if (!(p >= 0.0 && p < ui))
            throw Error(ErrorCode::Domain, "tap phase outside [0, UI)");
    for (int i = 1; i <= 3; ++i)
        if (phases[static_cast<std::size_t>(i - 1)] >= phases[static_cast<std::size_t>(i)])
            return {FldVerdict::Outcome::FailIntegerLock, i};
    if (phases[7] > phases[3])
        return {FldVerdict::Outcome::FailNonInteger, 0};
    return {};
}

/// Relative delays selectable per tap: k * UI/16 for k = 1..16. Odd k are the
/// interpolated midpoints between adjacent VCDL taps at even k.
inline std::array<double, 16> interpolator_grid(const DataRateSettings& rate)
{
    rate.validate();
    std::array<double, 16> grid{};
    for (std::size_t k = 0; k < grid.size(); ++k)
        grid[k] = static_cast<double>(k + 1) * rate.ui / 16.0;
    return grid;
}

/// Nominal delays of the 8 VCDL taps at correct lock: k * UI/8.
inline std::array<double, stage_count> vcdl_tap_delays(const DataRateSettings& rate)
{
    std::array<double, stage_count> taps{};
    for (std::size_t k = 0; k < taps.size(); ++k)
        taps[k] = static_cast<double>(k + 1) * rate.ui / stage_count;
    return taps;
}

/// Zero-sum mismatch vector with every entry within +-bound.
template <class Rng>
std::array<double, stage_count> random_mismatch(Rng& rng, double bound)
{
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::array<double, stage_count> m{};
    double mean = 0.0;
    for (auto& x : m) {
        x = dist(rng);
        mean += x;
    }
    mean /= stage_count;
    double peak = 0.0;
    for (auto& x : m) {
        x -= mean;
        peak = std::max(peak, std::abs(x));
    }
    if (peak > bound) {
        const double scale = bound / peak;
        for (auto& x : m)
            x = std::clamp(x * scale, -bound, bound);
    }
    return m;
}

struct CoverageRow {
    double total_delay = 0.0;
    std::size_t trials = 0;
    std::size_t pass = 0;
    std::array<std::size_t, 3> integer_lock{};  // by violating comparison 1..3
    std::size_t non_integer = 0;

    std::size_t failures() const noexcept { return trials - pass; }
    double detection_rate() const noexcept { return trials ? double(failures()) / double(trials) : 0.0; }
    double pass_rate() const noexcept { return trials ? double(pass) / double(trials) : 0.0; }
};

/// Runs the detector over randomized mismatch for each candidate lock delay.
/// Row r draws from its own generator seeded by (seed, r), so rows do not
/// depend on evaluation order.
inline std::vector<CoverageRow> fld_coverage(double ui, const std::vector<double>& candidate_delays,
                                             std::size_t trials, double mismatch_bound, std::uint64_t seed)
{
    if (!(ui > 0.0))
        throw Error(ErrorCode::Domain, "UI must be positive");
    std::vector<CoverageRow> rows;
    for (std::size_t r = 0; r < candidate_delays.size(); ++r) {
        const double d = candidate_delays[r];
        if (!(d > 0.0))
            throw Error(ErrorCode::Domain, "candidate delays must be positive");
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(seq);
        CoverageRow row;
        row.total_delay = d;
        row.trials = trials;
        for (std::size_t t = 0; t < trials; ++t) {
            DllState s{d, ui, random_mismatch(rng, mismatch_bound), mismatch_bound};
            const auto v = fld(tap_phases(s), ui);
            switch (v.outcome) {
            case FldVerdict::Outcome::Pass: ++row.pass; break;
            case FldVerdict::Outcome::FailIntegerLock: ++row.integer_lock[static_cast<std::size_t>(v.index - 1)]; break;
            case FldVerdict::Outcome::FailNonInteger: ++row.non_integer; break;
            }
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace ffeq::dll
