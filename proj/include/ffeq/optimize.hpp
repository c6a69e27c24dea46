#pragma once

#include <algorithm>
#include <concepts>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <iterator>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ffeq/channel.hpp"
#include "ffeq/error.hpp"
#include "ffeq/eye.hpp"
#include "ffeq/ffe.hpp"
#include "ffeq/power.hpp"
#include "ffeq/signal.hpp"
#include "ffeq/waveform.hpp"

namespace ffeq {

struct EvalResult {
    EyeMetrics metrics;
    double i_av = 0.0;
    double fom = std::numeric_limits<double>::infinity();

    bool operator==(const EvalResult&) const = default;
};

/// sqrt(I_av) / (e_H * e_W/UI). A closed eye scores +infinity.
inline double fom(double i_av, double e_h, double e_w, const DataRateSettings& rate)
{
    if (!(i_av >= 0.0))
        throw Error(ErrorCode::Domain, "average current must be non-negative");
    if (!(e_h > 0.0) || !(e_w > 0.0))
        return std::numeric_limits<double>::infinity();
    return std::sqrt(i_av) / (e_h * (e_w / rate.ui));
}

struct StimulusSettings {
    int prbs_order = 7;
    std::uint64_t seed = 1;
    std::size_t nbits = 1270;     // 10 PRBS7 periods
    std::size_t discard_ui = 254; // 2 PRBS7 periods of warm-up
    double rise_fraction = 0.1;   // NRZ edge time as a fraction of UI

    bool operator==(const StimulusSettings&) const = default;
};

struct LinkSetup {
    ChannelModel channel = ParametricChannel::reference_cable();
    DataRateSettings rate = DataRateSettings::from_clock(1e9);
    StimulusSettings stimulus;
    PowerCalibration power = default_calibration();
    std::size_t impulse_ui = 0;       // 0: derive from the channel delay
    std::size_t period_ui = 1024;     // transform period for the impulse response
    std::size_t pre_ui = 16;          // impulse window start before t = 0
};

/// Waveforms and raster behind one evaluation, for plotting.
struct EvalTrace {
    TapConfig taps;
    double swing = 0.0;
    Waveform tx;
    Waveform rx;
    EyeRaster raster;
    EvalResult result;
};

/// Immutable evaluation context: the channel impulse response and stimulus are
/// computed once, after which evaluation is a pure function of the hardware
/// configuration and safe to call from several threads.
class LinkEvaluator {
public:
    explicit LinkEvaluator(LinkSetup setup)
        : setup_(std::move(setup))
    {
        setup_.rate.validate();
        const auto& st = setup_.stimulus;
        if (st.nbits < st.discard_ui + min_eye_traces + 2)
            throw Error(ErrorCode::Length, "stimulus too short for the warm-up discard");
        bits_ = prbs(st.prbs_order, st.nbits, st.seed);
        const auto os = static_cast<std::size_t>(setup_.rate.oversample);
        std::size_t impulse_ui = setup_.impulse_ui;
        if (impulse_ui == 0) {
            impulse_ui = 64;
            if (const auto* p = std::get_if<ParametricChannel>(&setup_.channel))
                impulse_ui = std::max<std::size_t>(64, static_cast<std::size_t>(std::ceil(p->bulk_delay / setup_.rate.ui)) + 48);
        }
        const std::size_t period_ui = std::max(setup_.period_ui, 2 * (impulse_ui + setup_.pre_ui));
        impulse_ = channel_impulse(setup_.channel, setup_.rate.dt(), period_ui * os, impulse_ui * os,
                                   setup_.pre_ui * os);
    }

    const LinkSetup& setup() const noexcept { return setup_; }
    const DataRateSettings& rate() const noexcept { return setup_.rate; }
    const Bits& bits() const noexcept { return bits_; }
    const Waveform& impulse() const noexcept { return impulse_; }

    /// Received waveform for arbitrary taps at a given swing.
    Waveform receive(const TapConfig& taps, double swing) const
    {
        const Waveform tx = synth_waveform(bits_, taps, setup_.rate, swing, setup_.stimulus.rise_fraction * setup_.rate.ui);
        return convolve(tx, impulse_);
    }

    EyeMetrics eye(const TapConfig& taps, double swing) const
    {
        const EyeRaster raster = fold(receive(taps, swing), bits_, setup_.rate, setup_.stimulus.discard_ui);
        return metrics(raster, setup_.rate);
    }

    EvalTrace trace(const HardwareConfig& hw) const
    {
        EvalTrace t;
        const double r_load = setup_.power.r_load;
        t.taps = realized_taps(hw, setup_.rate, r_load);
        t.swing = output_swing(hw, r_load);
        t.tx = synth_waveform(bits_, t.taps, setup_.rate, t.swing, setup_.stimulus.rise_fraction * setup_.rate.ui);
        t.rx = convolve(t.tx, impulse_);
        t.raster = fold(t.rx, bits_, setup_.rate, setup_.stimulus.discard_ui);
        t.result.metrics = metrics(t.raster, setup_.rate);
        t.result.i_av = average_current(hw, setup_.rate, setup_.power);
        t.result.fom = fom(t.result.i_av, t.result.metrics.height, t.result.metrics.width, setup_.rate);
        return t;
    }

    EvalResult operator()(const HardwareConfig& hw) const { return trace(hw).result; }

private:
    LinkSetup setup_;
    Bits bits_;
    Waveform impulse_;
};

/// End-to-end link evaluation of one driver configuration:
/// realized taps -> transmitter waveform -> channel -> eye -> current -> FOM.
inline EvalResult evaluate(const HardwareConfig& hw, const LinkEvaluator& link) { return link(hw); }

/// Reference setting before tuning: equal weights on all three taps (every
/// slice enabled, same resistance and polarity) and one-UI inter-tap delays.
inline HardwareConfig default_hardware()
{
    return HardwareConfig{{8, 8, 8}, {1, 1, 1}, {15, 15}, {300.0, 300.0, 300.0}, 1.2};
}

// ---------------------------------------------------------------------------
// Search space

inline constexpr std::size_t axis_count = 11;
using SpacePoint = std::array<std::size_t, axis_count>;

/// Discrete product grid over the driver registers. Axes in order: slices per
/// tap (3), delay codes (2), slice resistance per tap (3), polarity per tap (3).
struct SearchSpace {
    std::array<std::vector<int>, 3> slices;
    std::array<std::vector<int>, 2> codes;
    std::array<std::vector<double>, 3> resistance;
    std::array<std::vector<int>, 3> polarity;
    double vdd = 1.2;

    static SearchSpace full()
    {
        SearchSpace s;
        for (auto& a : s.slices)
            a = {0, 1, 2, 3, 4, 5, 6, 7, 8};
        for (auto& a : s.codes)
            for (int c = 0; c < delay_code_count; ++c)
                a.push_back(c);
        for (auto& a : s.resistance)
            a.assign(slice_resistances.begin(), slice_resistances.end());
        for (auto& a : s.polarity)
            a = {-1, 1};
        return s;
    }

    /// Small grid: slices {2,4,8}, codes {3,7,15}, 300 ohm, pre/post inverted.
    static SearchSpace reduced()
    {
        SearchSpace s;
        for (auto& a : s.slices)
            a = {2, 4, 8};
        for (auto& a : s.codes)
            a = {3, 7, 15};
        for (auto& a : s.resistance)
            a = {300.0};
        s.polarity = {std::vector<int>{-1}, std::vector<int>{1}, std::vector<int>{-1}};
        return s;
    }

    static SearchSpace single(const HardwareConfig& hw)
    {
        SearchSpace s;
        for (std::size_t i = 0; i < 3; ++i) {
            s.slices[i] = {hw.slices[i]};
            s.resistance[i] = {hw.r_slice[i]};
            s.polarity[i] = {hw.polarity[i]};
        }
        for (std::size_t i = 0; i < 2; ++i)
            s.codes[i] = {hw.delay_codes[i]};
        s.vdd = hw.vdd;
        return s;
    }

    /// Same space with every inter-tap delay pinned to one UI.
    SearchSpace conventional() const
    {
        SearchSpace s = *this;
        for (auto& a : s.codes)
            a = {delay_code_count - 1};
        return s;
    }

    std::size_t axis_size(std::size_t axis) const
    {
        if (axis < 3)
            return slices[axis].size();
        if (axis < 5)
            return codes[axis - 3].size();
        if (axis < 8)
            return resistance[axis - 5].size();
        return polarity[axis - 8].size();
    }

    /// Number of grid points, including those with every tap disabled.
    std::uint64_t cardinality() const
    {
        std::uint64_t n = 1;
        for (std::size_t a = 0; a < axis_count; ++a)
            n *= axis_size(a);
        return n;
    }

    void validate() const
    {
        for (std::size_t a = 0; a < axis_count; ++a)
            if (axis_size(a) == 0)
                throw Error(ErrorCode::Usage, "search space axis " + std::to_string(a) + " is empty");
        for (const auto& a : slices)
            for (int n : a)
                if (n < 0 || n > max_slices)
                    throw Error(ErrorCode::Configuration, "slice choice out of range");
        for (const auto& a : codes)
            for (int c : a)
                if (c < 0 || c >= delay_code_count)
                    throw Error(ErrorCode::Configuration, "delay code choice out of range");
        for (const auto& a : resistance)
            for (double r : a)
                if (std::find(slice_resistances.begin(), slice_resistances.end(), r) == slice_resistances.end())
                    throw Error(ErrorCode::Configuration, "resistance choice must be 300, 700 or 1100");
        for (const auto& a : polarity)
            for (int p : a)
                if (p != 1 && p != -1)
                    throw Error(ErrorCode::Configuration, "polarity choice must be +1 or -1");
        bool any_enabled = false;
        for (int n0 : slices[0])
            for (int n1 : slices[1])
                for (int n2 : slices[2])
                    any_enabled = any_enabled || (n0 + n1 + n2 > 0);
        if (!any_enabled)
            throw Error(ErrorCode::Usage, "search space contains no configuration with an enabled slice");
    }

    HardwareConfig at(const SpacePoint& p) const
    {
        HardwareConfig hw;
        for (std::size_t i = 0; i < 3; ++i) {
            hw.slices[i] = slices[i][p[i]];
            hw.r_slice[i] = resistance[i][p[5 + i]];
            hw.polarity[i] = polarity[i][p[8 + i]];
        }
        hw.delay_codes = {codes[0][p[3]], codes[1][p[4]]};
        hw.vdd = vdd;
        return hw;
    }

    static bool enabled(const HardwareConfig& hw) { return hw.slices[0] + hw.slices[1] + hw.slices[2] > 0; }
};

// ---------------------------------------------------------------------------
// Searches

struct SearchOptions {
    std::uint64_t budget = 1'000'000;
    unsigned threads = 0;  // 0: hardware concurrency
};

template <class Result>
struct SearchOutcome {
    HardwareConfig config;
    Result result{};
    std::size_t evaluations = 0;
    std::vector<HardwareConfig> starts;  // heuristic only
};

namespace detail {

inline unsigned resolve_threads(unsigned requested)
{
    if (requested != 0)
        return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Applies `fn` to every item; results are placed by index so the outcome does
/// not depend on scheduling.
template <class Item, class Fn>
auto parallel_map(const std::vector<Item>& items, Fn&& fn, unsigned threads)
{
    using R = decltype(fn(items.front()));
    std::vector<R> out(items.size());
    const unsigned n_threads = std::min<unsigned>(threads, static_cast<unsigned>(items.size()));
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < items.size(); ++i)
            out[i] = fn(items[i]);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < items.size(); i = next++) {
                try {
                    out[i] = fn(items[i]);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure)
                        failure = std::current_exception();
                }
            }
        });
    for (auto& th : pool)
        th.join();
    if (failure)
        std::rethrow_exception(failure);
    return out;
}

/// Strict total order: rank first, then the configuration itself.
template <class Rank, class R>
bool better(const Rank& rank, const R& a, const HardwareConfig& ca, const R& b, const HardwareConfig& cb)
{
    const auto ra = rank(a);
    const auto rb = rank(b);
    if (ra != rb)
        return ra < rb;
    return ca < cb;
}

} // namespace detail

/// Cost ordering for link evaluations: FOM, then lower current.
inline std::pair<double, double> fom_rank(const EvalResult& r) { return {r.fom, r.i_av}; }

/// Scores every configuration in the space and returns the global minimum
/// under `rank` (ties to the lexicographically smallest configuration).
template <class Objective, class Rank>
    requires(!std::same_as<std::remove_cvref_t<Rank>, SearchOptions>)
auto exhaustive_search(const SearchSpace& space, Objective&& objective, Rank&& rank, const SearchOptions& opts = {})
{
    using R = decltype(objective(std::declval<const HardwareConfig&>()));
    space.validate();
    const std::uint64_t n = space.cardinality();
    if (n > opts.budget)
        throw Error(ErrorCode::Budget, "search space has " + std::to_string(n) + " points, budget is " +
                                           std::to_string(opts.budget));
    std::vector<HardwareConfig> candidates;
    candidates.reserve(static_cast<std::size_t>(n));
    SpacePoint p{};
    for (bool done = false; !done;) {
        HardwareConfig hw = space.at(p);
        if (SearchSpace::enabled(hw))
            candidates.push_back(hw);
        // odometer increment, last axis fastest
        for (std::size_t a = axis_count;;) {
            if (a == 0) {
                done = true;
                break;
            }
            --a;
            if (++p[a] < space.axis_size(a))
                break;
            p[a] = 0;
        }
    }
    const auto results = detail::parallel_map(candidates, objective, detail::resolve_threads(opts.threads));
    SearchOutcome<R> out;
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (detail::better(rank, results[i], candidates[i], results[best], candidates[best]))
            best = i;
    out.config = candidates[best];
    out.result = results[best];
    out.evaluations = candidates.size();
    return out;
}

template <class Objective>
auto exhaustive_search(const SearchSpace& space, Objective&& objective, const SearchOptions& opts = {})
{
    return exhaustive_search(space, std::forward<Objective>(objective), fom_rank, opts);
}

/// Cyclic coordinate descent with random restarts. Each axis is scanned in
/// full while the others are held and the best strictly improving move is
/// taken. Once single-axis moves stall, every pair of axes is scanned jointly
/// so coupled registers (the two delay codes, say) can move together; a
/// restart ends when neither kind of move improves.
template <class Objective, class Rank>
    requires(!std::same_as<std::remove_cvref_t<Rank>, SearchOptions>)
auto heuristic_search(const SearchSpace& space, Objective&& objective, Rank&& rank, std::size_t restarts,
                      std::uint64_t seed, const SearchOptions& opts = {})
{
    using R = decltype(objective(std::declval<const HardwareConfig&>()));
    space.validate();
    if (restarts == 0)
        throw Error(ErrorCode::Usage, "need at least one restart");
    const unsigned threads = detail::resolve_threads(opts.threads);
    std::map<HardwareConfig, R> cache;

    auto score_all = [&](const std::vector<HardwareConfig>& configs) {
        std::vector<HardwareConfig> missing;
        for (const auto& c : configs)
            if (!cache.count(c) && std::find(missing.begin(), missing.end(), c) == missing.end())
                missing.push_back(c);
        const auto fresh = detail::parallel_map(missing, objective, threads);
        for (std::size_t i = 0; i < missing.size(); ++i)
            cache.emplace(missing[i], fresh[i]);
    };

    std::mt19937_64 rng(seed);
    SearchOutcome<R> out;
    bool have_best = false;
    for (std::size_t r = 0; r < restarts; ++r) {
        SpacePoint p{};
        HardwareConfig cur;
        do {
            for (std::size_t a = 0; a < axis_count; ++a)
                p[a] = std::uniform_int_distribution<std::size_t>(0, space.axis_size(a) - 1)(rng);
            cur = space.at(p);
        } while (!SearchSpace::enabled(cur));
        out.starts.push_back(cur);
        score_all({cur});

        // Scores the candidates produced by varying `axes` and moves to the best
        // one if it beats the current point.
        auto scan = [&](std::initializer_list<std::size_t> axes) {
            std::vector<HardwareConfig> block;
            std::vector<SpacePoint> points;
            SpacePoint q = p;
            auto recurse = [&](auto& self, auto it) -> void {
                if (it == axes.end()) {
                    HardwareConfig hw = space.at(q);
                    if (SearchSpace::enabled(hw)) {
                        block.push_back(hw);
                        points.push_back(q);
                    }
                    return;
                }
                for (std::size_t v = 0; v < space.axis_size(*it); ++v) {
                    q[*it] = v;
                    self(self, std::next(it));
                }
                q[*it] = p[*it];
            };
            recurse(recurse, axes.begin());
            score_all(block);
            std::optional<std::size_t> best;
            for (std::size_t i = 0; i < block.size(); ++i) {
                const HardwareConfig& ref = best ? block[*best] : cur;
                if (detail::better(rank, cache.at(block[i]), block[i], cache.at(ref), ref))
                    best = i;
            }
            if (!best)
                return false;
            p = points[*best];
            cur = block[*best];
            return true;
        };

        for (;;) {
            bool moved = true;
            while (moved) {
                moved = false;
                for (std::size_t a = 0; a < axis_count; ++a)
                    if (space.axis_size(a) > 1)
                        moved = scan({a}) || moved;
            }
            bool escaped = false;
            for (std::size_t a = 0; a < axis_count && !escaped; ++a)
                for (std::size_t b = a + 1; b < axis_count && !escaped; ++b)
                    if (space.axis_size(a) > 1 && space.axis_size(b) > 1)
                        escaped = scan({a, b});
            if (!escaped)
                break;
        }
        const R& res = cache.at(cur);
        if (!have_best || detail::better(rank, res, cur, out.result, out.config)) {
            out.config = cur;
            out.result = res;
            have_best = true;
        }
    }
    out.evaluations = cache.size();
    return out;
}

template <class Objective>
auto heuristic_search(const SearchSpace& space, Objective&& objective, std::size_t restarts, std::uint64_t seed,
                      const SearchOptions& opts = {})
{
    return heuristic_search(space, std::forward<Objective>(objective), fom_rank, restarts, seed, opts);
}

// ---------------------------------------------------------------------------
// Frequency-domain flatness

/// Peak-to-peak variation of |H| in dB.
inline double ripple_db(std::span<const Complex> response)
{
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& h : response) {
        const double db = 20.0 * std::log10(std::abs(h));
        lo = std::min(lo, db);
        hi = std::max(hi, db);
    }
    return std::isfinite(hi - lo) ? hi - lo : std::numeric_limits<double>::infinity();
}

struct FlatnessResult {
    double ripple_db = std::numeric_limits<double>::infinity();
    double i_av = 0.0;

    bool operator==(const FlatnessResult&) const = default;
};

inline std::pair<double, double> flatness_rank(const FlatnessResult& r) { return {r.ripple_db, r.i_av}; }

/// Ripple of the equalized channel over a band, as a search objective.
class FlatnessObjective {
public:
    FlatnessObjective(const ChannelModel& channel, const DataRateSettings& rate, FrequencyGrid band,
                      PowerCalibration power = default_calibration())
        : rate_(rate)
        , band_(band)
        , power_(power)
        , channel_(channel_response(channel, band))
    {
    }

    /// 10 MHz .. 1.5 GHz in 10 MHz steps.
    static FrequencyGrid default_band() { return FrequencyGrid{10e6, 10e6, 150}; }

    double ripple(const TapConfig& taps) const { return ripple_db(equalized_response(channel_, taps, band_)); }

    FlatnessResult operator()(const HardwareConfig& hw) const
    {
        return {ripple(realized_taps(hw, rate_, power_.r_load)), average_current(hw, rate_, power_)};
    }

    const FrequencyGrid& band() const noexcept { return band_; }
    const Spectrum& channel() const noexcept { return channel_; }

private:
    DataRateSettings rate_;
    FrequencyGrid band_;
    PowerCalibration power_;
    Spectrum channel_;
};

} // namespace ffeq
