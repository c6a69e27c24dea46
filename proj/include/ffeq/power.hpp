#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ffeq/error.hpp"
#include "ffeq/ffe.hpp"
#include "ffeq/waveform.hpp"

namespace ffeq {

inline constexpr int taps_per_driver = 3;
inline constexpr int max_slices = 8;
inline constexpr int delay_code_count = 16;
inline constexpr std::array<double, 3> slice_resistances = {300.0, 700.0, 1100.0};

/// Register-level driver setting: SST slice counts, polarity and source
/// resistance per tap, plus the inter-tap delay codes. Code k selects a delay
/// of (k+1) UI/16.
struct HardwareConfig {
    std::array<int, 3> slices{8, 0, 0};
    std::array<int, 3> polarity{1, 1, 1};
    std::array<int, 2> delay_codes{15, 15};
    std::array<double, 3> r_slice{300.0, 300.0, 300.0};
    double vdd = 1.2;

    auto operator<=>(const HardwareConfig&) const = default;

    void validate() const
    {
        bool any = false;
        for (int i = 0; i < taps_per_driver; ++i) {
            const auto u = static_cast<std::size_t>(i);
            if (slices[u] < 0 || slices[u] > max_slices)
                throw Error(ErrorCode::Configuration, "slice count out of range 0..8");
            any = any || slices[u] > 0;
            if (polarity[u] != 1 && polarity[u] != -1)
                throw Error(ErrorCode::Configuration, "polarity must be +1 or -1");
            if (std::find(slice_resistances.begin(), slice_resistances.end(), r_slice[u]) == slice_resistances.end())
                throw Error(ErrorCode::Configuration, "slice resistance must be 300, 700 or 1100 ohm");
        }
        if (!any)
            throw Error(ErrorCode::Degenerate, "at least one tap needs an enabled slice");
        for (int c : delay_codes)
            if (c < 0 || c >= delay_code_count)
                throw Error(ErrorCode::Configuration, "delay code out of range 0..15");
        if (!(vdd > 0.0))
            throw Error(ErrorCode::Configuration, "vdd must be positive");
    }

    /// Tap source resistance; infinite for a disabled tap.
    double tap_resistance(std::size_t tap) const
    {
        return slices[tap] == 0 ? INFINITY : r_slice[tap] / slices[tap];
    }
};

inline double code_delay(int code, const DataRateSettings& rate)
{
    return (code + 1) * rate.ui / delay_code_count;
}

/// Tap drive conductance into the termination.
inline double tap_conductance(const HardwareConfig& hw, std::size_t tap, double r_load)
{
    return hw.slices[tap] == 0 ? 0.0 : 1.0 / (hw.tap_resistance(tap) + r_load);
}

/// Weights from the share of drive conductance each tap holds; the result is
/// normalized by construction.
inline TapConfig realized_taps(const HardwareConfig& hw, const DataRateSettings& rate, double r_load)
{
    hw.validate();
    rate.validate();
    std::array<double, 3> g{};
    double sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        g[i] = tap_conductance(hw, i, r_load);
        sum += g[i];
    }
    TapConfig taps;
    taps.weights.resize(3);
    for (std::size_t i = 0; i < 3; ++i)
        taps.weights[i] = hw.polarity[i] * g[i] / sum;
    taps.delays = {code_delay(hw.delay_codes[0], rate), code_delay(hw.delay_codes[1], rate)};
    return taps;
}

/// Peak-to-peak swing at the termination: vdd divided between the parallel
/// source resistance of all enabled slices and the load.
inline double output_swing(const HardwareConfig& hw, double r_load)
{
    hw.validate();
    double g = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        if (hw.slices[i] > 0)
            g += 1.0 / hw.tap_resistance(i);
    const double r_par = 1.0 / g;
    return hw.vdd * r_load / (r_par + r_load);
}

/// First-order current model constants. Frozen values ship in
/// config/power_calibration.json.
struct PowerCalibration {
    int schema_version = 1;
    double vdd = 1.2;
    double r_load = 50.0;
    double activity = 0.0;
    double i_fixed = 0.0;
    double p_min_target = 4e-3;
    double p_max_target = 9e-3;
};

/// I_av = sum_i activity * vdd / (r_slice_i/n_i + r_load) + i_fixed.
inline double average_current(const HardwareConfig& hw, const DataRateSettings& rate, double r_load,
                              double activity, double i_fixed = 0.0)
{
    hw.validate();
    rate.validate();
    if (!(activity >= 0.0 && activity <= 1.0))
        throw Error(ErrorCode::Domain, "activity must lie in [0, 1]");
    double i = 0.0;
    for (std::size_t t = 0; t < 3; ++t)
        if (hw.slices[t] > 0)
            i += activity * hw.vdd / (hw.tap_resistance(t) + r_load);
    return i + i_fixed;
}

inline double average_current(const HardwareConfig& hw, const DataRateSettings& rate, const PowerCalibration& cal)
{
    return average_current(hw, rate, cal.r_load, cal.activity, cal.i_fixed);
}

/// Largest-current configuration: every slice on, lowest resistance.
inline HardwareConfig max_power_config(double vdd = 1.2)
{
    return HardwareConfig{{8, 8, 8}, {1, 1, 1}, {15, 15}, {300.0, 300.0, 300.0}, vdd};
}

/// Smallest-current valid configuration: one slice at the highest resistance.
inline HardwareConfig min_power_config(double vdd = 1.2)
{
    return HardwareConfig{{1, 0, 0}, {1, 1, 1}, {15, 15}, {1100.0, 300.0, 300.0}, vdd};
}

/// Solves activity and i_fixed so the smallest and largest configurations
/// draw exactly p_min_target and p_max_target from vdd.
inline PowerCalibration calibrate(double vdd = 1.2, double r_load = 50.0, double p_min = 4e-3, double p_max = 9e-3)
{
    const auto rate = DataRateSettings::from_clock(1e9);
    const double g_max = average_current(max_power_config(vdd), rate, r_load, 1.0) / vdd;
    const double g_min = average_current(min_power_config(vdd), rate, r_load, 1.0) / vdd;
    PowerCalibration cal;
    cal.vdd = vdd;
    cal.r_load = r_load;
    cal.p_min_target = p_min;
    cal.p_max_target = p_max;
    cal.activity = (p_max - p_min) / (vdd * vdd * (g_max - g_min));
    cal.i_fixed = p_min / vdd - cal.activity * vdd * g_min;
    if (!(cal.activity > 0.0 && cal.activity <= 1.0) || !(cal.i_fixed >= 0.0))
        throw Error(ErrorCode::Domain, "power targets cannot be met by the current model");
    return cal;
}

inline void to_json(nlohmann::json& j, const PowerCalibration& c)
{
    j = {{"schema_version", c.schema_version}, {"vdd", c.vdd},           {"r_load", c.r_load},
         {"activity", c.activity},             {"i_fixed", c.i_fixed},   {"p_min_target", c.p_min_target},
         {"p_max_target", c.p_max_target}};
}

inline void from_json(const nlohmann::json& j, PowerCalibration& c)
{
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != 1)
        throw Error(ErrorCode::Version, "unsupported calibration schema " + std::to_string(c.schema_version));
    c.vdd = j.at("vdd").get<double>();
    c.r_load = j.at("r_load").get<double>();
    c.activity = j.at("activity").get<double>();
    c.i_fixed = j.at("i_fixed").get<double>();
    c.p_min_target = j.value("p_min_target", 4e-3);
    c.p_max_target = j.value("p_max_target", 9e-3);
}

inline PowerCalibration load_calibration(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open calibration file " + path.string());
    try {
        return nlohmann::json::parse(in).get<PowerCalibration>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
}

/// Calibration used when no file is supplied; equal to calibrate() with the
/// default arguments and to the shipped config file.
inline const PowerCalibration& default_calibration()
{
    static const PowerCalibration cal = calibrate();
    return cal;
}

} // namespace ffeq
