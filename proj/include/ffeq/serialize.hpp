#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ffeq/channel.hpp"
#include "ffeq/dll.hpp"
#include "ffeq/error.hpp"
#include "ffeq/eye.hpp"
#include "ffeq/ffe.hpp"
#include "ffeq/optimize.hpp"
#include "ffeq/power.hpp"

namespace ffeq {

using nlohmann::json;

/// Wraps JSON access errors into the library's parse error.
template <class Fn>
auto parse_guard(const std::string& what, Fn&& fn)
{
    try {
        return fn();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, what + ": " + e.what());
    }
}

// -- taps ------------------------------------------------------------------

/// {"weights": [...], "delays_ui": [...]}
inline json taps_to_json(const TapConfig& taps, const DataRateSettings& rate)
{
    std::vector<double> delays_ui;
    for (double d : taps.delays)
        delays_ui.push_back(d / rate.ui);
    return {{"weights", taps.weights}, {"delays_ui", delays_ui}};
}

inline TapConfig taps_from_json(const json& j, const DataRateSettings& rate)
{
    return parse_guard("tap configuration", [&] {
        TapConfig taps;
        taps.weights = j.at("weights").get<std::vector<double>>();
        taps.delays.clear();
        for (double d : j.at("delays_ui").get<std::vector<double>>())
            taps.delays.push_back(d * rate.ui);
        taps.validate();
        return taps;
    });
}

// -- hardware ----------------------------------------------------------------

inline void to_json(json& j, const HardwareConfig& hw)
{
    j = {{"slices", hw.slices},
         {"polarity", hw.polarity},
         {"delay_codes", hw.delay_codes},
         {"r_slice", hw.r_slice},
         {"vdd", hw.vdd}};
}

inline void from_json(const json& j, HardwareConfig& hw)
{
    hw.slices = j.at("slices").get<std::array<int, 3>>();
    hw.polarity = j.at("polarity").get<std::array<int, 3>>();
    hw.delay_codes = j.at("delay_codes").get<std::array<int, 2>>();
    hw.r_slice = j.at("r_slice").get<std::array<double, 3>>();
    hw.vdd = j.value("vdd", 1.2);
}

// -- rate / stimulus -------------------------------------------------------

inline void to_json(json& j, const DataRateSettings& r) { j = {{"f_clk", r.f_clk}, {"oversample", r.oversample}}; }

inline void from_json(const json& j, DataRateSettings& r)
{
    r = DataRateSettings::from_clock(j.at("f_clk").get<double>(), j.value("oversample", 32));
}

inline void to_json(json& j, const StimulusSettings& s)
{
    j = {{"prbs_order", s.prbs_order},
         {"seed", s.seed},
         {"nbits", s.nbits},
         {"discard_ui", s.discard_ui},
         {"rise_fraction", s.rise_fraction}};
}

inline void from_json(const json& j, StimulusSettings& s)
{
    const StimulusSettings d;
    s.prbs_order = j.value("prbs_order", d.prbs_order);
    s.seed = j.value("seed", d.seed);
    s.nbits = j.value("nbits", d.nbits);
    s.discard_ui = j.value("discard_ui", d.discard_ui);
    s.rise_fraction = j.value("rise_fraction", d.rise_fraction);
}

// -- channel ---------------------------------------------------------------

inline json channel_to_json(const ChannelModel& model)
{
    if (const auto* p = std::get_if<ParametricChannel>(&model))
        return {{"kind", "parametric"},         {"length", p->length},
                {"loss_db_per_m", p->loss_db_per_m}, {"f_ref", p->f_ref},
                {"skin_fraction", p->skin_fraction}, {"bulk_delay", p->bulk_delay}};
    const auto& t = std::get<TabulatedChannel>(model);
    json points = json::array();
    for (std::size_t i = 0; i < t.frequencies.size(); ++i)
        points.push_back({t.frequencies[i], t.values[i].real(), t.values[i].imag()});
    return {{"kind", "tabulated"}, {"points", points}};
}

inline ParametricChannel parametric_from_json(const json& j)
{
    ParametricChannel p;
    p.length = j.value("length", p.length);
    p.loss_db_per_m = j.value("loss_db_per_m", p.loss_db_per_m);
    p.f_ref = j.value("f_ref", p.f_ref);
    p.skin_fraction = j.value("skin_fraction", p.skin_fraction);
    p.bulk_delay = j.value("bulk_delay", ParametricChannel::default_delay(p.length));
    p.validate();
    return p;
}

inline TabulatedChannel tabulated_from_json(const json& j)
{
    std::vector<double> fs;
    std::vector<Complex> vs;
    for (const auto& row : j.at("points")) {
        if (!row.is_array() || row.size() != 3)
            throw Error(ErrorCode::Parse, "tabulated point must be [f, re, im]");
        fs.push_back(row[0].get<double>());
        vs.emplace_back(row[1].get<double>(), row[2].get<double>());
    }
    return make_tabulated(std::move(fs), std::move(vs));
}

// -- results ---------------------------------------------------------------

inline void to_json(json& j, const EyeMetrics& m)
{
    j = {{"eye_height", m.height}, {"eye_width", m.width}, {"sample_phase", m.sample_phase}};
}

inline void from_json(const json& j, EyeMetrics& m)
{
    m.height = j.at("eye_height").get<double>();
    m.width = j.at("eye_width").get<double>();
    m.sample_phase = j.at("sample_phase").get<double>();
}

/// A closed eye's infinite FOM is written as null.
inline void to_json(json& j, const EvalResult& r)
{
    j = {{"metrics", r.metrics}, {"i_av", r.i_av}};
    j["fom"] = std::isfinite(r.fom) ? json(r.fom) : json(nullptr);
}

inline void from_json(const json& j, EvalResult& r)
{
    r.metrics = j.at("metrics").get<EyeMetrics>();
    r.i_av = j.at("i_av").get<double>();
    r.fom = j.at("fom").is_null() ? std::numeric_limits<double>::infinity() : j.at("fom").get<double>();
}

inline void to_json(json& j, const FlatnessResult& r)
{
    j = {{"i_av", r.i_av}};
    j["ripple_db"] = std::isfinite(r.ripple_db) ? json(r.ripple_db) : json(nullptr);
}

// -- search space ----------------------------------------------------------

inline void to_json(json& j, const SearchSpace& s)
{
    j = {{"slices", s.slices}, {"codes", s.codes}, {"resistance", s.resistance}, {"polarity", s.polarity},
         {"vdd", s.vdd}};
}

inline void from_json(const json& j, SearchSpace& s)
{
    s = SearchSpace::full();
    if (j.contains("slices"))
        s.slices = j.at("slices").get<std::array<std::vector<int>, 3>>();
    if (j.contains("codes"))
        s.codes = j.at("codes").get<std::array<std::vector<int>, 2>>();
    if (j.contains("resistance"))
        s.resistance = j.at("resistance").get<std::array<std::vector<double>, 3>>();
    if (j.contains("polarity"))
        s.polarity = j.at("polarity").get<std::array<std::vector<int>, 3>>();
    s.vdd = j.value("vdd", 1.2);
}

// -- fld -------------------------------------------------------------------

inline json coverage_to_json(const std::vector<dll::CoverageRow>& rows, double ui)
{
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"delay_ui", r.total_delay / ui},
                       {"trials", r.trials},
                       {"pass", r.pass},
                       {"fail_integer_lock", r.integer_lock},
                       {"fail_non_integer", r.non_integer},
                       {"detection_rate", r.detection_rate()}});
    return out;
}

} // namespace ffeq
