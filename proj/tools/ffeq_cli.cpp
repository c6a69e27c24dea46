// ffeq: command-line front end for channel analysis, eye simulation,
// configuration search, false-lock coverage and the evaluation server.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ffeq/ffeq.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using namespace ffeq;

namespace {

enum Exit : int { exit_ok = 0, exit_runtime = 1, exit_usage = 2, exit_io = 3, exit_network = 4 };

int exit_code_for(ErrorCode c)
{
    switch (c) {
    case ErrorCode::Usage: return exit_usage;
    case ErrorCode::Io: return exit_io;
    case ErrorCode::Connection:
    case ErrorCode::Timeout:
    case ErrorCode::Frame: return exit_network;
    default: return exit_runtime;
    }
}

std::string utc_now()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

// -- run context -------------------------------------------------------------

struct Run {
    std::string command;
    std::vector<std::string> argv;
    std::string manifest_path;
    std::optional<std::uint64_t> seed;
    json config = json::object();
    json outputs = json::array();
    std::string started = utc_now();

    /// Writes `text` to `path` ("-" is stdout) and records it.
    void emit(const std::string& path, const std::string& text)
    {
        if (path.empty())
            return;
        if (path == "-") {
            std::cout << text;
            std::cout.flush();
            return;
        }
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::Io, "cannot write " + path);
        out << text;
        out.close();
        if (!out)
            throw Error(ErrorCode::Io, "failed writing " + path);
        outputs.push_back({{"path", path}, {"bytes", text.size()}});
    }

    void write_manifest(int status)
    {
        if (manifest_path.empty())
            return;
        json m = {{"tool", "ffeq"},
                  {"version", ffeq::version},
                  {"schema_version", 1},
                  {"command", command},
                  {"argv", argv},
                  {"config", config},
                  {"seed", seed ? json(*seed) : json(nullptr)},
                  {"started", started},
                  {"finished", utc_now()},
                  {"exit_status", status},
                  {"outputs", outputs}};
        std::ofstream out(manifest_path);
        if (!out)
            throw Error(ErrorCode::Io, "cannot write manifest " + manifest_path);
        out << m.dump(2) << '\n';
    }
};

// -- shared option parsing ------------------------------------------------------

std::string config_dir()
{
    const char* env = std::getenv("FFEQ_CONFIG_DIR");
    return env ? env : "";
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep))
        if (!item.empty())
            out.push_back(item);
    return out;
}

double to_number(const std::string& text, const std::string& what)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size())
            throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::Usage, "invalid number '" + text + "' for " + what);
    }
}

std::vector<double> number_list(const std::string& text, const std::string& what)
{
    std::vector<double> out;
    for (const auto& s : split(text, ','))
        out.push_back(to_number(s, what));
    return out;
}

/// key=value list: length, loss, fref, skin, delay.
ParametricChannel parse_parametric(const std::string& text)
{
    ParametricChannel p;
    bool have_delay = false;
    for (const auto& kv : split(text, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::Usage, "expected key=value in '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const double v = to_number(kv.substr(eq + 1), key);
        if (key == "length")
            p.length = v;
        else if (key == "loss")
            p.loss_db_per_m = v;
        else if (key == "fref")
            p.f_ref = v;
        else if (key == "skin")
            p.skin_fraction = v;
        else if (key == "delay") {
            p.bulk_delay = v;
            have_delay = true;
        } else
            throw Error(ErrorCode::Usage, "unknown channel parameter '" + key + "'");
    }
    if (!have_delay)
        p.bulk_delay = ParametricChannel::default_delay(p.length);
    p.validate();
    return p;
}

/// "reference", "parametric:k=v,...", a preset name under the config
/// directory, or a CSV file path.
ChannelModel parse_channel(const std::string& source)
{
    if (source.empty() || source == "reference")
        return ParametricChannel::reference_cable();
    if (source.rfind("parametric:", 0) == 0)
        return parse_parametric(source.substr(11));
    if (source.find('=') != std::string::npos && !fs::exists(source))
        return parse_parametric(source);
    if (!fs::exists(source) && !config_dir().empty()) {
        const fs::path preset = fs::path(config_dir()) / "channels" / (source + ".csv");
        if (fs::exists(preset))
            return load_tabulated(preset);
    }
    return load_tabulated(source);
}

PowerCalibration resolve_calibration(const std::string& path)
{
    if (!path.empty())
        return load_calibration(path);
    if (!config_dir().empty()) {
        const fs::path p = fs::path(config_dir()) / "power_calibration.json";
        if (fs::exists(p))
            return load_calibration(p);
    }
    return default_calibration();
}

void check_format(const std::string& f)
{
    if (f != "json" && f != "csv")
        throw Error(ErrorCode::Usage, "format must be json or csv");
}

std::string csv_number(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// Hardware selection shared by eye and optimize.
struct HardwareOptions {
    std::string slices = "8,8,8";
    std::string polarity = "-1,1,-1";
    std::string codes = "15,15";
    std::string r_slice = "300,300,300";
    double vdd = 1.2;
    std::string file;
    bool use_default = false;

    void attach(CLI::App* app)
    {
        app->add_option("--slices", slices, "enabled slices per tap, n0,n1,n2 in 0..8");
        app->add_option("--polarity", polarity, "tap polarity, e.g. -1,1,-1");
        app->add_option("--codes", codes, "inter-tap delay codes 0..15 (delay = (code+1) UI/16)");
        app->add_option("--r-slice", r_slice, "slice resistance per tap (300, 700 or 1100 ohm)");
        app->add_option("--vdd", vdd, "supply voltage");
        app->add_option("--hw", file, "hardware configuration JSON file");
        app->add_flag("--default-config", use_default, "equal weights with one-UI delays");
    }

    HardwareConfig resolve() const
    {
        if (use_default)
            return default_hardware();
        if (!file.empty()) {
            std::ifstream in(file);
            if (!in)
                throw Error(ErrorCode::Io, "cannot open " + file);
            return parse_guard("hardware file", [&] { return json::parse(in).get<HardwareConfig>(); });
        }
        HardwareConfig h;
        auto ints = [](const std::string& s, auto& dst, const char* what) {
            const auto v = number_list(s, what);
            if (v.size() != dst.size())
                throw Error(ErrorCode::Usage, std::string(what) + " needs " + std::to_string(dst.size()) + " values");
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] = static_cast<std::remove_reference_t<decltype(dst[0])>>(v[i]);
        };
        ints(slices, h.slices, "--slices");
        ints(polarity, h.polarity, "--polarity");
        ints(codes, h.delay_codes, "--codes");
        ints(r_slice, h.r_slice, "--r-slice");
        h.vdd = vdd;
        h.validate();
        return h;
    }
};

struct StimulusOptions {
    int prbs_order = 7;
    std::uint64_t seed = 1;
    std::size_t nbits = 1270;
    std::size_t discard = 254;
    double rise = 0.1;
    int oversample = 32;

    // `--seed` names the PRBS seed only where no search seed competes for it.
    void attach(CLI::App* app, bool owns_seed)
    {
        app->add_option("--prbs-order", prbs_order, "PRBS order (3..31)");
        app->add_option(owns_seed ? "--prbs-seed,--seed" : "--prbs-seed", seed, "PRBS seed (nonzero)");
        app->add_option("--nbits", nbits, "number of transmitted bits");
        app->add_option("--discard", discard, "warm-up bits dropped before folding");
        app->add_option("--rise", rise, "edge time as a fraction of UI");
        app->add_option("--oversample", oversample, "samples per UI (power of two >= 8)");
    }

    StimulusSettings settings() const { return {prbs_order, seed, nbits, discard, rise}; }
};

// -- eye plotting ------------------------------------------------------------------

std::string eye_svg(const EyeRaster& r, const std::string& title)
{
    svg::Plot plot;
    plot.title = title;
    plot.x_label = "time (UI)";
    plot.y_label = "voltage (V)";
    plot.legend = false;
    const std::size_t cols = r.samples_per_window();
    std::vector<double> x(cols);
    for (std::size_t c = 0; c < cols; ++c)
        x[c] = double(c) / r.oversample - 1.0;
    const std::size_t stride = std::max<std::size_t>(1, r.n_traces / 400);
    for (std::size_t k = 0; k < r.n_traces; k += stride) {
        const auto t = r.trace(k);
        plot.series.push_back({"", x, {t.begin(), t.end()}, r.labels[k] ? "#1f77b4" : "#d62728", 0.8, 0.25});
    }
    return svg::render(plot);
}

// -- commands ----------------------------------------------------------------------

struct ChannelCmd {
    std::string parametric;
    std::string channel;
    double fmax = 3e9;
    double fstep = 10e6;
    double rate = 0.5e9;
    std::string taps;
    std::string delays_ui;
    std::string out = "-";
    std::string svg;
    std::string format = "csv";

    int run(Run& ctx)
    {
        check_format(format);
        const ChannelModel model = parametric.empty() ? parse_channel(channel) : parse_parametric(parametric);
        if (!(fstep > 0.0) || !(fmax > fstep))
            throw Error(ErrorCode::Usage, "need 0 < fstep < fmax");
        const auto data_rate = DataRateSettings::from_clock(rate);
        TapConfig ffe;
        if (!taps.empty()) {
            ffe.weights = number_list(taps, "--taps");
            ffe.delays.clear();
            for (double d : number_list(delays_ui, "--delays-ui"))
                ffe.delays.push_back(d * data_rate.ui);
            ffe.validate();
        }
        const FrequencyGrid grid{0.0, fstep, static_cast<std::size_t>(std::floor(fmax / fstep + 1e-9)) + 1};
        const auto ch = channel_response(model, grid);
        const auto ffe_h = ffe_transfer(ffe, grid);
        const auto eq = equalized_response(ch, ffe, grid);
        auto db = [](Complex h) { return std::max(-300.0, 20.0 * std::log10(std::abs(h))); };

        std::vector<double> f(grid.n_points), cdb(grid.n_points), fdb(grid.n_points), edb(grid.n_points),
            ddb(grid.n_points);
        for (std::size_t i = 0; i < grid.n_points; ++i) {
            f[i] = grid.frequency(i);
            cdb[i] = db(ch[i]);
            fdb[i] = db(ffe_h[i]);
            edb[i] = db(eq[i]);
            const double x = f[i] * data_rate.ui;
            const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
            ddb[i] = std::max(-300.0, 20.0 * std::log10(std::abs(sinc)));
        }
        ctx.config = {{"channel", channel_to_json(model)}, {"grid", {{"f_step", fstep}, {"f_max", fmax}}},
                      {"rate", data_rate},                  {"taps", taps_to_json(ffe, data_rate)}};

        std::string text;
        if (format == "csv") {
            std::ostringstream os;
            os << "f_hz,channel_db,ffe_db,equalized_db,data_db\n";
            for (std::size_t i = 0; i < grid.n_points; ++i)
                os << csv_number(f[i]) << ',' << csv_number(cdb[i]) << ',' << csv_number(fdb[i]) << ','
                   << csv_number(edb[i]) << ',' << csv_number(ddb[i]) << '\n';
            text = os.str();
        } else {
            json j = {{"schema_version", 1}, {"config", ctx.config},      {"f_hz", f},
                      {"channel_db", cdb},   {"ffe_db", fdb},             {"equalized_db", edb},
                      {"data_db", ddb},      {"equalized_ripple_db", ripple_db(eq)}};
            text = j.dump(2) + "\n";
        }
        ctx.emit(out, text);
        if (!svg.empty()) {
            svg::Plot plot;
            plot.title = "Transfer functions";
            plot.x_label = "frequency (GHz)";
            plot.y_label = "magnitude (dB)";
            plot.y_floor = -60.0;
            std::vector<double> ghz(f.size());
            for (std::size_t i = 0; i < f.size(); ++i)
                ghz[i] = f[i] / 1e9;
            plot.series = {{"channel", ghz, cdb, "#1f77b4"},
                           {"FFE", ghz, fdb, "#2ca02c"},
                           {"equalized", ghz, edb, "#d62728", 2.0},
                           {"NRZ data spectrum", ghz, ddb, "#7f7f7f", 1.0, 0.7}};
            ctx.emit(svg, svg::render(plot));
        }
        return exit_ok;
    }
};

struct EyeCmd {
    std::string channel = "reference";
    double rate = 1e9;
    HardwareOptions hw;
    StimulusOptions stim;
    std::string calibration;
    std::string out = "-";
    std::string raster_out;
    std::string waveform_out;
    std::string svg;
    std::string format = "json";

    int run(Run& ctx)
    {
        check_format(format);
        LinkSetup setup;
        setup.channel = parse_channel(channel);
        setup.rate = DataRateSettings::from_clock(rate, stim.oversample);
        setup.stimulus = stim.settings();
        setup.power = resolve_calibration(calibration);
        const HardwareConfig config = hw.resolve();
        ctx.seed = stim.seed;
        ctx.config = {{"channel", channel_to_json(setup.channel)}, {"rate", setup.rate},
                      {"stimulus", setup.stimulus},                {"hardware", config},
                      {"calibration", setup.power}};

        const LinkEvaluator link(setup);
        const auto t = link.trace(config);
        if (format == "json") {
            json j = {{"schema_version", 1},
                      {"hardware", config},
                      {"taps", taps_to_json(t.taps, setup.rate)},
                      {"swing", t.swing},
                      {"result", t.result},
                      {"traces", t.raster.n_traces}};
            ctx.emit(out, j.dump(2) + "\n");
        } else {
            std::ostringstream os;
            os << "eye_height,eye_width,sample_phase,i_av,fom\n"
               << csv_number(t.result.metrics.height) << ',' << csv_number(t.result.metrics.width) << ','
               << csv_number(t.result.metrics.sample_phase) << ',' << csv_number(t.result.i_av) << ','
               << (std::isfinite(t.result.fom) ? csv_number(t.result.fom) : "inf") << '\n';
            ctx.emit(out, os.str());
        }
        if (!raster_out.empty()) {
            std::ostringstream os;
            write_csv(os, t.raster);
            ctx.emit(raster_out, os.str());
        }
        if (!waveform_out.empty()) {
            std::ostringstream os;
            write_csv(os, t.rx);
            ctx.emit(waveform_out, os.str());
        }
        if (!svg.empty())
            ctx.emit(svg, eye_svg(t.raster, "Eye diagram"));
        return exit_ok;
    }
};

struct OptimizeCmd {
    std::string channel = "reference";
    double rate = 1e9;
    std::string space = "reduced";
    std::string space_file;
    bool conventional = false;
    bool exhaustive = false;
    std::size_t restarts = 8;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    double budget = 1e6;
    std::string objective = "fom";
    StimulusOptions stim;
    std::string calibration;
    std::string out = "-";
    std::string svg_before;
    std::string svg_after;
    std::string format = "json";

    SearchSpace resolve_space() const
    {
        SearchSpace s;
        if (!space_file.empty()) {
            std::ifstream in(space_file);
            if (!in)
                throw Error(ErrorCode::Io, "cannot open " + space_file);
            s = parse_guard("search space file", [&] { return json::parse(in).get<SearchSpace>(); });
        } else if (space == "reduced")
            s = SearchSpace::reduced();
        else if (space == "full")
            s = SearchSpace::full();
        else
            throw Error(ErrorCode::Usage, "space must be reduced or full (or use --space-file)");
        if (conventional)
            s = s.conventional();
        s.validate();
        return s;
    }

    int run(Run& ctx)
    {
        check_format(format);
        if (objective != "fom" && objective != "flatness")
            throw Error(ErrorCode::Usage, "objective must be fom or flatness");
        const SearchSpace sp = resolve_space();
        LinkSetup setup;
        setup.channel = parse_channel(channel);
        setup.rate = DataRateSettings::from_clock(rate, stim.oversample);
        setup.stimulus = stim.settings();
        setup.power = resolve_calibration(calibration);
        SearchOptions opts;
        opts.budget = budget;
        opts.threads = threads;
        ctx.seed = seed;
        ctx.config = {{"channel", channel_to_json(setup.channel)},
                      {"rate", setup.rate},
                      {"stimulus", setup.stimulus},
                      {"calibration", setup.power},
                      {"space", sp},
                      {"objective", objective},
                      {"method", exhaustive ? "exhaustive" : "heuristic"},
                      {"restarts", restarts},
                      {"seed", seed}};

        json search = {{"method", exhaustive ? "exhaustive" : "coordinate-descent"},
                       {"space", sp},
                       {"cardinality", sp.cardinality()},
                       {"conventional", conventional}};
        if (!exhaustive) {
            search["restarts"] = restarts;
            search["seed"] = seed;
        }
        json doc = {{"tool", "ffeq"},       {"version", ffeq::version}, {"schema_version", 1},
                    {"objective", objective}, {"channel", ctx.config["channel"]}, {"rate", setup.rate}};

        HardwareConfig best;
        if (objective == "fom") {
            const LinkEvaluator link(setup);
            const auto res = exhaustive ? exhaustive_search(sp, link, opts)
                                        : heuristic_search(sp, link, restarts, seed, opts);
            best = res.config;
            search["evaluations"] = res.evaluations;
            if (!exhaustive)
                search["starts"] = res.starts;
            const auto before = link.trace(default_hardware());
            const auto after = link.trace(best);
            doc["stimulus"] = setup.stimulus;
            doc["config"] = best;
            doc["taps"] = taps_to_json(after.taps, setup.rate);
            doc["result"] = res.result;
            doc["default"] = {{"config", default_hardware()}, {"result", before.result}};
            doc["search"] = search;
            emit_result(ctx, doc, res.result.metrics.height, res.result.metrics.width, res.result.i_av,
                        res.result.fom);
            if (!svg_before.empty())
                ctx.emit(svg_before, eye_svg(before.raster, "Default configuration"));
            if (!svg_after.empty())
                ctx.emit(svg_after, eye_svg(after.raster, "Optimized configuration"));
        } else {
            const FlatnessObjective obj(setup.channel, setup.rate, FlatnessObjective::default_band(), setup.power);
            const auto res = exhaustive ? exhaustive_search(sp, obj, flatness_rank, opts)
                                        : heuristic_search(sp, obj, flatness_rank, restarts, seed, opts);
            best = res.config;
            search["evaluations"] = res.evaluations;
            if (!exhaustive)
                search["starts"] = res.starts;
            doc["config"] = best;
            doc["taps"] = taps_to_json(realized_taps(best, setup.rate, setup.power.r_load), setup.rate);
            doc["result"] = res.result;
            doc["band"] = {{"f_start", obj.band().f_start}, {"f_step", obj.band().f_step},
                           {"f_max", obj.band().max_frequency()}};
            doc["search"] = search;
            if (format == "json")
                ctx.emit(out, doc.dump(2) + "\n");
            else {
                std::ostringstream os;
                os << "ripple_db,i_av,evaluations\n"
                   << csv_number(res.result.ripple_db) << ',' << csv_number(res.result.i_av) << ','
                   << res.evaluations << '\n';
                ctx.emit(out, os.str());
            }
        }
        return exit_ok;
    }

    void emit_result(Run& ctx, const json& doc, double eh, double ew, double iav, double f)
    {
        if (format == "json") {
            ctx.emit(out, doc.dump(2) + "\n");
            return;
        }
        std::ostringstream os;
        os << "eye_height,eye_width,i_av,fom,evaluations\n"
           << csv_number(eh) << ',' << csv_number(ew) << ',' << csv_number(iav) << ','
           << (std::isfinite(f) ? csv_number(f) : "inf") << ',' << doc["search"]["evaluations"].get<std::size_t>()
           << '\n';
        ctx.emit(out, os.str());
    }
};

struct FldCmd {
    double ui = 2e-9;
    std::string delays = "1,2,3,4";
    std::size_t trials = 1000;
    double mismatch = 0.05;
    std::uint64_t seed = 1;
    std::string out = "-";
    std::string format = "json";

    int run(Run& ctx)
    {
        check_format(format);
        std::vector<double> d;
        for (double x : number_list(delays, "--delays"))
            d.push_back(x * ui);
        if (d.empty())
            throw Error(ErrorCode::Usage, "no delays given");
        if (!(mismatch >= 0.0 && mismatch < 1.0))
            throw Error(ErrorCode::Usage, "mismatch bound must lie in [0, 1)");
        ctx.seed = seed;
        ctx.config = {{"ui", ui}, {"delays_ui", number_list(delays, "--delays")}, {"trials", trials},
                      {"mismatch", mismatch}, {"seed", seed}};
        const auto rows = dll::fld_coverage(ui, d, trials, mismatch, seed);
        if (format == "json") {
            json j = {{"schema_version", 1}, {"config", ctx.config}, {"rows", coverage_to_json(rows, ui)}};
            ctx.emit(out, j.dump(2) + "\n");
        } else {
            std::ostringstream os;
            os << "delay_ui,trials,pass,fail_lock_1,fail_lock_2,fail_lock_3,fail_non_integer,detection_rate\n";
            for (const auto& r : rows)
                os << csv_number(r.total_delay / ui) << ',' << r.trials << ',' << r.pass << ',' << r.integer_lock[0]
                   << ',' << r.integer_lock[1] << ',' << r.integer_lock[2] << ',' << r.non_integer << ','
                   << csv_number(r.detection_rate()) << '\n';
            ctx.emit(out, os.str());
        }
        return exit_ok;
    }
};

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct ServeCmd {
    std::string host = "127.0.0.1";
    std::uint16_t port = 7465;
    std::string presets_dir;
    std::string calibration;

    int run(Run& ctx)
    {
        cosim::ChannelPresets presets;
        std::string dir = presets_dir;
        if (dir.empty() && !config_dir().empty() && fs::is_directory(fs::path(config_dir()) / "channels"))
            dir = (fs::path(config_dir()) / "channels").string();
        if (!dir.empty())
            presets.load_directory(dir);
        const auto cal = resolve_calibration(calibration);
        ctx.config = {{"host", host}, {"port", port}, {"channel_presets", dir}, {"calibration", cal}};
        cosim::Server server(cosim::RequestHandler(std::move(presets), cal), {host, port});
        server.start();
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cerr << "ffeq: serving on " << host << ':' << server.port() << std::endl;
        while (server.running() && !g_stop)
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        server.stop();
        std::cerr << "ffeq: served " << server.requests_served() << " requests" << std::endl;
        return exit_ok;
    }
};

struct ClientCmd {
    std::string host = "127.0.0.1";
    std::uint16_t port = 7465;
    std::string request_path;
    double timeout = 30.0;
    bool shutdown = false;
    std::string out = "-";

    int run(Run& ctx)
    {
        cosim::Client client({host, port}, timeout);
        if (shutdown) {
            client.shutdown_server();
            ctx.emit(out, json({{"type", "shutdown_ack"}}).dump() + "\n");
            return exit_ok;
        }
        if (request_path.empty())
            throw Error(ErrorCode::Usage, "--request is required unless --shutdown is given");
        json req;
        if (request_path == "-")
            req = parse_guard("request", [] { return json::parse(std::cin); });
        else {
            std::ifstream in(request_path);
            if (!in)
                throw Error(ErrorCode::Io, "cannot open " + request_path);
            req = parse_guard("request", [&] { return json::parse(in); });
        }
        if (!req.is_object())
            throw Error(ErrorCode::Parse, "request must be a JSON object");
        if (!req.contains("type"))
            req["type"] = "eval_request";
        if (!req.contains("protocol_version"))
            req["protocol_version"] = cosim::protocol_version;
        if (!req.contains("request_id"))
            req["request_id"] = 1;
        ctx.config = {{"host", host}, {"port", port}, {"request", req}};
        client.send(req);
        const json resp = client.receive();
        ctx.emit(out, resp.dump(2) + "\n");
        return resp.value("status", "") == "ok" ? exit_ok : exit_runtime;
    }
};

int run_cli(std::vector<std::string> args);

int replay(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open manifest " + path);
    const json m = parse_guard("manifest", [&] { return json::parse(in); });
    auto argv = parse_guard("manifest", [&] { return m.at("argv").get<std::vector<std::string>>(); });
    if (argv.empty() || (argv.size() > 1 && argv[1] == "replay"))
        throw Error(ErrorCode::Usage, "manifest does not describe a replayable run");
    return run_cli(std::move(argv));
}

int run_cli(std::vector<std::string> args)
{
    CLI::App app{"FFE channel equalization toolkit", "ffeq"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ffeq::version);

    Run ctx;
    ctx.argv = args;
    auto manifest_opt = [&](CLI::App* sub) {
        sub->add_option("--manifest", ctx.manifest_path, "write a run manifest (JSON) to this path");
    };

    ChannelCmd channel;
    auto* c = app.add_subcommand("channel", "channel, FFE and equalized transfer functions");
    auto* src = c->add_option_group("source", "channel source");
    src->add_option("--parametric", channel.parametric, "length=3,loss=7,fref=1e9[,skin=0.5][,delay=s]");
    src->add_option("--channel", channel.channel, "reference | parametric:... | preset | CSV file");
    src->require_option(1);
    c->add_option("--fmax", channel.fmax, "highest frequency (Hz)");
    c->add_option("--fstep", channel.fstep, "frequency step (Hz)");
    c->add_option("--rate", channel.rate, "data rate for the FFE delays and data spectrum (bit/s)");
    c->add_option("--taps", channel.taps, "FFE weights w0,w1,...");
    c->add_option("--delays-ui", channel.delays_ui, "inter-tap delays in UI d1,d2,...");
    c->add_option("--out", channel.out, "output path, - for stdout");
    c->add_option("--svg", channel.svg, "write an SVG plot");
    c->add_option("--format", channel.format, "json or csv");
    c->add_option("--seed", ctx.seed, "recorded for reproducibility (the command is deterministic)");
    manifest_opt(c);

    EyeCmd eye;
    auto* e = app.add_subcommand("eye", "simulate one configuration and measure its eye");
    e->add_option("--channel", eye.channel, "reference | parametric:... | preset | CSV file");
    e->add_option("--rate", eye.rate, "data rate (bit/s)");
    eye.hw.attach(e);
    eye.stim.attach(e, true);
    e->add_option("--calibration", eye.calibration, "power calibration JSON");
    e->add_option("--out", eye.out, "metrics output path, - for stdout");
    e->add_option("--raster-out", eye.raster_out, "eye raster CSV (one trace per row)");
    e->add_option("--waveform-out", eye.waveform_out, "received waveform CSV (t,v)");
    e->add_option("--svg", eye.svg, "write an SVG eye plot");
    e->add_option("--format", eye.format, "json or csv");
    manifest_opt(e);

    OptimizeCmd opt;
    auto* o = app.add_subcommand("optimize", "search the driver configuration space");
    o->add_option("--channel", opt.channel, "reference | parametric:... | preset | CSV file");
    o->add_option("--rate", opt.rate, "data rate (bit/s)");
    o->add_option("--space", opt.space, "reduced or full");
    o->add_option("--space-file", opt.space_file, "search space JSON");
    o->add_flag("--conventional", opt.conventional, "pin both delays to one UI");
    auto* ex = o->add_flag("--exhaustive", opt.exhaustive, "score every configuration");
    o->add_option("--restarts", opt.restarts, "coordinate-descent restarts")->excludes(ex);
    o->add_option("--seed", opt.seed, "restart seed");
    o->add_option("--threads", opt.threads, "worker threads (0: all cores)");
    o->add_option("--budget", opt.budget, "maximum configurations for exhaustive search");
    o->add_option("--objective", opt.objective, "fom or flatness");
    opt.stim.attach(o, false);
    o->add_option("--calibration", opt.calibration, "power calibration JSON");
    o->add_option("--out", opt.out, "result path, - for stdout");
    o->add_option("--svg-before", opt.svg_before, "eye SVG of the default configuration");
    o->add_option("--svg-after", opt.svg_after, "eye SVG of the optimized configuration");
    o->add_option("--format", opt.format, "json or csv");
    manifest_opt(o);

    FldCmd fld;
    auto* f = app.add_subcommand("fld", "false-lock detector coverage over random stage mismatch");
    f->add_option("--ui", fld.ui, "unit interval (s)");
    f->add_option("--delays", fld.delays, "candidate lock delays in UI, comma separated");
    f->add_option("--trials", fld.trials, "mismatch draws per delay");
    f->add_option("--mismatch", fld.mismatch, "stage mismatch bound (fraction)");
    f->add_option("--seed", fld.seed, "random seed");
    f->add_option("--out", fld.out, "output path, - for stdout");
    f->add_option("--format", fld.format, "json or csv");
    manifest_opt(f);

    ServeCmd serve;
    auto* s = app.add_subcommand("serve", "run the evaluation server");
    s->add_option("--host", serve.host, "bind address");
    s->add_option("--port", serve.port, "TCP port (0 picks a free one)");
    s->add_option("--channel-presets", serve.presets_dir, "directory of named CSV channels");
    s->add_option("--calibration", serve.calibration, "power calibration JSON");
    manifest_opt(s);

    ClientCmd client;
    auto* cl = app.add_subcommand("eval-client", "send one request to an evaluation server");
    cl->add_option("--host", client.host, "server address");
    cl->add_option("--port", client.port, "server port");
    cl->add_option("--request", client.request_path, "request JSON file, - for stdin");
    cl->add_option("--timeout", client.timeout, "seconds to wait for the response");
    cl->add_flag("--shutdown", client.shutdown, "ask the server to stop");
    cl->add_option("--out", client.out, "response path, - for stdout");
    manifest_opt(cl);

    std::string manifest_in;
    auto* rp = app.add_subcommand("replay", "re-run the command recorded in a manifest");
    rp->add_option("manifest", manifest_in, "manifest JSON")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    try {
        app.parse(std::move(rev));
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? exit_ok : exit_usage;
    }

    int status = exit_runtime;
    try {
        if (*c) {
            ctx.command = "channel";
            status = channel.run(ctx);
        } else if (*e) {
            ctx.command = "eye";
            status = eye.run(ctx);
        } else if (*o) {
            ctx.command = "optimize";
            status = opt.run(ctx);
        } else if (*f) {
            ctx.command = "fld";
            status = fld.run(ctx);
        } else if (*s) {
            ctx.command = "serve";
            status = serve.run(ctx);
        } else if (*cl) {
            ctx.command = "eval-client";
            status = client.run(ctx);
        } else if (*rp) {
            return replay(manifest_in);
        }
    } catch (const Error& err) {
        std::cerr << "ffeq: " << err.what() << std::endl;
        status = exit_code_for(err.code());
    }
    try {
        ctx.write_manifest(status);
    } catch (const Error& err) {
        std::cerr << "ffeq: " << err.what() << std::endl;
        if (status == exit_ok)
            status = exit_io;
    }
    return status;
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run_cli(std::vector<std::string>(argv, argv + argc));
    } catch (const std::exception& e) {
        std::cerr << "ffeq: " << e.what() << std::endl;
        return exit_runtime;
    }
}
