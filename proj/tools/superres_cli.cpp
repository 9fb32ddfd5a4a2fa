// superres — batch front-end for the two-point-source sensitivity library.
//
// superres <sweep-sensitivity|coefficients|dmin|validate>
//          --config <file> [--out <path>] [--format csv|json] [--threads N]
//
// Exit codes: 0 success, 1 config error, 2 numeric failure
// (singularity / no crossing), 3 validation failure.
//
// Environment overrides (these two only): SUPERRES_OUT, SUPERRES_THREADS.

#include "superres/superres.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using nlohmann::json;
using namespace superres;

namespace {

constexpr double pi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// config plumbing
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const json& member(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object())
        throw ConfigError("config error at " + (path.empty() ? std::string("/") : path) +
                          ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end())
        throw ConfigError("config error at " + path + "/" + key + ": missing required field");
    return *it;
}

double num_at(const json& obj, const char* key, const std::string& path) {
    const json& v = member(obj, key, path);
    if (!v.is_number())
        throw ConfigError("config error at " + path + "/" + key + ": expected a number");
    return v.get<double>();
}

double num_or(const json& obj, const char* key, const std::string& path, double fallback) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    return num_at(obj, key, path);
}

long int_at(const json& obj, const char* key, const std::string& path) {
    const json& v = member(obj, key, path);
    if (!v.is_number_integer())
        throw ConfigError("config error at " + path + "/" + key + ": expected an integer");
    return v.get<long>();
}

long int_or(const json& obj, const char* key, const std::string& path, long fallback) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    return int_at(obj, key, path);
}

std::string str_at(const json& obj, const char* key, const std::string& path) {
    const json& v = member(obj, key, path);
    if (!v.is_string())
        throw ConfigError("config error at " + path + "/" + key + ": expected a string");
    return v.get<std::string>();
}

Scene parse_scene(const json& cfg) {
    const json& s = member(cfg, "scene", "");
    try {
        return make_scene(num_or(s, "d", "/scene", 1.0), num_at(s, "theta", "/scene"),
                          num_at(s, "n_mean", "/scene"), num_or(s, "gamma", "/scene", 0.0),
                          num_or(s, "kappa", "/scene", 1.0), num_or(s, "waist", "/scene", 1.0));
    } catch (const Error& e) {
        throw ConfigError("config error at /scene: " + std::string(e.what()));
    }
}

Misalignment parse_misalignment(const json& cfg) {
    if (!cfg.contains("misalignment")) return Misalignment();
    const json& m = cfg.at("misalignment");
    try {
        return Misalignment(num_at(m, "d_s", "/misalignment"),
                            num_at(m, "theta_s", "/misalignment"));
    } catch (const Error& e) {
        throw ConfigError("config error at /misalignment: " + std::string(e.what()));
    }
}

ModeBasis parse_basis(const json& cfg) {
    const json& b = member(cfg, "basis", "");
    const long q = int_at(b, "q_max", "/basis");
    try {
        if (!b.contains("modes")) return ModeBasis::full(static_cast<int>(q));
        const json& modes = b.at("modes");
        if (!modes.is_array() || modes.empty())
            throw ConfigError("config error at /basis/modes: expected a non-empty array");
        std::vector<std::pair<int, int>> act;
        for (const json& e : modes) {
            if (!e.is_array() || e.size() != 2)
                throw ConfigError("config error at /basis/modes: entries must be [n, m] pairs");
            act.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        }
        return ModeBasis(static_cast<int>(q), std::move(act));
    } catch (const Error& e) {
        throw ConfigError("config error at /basis: " + std::string(e.what()));
    }
}

struct NoiseSpec {
    std::optional<double> ct_target;   // ensemble target mean off-diagonal power
    std::optional<double> dark_sigma;  // uniform sigma = N^dc / (2 N kappa)
    std::optional<double> dark_mean;   // uniform N^dc per mode
    bool any() const { return ct_target || dark_sigma || dark_mean; }
};

NoiseSpec parse_noise(const json& cfg) {
    NoiseSpec spec;
    if (!cfg.contains("noise")) return spec;
    const json& n = cfg.at("noise");
    if (n.contains("crosstalk"))
        spec.ct_target = num_at(n.at("crosstalk"), "target_offdiag_power", "/noise/crosstalk");
    if (n.contains("dark")) {
        const json& d = n.at("dark");
        if (d.contains("sigma") && d.contains("mean"))
            throw ConfigError("config error at /noise/dark: give either sigma or mean, not both");
        if (d.contains("sigma"))
            spec.dark_sigma = num_at(d, "sigma", "/noise/dark");
        else if (d.contains("mean"))
            spec.dark_mean = num_at(d, "mean", "/noise/dark");
        else
            throw ConfigError("config error at /noise/dark: needs sigma or mean");
    }
    return spec;
}

std::vector<std::uint64_t> parse_seeds(const json& cfg) {
    std::vector<std::uint64_t> seeds;
    if (!cfg.contains("seeds")) return seeds;
    const json& s = cfg.at("seeds");
    if (s.is_array()) {
        for (const json& e : s) {
            if (!e.is_number_integer() || e.get<long long>() < 0)
                throw ConfigError("config error at /seeds: entries must be non-negative integers");
            seeds.push_back(e.get<std::uint64_t>());
        }
    } else if (s.is_object()) {
        const long base = int_at(s, "base", "/seeds");
        const long count = int_at(s, "count", "/seeds");
        if (base < 0 || count < 1)
            throw ConfigError("config error at /seeds: need base >= 0 and count >= 1");
        for (long i = 0; i < count; ++i) seeds.push_back(static_cast<std::uint64_t>(base + i));
    } else {
        throw ConfigError("config error at /seeds: expected an array or {base, count}");
    }
    if (seeds.empty()) throw ConfigError("config error at /seeds: empty seed list");
    return seeds;
}

// separations are configured as x = d / (2 w); rows report both
std::vector<double> parse_xgrid(const json& cfg) {
    const json& g = member(cfg, "d_grid", "");
    std::vector<double> xs;
    if (g.contains("x")) {
        const json& list = g.at("x");
        if (!list.is_array()) throw ConfigError("config error at /d_grid/x: expected an array");
        for (const json& e : list) {
            if (!e.is_number()) throw ConfigError("config error at /d_grid/x: expected numbers");
            xs.push_back(e.get<double>());
        }
    } else {
        const double lo = num_at(g, "x_lo", "/d_grid");
        const double hi = num_at(g, "x_hi", "/d_grid");
        const long points = int_at(g, "points", "/d_grid");
        std::string spacing = g.contains("spacing") ? str_at(g, "spacing", "/d_grid") : "log";
        if (points < 1) throw ConfigError("config error at /d_grid/points: need >= 1");
        if (spacing != "log" && spacing != "linear")
            throw ConfigError("config error at /d_grid/spacing: expected log or linear");
        if (spacing == "log" && !(lo > 0.0))
            throw ConfigError("config error at /d_grid/x_lo: log spacing needs x_lo > 0");
        if (!(hi >= lo)) throw ConfigError("config error at /d_grid: need x_hi >= x_lo");
        for (long i = 0; i < points; ++i) {
            const double t = (points == 1) ? 0.0 : static_cast<double>(i) / (points - 1.0);
            xs.push_back(spacing == "log" ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t);
        }
    }
    if (xs.empty()) throw ConfigError("config error at /d_grid: empty separation grid");
    for (double x : xs)
        if (!(x >= 0.0) || !std::isfinite(x))
            throw ConfigError("config error at /d_grid: separations must be finite and >= 0");
    return xs;
}

struct MethodSpec {
    enum Kind { demux_exact, ideal_closed, asymptotic, direct_imaging, approx } kind;
    NoiseRegime regime = NoiseRegime::misalignment_only;  // meaningful for approx only
    std::string tag;
};

MethodSpec parse_method(const json& cfg) {
    const std::string tag = str_at(cfg, "method", "");
    MethodSpec m;
    m.tag = tag;
    if (tag == "demux-exact") {
        m.kind = MethodSpec::demux_exact;
    } else if (tag == "demux-ideal-closed") {
        m.kind = MethodSpec::ideal_closed;
    } else if (tag == "demux-asymptotic") {
        m.kind = MethodSpec::asymptotic;
    } else if (tag == "direct-imaging") {
        m.kind = MethodSpec::direct_imaging;
    } else if (tag.rfind("approx-", 0) == 0) {
        m.kind = MethodSpec::approx;
        try {
            m.regime = parse_noise_regime(tag.substr(7));
        } catch (const Error& e) {
            throw ConfigError("config error at /method: " + std::string(e.what()));
        }
    } else {
        throw ConfigError("config error at /method: unknown method tag '" + tag + "'");
    }
    return m;
}

PixelGrid parse_pixel_grid(const json& cfg, const Scene& scene) {
    if (!cfg.contains("pixel_grid")) return PixelGrid::standard(scene);
    const json& g = cfg.at("pixel_grid");
    try {
        return PixelGrid(static_cast<int>(int_at(g, "n_p", "/pixel_grid")),
                         num_at(g, "half_side", "/pixel_grid"));
    } catch (const Error& e) {
        throw ConfigError("config error at /pixel_grid: " + std::string(e.what()));
    }
}

// ---------------------------------------------------------------------------
// output plumbing
// ---------------------------------------------------------------------------

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt(long v) { return std::to_string(v); }

struct Table {
    std::vector<std::string> columns;
    std::vector<std::string> units;  // parallel to columns
    std::vector<std::vector<std::string>> rows;
};

struct Meta {
    std::string command;
    std::string method;
    std::vector<std::uint64_t> seeds;
    json config;
};

std::string seeds_csv(const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(seeds[i]);
    }
    return out;
}

void write_csv(std::ostream& os, const Meta& meta, const Table& t) {
    os << "# superres " << version_string << "\n";
    os << "# command: " << meta.command << "\n";
    os << "# method: " << meta.method << "\n";
    os << "# seeds: " << seeds_csv(meta.seeds) << "\n";
    os << "# units:";
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        os << (i ? "," : " ") << t.columns[i] << "=" << t.units[i];
    os << "\n";
    os << "# config: " << meta.config.dump() << "\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
    os << "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << "\n";
    }
}

void write_json(std::ostream& os, const Meta& meta, const Table& t) {
    json units = json::object();
    for (std::size_t i = 0; i < t.columns.size(); ++i) units[t.columns[i]] = t.units[i];
    json head = json::object();
    head["artifact_version"] = version_string;
    head["command"] = meta.command;
    head["method"] = meta.method;
    head["seeds"] = meta.seeds;
    head["units"] = units;
    head["config"] = meta.config;
    head["columns"] = t.columns;
    // rows carry shortest round-trip formatting; splice them in verbatim
    std::string out = head.dump(2);
    out.pop_back();  // trailing '}'
    while (!out.empty() && (out.back() == '\n' || out.back() == ' ')) out.pop_back();
    os << out << ",\n  \"rows\": [";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        os << (r ? ",\n    [" : "\n    [");
        for (std::size_t i = 0; i < t.rows[r].size(); ++i) {
            const std::string& cell = t.rows[r][i];
            const bool numeric = cell != "nan" && cell != "inf" && cell != "-inf";
            os << (i ? "," : "") << (numeric ? cell : "null");
        }
        os << "]";
    }
    os << "\n  ]\n}\n";
}

void emit(std::ostream& os, const std::string& format, const Meta& meta, const Table& t) {
    if (format == "json")
        write_json(os, meta, t);
    else
        write_csv(os, meta, t);
}

// ---------------------------------------------------------------------------
// work pool: deterministic output order, first exception wins
// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min<int>(threads, static_cast<int>(n));
    pool.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// shared evaluation helpers
// ---------------------------------------------------------------------------

DarkCounts make_dark(const NoiseSpec& noise, const Scene& scene, std::size_t n_modes) {
    if (noise.dark_sigma) return DarkCounts::uniform_sigma(*noise.dark_sigma, scene, n_modes);
    if (noise.dark_mean) return DarkCounts::uniform_mean(*noise.dark_mean, n_modes);
    return DarkCounts::none(n_modes);
}

double noise_sigma(const NoiseSpec& noise, const Scene& scene) {
    if (noise.dark_sigma) return *noise.dark_sigma;
    if (noise.dark_mean) return *noise.dark_mean / (2.0 * scene.n_kappa());
    return 0.0;
}

struct PointValue {
    double m = 0.0;
    Eigen::VectorXd coeffs;
};

PointValue eval_demux(const Scene& scene, const Misalignment& mis, const CrosstalkMatrix& ct,
                      const DarkCounts& dark, const ModeBasis& basis) {
    MomentData md = demux_moments(scene, mis, ct, dark, basis);
    md = reduce_degenerate(md, scene);
    SensitivityResult r = sensitivity(md);
    return {r.m_value, std::move(r.coeffs)};
}

void require_no_noise(const NoiseSpec& noise, const Misalignment& mis, const std::string& method) {
    if (noise.any())
        throw ConfigError("config error at /noise: method " + method + " is noiseless");
    if (!mis.zero())
        throw ConfigError("config error at /misalignment: method " + method +
                          " assumes perfect alignment");
}

std::string mode_label(std::pair<int, int> nm) {
    return "m_" + std::to_string(nm.first) + std::to_string(nm.second);
}

// mean/std over ensemble members (population std over the realized members)
std::pair<double, double> mean_std(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return {mean, std::sqrt(var)};
}

int resolve_threads(int cli_threads, const json& cfg) {
    if (cli_threads > 0) return cli_threads;
    if (const char* env = std::getenv("SUPERRES_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const long v = int_or(cfg, "threads", "", 1);
    return v > 0 ? static_cast<int>(v) : 1;
}

std::string resolve_out(const std::string& cli_out, const json& cfg) {
    if (!cli_out.empty()) return cli_out;
    if (const char* env = std::getenv("SUPERRES_OUT")) {
        if (*env) return env;
    }
    if (cfg.contains("output") && cfg.at("output").contains("path"))
        return str_at(cfg.at("output"), "path", "/output");
    return "";
}

std::string resolve_format(const std::string& cli_format, const json& cfg) {
    if (!cli_format.empty()) return cli_format;
    if (cfg.contains("output") && cfg.at("output").contains("format")) {
        const std::string f = str_at(cfg.at("output"), "format", "/output");
        if (f != "csv" && f != "json")
            throw ConfigError("config error at /output/format: expected csv or json");
        return f;
    }
    return "csv";
}

// ---------------------------------------------------------------------------
// sweep-sensitivity
// ---------------------------------------------------------------------------

int cmd_sweep_sensitivity(const json& cfg, std::ostream& os, const std::string& format,
                          int threads) {
    const Scene base = parse_scene(cfg);
    const Misalignment mis = parse_misalignment(cfg);
    const NoiseSpec noise = parse_noise(cfg);
    const MethodSpec method = parse_method(cfg);
    const std::vector<double> xs = parse_xgrid(cfg);
    std::vector<std::uint64_t> seeds = parse_seeds(cfg);

    Meta meta{"sweep-sensitivity", method.tag, seeds, cfg};
    Table t;
    t.columns = {"d", "d_over_2w"};
    t.units = {"length", "dimensionless"};
    auto d_of = [&](double x) { return 2.0 * base.waist() * x; };

    switch (method.kind) {
        case MethodSpec::demux_exact: {
            const ModeBasis basis = parse_basis(cfg);
            const DarkCounts dark = make_dark(noise, base, basis.size());
            const bool ensemble = noise.ct_target.has_value();
            if (ensemble && seeds.empty())
                throw ConfigError("config error at /seeds: crosstalk ensembles need seeds");

            if (!ensemble) {
                const CrosstalkMatrix id =
                    CrosstalkMatrix::identity(static_cast<int>(basis.full_size()));
                // active set is fixed by theta; label columns from the first point
                const MomentData probe = reduce_degenerate(
                    demux_moments(base.with_d(d_of(xs.front() > 0 ? xs.front() : 1.0)), mis, id,
                                  dark, basis),
                    base);
                t.columns.push_back("M");
                t.units.push_back("1/length^2");
                for (std::size_t k = 0; k < probe.basis.size(); ++k) {
                    t.columns.push_back(mode_label(probe.basis.mode(k)));
                    t.units.push_back("dimensionless");
                }
                t.rows.resize(xs.size());
                parallel_for(xs.size(), threads, [&](std::size_t i) {
                    const PointValue pv = eval_demux(base.with_d(d_of(xs[i])), mis, id, dark, basis);
                    std::vector<std::string> row{fmt(d_of(xs[i])), fmt(xs[i]), fmt(pv.m)};
                    for (Eigen::Index k = 0; k < pv.coeffs.size(); ++k)
                        row.push_back(fmt(pv.coeffs[k]));
                    t.rows[i] = std::move(row);
                });
            } else {
                std::vector<CrosstalkMatrix> members;
                members.reserve(seeds.size());
                for (std::uint64_t s : seeds)
                    members.push_back(sample_crosstalk(static_cast<int>(basis.full_size()),
                                                       *noise.ct_target, s));
                t.columns.insert(t.columns.end(), {"M_mean", "M_std", "members"});
                t.units.insert(t.units.end(), {"1/length^2", "1/length^2", "count"});
                t.rows.resize(xs.size());
                parallel_for(xs.size(), threads, [&](std::size_t i) {
                    std::vector<double> ms;
                    ms.reserve(members.size());
                    for (const auto& ct : members)
                        ms.push_back(eval_demux(base.with_d(d_of(xs[i])), mis, ct, dark, basis).m);
                    const auto [mean, sd] = mean_std(ms);
                    t.rows[i] = {fmt(d_of(xs[i])), fmt(xs[i]), fmt(mean), fmt(sd),
                                 fmt(static_cast<long>(members.size()))};
                });
            }
            break;
        }
        case MethodSpec::ideal_closed: {
            require_no_noise(noise, mis, method.tag);
            const ModeBasis basis = parse_basis(cfg);
            const int q = basis.q_max();
            const ModeBasis active = ideal_active_modes(base.with_d(d_of(xs.front() > 0 ? xs.front() : 1.0)), q);
            t.columns.push_back("M");
            t.units.push_back("1/length^2");
            for (std::size_t k = 0; k < active.size(); ++k) {
                t.columns.push_back(mode_label(active.mode(k)));
                t.units.push_back("dimensionless");
            }
            t.rows.resize(xs.size());
            parallel_for(xs.size(), threads, [&](std::size_t i) {
                const Scene sc = base.with_d(d_of(xs[i]));
                const Eigen::VectorXd m = coefficients_ideal(sc, q);
                std::vector<std::string> row{fmt(d_of(xs[i])), fmt(xs[i]),
                                             fmt(sensitivity_ideal(sc, q))};
                for (Eigen::Index k = 0; k < m.size(); ++k) row.push_back(fmt(m[k]));
                t.rows[i] = std::move(row);
            });
            break;
        }
        case MethodSpec::asymptotic: {
            require_no_noise(noise, mis, method.tag);
            t.columns.push_back("M");
            t.units.push_back("1/length^2");
            t.rows.resize(xs.size());
            parallel_for(xs.size(), threads, [&](std::size_t i) {
                t.rows[i] = {fmt(d_of(xs[i])), fmt(xs[i]),
                             fmt(sensitivity_asymptotic(base.with_d(d_of(xs[i]))))};
            });
            break;
        }
        case MethodSpec::direct_imaging: {
            require_no_noise(noise, mis, method.tag);
            const PixelGrid grid = parse_pixel_grid(cfg, base);
            t.columns.push_back("M");
            t.units.push_back("1/length^2");
            t.rows.resize(xs.size());
            parallel_for(xs.size(), threads, [&](std::size_t i) {
                t.rows[i] = {fmt(d_of(xs[i])), fmt(xs[i]),
                             fmt(di_sensitivity(base.with_d(d_of(xs[i])), grid).m_value)};
            });
            break;
        }
        case MethodSpec::approx: {
            const bool realized = method.regime == NoiseRegime::dc_dominated ||
                                  method.regime == NoiseRegime::ct_dominated;
            const bool needs_basis = realized || method.regime == NoiseRegime::low_brightness_diag;
            std::optional<ModeBasis> basis;
            if (needs_basis) basis = parse_basis(cfg);

            std::vector<CrosstalkMatrix> members;
            if (noise.ct_target && needs_basis) {
                if (seeds.empty())
                    throw ConfigError("config error at /seeds: crosstalk ensembles need seeds");
                for (std::uint64_t s : seeds)
                    members.push_back(sample_crosstalk(static_cast<int>(basis->full_size()),
                                                       *noise.ct_target, s));
            }
            if (realized && members.empty())
                throw ConfigError("config error at /noise: regime " + method.tag +
                                  " needs a crosstalk ensemble");

            const double sigma = noise_sigma(noise, base);
            std::optional<DarkCounts> dark;
            if (basis) dark = make_dark(noise, base, basis->size());

            auto eval_one = [&](double d, const CrosstalkMatrix* ct) {
                ApproxParams p;
                p.sigma = sigma;
                p.r2 = noise.ct_target.value_or(0.0);
                p.ct = ct;
                p.basis = basis ? &*basis : nullptr;
                p.dark = dark ? &*dark : nullptr;
                return approx_sensitivity(base.with_d(d), mis, method.regime, p);
            };

            if (members.size() > 1) {
                t.columns.insert(t.columns.end(), {"M_mean", "M_std", "members"});
                t.units.insert(t.units.end(), {"1/length^2", "1/length^2", "count"});
                t.rows.resize(xs.size());
                parallel_for(xs.size(), threads, [&](std::size_t i) {
                    std::vector<double> ms;
                    ms.reserve(members.size());
                    for (const auto& ct : members) ms.push_back(eval_one(d_of(xs[i]), &ct));
                    const auto [mean, sd] = mean_std(ms);
                    t.rows[i] = {fmt(d_of(xs[i])), fmt(xs[i]), fmt(mean), fmt(sd),
                                 fmt(static_cast<long>(members.size()))};
                });
            } else {
                t.columns.push_back("M");
                t.units.push_back("1/length^2");
                t.rows.resize(xs.size());
                const CrosstalkMatrix* ct = members.empty() ? nullptr : &members.front();
                parallel_for(xs.size(), threads, [&](std::size_t i) {
                    t.rows[i] = {fmt(d_of(xs[i])), fmt(xs[i]), fmt(eval_one(d_of(xs[i]), ct))};
                });
            }
            break;
        }
    }
    emit(os, format, meta, t);
    return 0;
}

// ---------------------------------------------------------------------------
// coefficients
// ---------------------------------------------------------------------------

int cmd_coefficients(const json& cfg, std::ostream& os, const std::string& format, int threads) {
    const Scene base = parse_scene(cfg);
    const Misalignment mis = parse_misalignment(cfg);
    const NoiseSpec noise = parse_noise(cfg);
    const MethodSpec method = parse_method(cfg);
    const std::vector<double> xs = parse_xgrid(cfg);
    std::vector<std::uint64_t> seeds = parse_seeds(cfg);
    auto d_of = [&](double x) { return 2.0 * base.waist() * x; };

    Meta meta{"coefficients", method.tag, seeds, cfg};
    Table t;
    t.columns = {"d", "d_over_2w"};
    t.units = {"length", "dimensionless"};

    if (method.kind == MethodSpec::ideal_closed) {
        require_no_noise(noise, mis, method.tag);
        const ModeBasis basis = parse_basis(cfg);
        const int q = basis.q_max();
        const ModeBasis active =
            ideal_active_modes(base.with_d(d_of(xs.front() > 0 ? xs.front() : 1.0)), q);
        for (std::size_t k = 0; k < active.size(); ++k) {
            t.columns.push_back(mode_label(active.mode(k)));
            t.units.push_back("dimensionless");
        }
        t.rows.resize(xs.size());
        parallel_for(xs.size(), threads, [&](std::size_t i) {
            const Eigen::VectorXd m = coefficients_ideal(base.with_d(d_of(xs[i])), q);
            std::vector<std::string> row{fmt(d_of(xs[i])), fmt(xs[i])};
            for (Eigen::Index k = 0; k < m.size(); ++k) row.push_back(fmt(m[k]));
            t.rows[i] = std::move(row);
        });
        emit(os, format, meta, t);
        return 0;
    }
    if (method.kind != MethodSpec::demux_exact)
        throw ConfigError("config error at /method: coefficients supports demux-exact or "
                          "demux-ideal-closed");

    const ModeBasis basis = parse_basis(cfg);
    const DarkCounts dark = make_dark(noise, base, basis.size());
    const bool ensemble = noise.ct_target.has_value();
    if (ensemble && seeds.empty())
        throw ConfigError("config error at /seeds: crosstalk ensembles need seeds");

    const CrosstalkMatrix id = CrosstalkMatrix::identity(static_cast<int>(basis.full_size()));
    const MomentData probe = reduce_degenerate(
        demux_moments(base.with_d(d_of(xs.front() > 0 ? xs.front() : 1.0)), mis, id, dark, basis),
        base);
    const std::size_t n_modes = probe.basis.size();

    if (!ensemble) {
        for (std::size_t k = 0; k < n_modes; ++k) {
            t.columns.push_back(mode_label(probe.basis.mode(k)));
            t.units.push_back("dimensionless");
        }
        t.rows.resize(xs.size());
        parallel_for(xs.size(), threads, [&](std::size_t i) {
            const PointValue pv = eval_demux(base.with_d(d_of(xs[i])), mis, id, dark, basis);
            std::vector<std::string> row{fmt(d_of(xs[i])), fmt(xs[i])};
            for (Eigen::Index k = 0; k < pv.coeffs.size(); ++k) row.push_back(fmt(pv.coeffs[k]));
            t.rows[i] = std::move(row);
        });
    } else {
        std::vector<CrosstalkMatrix> members;
        members.reserve(seeds.size());
        for (std::uint64_t s : seeds)
            members.push_back(
                sample_crosstalk(static_cast<int>(basis.full_size()), *noise.ct_target, s));
        t.columns.push_back("members");
        t.units.push_back("count");
        for (std::size_t k = 0; k < n_modes; ++k) {
            const std::string label = mode_label(probe.basis.mode(k));
            t.columns.push_back(label + "_mean");
            t.units.push_back("dimensionless");
            t.columns.push_back(label + "_std");
            t.units.push_back("dimensionless");
        }
        t.rows.resize(xs.size());
        parallel_for(xs.size(), threads, [&](std::size_t i) {
            std::vector<std::vector<double>> per_mode(n_modes);
            for (const auto& ct : members) {
                const PointValue pv = eval_demux(base.with_d(d_of(xs[i])), mis, ct, dark, basis);
                for (std::size_t k = 0; k < n_modes; ++k)
                    per_mode[k].push_back(pv.coeffs[static_cast<Eigen::Index>(k)]);
            }
            std::vector<std::string> row{fmt(d_of(xs[i])), fmt(xs[i]),
                                         fmt(static_cast<long>(members.size()))};
            for (std::size_t k = 0; k < n_modes; ++k) {
                const auto [mean, sd] = mean_std(per_mode[k]);
                row.push_back(fmt(mean));
                row.push_back(fmt(sd));
            }
            t.rows[i] = std::move(row);
        });
    }
    emit(os, format, meta, t);
    return 0;
}

// ---------------------------------------------------------------------------
// dmin
// ---------------------------------------------------------------------------

int cmd_dmin(const json& cfg, std::ostream& os, const std::string& format, int threads) {
    const Scene base = parse_scene(cfg);
    const Misalignment mis = parse_misalignment(cfg);
    const NoiseSpec noise = parse_noise(cfg);
    const ModeBasis basis = parse_basis(cfg);
    std::vector<std::uint64_t> seeds = parse_seeds(cfg);

    const json& dm = member(cfg, "dmin", "");
    DminQuery q;
    q.mu = int_or(dm, "mu", "/dmin", 1);
    if (dm.contains("scan")) {
        const json& sc = dm.at("scan");
        q.scan.x_lo = num_or(sc, "x_lo", "/dmin/scan", q.scan.x_lo);
        q.scan.x_hi = num_or(sc, "x_hi", "/dmin/scan", q.scan.x_hi);
        q.scan.points = static_cast<int>(int_or(sc, "points", "/dmin/scan", q.scan.points));
    }

    const json& sweep = member(cfg, "sweep", "");
    const std::string variable = str_at(sweep, "variable", "/sweep");
    if (variable != "mu" && variable != "n_mean")
        throw ConfigError("config error at /sweep/variable: expected mu or n_mean");
    const json& values = member(sweep, "values", "/sweep");
    if (!values.is_array() || values.empty())
        throw ConfigError("config error at /sweep/values: expected a non-empty array");
    std::vector<double> vals;
    for (const json& e : values) {
        if (!e.is_number()) throw ConfigError("config error at /sweep/values: expected numbers");
        vals.push_back(e.get<double>());
    }

    const bool ensemble = noise.ct_target.has_value();
    if (ensemble && seeds.empty())
        throw ConfigError("config error at /seeds: crosstalk ensembles need seeds");
    std::vector<CrosstalkMatrix> members;
    if (ensemble)
        for (std::uint64_t s : seeds)
            members.push_back(
                sample_crosstalk(static_cast<int>(basis.full_size()), *noise.ct_target, s));
    else
        members.push_back(CrosstalkMatrix::identity(static_cast<int>(basis.full_size())));

    Meta meta{"dmin", "demux-exact", seeds, cfg};
    Table t;
    t.columns = {"N_det", "d_min_mean", "d_min_std", "members"};
    t.units = {"count", "length", "length", "count"};
    t.rows.resize(vals.size());

    parallel_for(vals.size(), threads, [&](std::size_t i) {
        Scene sc = base;
        DminQuery qi = q;
        if (variable == "mu") {
            if (!(vals[i] >= 1.0))
                throw ConfigError("config error at /sweep/values: mu must be >= 1");
            qi.mu = static_cast<long>(vals[i]);
        } else {
            sc = base.with_n_mean(vals[i]);
        }
        const DarkCounts dark = make_dark(noise, sc, basis.size());
        std::vector<double> dmins;
        dmins.reserve(members.size());
        for (const auto& ct : members)
            dmins.push_back(dmin_solve(sc, mis, ct, dark, basis, qi));
        const auto [mean, sd] = mean_std(dmins);
        t.rows[i] = {fmt(n_detected(sc, qi.mu)), fmt(mean), fmt(sd),
                     fmt(static_cast<long>(members.size()))};
    });

    emit(os, format, meta, t);
    return 0;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool pass;
    std::string detail;
};

int cmd_validate(const json& cfg, std::ostream& os, const std::string& format, int /*threads*/) {
    long samples = 100000;
    std::uint64_t seed = 1;
    std::optional<std::array<long, 2>> perturb_entry;
    double perturb_amount = 0.0;
    if (cfg.contains("validate")) {
        const json& v = cfg.at("validate");
        samples = int_or(v, "samples", "/validate", samples);
        seed = static_cast<std::uint64_t>(int_or(v, "seed", "/validate", 1));
        if (v.contains("perturb")) {
            const json& p = v.at("perturb");
            perturb_entry = {int_at(p, "row", "/validate/perturb"),
                             int_at(p, "col", "/validate/perturb")};
            perturb_amount = num_at(p, "amount", "/validate/perturb");
        }
    }
    if (samples < 1000)
        throw ConfigError("config error at /validate/samples: need >= 1000");

    std::vector<CheckResult> checks;
    const ModeBasis basis = ModeBasis::full(1);
    const CrosstalkMatrix id = CrosstalkMatrix::identity(static_cast<int>(basis.full_size()));

    struct GridPoint {
        const char* name;
        Scene scene;
        CrosstalkMatrix ct;
        DarkCounts dark;
    };
    std::vector<GridPoint> grid;
    grid.push_back({"balanced", make_scene(0.4, pi / 4, 1.5, 0.0, 1.0, 1.0), id,
                    DarkCounts::none(basis.size())});
    grid.push_back({"imbalanced", make_scene(1.6, pi / 4, 1.5, 0.5, 1.0, 1.0), id,
                    DarkCounts::none(basis.size())});
    grid.push_back({"noisy", make_scene(1.2, pi / 4, 1.5, 0.0, 1.0, 1.0),
                    sample_crosstalk(static_cast<int>(basis.full_size()), 0.0017, 7u),
                    DarkCounts::uniform_mean(0.003, basis.size())});

    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const GridPoint& g = grid[gi];
        MomentData truth = demux_moments(g.scene, Misalignment(), g.ct, g.dark, basis);

        // analytic closed form against the generic engine (ideal points only)
        if (gi < 2) {
            const double engine = sensitivity(reduce_degenerate(truth, g.scene)).m_value;
            const double closed = sensitivity_ideal(g.scene, basis.q_max());
            const double rel = std::abs(closed - engine) / std::abs(engine);
            checks.push_back({std::string(g.name) + ".closed-vs-engine", rel < 1e-9,
                              "rel=" + fmt(rel)});
        }

        if (perturb_entry && gi == 0) {
            const long r = (*perturb_entry)[0], c = (*perturb_entry)[1];
            if (r < 0 || c < 0 || r >= truth.cov.rows() || c >= truth.cov.cols())
                throw ConfigError("config error at /validate/perturb: entry out of range");
            truth.cov(r, c) += perturb_amount;
            if (r != c) truth.cov(c, r) += perturb_amount;
        }

        McConfig mc;
        mc.samples = static_cast<std::size_t>(samples);
        mc.seed = seed + gi;
        const McResult sim = sample_counts(g.scene, Misalignment(), g.ct, g.dark, basis, mc);

        double worst_mean = 0.0;
        Eigen::Index worst_mean_k = 0;
        for (Eigen::Index k = 0; k < truth.means.size(); ++k) {
            const double z = std::abs(sim.data.means[k] - truth.means[k]) / sim.mean_se[k];
            if (z > worst_mean) {
                worst_mean = z;
                worst_mean_k = k;
            }
        }
        const auto [wn, wm] = basis.mode(static_cast<std::size_t>(worst_mean_k));
        checks.push_back({std::string(g.name) + ".mc-mean-z", worst_mean < 5.0,
                          "worst z=" + fmt(worst_mean) + " at mode (" + std::to_string(wn) + "," +
                              std::to_string(wm) + ")"});

        // Covariance gate is 6 SE (means stay at 5): the max runs over ~30
        // sample-covariance statistics whose batch-means errors are heavy
        // tailed for thermal counts, so a 5 SE max-gate false-alarms at modest
        // sample counts, while a genuinely corrupted entry scores z >> 6.
        double worst_cov = 0.0;
        Eigen::Index wi = 0, wj = 0;
        for (Eigen::Index i = 0; i < truth.cov.rows(); ++i)
            for (Eigen::Index j = 0; j < truth.cov.cols(); ++j) {
                const double z = std::abs(sim.data.cov(i, j) - truth.cov(i, j)) / sim.cov_se(i, j);
                if (z > worst_cov) {
                    worst_cov = z;
                    wi = i;
                    wj = j;
                }
            }
        checks.push_back({std::string(g.name) + ".mc-cov-z", worst_cov < 6.0,
                          "worst z=" + fmt(worst_cov) + " at cov(" + std::to_string(wi) + "," +
                              std::to_string(wj) + ")"});
    }

    const bool all_pass =
        std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });

    Meta meta{"validate", "demux-exact", {seed}, cfg};
    if (format == "json") {
        json out = json::object();
        out["artifact_version"] = version_string;
        out["command"] = meta.command;
        out["config"] = cfg;
        out["seeds"] = meta.seeds;
        json arr = json::array();
        for (const auto& c : checks)
            arr.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
        out["checks"] = arr;
        out["passed"] = all_pass;
        out["units"] = json::object();
        os << out.dump(2) << "\n";
    } else {
        os << "# superres " << version_string << "\n";
        os << "# command: validate\n";
        os << "# seeds: " << seeds_csv(meta.seeds) << "\n";
        os << "# units: none\n";
        os << "# config: " << cfg.dump() << "\n";
        for (const auto& c : checks)
            os << (c.pass ? "PASS" : "FAIL") << " " << c.name << " " << c.detail << "\n";
        os << (all_pass ? "VALIDATION PASSED" : "VALIDATION FAILED") << "\n";
    }
    return all_pass ? 0 : 3;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"moment-based sensitivity toolkit for two-point-source separation"};
    app.require_subcommand(1);

    std::string config_path, out_path, format;
    int threads = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file (JSON)")->required();
        sub->add_option("--out", out_path, "output path (default stdout)");
        sub->add_option("--format", format, "output format")
            ->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    };
    CLI::App* sweep = app.add_subcommand("sweep-sensitivity", "sensitivity over a separation grid");
    CLI::App* coeff = app.add_subcommand("coefficients", "optimal observable coefficients");
    CLI::App* dmin = app.add_subcommand("dmin", "minimal resolvable distance sweeps");
    CLI::App* validate = app.add_subcommand("validate", "Monte Carlo and closed-form cross-checks");
    for (CLI::App* sub : {sweep, coeff, dmin, validate}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    json cfg;
    std::string resolved_out, resolved_format;
    int resolved_threads = 1;
    try {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "config error: cannot open '" << config_path << "'\n";
            return 1;
        }
        try {
            cfg = json::parse(in);
        } catch (const json::parse_error& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return 1;
        }
        resolved_out = resolve_out(out_path, cfg);
        resolved_format = resolve_format(format, cfg);
        resolved_threads = resolve_threads(threads, cfg);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!resolved_out.empty()) {
        file.open(resolved_out, std::ios::binary);
        if (!file) {
            std::cerr << "config error: cannot write '" << resolved_out << "'\n";
            return 1;
        }
        os = &file;
    }

    try {
        if (sweep->parsed()) return cmd_sweep_sensitivity(cfg, *os, resolved_format, resolved_threads);
        if (coeff->parsed()) return cmd_coefficients(cfg, *os, resolved_format, resolved_threads);
        if (dmin->parsed()) return cmd_dmin(cfg, *os, resolved_format, resolved_threads);
        if (validate->parsed()) return cmd_validate(cfg, *os, resolved_format, resolved_threads);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DimensionMismatch& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
