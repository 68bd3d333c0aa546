#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hisrd/errors.hpp"
#include "hisrd/estimator.hpp"
#include "hisrd/sampling.hpp"

namespace hisrd::config {

enum class Experiment { estimate, rmse_sweep, variance_split, rate, gp_estimate, gp_optimize, pde_estimate, lemma_check };
enum class Problem { box, gp, pde };
enum class RateSource { synthetic, gp };

inline constexpr std::array<std::pair<Experiment, const char*>, 8> kExperimentNames{{
    {Experiment::estimate, "estimate"},
    {Experiment::rmse_sweep, "rmse-sweep"},
    {Experiment::variance_split, "variance-split"},
    {Experiment::rate, "rate"},
    {Experiment::gp_estimate, "gp-estimate"},
    {Experiment::gp_optimize, "gp-optimize"},
    {Experiment::pde_estimate, "pde-estimate"},
    {Experiment::lemma_check, "lemma-check"},
}};

[[nodiscard]] inline const char* experiment_name(Experiment e) {
    for (const auto& [k, n] : kExperimentNames) {
        if (k == e) return n;
    }
    return "?";
}

/// Observation offsets for the GP example, drawn by
/// gp::observation_offsets(1).
inline constexpr std::array<double, 4> kDefaultGpOffsets = {
    0.012652457177734923, -0.05877551552772875, 0.0015891872886691515, 0.06248091746431695};

struct RunSection {
    Experiment experiment = Experiment::estimate;
    Problem problem = Problem::box;
    Method method = Method::hisrd;
    SampleKind sampler = SampleKind::mc;
    Index N = 10000;
    Index K = 10;
    std::vector<Index> K_grid{1, 2, 5, 10, 20, 50};
    Index repeats = 100;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string output = "out";
    Index n_rem = 500;
    Index n_srd = 100;
    Index reference_N = 1000000;
    std::optional<double> reference_value;
    std::optional<double> reference_se;
    bool keep_per_sample = false;
    bool operator==(const RunSection&) const = default;
};

struct BoxSection {
    std::vector<double> sd{1.0, 1.0};
    std::vector<double> half_width{1.0, 1.0};
    bool operator==(const BoxSection&) const = default;
};

struct GpSection {
    Index n_grid = 1024;
    std::vector<double> eps{kDefaultGpOffsets.begin(), kDefaultGpOffsets.end()};
    double lower_bound = -0.12;
    double p_target = 0.95;
    double fit_eps = 0.01;
    double nugget_rel = 1e-6;
    std::vector<double> u{-3.0, -3.0, -10.0};
    std::vector<double> opt_bounds{-std::numeric_limits<double>::infinity(), -0.2, -0.05};
    Index opt_N = 2000;
    Index check_N = 10000;
    Index paths = 5;
    bool operator==(const GpSection&) const = default;
};

struct PdeSection {
    Index n_grid = 64;
    double gamma = 4.0;
    double lower = -0.3;
    double upper = 0.3;
    bool operator==(const PdeSection&) const = default;
};

struct RateSection {
    RateSource source = RateSource::synthetic;
    Index r = 2;
    std::vector<Index> K_grid{10, 20, 40, 60, 80, 120, 160, 200, 300, 400};
    std::vector<double> c_grid{1.0, 1.5, 2.0};
    Index samples = 200000;
    Index exclude_smallest = 2;
    bool operator==(const RateSection&) const = default;
};

struct LemmaSection {
    std::vector<Index> r_grid{1, 2, 5};
    std::vector<Index> K_grid{5, 10, 20, 50};
    std::vector<double> c_grid{0.5, 1.0, 1.5, 2.0, 3.0};
    Index samples = 1000000;
    bool operator==(const LemmaSection&) const = default;
};

struct RunConfig {
    RunSection run;
    BoxSection box;
    GpSection gp;
    PdeSection pde;
    RateSection rate;
    LemmaSection lemma;
    bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Text <-> value conversions. Parse failures throw std::invalid_argument with
// a short reason; the caller adds line and key context.

inline std::string to_text(const std::string& v) { return v; }
inline void from_text(const std::string& s, std::string& v) { v = s; }

inline std::string to_text(double v) { return fmt_double(v); }
inline void from_text(const std::string& s, double& v) {
    char* end = nullptr;
    const std::string t = trim(s);
    v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size()) throw std::invalid_argument("expected a number, got '" + t + "'");
}

template <class I>
    requires std::is_integral_v<I>
inline std::string to_text(I v) {
    return std::to_string(v);
}
template <class I>
    requires std::is_integral_v<I>
inline void from_text(const std::string& s, I& v) {
    const std::string t = trim(s);
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
        throw std::invalid_argument("expected an integer, got '" + t + "'");
    }
}

inline std::string to_text(bool v) { return v ? "true" : "false"; }
inline void from_text(const std::string& s, bool& v) {
    const std::string t = trim(s);
    if (t == "true" || t == "1" || t == "yes") v = true;
    else if (t == "false" || t == "0" || t == "no") v = false;
    else throw std::invalid_argument("expected true or false, got '" + t + "'");
}

inline std::string to_text(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }
inline void from_text(const std::string& s, std::optional<double>& v) {
    if (trim(s).empty()) {
        v.reset();
        return;
    }
    double d = 0.0;
    from_text(s, d);
    v = d;
}

template <class T>
inline std::string to_text(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + to_text(v[i]);
    return out;
}
template <class T>
inline void from_text(const std::string& s, std::vector<T>& v) {
    v.clear();
    for (const auto& item : split_list(s)) {
        T x{};
        from_text(item, x);
        v.push_back(x);
    }
}

template <class E, std::size_t N>
inline std::string enum_text(E v, const std::array<std::pair<E, const char*>, N>& names) {
    for (const auto& [k, n] : names) {
        if (k == v) return n;
    }
    return "?";
}
template <class E, std::size_t N>
inline void enum_parse(const std::string& s, E& v, const std::array<std::pair<E, const char*>, N>& names) {
    const std::string t = trim(s);
    std::string allowed;
    for (const auto& [k, n] : names) {
        if (t == n) {
            v = k;
            return;
        }
        allowed += (allowed.empty() ? "" : ", ") + std::string(n);
    }
    throw std::invalid_argument("expected one of {" + allowed + "}, got '" + t + "'");
}

inline constexpr std::array<std::pair<Problem, const char*>, 3> kProblemNames{
    {{Problem::box, "box"}, {Problem::gp, "gp"}, {Problem::pde, "pde"}}};
inline constexpr std::array<std::pair<Method, const char*>, 3> kMethodNames{
    {{Method::mc, "mc"}, {Method::srd, "srd"}, {Method::hisrd, "hisrd"}}};
inline constexpr std::array<std::pair<SampleKind, const char*>, 2> kSamplerNames{
    {{SampleKind::mc, "mc"}, {SampleKind::qmc, "qmc"}}};
inline constexpr std::array<std::pair<RateSource, const char*>, 2> kRateSourceNames{
    {{RateSource::synthetic, "synthetic"}, {RateSource::gp, "gp"}}};

inline std::string to_text(Experiment v) { return enum_text(v, kExperimentNames); }
inline void from_text(const std::string& s, Experiment& v) { enum_parse(s, v, kExperimentNames); }
inline std::string to_text(Problem v) { return enum_text(v, kProblemNames); }
inline void from_text(const std::string& s, Problem& v) { enum_parse(s, v, kProblemNames); }
inline std::string to_text(Method v) { return enum_text(v, kMethodNames); }
inline void from_text(const std::string& s, Method& v) { enum_parse(s, v, kMethodNames); }
inline std::string to_text(SampleKind v) { return enum_text(v, kSamplerNames); }
inline void from_text(const std::string& s, SampleKind& v) { enum_parse(s, v, kSamplerNames); }
inline std::string to_text(RateSource v) { return enum_text(v, kRateSourceNames); }
inline void from_text(const std::string& s, RateSource& v) { enum_parse(s, v, kRateSourceNames); }

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <class S, class T>
Field bind(const char* section, const char* key, S RunConfig::*sec, T S::*member) {
    return {section, key, [=](const RunConfig& c) { return to_text(c.*sec.*member); },
            [=](RunConfig& c, const std::string& s) { from_text(s, c.*sec.*member); }};
}

inline const std::vector<Field>& schema() {
    static const std::vector<Field> fields = {
        bind("run", "experiment", &RunConfig::run, &RunSection::experiment),
        bind("run", "problem", &RunConfig::run, &RunSection::problem),
        bind("run", "method", &RunConfig::run, &RunSection::method),
        bind("run", "sampler", &RunConfig::run, &RunSection::sampler),
        bind("run", "N", &RunConfig::run, &RunSection::N),
        bind("run", "K", &RunConfig::run, &RunSection::K),
        bind("run", "K_grid", &RunConfig::run, &RunSection::K_grid),
        bind("run", "repeats", &RunConfig::run, &RunSection::repeats),
        bind("run", "seed", &RunConfig::run, &RunSection::seed),
        bind("run", "threads", &RunConfig::run, &RunSection::threads),
        bind("run", "output", &RunConfig::run, &RunSection::output),
        bind("run", "n_rem", &RunConfig::run, &RunSection::n_rem),
        bind("run", "n_srd", &RunConfig::run, &RunSection::n_srd),
        bind("run", "reference_N", &RunConfig::run, &RunSection::reference_N),
        bind("run", "reference_value", &RunConfig::run, &RunSection::reference_value),
        bind("run", "reference_se", &RunConfig::run, &RunSection::reference_se),
        bind("run", "keep_per_sample", &RunConfig::run, &RunSection::keep_per_sample),
        bind("box", "sd", &RunConfig::box, &BoxSection::sd),
        bind("box", "half_width", &RunConfig::box, &BoxSection::half_width),
        bind("gp", "n_grid", &RunConfig::gp, &GpSection::n_grid),
        bind("gp", "eps", &RunConfig::gp, &GpSection::eps),
        bind("gp", "lower_bound", &RunConfig::gp, &GpSection::lower_bound),
        bind("gp", "p_target", &RunConfig::gp, &GpSection::p_target),
        bind("gp", "fit_eps", &RunConfig::gp, &GpSection::fit_eps),
        bind("gp", "nugget_rel", &RunConfig::gp, &GpSection::nugget_rel),
        bind("gp", "u", &RunConfig::gp, &GpSection::u),
        bind("gp", "opt_bounds", &RunConfig::gp, &GpSection::opt_bounds),
        bind("gp", "opt_N", &RunConfig::gp, &GpSection::opt_N),
        bind("gp", "check_N", &RunConfig::gp, &GpSection::check_N),
        bind("gp", "paths", &RunConfig::gp, &GpSection::paths),
        bind("pde", "n_grid", &RunConfig::pde, &PdeSection::n_grid),
        bind("pde", "gamma", &RunConfig::pde, &PdeSection::gamma),
        bind("pde", "lower", &RunConfig::pde, &PdeSection::lower),
        bind("pde", "upper", &RunConfig::pde, &PdeSection::upper),
        bind("rate", "source", &RunConfig::rate, &RateSection::source),
        bind("rate", "r", &RunConfig::rate, &RateSection::r),
        bind("rate", "K_grid", &RunConfig::rate, &RateSection::K_grid),
        bind("rate", "c_grid", &RunConfig::rate, &RateSection::c_grid),
        bind("rate", "samples", &RunConfig::rate, &RateSection::samples),
        bind("rate", "exclude_smallest", &RunConfig::rate, &RateSection::exclude_smallest),
        bind("lemma", "r_grid", &RunConfig::lemma, &LemmaSection::r_grid),
        bind("lemma", "K_grid", &RunConfig::lemma, &LemmaSection::K_grid),
        bind("lemma", "c_grid", &RunConfig::lemma, &LemmaSection::c_grid),
        bind("lemma", "samples", &RunConfig::lemma, &LemmaSection::samples),
    };
    return fields;
}

inline const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : schema()) {
        if (f.section == section && f.key == key) return &f;
    }
    return nullptr;
}

inline void assign(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value,
                   const std::string& where) {
    const Field* f = find_field(section, key);
    if (!f) throw ConfigError(where + "unknown key '" + key + "' in section [" + section + "]");
    try {
        f->set(cfg, value);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + section + "." + key + ": " + e.what());
    }
}

}  // namespace detail

/// Checks value ranges; throws ConfigError naming the offending field.
inline void validate(const RunConfig& c) {
    const auto fail = [](const std::string& field, const std::string& msg) { throw ConfigError(field + ": " + msg); };
    if (c.run.N < 2) fail("run.N", "must be >= 2");
    if (c.run.K < 1) fail("run.K", "must be >= 1");
    if (c.run.repeats < 1) fail("run.repeats", "must be >= 1");
    if (c.run.threads < 1) fail("run.threads", "must be >= 1");
    if (c.run.n_rem < 2) fail("run.n_rem", "must be >= 2");
    if (c.run.n_srd < 2) fail("run.n_srd", "must be >= 2");
    if (c.run.reference_N < 2) fail("run.reference_N", "must be >= 2");
    if (c.run.K_grid.empty()) fail("run.K_grid", "must not be empty");
    for (Index K : c.run.K_grid) {
        if (K < 1) fail("run.K_grid", "entries must be >= 1");
    }
    if (c.run.output.empty()) fail("run.output", "must not be empty");
    if (c.box.sd.empty() || c.box.sd.size() != c.box.half_width.size()) {
        fail("box.half_width", "box.sd and box.half_width must be nonempty and of equal length");
    }
    for (double s : c.box.sd) {
        if (!(s > 0.0)) fail("box.sd", "entries must be > 0");
    }
    if (c.gp.n_grid < 7) fail("gp.n_grid", "must be >= 7 (the number of observations)");
    if (c.gp.eps.size() != 4) fail("gp.eps", "needs exactly 4 offsets");
    if (c.gp.u.size() != 3) fail("gp.u", "needs exactly 3 values (log l, log sigma, log sigma_n)");
    if (!(c.gp.p_target > 0.0 && c.gp.p_target < 1.0)) fail("gp.p_target", "must lie in (0, 1)");
    if (!(c.gp.fit_eps > 0.0)) fail("gp.fit_eps", "must be > 0");
    if (!(c.gp.nugget_rel >= 0.0)) fail("gp.nugget_rel", "must be >= 0");
    if (c.gp.opt_bounds.empty()) fail("gp.opt_bounds", "must not be empty");
    if (c.gp.opt_N < 2) fail("gp.opt_N", "must be >= 2");
    if (c.gp.check_N < 2) fail("gp.check_N", "must be >= 2");
    if (c.gp.paths < 0) fail("gp.paths", "must be >= 0");
    if (c.pde.n_grid < 8) fail("pde.n_grid", "must be >= 8");
    if (!(c.pde.gamma > 0.0)) fail("pde.gamma", "must be > 0");
    if (!(c.pde.lower < c.pde.upper)) fail("pde.upper", "need lower < upper");
    if (c.rate.r < 1) fail("rate.r", "must be >= 1");
    if (c.rate.K_grid.empty()) fail("rate.K_grid", "must not be empty");
    for (Index K : c.rate.K_grid) {
        if (K < c.rate.r) fail("rate.K_grid", "entries must be >= rate.r");
    }
    if (c.rate.source == RateSource::synthetic && c.rate.c_grid.empty()) fail("rate.c_grid", "must not be empty");
    if (c.rate.samples < 2) fail("rate.samples", "must be >= 2");
    if (c.lemma.r_grid.empty() || c.lemma.K_grid.empty() || c.lemma.c_grid.empty()) {
        fail("lemma", "r_grid, K_grid and c_grid must be nonempty");
    }
    for (Index r : c.lemma.r_grid) {
        for (Index K : c.lemma.K_grid) {
            if (r < 1 || r > K) fail("lemma.r_grid", "need 1 <= r <= K for every pair");
        }
    }
    for (double x : c.lemma.c_grid) {
        if (!(x >= 0.0)) fail("lemma.c_grid", "entries must be >= 0");
    }
    if (c.lemma.samples < 2) fail("lemma.samples", "must be >= 2");
}

/// Applies INI-style text (`[section]` headers, `key = value` lines, `#` or
/// `;` comments) on top of cfg.
inline void apply_text(RunConfig& cfg, const std::string& text, const std::string& source = "config") {
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno) + ": ";
        const auto hash = line.find_first_of("#;");
        const std::string t = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + "malformed section header '" + t + "'");
            section = detail::trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + t + "'");
        if (section.empty()) throw ConfigError(where + "key outside of any [section]");
        detail::assign(cfg, section, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)), where);
    }
}

[[nodiscard]] inline RunConfig parse(const std::string& text, const std::string& source = "config") {
    RunConfig cfg;
    apply_text(cfg, text, source);
    return cfg;
}

/// Applies a config file on top of cfg; keys the file leaves out keep their values.
inline void apply_file(RunConfig& cfg, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    apply_text(cfg, ss.str(), path);
}

[[nodiscard]] inline RunConfig load(const std::string& path) {
    RunConfig cfg;
    apply_file(cfg, path);
    return cfg;
}

/// Applies a `section.key=value` override.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError("override '" + assignment + "': expected section.key=value");
    }
    detail::assign(cfg, detail::trim(assignment.substr(0, dot)), detail::trim(assignment.substr(dot + 1, eq - dot - 1)),
                   detail::trim(assignment.substr(eq + 1)), "override '" + assignment + "': ");
}

/// Every field, grouped by section, in schema order. parse(serialize(c)) == c.
[[nodiscard]] inline std::string serialize(const RunConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& f : detail::schema()) {
        if (f.section != section) {
            out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
            section = f.section;
        }
        out += f.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

[[nodiscard]] inline std::optional<Experiment> experiment_from_name(const std::string& name) {
    for (const auto& [k, n] : kExperimentNames) {
        if (name == n) return k;
    }
    return std::nullopt;
}

}  // namespace hisrd::config
