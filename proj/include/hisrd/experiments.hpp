#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "hisrd/bound_model.hpp"
#include "hisrd/config.hpp"
#include "hisrd/errors.hpp"
#include "hisrd/estimator.hpp"
#include "hisrd/gp.hpp"
#include "hisrd/gp_optimize.hpp"
#include "hisrd/pde.hpp"
#include "hisrd/theory.hpp"

#ifndef HISRD_VERSION
#define HISRD_VERSION "0.1.0"
#endif

namespace hisrd::experiments {

namespace fs = std::filesystem;

/// RFC-4180 CSV with LF line ends; numbers printed with %.17g.
class CsvWriter {
public:
    CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
        if (!out_) throw ConfigError("cannot write '" + path.string() + "'");
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << quote(cells[i]);
        }
        out_ << '\n';
    }

    static std::string num(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }
    static std::string num(Index v) { return std::to_string(v); }
    static std::string num(int v) { return std::to_string(v); }

private:
    static std::string quote(const std::string& s) {
        if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    }
    std::ofstream out_;
};

struct RunResult {
    std::vector<std::string> files;
    nlohmann::json summary = nlohmann::json::object();
};

[[nodiscard]] inline gp::GpProblem make_gp_problem(const config::RunConfig& c, double lower_bound) {
    std::array<double, 4> eps{};
    std::copy(c.gp.eps.begin(), c.gp.eps.end(), eps.begin());
    gp::GpProblem p = gp::GpProblem::standard(c.gp.n_grid, eps, lower_bound);
    p.p_target = c.gp.p_target;
    p.fit_eps = c.gp.fit_eps;
    p.nugget_rel = c.gp.nugget_rel;
    return p;
}

[[nodiscard]] inline pde::PdeProblem make_pde_problem(const config::RunConfig& c) {
    pde::PdeProblem p = pde::PdeProblem::nominal(c.pde.n_grid);
    p.gamma = c.pde.gamma;
    p.lower = c.pde.lower;
    p.upper = c.pde.upper;
    return p;
}

[[nodiscard]] inline gp::KernelParams gp_point(const config::RunConfig& c) { return {c.gp.u[0], c.gp.u[1], c.gp.u[2]}; }

/// Builds constraint models of one problem for varying K, sharing the
/// expensive setup (GP reference field, PDE factorization and state KL).
class ProblemContext {
public:
    explicit ProblemContext(const config::RunConfig& c) : cfg_(c), kind_(c.run.problem) {
        switch (kind_) {
            case config::Problem::box:
                sd_ = Eigen::Map<const Vector>(c.box.sd.data(), static_cast<Index>(c.box.sd.size()));
                hw_ = Eigen::Map<const Vector>(c.box.half_width.data(), static_cast<Index>(c.box.half_width.size()));
                break;
            case config::Problem::gp:
                gp_ = std::make_unique<gp::GpProblem>(make_gp_problem(c, c.gp.lower_bound));
                ref_ = std::make_unique<gp::GpReference>(gp::build_reference(*gp_));
                break;
            case config::Problem::pde:
                pde_ = std::make_unique<pde::PdeSetup>(make_pde_problem(c));
                break;
        }
    }

    [[nodiscard]] std::unique_ptr<AffineConstraintModel> model(Index K) const {
        switch (kind_) {
            case config::Problem::box: return std::make_unique<FieldBoundModel>(make_box_model(sd_, hw_, K));
            case config::Problem::gp:
                return std::make_unique<gp::GpConstraintModel>(*gp_, *ref_, gp_point(cfg_), K);
            case config::Problem::pde: return std::make_unique<pde::PdeConstraintModel>(pde_->model(K));
        }
        throw InvalidArgument("unknown problem");
    }

    /// Closed-form probability when one exists (the box problem).
    [[nodiscard]] std::optional<double> exact() const {
        if (kind_ != config::Problem::box) return std::nullopt;
        double p = 1.0;
        for (Index i = 0; i < sd_.size(); ++i) p *= 2.0 * specfun::normal_cdf(hw_(i) / sd_(i)) - 1.0;
        return p;
    }

    [[nodiscard]] const gp::GpProblem* gp_problem() const { return gp_.get(); }
    [[nodiscard]] const gp::GpReference* gp_reference() const { return ref_.get(); }
    [[nodiscard]] const pde::PdeSetup* pde_setup() const { return pde_.get(); }

private:
    const config::RunConfig& cfg_;
    config::Problem kind_;
    Vector sd_, hw_;
    std::unique_ptr<gp::GpProblem> gp_;
    std::unique_ptr<gp::GpReference> ref_;
    std::unique_ptr<pde::PdeSetup> pde_;
};

[[nodiscard]] inline EstimateReport run_method(Method m, const AffineConstraintModel& model, Index N,
                                               const SamplerSpec& spec, const EstimatorOptions& opt) {
    switch (m) {
        case Method::mc: return estimate_mc(model, N, spec, opt);
        case Method::srd: return estimate_srd(model, N, spec, opt);
        case Method::hisrd: return estimate_hisrd(model, N, spec, opt);
    }
    throw InvalidArgument("unknown method");
}

namespace detail {

using Csv = CsvWriter;

inline EstimatorOptions estimator_options(const config::RunConfig& c) {
    EstimatorOptions o;
    o.threads = c.run.threads;
    o.keep_per_sample = c.run.keep_per_sample;
    return o;
}

/// Sampler for repeat r: MC repeats use derived seeds, QMC repeats use
/// consecutive blocks of the Halton sequence.
inline SamplerSpec repeat_spec(const config::RunConfig& c, SampleKind kind, Index r) {
    const auto ur = static_cast<std::uint64_t>(r);
    if (kind == SampleKind::qmc) return {kind, c.run.seed, ur * static_cast<std::uint64_t>(c.run.N)};
    return {kind, derive_seed(c.run.seed, 1000 + ur), 0};
}

inline std::string file(const fs::path& dir, const std::string& name, RunResult& res) {
    res.files.push_back(name);
    return (dir / name).string();
}

inline void write_report_csv(const fs::path& path, const config::RunConfig& c, const EstimateReport& r) {
    Csv csv(path, {"problem", "method", "sampler", "K", "N", "value", "std_error", "variance", "division_hazards",
                   "zero_directions"});
    csv.row({config::detail::to_text(c.run.problem), method_name(r.method), config::detail::to_text(c.run.sampler),
             Csv::num(c.run.K), Csv::num(r.n_samples), Csv::num(r.value), Csv::num(r.std_error), Csv::num(r.variance),
             Csv::num(r.division_hazards), Csv::num(r.zero_directions)});
}

inline void write_per_sample(const fs::path& path, const EstimateReport& r) {
    if (!r.per_sample) return;
    Csv csv(path, {"index", "contribution"});
    for (Index i = 0; i < r.per_sample->size(); ++i) csv.row({Csv::num(i), Csv::num((*r.per_sample)(i))});
}

inline void write_grid(const fs::path& path, const Matrix& g) {
    std::vector<std::string> header;
    for (Index j = 0; j < g.cols(); ++j) header.push_back("x2_" + std::to_string(j + 1));
    Csv csv(path, header);
    std::vector<std::string> row(static_cast<std::size_t>(g.cols()));
    for (Index i = 0; i < g.rows(); ++i) {
        for (Index j = 0; j < g.cols(); ++j) row[static_cast<std::size_t>(j)] = Csv::num(g(i, j));
        csv.row(row);
    }
}

inline nlohmann::json report_json(const EstimateReport& r) {
    return {{"value", r.value}, {"std_error", r.std_error}, {"variance", r.variance}, {"n_samples", r.n_samples},
            {"method", method_name(r.method)}};
}

}  // namespace detail

inline RunResult run_estimate(const config::RunConfig& c, const fs::path& dir) {
    RunResult res;
    const ProblemContext ctx(c);
    const auto model = ctx.model(c.run.K);
    const EstimateReport r =
        run_method(c.run.method, *model, c.run.N, {c.run.sampler, c.run.seed, 0}, detail::estimator_options(c));
    detail::write_report_csv(detail::file(dir, "estimate.csv", res), c, r);
    if (r.per_sample) detail::write_per_sample(detail::file(dir, "per_sample.csv", res), r);
    res.summary = detail::report_json(r);
    return res;
}

inline RunResult run_rmse_sweep(const config::RunConfig& c, const fs::path& dir) {
    RunResult res;
    const ProblemContext ctx(c);
    const EstimatorOptions opt = detail::estimator_options(c);
    double ref = 0.0, ref_se = 0.0;
    std::string ref_source;
    if (c.run.reference_value) {
        ref = *c.run.reference_value;
        ref_se = c.run.reference_se.value_or(0.0);
        ref_source = "config";
    } else if (auto ex = ctx.exact()) {
        ref = *ex;
        ref_source = "closed form";
    } else {
        std::cerr << "warning: no reference value configured; computing one with " << c.run.reference_N
                  << " MC samples\n";
        const auto model = ctx.model(1);
        const EstimateReport r = estimate_mc(*model, c.run.reference_N, {SampleKind::mc, derive_seed(c.run.seed, 77), 0}, opt);
        ref = r.value;
        ref_se = r.std_error;
        ref_source = "computed";
    }

    const auto rmse = [&](Method m, Index K, SampleKind kind) {
        const auto model = ctx.model(K);
        double ss = 0.0;
        for (Index r = 0; r < c.run.repeats; ++r) {
            const double e = run_method(m, *model, c.run.N, detail::repeat_spec(c, kind, r), opt).value - ref;
            ss += e * e;
        }
        return std::sqrt(ss / static_cast<double>(c.run.repeats));
    };
    const double rmse_mc = rmse(Method::mc, c.run.K_grid.front(), SampleKind::mc);
    detail::Csv csv(detail::file(dir, "rmse_sweep.csv", res), {"K", "RMSE_MC", "RMSE_SRD", "RMSE_hiSRD"});
    for (Index K : c.run.K_grid) {
        csv.row({detail::Csv::num(K), detail::Csv::num(rmse_mc), detail::Csv::num(rmse(Method::srd, K, c.run.sampler)),
                 detail::Csv::num(rmse(Method::hisrd, K, c.run.sampler))});
    }
    res.summary = {{"reference", ref}, {"reference_se", ref_se}, {"reference_source", ref_source}};
    return res;
}

inline RunResult run_variance_split(const config::RunConfig& c, const fs::path& dir) {
    RunResult res;
    const ProblemContext ctx(c);
    detail::Csv csv(detail::file(dir, "variance_split.csv", res),
                    {"K", "V_total", "V_SRD", "V_rem", "V_total_prime", "se_V_SRD", "se_V_rem", "V_rem_clamped"});
    for (Index K : c.run.K_grid) {
        const auto model = ctx.model(K);
        const VarianceSplit v = variance_split(*model, c.run.n_rem, c.run.n_srd, c.run.repeats,
                                               {c.run.sampler, derive_seed(c.run.seed, static_cast<std::uint64_t>(K)), 0},
                                               detail::estimator_options(c));
        csv.row({detail::Csv::num(K), detail::Csv::num(v.v_total), detail::Csv::num(v.v_srd), detail::Csv::num(v.v_rem),
                 detail::Csv::num(v.v_total_prime), detail::Csv::num(v.se_v_srd), detail::Csv::num(v.se_v_rem),
                 v.v_rem_clamped ? "1" : "0"});
    }
    return res;
}

inline RunResult run_rate(const config::RunConfig& c, const fs::path& dir) {
    RunResult res;
    theory::RateExperimentConfig rc;
    rc.r = c.rate.r;
    rc.K_grid = c.rate.K_grid;
    rc.c_grid = c.rate.c_grid;
    rc.samples = c.rate.samples;
    rc.seed = c.run.seed;
    rc.exclude_smallest = c.rate.exclude_smallest;
    rc.threads = c.run.threads;
    theory::RateResult rr;
    if (c.rate.source == config::RateSource::synthetic) {
        rr = theory::degeneration_rate(rc);
    } else {
        config::RunConfig g = c;
        g.run.problem = config::Problem::gp;
        const ProblemContext ctx(g);
        rr = theory::degeneration_rate(rc, [&](Index K) { return gp::GpConstraintModel(*ctx.gp_problem(), *ctx.gp_reference(), gp_point(c), K); },
                                       c.run.sampler);
    }
    detail::Csv csv(detail::file(dir, "rate.csv", res), {"K", "c", "W_MC", "W_K", "difference", "std_error", "RMSE_MC",
                                                         "RMSE_SRD", "non_positive"});
    for (const auto& row : rr.rows) {
        csv.row({detail::Csv::num(row.K), std::isnan(row.c) ? "" : detail::Csv::num(row.c), detail::Csv::num(row.w_mc),
                 detail::Csv::num(row.w_k), detail::Csv::num(row.difference), detail::Csv::num(row.std_error),
                 detail::Csv::num(row.rmse_mc), detail::Csv::num(row.rmse_srd), row.non_positive ? "1" : "0"});
    }
    detail::Csv fit(detail::file(dir, "rate_fit.csv", res), {"slope", "intercept", "fitted_points", "non_positive"});
    fit.row({detail::Csv::num(rr.slope), detail::Csv::num(rr.intercept), detail::Csv::num(rr.fitted_points),
             detail::Csv::num(rr.non_positive)});
    res.summary = {{"slope", rr.slope}, {"fitted_points", rr.fitted_points}, {"non_positive", rr.non_positive}};
    return res;
}

inline RunResult run_gp_estimate(const config::RunConfig& c, const fs::path& dir) {
    RunResult res;
    config::RunConfig g = c;
    g.run.problem = config::Problem::gp;
    const ProblemContext ctx(g);
    const auto model = ctx.model(c.run.K);
    const EstimateReport r =
        run_method(c.run.method, *model, c.run.N, {c.run.sampler, c.run.seed, 0}, detail::estimator_options(c));
    detail::write_report_csv(detail::file(dir, "gp_estimate.csv", res), g, r);
    if (r.per_sample) detail::write_per_sample(detail::file(dir, "per_sample.csv", res), r);

    // Posterior summary at u for plotting: mean, 95% band and sample paths.
    const gp::GpProblem& p = *ctx.gp_problem();
    const gp::Posterior post = gp::posterior(gp_point(c), p);
    const Index n = p.grid.size();
    Matrix paths(n, c.gp.paths);
    if (c.gp.paths > 0) {
        const CholeskyFactor L = cholesky(post.cov, c.gp.nugget_rel * std::max(post.cov.matrix().trace(), 0.0) / static_cast<double>(n));
        Matrix z(n, c.gp.paths);
        SampleStream(SampleKind::mc, n, derive_seed(c.run.seed, 5)).fill_columns(z);
        paths = (L.lower * z).colwise() + post.mean;
    }
    std::vector<std::string> header{"x", "mean", "sd", "lower95", "upper95", "bound"};
    for (Index k = 0; k < c.gp.paths; ++k) header.push_back("path_" + std::to_string(k + 1));
    detail::Csv csv(detail::file(dir, "gp_posterior.csv", res), header);
    for (Index i = 0; i < n; ++i) {
        const double sd = std::sqrt(std::max(post.cov.matrix()(i, i), 0.0));
        std::vector<std::string> row{detail::Csv::num(p.grid(i)), detail::Csv::num(post.mean(i)), detail::Csv::num(sd),
                                     detail::Csv::num(post.mean(i) - 1.959963984540054 * sd),
                                     detail::Csv::num(post.mean(i) + 1.959963984540054 * sd),
                                     detail::Csv::num(p.lower_bound)};
        for (Index k = 0; k < c.gp.paths; ++k) row.push_back(detail::Csv::num(paths(i, k)));
        csv.row(row);
    }
    detail::Csv obs(detail::file(dir, "gp_observations.csv", res), {"x", "y"});
    for (Index i = 0; i < p.obs_x.size(); ++i) obs.row({detail::Csv::num(p.obs_x(i)), detail::Csv::num(p.obs_y(i))});
    res.summary = detail::report_json(r);
    return res;
}

inline RunResult run_gp_optimize(const config::RunConfig& c, const fs::path& dir) {
    RunResult res;
    detail::Csv csv(detail::file(dir, "gp_optimize.csv", res),
                    {"lower_bound", "l", "sigma", "sigma_n", "J", "phi_opt", "phi_check", "phi_check_se", "fit_error",
                     "shrink_steps", "status", "outer_iterations"});
    detail::Csv trace(detail::file(dir, "gp_optimize_trace.csv", res),
                      {"lower_bound", "outer", "inner", "log_l", "log_sigma", "log_sigma_n", "J"});
    nlohmann::json rows = nlohmann::json::array();
    for (double lb : c.gp.opt_bounds) {
        const gp::GpProblem p = make_gp_problem(c, lb);
        gp::OptimizeSettings s;
        s.K = c.run.K;
        s.N = c.gp.opt_N;
        s.seed = c.run.seed;
        s.sampler = c.run.sampler;
        s.estimator.threads = c.run.threads;
        const gp::OptimizeResult r = gp::optimize_kernel(p, s);
        double phi = 1.0, phi_se = 0.0;
        if (p.constrained()) {
            const gp::GpReference ref = gp::build_reference(p);
            const gp::GpConstraintModel m(p, ref, r.u, c.run.K);
            EstimatorOptions o;
            o.threads = c.run.threads;
            const EstimateReport e = estimate_hisrd(m, c.gp.check_N, {c.run.sampler, derive_seed(c.run.seed, 0xC4EC), 0}, o);
            phi = e.value;
            phi_se = e.std_error;
        }
        using detail::Csv;
        csv.row({Csv::num(lb), Csv::num(r.u.l()), Csv::num(r.u.sigma()), Csv::num(r.u.sigma_n()), Csv::num(r.nll),
                 Csv::num(r.phi), Csv::num(phi), Csv::num(phi_se), Csv::num(r.fit_error), Csv::num(r.shrink_steps),
                 optim::status_name(r.status), Csv::num(r.outer_iterations)});
        for (const auto& st : r.trace) {
            trace.row({Csv::num(lb), Csv::num(st.outer), Csv::num(st.inner), Csv::num(st.u.log_l), Csv::num(st.u.log_sigma),
                       Csv::num(st.u.log_sigma_n), Csv::num(st.nll)});
        }
        rows.push_back({{"lower_bound", std::isfinite(lb) ? nlohmann::json(lb) : nlohmann::json(Csv::num(lb))},
                        {"J", r.nll}, {"sigma", r.u.sigma()}, {"phi_check", phi}});
    }
    res.summary = {{"solutions", rows}};
    return res;
}

inline RunResult run_pde_estimate(const config::RunConfig& c, const fs::path& dir) {
    RunResult res;
    config::RunConfig g = c;
    g.run.problem = config::Problem::pde;
    const ProblemContext ctx(g);
    const pde::PdeSetup& setup = *ctx.pde_setup();
    const EstimatorOptions opt = detail::estimator_options(c);
    EstimateReport r;
    if (c.run.method == Method::hisrd) {
        r = pde::probability_and_gradient(setup, c.run.K, c.run.N, {c.run.sampler, c.run.seed, 0}, opt);
    } else {
        r = run_method(c.run.method, *ctx.model(c.run.K), c.run.N, {c.run.sampler, c.run.seed, 0}, opt);
    }
    detail::write_report_csv(detail::file(dir, "pde_estimate.csv", res), g, r);
    if (r.per_sample) detail::write_per_sample(detail::file(dir, "per_sample.csv", res), r);
    const Index n = setup.problem.n_grid;
    detail::write_grid(detail::file(dir, "pde_state_mean.csv", res), pde::as_grid(setup.state_kl->mean(), n));
    if (r.gradient) detail::write_grid(detail::file(dir, "pde_gradient.csv", res), pde::as_grid(*r.gradient, n));
    res.summary = detail::report_json(r);
    if (r.gradient) res.summary["gradient_norm"] = r.gradient->norm();
    return res;
}

inline RunResult run_lemma_check(const config::RunConfig& c, const fs::path& dir) {
    RunResult res;
    detail::Csv csv(detail::file(dir, "lemma_check.csv", res), {"r", "K", "c", "lhs", "rhs", "std_error", "z_score"});
    double max_abs_z = 0.0;
    for (Index r : c.lemma.r_grid) {
        for (Index K : c.lemma.K_grid) {
            SampleStream s(SampleKind::mc, K, derive_seed(c.run.seed, static_cast<std::uint64_t>(1000 * r + K)));
            for (const auto& lc : theory::lemma_identity_check(r, K, c.lemma.c_grid, c.lemma.samples, s)) {
                using detail::Csv;
                csv.row({Csv::num(r), Csv::num(K), Csv::num(lc.c), Csv::num(lc.lhs), Csv::num(lc.rhs),
                         Csv::num(lc.std_error), Csv::num(lc.z_score)});
                max_abs_z = std::max(max_abs_z, std::abs(lc.z_score));
            }
        }
    }
    res.summary = {{"max_abs_z", max_abs_z}};
    return res;
}

/// Runs the configured experiment, writing its CSV files and manifest.json
/// into run.output. Throws ConfigError for configuration problems and other
/// hisrd::Error subclasses for numerical failures.
inline RunResult run(const config::RunConfig& c) {
    config::validate(c);
    const fs::path dir(c.run.output);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("run.output: cannot create directory '" + c.run.output + "'");

    const auto t0 = std::chrono::steady_clock::now();
    RunResult res;
    switch (c.run.experiment) {
        case config::Experiment::estimate: res = run_estimate(c, dir); break;
        case config::Experiment::rmse_sweep: res = run_rmse_sweep(c, dir); break;
        case config::Experiment::variance_split: res = run_variance_split(c, dir); break;
        case config::Experiment::rate: res = run_rate(c, dir); break;
        case config::Experiment::gp_estimate: res = run_gp_estimate(c, dir); break;
        case config::Experiment::gp_optimize: res = run_gp_optimize(c, dir); break;
        case config::Experiment::pde_estimate: res = run_pde_estimate(c, dir); break;
        case config::Experiment::lemma_check: res = run_lemma_check(c, dir); break;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json fields = nlohmann::json::object();
    for (const auto& f : config::detail::schema()) fields[f.section][f.key] = f.get(c);
    const nlohmann::json manifest = {
        {"experiment", config::experiment_name(c.run.experiment)},
        {"version", HISRD_VERSION},
        {"seed", c.run.seed},
        {"threads", c.run.threads},
        {"wall_time_s", wall},
        {"outputs", res.files},
        {"summary", res.summary},
        {"config", fields},
        {"config_text", config::serialize(c)},
    };
    std::ofstream m(dir / "manifest.json", std::ios::binary);
    if (!m) throw ConfigError("cannot write manifest in '" + c.run.output + "'");
    m << manifest.dump(2) << '\n';
    return res;
}

}  // namespace hisrd::experiments
