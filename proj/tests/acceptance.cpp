// Acceptance run: one PASS/FAIL line per criterion. Tolerances and runtime
// budgets are fixed below. `acceptance 4 9` runs only criteria 4 and 9.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hisrd/estimator.hpp"
#include "hisrd/gp.hpp"
#include "hisrd/gp_optimize.hpp"
#include "hisrd/pde.hpp"
#include "hisrd/rays.hpp"
#include "hisrd/sampling.hpp"
#include "hisrd/specfun.hpp"
#include "hisrd/theory.hpp"

namespace fs = std::filesystem;
using namespace hisrd;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

constexpr double kGpTarget = 0.977;

// ---------------------------------------------------------------------------
// Shared GP state (full 1024-point grid, bound -0.12, u0), built on first use.

struct GpShared {
    gp::GpProblem problem = gp::GpProblem::standard(1024, gp::observation_offsets(1), -0.12);
    gp::GpReference ref = gp::build_reference(problem);
    gp::GpConstraintModel model(Index K) const { return gp::GpConstraintModel(problem, ref, problem.u0, K); }
};

const GpShared& gp_shared() {
    static const GpShared s;
    return s;
}

// 10⁶-sample MC reference for criteria 4 and 5.
const EstimateReport& gp_mc_reference() {
    static const EstimateReport r = estimate_mc(gp_shared().model(1), 1000000, {SampleKind::mc, 424242, 0});
    return r;
}

// ---------------------------------------------------------------------------

Outcome c1_specfun() {
    double worst_closed = 0.0;
    for (int i = 1; i <= 20; ++i) {
        const double x = 0.25 * i;
        const double e = std::exp(-0.5 * x * x);
        worst_closed = std::max({worst_closed, std::abs(specfun::chi_cdf(1, x) - std::erf(x / std::numbers::sqrt2)),
                                 std::abs(specfun::chi_cdf(2, x) - (1.0 - e)),
                                 std::abs(specfun::chi_cdf(4, x) - (1.0 - e * (1.0 + 0.5 * x * x)))});
    }
    // composite Simpson on [0, √K + 15]
    double worst_mass = 0.0;
    for (int K = 1; K <= 64; ++K) {
        const int n = 40000;
        const double b = std::sqrt(static_cast<double>(K)) + 15.0, h = b / n;
        double s = specfun::chi_pdf(K, 0.0) + specfun::chi_pdf(K, b);
        for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * specfun::chi_pdf(K, i * h);
        worst_mass = std::max(worst_mass, std::abs(s * h / 3.0 - 1.0));
    }
    return {worst_closed < 1e-12 && worst_mass < 1e-8,
            fmt("max closed-form error %.2e (tol 1e-12), max |mass - 1| %.2e (tol 1e-8)", worst_closed, worst_mass)};
}

Outcome c2_rays() {
    const double h = 1e-4, rmax = 12.0;
    const int grid = static_cast<int>(rmax / h);
    std::vector<std::vector<double>> pdf(5);
    for (int K = 1; K <= 4; ++K) {
        pdf[K].resize(grid);
        for (int i = 0; i < grid; ++i) pdf[K][i] = specfun::chi_pdf(K, (i + 0.5) * h) * h;
    }
    SampleStream s(SampleKind::mc, 16, 2024);
    double worst = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const Vector u = s.next_gaussian_block(1).row(0).transpose();
        const int M = 1 + static_cast<int>(6 * specfun::normal_cdf(u(0)));
        const int K = 1 + static_cast<int>(4 * specfun::normal_cdf(u(1)));
        const Vector g = s.next_gaussian_block(1).row(0).transpose();
        RayCoefficients rc{Vector(M), Vector(M)};
        for (int j = 0; j < M; ++j) {
            rc.alpha(j) = g(j) - 0.8;  // mostly feasible at the center, not always
            rc.beta(j) = g(j + 8);
        }
        const double engine = segment_probability(intersect(rc), K);
        double brute = 0.0;
        for (int i = 0; i < grid; ++i) {
            const double r = (i + 0.5) * h;
            bool ok = true;
            for (int j = 0; j < M && ok; ++j) ok = rc.alpha(j) + r * rc.beta(j) <= 0.0;
            if (ok) brute += pdf[K][i];
        }
        worst = std::max(worst, std::abs(engine - brute));
    }
    return {worst < 2e-4, fmt("max |engine - grid| %.2e over 10000 systems (tol 2e-4)", worst)};
}

Outcome c3_lemma() {
    const std::vector<Index> rs{1, 2, 5}, Ks{5, 10, 20, 50};
    const std::vector<double> cs{0.5, 1.0, 1.5, 2.0, 3.0};
    double worst_z = 0.0;
    int cells = 0;
    for (Index r : rs) {
        for (Index K : Ks) {
            SampleStream s(SampleKind::mc, K, derive_seed(31, static_cast<std::uint64_t>(100 * r + K)));
            for (const auto& lc : theory::lemma_identity_check(r, K, cs, 1000000, s)) {
                worst_z = std::max(worst_z, std::abs(lc.z_score));
                ++cells;
            }
        }
    }
    return {worst_z < 4.0, fmt("max |z| %.2f over %d cells at n = 1e6 (tol 4)", worst_z, cells)};
}

Outcome c4_unbiased() {
    const EstimateReport& ref = gp_mc_reference();
    bool ok = std::abs(ref.value - kGpTarget) <= 0.01;
    std::string d = fmt("MC ref %.5f±%.5f;", ref.value, ref.std_error);
    for (Index K : {1, 5, 10, 100}) {
        const auto model = gp_shared().model(K);
        detail::Moments m;
        for (std::uint64_t seed = 1; seed <= 50; ++seed) {
            m.add(estimate_hisrd(model, 10000, {SampleKind::mc, derive_seed(4000 + static_cast<std::uint64_t>(K), seed), 0}).value);
        }
        const double se = std::hypot(std::sqrt(m.variance() / m.n), ref.std_error);
        const double z = (m.mean - ref.value) / se;
        ok = ok && std::abs(z) < 4.0 && std::abs(m.mean - kGpTarget) <= 0.01;
        d += fmt(" K=%ld %.5f (z %.2f)", static_cast<long>(K), m.mean, z);
    }
    return {ok, d + "; tol 4 SE and 0.977±0.01"};
}

Outcome c5_srd_bias() {
    const EstimateReport& ref = gp_mc_reference();
    const auto model = gp_shared().model(1);
    const EstimateReport srd = estimate_srd(model, 10000, {SampleKind::mc, 5001, 0});
    const EstimateReport hi = estimate_hisrd(model, 10000, {SampleKind::mc, 5002, 0});
    const double zs = (srd.value - ref.value) / std::hypot(srd.std_error, ref.std_error);
    const double zh = (hi.value - ref.value) / std::hypot(hi.std_error, ref.std_error);
    return {std::abs(zs) > 5.0 && std::abs(zh) <= 5.0,
            fmt("SRD %.5f (z %.1f, need > 5), hiSRD %.5f (z %.2f, need <= 5); reference reused from 4", srd.value, zs,
                hi.value, zh)};
}

// sample variance and the standard error of that variance
std::pair<double, double> variance_with_se(const Vector& x) {
    const double n = static_cast<double>(x.size());
    const double m = x.mean();
    const Vector c = x.array() - m;
    const double v = c.squaredNorm() / (n - 1);
    const double m4 = c.array().pow(4).mean();
    return {v, std::sqrt(std::max(m4 - v * v, 0.0) / n)};
}

Outcome c6_variance_order() {
    EstimatorOptions opt;
    opt.keep_per_sample = true;
    const Index N = 10000;
    const auto mc = variance_with_se(*estimate_mc(gp_shared().model(1), N, {SampleKind::mc, 6000, 0}, opt).per_sample);
    bool ok = true;
    std::string d = fmt("V_MC %.3e;", mc.first);
    for (Index K : {1, 2, 5, 10, 20, 50}) {
        const auto hi = variance_with_se(
            *estimate_hisrd(gp_shared().model(K), N, {SampleKind::mc, 6000 + static_cast<std::uint64_t>(K), 0}, opt).per_sample);
        ok = ok && hi.first <= mc.first + 3.0 * std::hypot(hi.second, mc.second);
        d += fmt(" K=%ld %.3e", static_cast<long>(K), hi.first);
    }
    return {ok, d + "; need V_hiSRD <= V_MC + 3 SE"};
}

Outcome c7_rate() {
    theory::RateExperimentConfig cfg;
    cfg.r = 2;
    cfg.K_grid = {10, 20, 40, 60, 80, 120, 160, 200, 300, 400};
    cfg.c_grid = {1.0, 1.5, 2.0};
    cfg.samples = 200000;
    cfg.seed = 7;
    cfg.exclude_smallest = 2;  // fit over K in [40, 400]
    const theory::RateResult syn = theory::degeneration_rate(cfg);

    theory::RateExperimentConfig gcfg = cfg;
    gcfg.samples = 4000;
    const theory::RateResult gpr = theory::degeneration_rate(gcfg, [](Index K) { return gp_shared().model(K); });
    const auto in = [](double s) { return s >= -0.8 && s <= -0.3; };
    return {in(syn.slope) && in(gpr.slope),
            fmt("synthetic slope %.3f (%ld pts), GP slope %.3f (%ld pts); need [-0.8, -0.3]", syn.slope,
                static_cast<long>(syn.fitted_points), gpr.slope, static_cast<long>(gpr.fitted_points))};
}

Outcome c8_gradients() {
    // PDE: three random unit directions in the 4096-dim nodal control
    const pde::PdeSetup base(pde::PdeProblem::nominal(64));
    const SamplerSpec spec{SampleKind::mc, 8001, 0};
    const Index K = 10, N = 1000;
    const EstimateReport r = pde::probability_and_gradient(base, K, N, spec);
    SampleStream dirs(SampleKind::mc, base.problem.node_count(), 8002);
    Eigen::Vector3d an, fd;
    const double h = 1e-4;
    for (int t = 0; t < 3; ++t) {
        Vector d = dirs.next_gaussian_block(1).row(0).transpose();
        d.normalize();
        an(t) = r.gradient->dot(d);
        const double up = estimate_hisrd(base.with_control(base.problem.control + h * d).model(K), N, spec).value;
        const double dn = estimate_hisrd(base.with_control(base.problem.control - h * d).model(K), N, spec).value;
        fd(t) = (up - dn) / (2 * h);
    }
    const double pde_err = (an - fd).norm() / fd.norm();

    // GP: the three log kernel parameters at u0
    const GpShared& g = gp_shared();
    const SamplerSpec gs{SampleKind::mc, 8003, 0};
    const Index gN = 10000;
    const EstimateReport gr = gradient_hisrd(gp::GpConstraintModel(g.problem, g.ref, g.problem.u0, 10, true), gN, gs);
    Eigen::Vector3d gfd;
    const double gh = 1e-5;
    for (int q = 0; q < 3; ++q) {
        const double a = estimate_hisrd(gp::GpConstraintModel(g.problem, g.ref, g.problem.u0.shifted(q, gh), 10), gN, gs).value;
        const double b = estimate_hisrd(gp::GpConstraintModel(g.problem, g.ref, g.problem.u0.shifted(q, -gh), 10), gN, gs).value;
        gfd(q) = (a - b) / (2 * gh);
    }
    const double gp_err = (*gr.gradient - gfd).norm() / gfd.norm();
    return {pde_err < 1e-3 && gp_err < 1e-4,
            fmt("PDE rel err %.2e (tol 1e-3), GP rel err %.2e (tol 1e-4)", pde_err, gp_err)};
}

Outcome c9_pde() {
    const pde::PdeSetup s(pde::PdeProblem::nominal(64));
    const EstimateReport r = estimate_hisrd(s.model(10), 100000, {SampleKind::mc, 9001, 0});
    return {std::abs(r.value - 0.648926) <= 0.006, fmt("p = %.5f ± %.5f (need 0.648926 ± 0.006)", r.value, r.std_error)};
}

Outcome c10_variance_split() {
    const std::vector<Index> Ks{1, 2, 5, 10, 20};
    std::vector<VarianceSplit> v;
    std::string d = "V_rem:";
    for (Index K : Ks) {
        v.push_back(variance_split(gp_shared().model(K), 500, 100, 1, {SampleKind::mc, derive_seed(10, static_cast<std::uint64_t>(K)), 0}));
        d += fmt(" %.3e", v.back().v_rem);
    }
    int inversions = 0;
    bool small_inversions = true;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i].v_rem >= v[i - 1].v_rem) {
            ++inversions;
            small_inversions = small_inversions && v[i].v_rem - v[i - 1].v_rem <= std::hypot(v[i].se_v_rem, v[i - 1].se_v_rem);
        }
    }
    const double ratio = v.back().v_rem / v.front().v_rem;
    return {inversions <= 1 && small_inversions && ratio < 0.1,
            d + fmt("; %d inversion(s), V_rem(20)/V_rem(1) = %.3f (need < 0.1)", inversions, ratio)};
}

Outcome c11_optimization() {
    // reduced grid, see README
    const Index n = 128;
    const std::vector<double> bounds{-std::numeric_limits<double>::infinity(), -0.2, -0.05};
    std::vector<double> J, sigma;
    bool phi_ok = true;
    std::string d;
    for (double lb : bounds) {
        const gp::GpProblem p = gp::GpProblem::standard(n, gp::observation_offsets(1), lb);
        const gp::OptimizeResult r = gp::optimize_kernel(p);
        J.push_back(r.nll);
        sigma.push_back(r.u.sigma());
        double phi = 1.0;
        if (p.constrained()) {
            const gp::GpReference ref = gp::build_reference(p);
            phi = estimate_hisrd(gp::GpConstraintModel(p, ref, r.u, 10), 10000, {SampleKind::mc, 11011, 0}).value;
            phi_ok = phi_ok && phi >= 0.95 - 0.01;
        }
        d += fmt("[lb %g: J %.3f sigma %.4f phi %.4f] ", lb, r.nll, r.u.sigma(), phi);
    }
    const bool trend = sigma[0] > sigma[1] && sigma[1] > sigma[2] && J[0] < J[1] && J[1] < J[2];
    const bool j0 = std::abs(J[0] - 3.19) <= 0.3;
    return {trend && j0 && phi_ok, d + fmt("n = %ld", static_cast<long>(n))};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Outcome c12_determinism() {
    const fs::path root = fs::temp_directory_path() / "hisrd_acceptance_det";
    fs::remove_all(root);
    const std::vector<std::string> runs{
        "estimate -N 20000 -K 2 -s run.keep_per_sample=true",
        "rmse-sweep -N 500 -s run.repeats=20",
        "variance-split -s run.K_grid=1,2 -s run.n_rem=50 -s run.n_srd=20",
        "gp-estimate -N 2000 -s gp.n_grid=128",
        "pde-estimate -N 2000 -s pde.n_grid=16",
        "lemma-check -s lemma.samples=20000",
        "rate -s rate.samples=20000",
    };
    int compared = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        std::vector<fs::path> dirs;
        for (const char* tag : {"a", "b"}) {
            dirs.push_back(root / (std::to_string(i) + tag));
            const std::string cmd =
                std::string(HISRD_CLI_PATH) + " " + runs[i] + " --seed 12 -t 1 -o " + dirs.back().string() + " >/dev/null 2>&1";
            const int st = std::system(cmd.c_str());
            if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) return {false, "run failed: " + runs[i]};
        }
        for (const auto& e : fs::directory_iterator(dirs[0])) {
            if (e.path().extension() != ".csv") continue;
            if (slurp(e.path()) != slurp(dirs[1] / e.path().filename())) {
                return {false, "differs: " + runs[i] + " " + e.path().filename().string()};
            }
            ++compared;
        }
    }
    fs::remove_all(root);
    return {compared > 0, fmt("%d CSV files byte-identical across reruns of %zu experiments", compared, runs.size())};
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "special functions", 1.0, c1_specfun},
        {2, "ray engine vs grid integration", 30.0, c2_rays},
        {3, "radial identity", 60.0, c3_lemma},
        {4, "hiSRD unbiasedness (GP)", 300.0, c4_unbiased},
        {5, "truncated SRD bias (GP)", 60.0, c5_srd_bias},
        {6, "variance ordering (GP)", 120.0, c6_variance_order},
        {7, "degeneration rate", 600.0, c7_rate},
        {8, "gradient correctness", 180.0, c8_gradients},
        {9, "PDE probability", 300.0, c9_pde},
        {10, "variance split (GP)", 600.0, c10_variance_split},
        {11, "GP optimization trends", 1200.0, c11_optimization},
        {12, "determinism", 60.0, c12_determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.budget_s;
        const bool pass = o.pass && in_time;
        failed += pass ? 0 : 1;
        std::printf("%s %2d %s: %s [%.1f s, budget %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                    c.budget_s, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
