#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hisrd/config.hpp"
#include "hisrd/errors.hpp"
#include "hisrd/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> output;
    std::optional<long long> N;
    std::optional<long long> K;
    std::optional<std::string> method;
    std::optional<std::string> sampler;
    std::optional<std::string> problem;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config_path, "INI config file")->check(CLI::ExistingFile);
    app->add_option("-s,--set", c.overrides, "Override a config value: section.key=value (repeatable)");
    app->add_option("--seed", c.seed, "Master seed");
    app->add_option("-t,--threads", c.threads, "Worker threads (1 = bitwise deterministic)");
    app->add_option("-o,--output", c.output, "Output directory");
    app->add_option("-N,--samples", c.N, "Samples per estimate");
    app->add_option("-K,--split", c.K, "SRD dimension");
    app->add_option("--method", c.method, "mc | srd | hisrd");
    app->add_option("--sampler", c.sampler, "mc | qmc");
    app->add_option("--problem", c.problem, "box | gp | pde");
}

hisrd::config::RunConfig resolve(const Common& c, std::optional<hisrd::config::Experiment> experiment) {
    using namespace hisrd::config;
    RunConfig cfg;
    if (const char* env = std::getenv("HISRD_THREADS")) detail::assign(cfg, "run", "threads", env, "HISRD_THREADS: ");
    if (!c.config_path.empty()) apply_file(cfg, c.config_path);
    for (const auto& o : c.overrides) apply_override(cfg, o);
    const auto set = [&](const char* key, const std::string& v) { detail::assign(cfg, "run", key, v, "--" + std::string(key) + ": "); };
    if (c.seed) cfg.run.seed = *c.seed;
    if (c.threads) set("threads", std::to_string(*c.threads));
    if (c.output) cfg.run.output = *c.output;
    if (c.N) set("N", std::to_string(*c.N));
    if (c.K) set("K", std::to_string(*c.K));
    if (c.method) set("method", *c.method);
    if (c.sampler) set("sampler", *c.sampler);
    if (c.problem) set("problem", *c.problem);
    if (experiment) cfg.run.experiment = *experiment;
    validate(cfg);
    return cfg;
}

int execute(const hisrd::config::RunConfig& cfg) {
    const auto res = hisrd::experiments::run(cfg);
    for (const auto& f : res.files) std::cout << (std::filesystem::path(cfg.run.output) / f).string() << '\n';
    std::cout << (std::filesystem::path(cfg.run.output) / "manifest.json").string() << '\n';
    if (!res.summary.empty()) std::cerr << res.summary.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hisrd: hybrid spherical-radial estimation of chance constraints on Gaussian fields"};
    app.set_version_flag("--version", HISRD_VERSION);
    app.require_subcommand(1);

    Common common;
    std::optional<hisrd::config::Experiment> chosen;
    bool print_config = false;

    auto* run = app.add_subcommand("run", "Run the experiment named in the config (run.experiment)");
    add_common(run, common);
    run->callback([&] { chosen.reset(); });

    for (const auto& [exp, name] : hisrd::config::kExperimentNames) {
        auto* sub = app.add_subcommand(name, std::string("Run the ") + name + " experiment");
        add_common(sub, common);
        sub->callback([&, e = exp] { chosen = e; });
    }

    auto* show = app.add_subcommand("config", "Print the resolved configuration");
    add_common(show, common);
    show->callback([&] { print_config = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        const auto cfg = resolve(common, chosen);
        if (print_config) {
            std::cout << hisrd::config::serialize(cfg);
            return 0;
        }
        return execute(cfg);
    } catch (const hisrd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const hisrd::InvalidArgument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const hisrd::Error& e) {
        std::cerr << "numerical failure: " << e.name() << ": " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
}
