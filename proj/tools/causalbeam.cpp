// SPDX-License-Identifier: Apache-2.0
#include "causalbeam/errors.hpp"
#include "causalbeam/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

extern char **environ;

using namespace causalbeam;

namespace {

struct Options {
    std::string config;
    std::string profile = "desk";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::string> overrides;
    std::string dataset;
    std::optional<std::string> graph;
    std::optional<std::string> model;
    std::optional<std::string> selection;
    std::optional<std::string> bench_dataset;
};

// Precedence, lowest first: profile, config file, environment, --set, --seed/--out.
RunConfig build_config(const Options &o)
{
    RunConfig cfg = RunConfig::from_profile(o.profile);
    if (!o.config.empty())
        cfg.apply_file(o.config);
    cfg.apply_environment(environ);
    for (const std::string &kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed)
        cfg.seed = *o.seed;
    if (o.out)
        cfg.out_dir = *o.out;
    cfg.resolve_seeds();
    return cfg;
}

int report(const char *kind, const std::exception &e, int code)
{
    std::fprintf(stderr, "causalbeam: %s: %s\n", kind, e.what());
    return code;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Causal sensing-beam selection for mmWave beam prediction"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--profile", o.profile, "preset: desk or table1")->check(CLI::IsMember({"desk", "table1"}));
    app.add_option("--seed", o.seed, "global seed");
    app.add_option("--out", o.out, "output directory (must exist)");
    app.add_option("--set", o.overrides, "override one key, e.g. --set scene.n_users=622");

    auto *gen = app.add_subcommand("gen", "generate a dataset and manifest");
    auto *discover = app.add_subcommand("discover", "causal discovery on a dataset");
    discover->add_option("dataset", o.dataset)->required();
    auto *select = app.add_subcommand("select", "choose sensing beams");
    select->add_option("dataset", o.dataset)->required();
    select->add_option("--graph", o.graph, "reuse a graph file (causal)");
    select->add_option("--model", o.model, "full-input model (shapley)");
    auto *train = app.add_subcommand("train", "train the beam classifier");
    train->add_option("dataset", o.dataset)->required();
    train->add_option("--selection", o.selection);
    auto *eval = app.add_subcommand("eval", "evaluate a trained model on the test split");
    eval->add_option("dataset", o.dataset)->required();
    eval->add_option("--model", o.model)->required();
    eval->add_option("--selection", o.selection);
    auto *bench = app.add_subcommand("bench", "methods x m_tilde benchmark");
    bench->add_option("--dataset", o.bench_dataset, "existing dataset; generated when omitted");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        const RunConfig cfg = build_config(o);
        if (*gen)
            cmd_gen(cfg);
        else if (*discover)
            cmd_discover(cfg, o.dataset);
        else if (*select)
            cmd_select(cfg, o.dataset, o.graph, o.model);
        else if (*train)
            cmd_train(cfg, o.dataset, o.selection);
        else if (*eval)
            cmd_eval(cfg, o.dataset, *o.model, o.selection);
        else if (*bench)
            cmd_bench(cfg, o.bench_dataset);
    } catch (const ConfigError &e) {
        return report("config error", e, kExitConfig);
    } catch (const std::invalid_argument &e) {
        return report("config error", e, kExitConfig);
    } catch (const ParseError &e) {
        return report("data error", e, kExitData);
    } catch (const NumericalError &e) {
        return report("numerical error", e, kExitNumerical);
    } catch (const std::runtime_error &e) {
        // File system failures (unreadable input, unwritable output).
        return report("data error", e, kExitData);
    } catch (const std::exception &e) {
        return report("internal error", e, kExitInternal);
    }
    return kExitOk;
}
