// cider — corpus curation pipeline driver.
//
//   cider synth  --config cfg.json          Stage 1: synthesize samples
//   cider select --config cfg.json          Stage 2: score + thin the corpus
//   cider pack   --config cfg.json          Stage 3: pack the training stream
//   cider run    --config cfg.json          all three stages in order
//   cider verify [--config cfg.json]        retention property checks
//   cider report --config cfg.json          print the selection report
//
// --seed/--alpha/--lambda/--gamma/--k/--workers override the config file.
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "cider/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"GUI world-knowledge corpus curation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<double> alpha, lambda, gamma;
    std::optional<int> k;
    std::optional<unsigned> workers;
    std::optional<std::string> run_dir;

    app.add_option("--config,-c", config_path, "pipeline config file (JSON)");
    app.add_option("--seed", seed, "override retention.seed");
    app.add_option("--alpha", alpha, "override retention.alpha");
    app.add_option("--lambda", lambda, "override retention.lambda");
    app.add_option("--gamma", gamma, "override retention.gamma");
    app.add_option("--k", k, "override retention.k");
    app.add_option("--workers", workers, "override worker count");
    app.add_option("--run-dir", run_dir, "override run directory");

    auto* synth = app.add_subcommand("synth", "synthesize samples from trajectories");
    auto* select = app.add_subcommand("select", "score, thin, and report");
    auto* pack = app.add_subcommand("pack", "pack the retained corpus");
    auto* run = app.add_subcommand("run", "synth, select, and pack");
    auto* verify = app.add_subcommand("verify", "verify retention-function properties");
    auto* report = app.add_subcommand("report", "print the selection report");
    for (auto* sub : {synth, select, pack, run, verify, report}) {
        sub->fallthrough();  // accept the global flags after the subcommand too
    }

    CLI11_PARSE(app, argc, argv);

    cider::PipelineConfig config;
    try {
        if (!config_path.empty()) {
            config = cider::PipelineConfig::load_file(config_path);
        } else if (!verify->parsed()) {
            std::cerr << "[cider] --config is required for this subcommand\n";
            return cider::kExitValidation;
        }
        if (seed) config.retention.seed = *seed;
        if (alpha) config.retention.alpha = *alpha;
        if (lambda) config.retention.lambda = *lambda;
        if (gamma) config.retention.gamma = *gamma;
        if (k) config.retention.k = *k;
        if (workers) config.workers = *workers;
        if (run_dir) config.run_dir = *run_dir;
        config.validate_common();
    } catch (const std::exception& e) {
        std::cerr << "[cider] config: " << e.what() << "\n";
        return cider::kExitValidation;
    }

    if (synth->parsed()) return cider::cmd_synth(config);
    if (select->parsed()) return cider::cmd_select(config);
    if (pack->parsed()) return cider::cmd_pack(config);
    if (run->parsed()) return cider::cmd_run(config);
    if (verify->parsed()) return cider::cmd_verify(config, std::cout);
    if (report->parsed()) return cider::cmd_report(config, std::cout);
    return cider::kExitValidation;
}
