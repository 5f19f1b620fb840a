#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "gem/config.hpp"
#include "gem/error.hpp"
#include "gem/runner.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_override;
    std::optional<std::uint64_t> seed_override;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "Path to a JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", args.out_override, "Override the configured output directory");
    sub->add_option("--seed", args.seed_override,
                    "Run a single seed instead of the configured list");
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw gem::ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

gem::RunConfig load(const CommonArgs& args, std::string& text_out) {
    text_out = slurp(args.config_path);
    gem::RunConfig cfg = gem::parse_run_config_text(text_out);
    if (!args.out_override.empty()) cfg.out_dir = args.out_override;
    if (args.seed_override) cfg.seeds = {*args.seed_override};
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evidential mixture classifier: train, evaluate, and visualize"};
    app.require_subcommand(1);

    CommonArgs train_args, eval_args, heat_args, sweep_args;
    CLI::App* train = app.add_subcommand("train", "Train one model per seed");
    add_common(train, train_args);
    CLI::App* eval = app.add_subcommand("eval", "Score saved checkpoints on the eval corpus");
    add_common(eval, eval_args);
    CLI::App* heatmap =
        app.add_subcommand("heatmap", "Render an uncertainty map over the input plane");
    add_common(heatmap, heat_args);
    CLI::App* sweep = app.add_subcommand("sweep", "Train and evaluate a grid of ablation cells");
    add_common(sweep, sweep_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        std::string text;
        if (train->parsed()) {
            gem::RunConfig cfg = load(train_args, text);
            return gem::cmd_train(cfg, text);
        }
        if (eval->parsed()) {
            gem::RunConfig cfg = load(eval_args, text);
            return gem::cmd_eval(cfg);
        }
        if (heatmap->parsed()) {
            gem::RunConfig cfg = load(heat_args, text);
            return gem::cmd_heatmap(cfg);
        }
        gem::RunConfig cfg = load(sweep_args, text);
        return gem::cmd_sweep(cfg, text);
    } catch (const gem::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const gem::TrainAbort& e) {
        std::cerr << "training aborted: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
