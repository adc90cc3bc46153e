#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "crossreg/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<long> seed;
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
    auto* c = cmd->add_option("--config", args.config_path, "pipeline configuration file");
    if (config_required) c->required();
    cmd->add_option("--out", args.out_dir, "output directory override");
    cmd->add_option("--seed", args.seed, "seed override for phantom/solver");
    cmd->add_flag("--verbose", args.verbose, "chatty progress output");
}

int run(const CommonArgs& args, int (*fn)(const crossreg::PipelineConfig&,
                                          const crossreg::CommandOptions&)) {
    try {
        const crossreg::PipelineConfig cfg = crossreg::parse_config_file(args.config_path);
        crossreg::CommandOptions opt;
        opt.out_override = args.out_dir;
        opt.seed_override = args.seed;
        opt.verbose = args.verbose;
        return fn(cfg, opt);
    } catch (const crossreg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return crossreg::kExitInputError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-modality deformable registration and label propagation"};
    app.require_subcommand(1);

    CommonArgs phantom_args, register_args, propagate_args, evaluate_args, selftest_args;

    auto* cmd_phantom =
        app.add_subcommand("phantom", "generate a synthetic paired-modality test case");
    add_common(cmd_phantom, phantom_args, true);

    auto* cmd_register =
        app.add_subcommand("register", "preprocess and register a volume pair");
    add_common(cmd_register, register_args, true);

    auto* cmd_propagate =
        app.add_subcommand("propagate", "warp the moving label through the forward field");
    add_common(cmd_propagate, propagate_args, true);

    auto* cmd_evaluate =
        app.add_subcommand("evaluate", "score predictions against the oracle label");
    add_common(cmd_evaluate, evaluate_args, true);

    auto* cmd_selftest = app.add_subcommand("selftest", "run internal consistency checks");
    cmd_selftest->add_flag("--verbose", selftest_args.verbose, "chatty progress output");

    CLI11_PARSE(app, argc, argv);

    if (cmd_phantom->parsed()) return run(phantom_args, crossreg::cmd_phantom);
    if (cmd_register->parsed()) return run(register_args, crossreg::cmd_register);
    if (cmd_propagate->parsed()) return run(propagate_args, crossreg::cmd_propagate);
    if (cmd_evaluate->parsed()) return run(evaluate_args, crossreg::cmd_evaluate);
    if (cmd_selftest->parsed()) {
        crossreg::CommandOptions opt;
        opt.verbose = selftest_args.verbose;
        return crossreg::cmd_selftest(opt);
    }
    return crossreg::kExitInputError;
}
