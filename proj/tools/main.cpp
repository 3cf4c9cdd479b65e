// Command-line surface for the motion-prediction distillation toolkit.
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "swiftdiff/errors.hpp"
#include "swiftdiff/pipeline.hpp"

using namespace swiftdiff;

int main(int argc, char** argv) {
    CLI::App app{"one-step distilled diffusion for motion prediction"};
    app.require_subcommand(1);

    struct {
        std::string spec, config, data, out, teacher, model, ledger, report;
        int stage = 1;
        int case_id = 1;
        int64_t parallel = 5;
        int64_t samples = 10;
        int64_t repeats = 10;
        int64_t steps = 0;
        double tau = 0.5;
        std::optional<uint64_t> seed;
        bool print_config = false;
    } args;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", args.seed, "override the configured seed");
        cmd->add_flag("--print-config", args.print_config,
                      "echo the effective configuration");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    gen->add_option("--spec", args.spec, "corpus spec JSON (or full experiment config)")
        ->required();
    gen->add_option("--out", args.out, "output directory")->required();
    add_common(gen);

    CLI::App* tt = app.add_subcommand("train-teacher", "train the multi-step teacher");
    tt->add_option("--config", args.config)->required();
    tt->add_option("--data", args.data, "dataset directory")->required();
    tt->add_option("--out", args.out, "output checkpoint")->required();
    add_common(tt);

    CLI::App* di = app.add_subcommand("distill", "run a distillation stage");
    di->add_option("--stage", args.stage)->required()->check(CLI::Range(1, 2));
    di->add_option("--teacher", args.teacher, "teacher checkpoint")->required();
    di->add_option("--config", args.config)->required();
    di->add_option("--data", args.data, "dataset directory")->required();
    di->add_option("--out", args.out, "output checkpoint")->required();
    add_common(di);

    CLI::App* bo = app.add_subcommand("bayesopt", "tune stage-2 hyperparameters");
    bo->add_option("--case", args.case_id)->required()->check(CLI::Range(1, 2));
    bo->add_option("--config", args.config)->required();
    bo->add_option("--ledger", args.ledger, "append-only trial ledger (resumable)")
        ->required();
    bo->add_option("--parallel", args.parallel, "concurrent trial evaluations");
    bo->add_option("--data", args.data, "dataset directory")->required();
    bo->add_option("--teacher", args.teacher, "one-step teacher checkpoint")->required();
    add_common(bo);

    CLI::App* ev = app.add_subcommand("eval", "metric suite on the test split");
    ev->add_option("--model", args.model, "model checkpoint")->required();
    ev->add_option("--data", args.data, "dataset directory")->required();
    ev->add_option("--samples", args.samples, "S samples per observation");
    ev->add_option("--report", args.report, "report path")->required();
    ev->add_option("--tau", args.tau, "multimodal threshold (meters)");
    ev->add_option("--steps", args.steps, "override teacher denoising steps");
    add_common(ev);

    CLI::App* be = app.add_subcommand("bench", "single-prediction latency");
    be->add_option("--model", args.model, "model checkpoint")->required();
    be->add_option("--repeats", args.repeats, "timed repetitions");
    be->add_option("--report", args.report, "report path")->required();
    add_common(be);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    cli::CommonOpts opts{args.seed, args.print_config};
    try {
        if (gen->parsed()) {
            cli::cmd_gen_data(args.spec, args.out, opts);
        } else if (tt->parsed()) {
            cli::cmd_train_teacher(args.config, args.data, args.out, opts);
        } else if (di->parsed()) {
            cli::cmd_distill(args.stage, args.teacher, args.config, args.data, args.out,
                             opts);
        } else if (bo->parsed()) {
            cli::cmd_bayesopt(args.case_id, args.config, args.ledger, args.parallel,
                              args.data, args.teacher, opts);
        } else if (ev->parsed()) {
            cli::cmd_eval(args.model, args.data, args.samples, args.report, args.tau,
                          args.steps, opts);
        } else if (be->parsed()) {
            cli::cmd_bench(args.model, args.repeats, args.report, opts);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
