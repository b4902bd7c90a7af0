#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lmmpose/commands.hpp"

namespace {

std::uint64_t default_seed() {
    if (const char* env = std::getenv("LMMPOSE_SEED"); env != nullptr) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw std::invalid_argument("LMMPOSE_SEED must be an unsigned integer");
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Laplacian-mixture NOCS pose toolkit: synthetic scenes, uncertainty-weighted PnP solving, "
                 "scale-agnostic evaluation metrics and ablation benchmarks"};
    app.require_subcommand(1);

    lmmpose::SynthArgs synth_args;
    bool seed_given = false;
    auto* synth = app.add_subcommand("synth", "Generate synthetic scene files and the size codebook");
    synth->add_option("--config", synth_args.config_path, "Config JSON")->required();
    synth->add_option("--out", synth_args.out_dir, "Output directory")->required();
    synth->add_option("--seed", synth_args.seed, "Base seed (default: LMMPOSE_SEED or 0)")
        ->each([&seed_given](const std::string&) { seed_given = true; });

    lmmpose::SolveArgs solve_args;
    auto* solve = app.add_subcommand("solve", "Estimate scale-agnostic poses for every object in a scene");
    solve->add_option("--scene", solve_args.scene_path, "Scene JSON")->required();
    solve->add_option("--solver", solve_args.solver, "lmm-pnp | pnp-unweighted | ransac-pnp | umeyama-oracle")
        ->required();
    solve->add_option("--config", solve_args.config_path, "Config JSON (solver section)");
    solve->add_option("--out", solve_args.out_path, "Result JSON")->required();
    solve->add_option("--size-source", solve_args.size_source, "codebook | gt (default codebook)");
    solve->add_option("--d-source", solve_args.d_source, "none | gt (default none)");

    lmmpose::EvalArgs eval_args;
    std::vector<double> curve_thresholds;
    auto* eval = app.add_subcommand("eval", "Score a result file against its scene");
    eval->add_option("--scene", eval_args.scene_path, "Scene JSON")->required();
    eval->add_option("--results", eval_args.result_path, "Result JSON")->required();
    eval->add_option("--out", eval_args.out_csv, "Metric table CSV")->required();
    eval->add_flag("--absolute", eval_args.absolute, "Also compute absolute-scale metrics (needs d)");
    eval->add_option("--d-source", eval_args.d_source, "pred | gt (default pred)");
    eval->add_option("--n-rot", eval_args.n_rot_sym, "Symmetry rotation samples (default 100)");
    eval->add_option("--thresholds", curve_thresholds, "Extra NIoU AP curve thresholds")->delimiter(',');
    eval->add_option("--curve-out", eval_args.curve_csv, "AP curve CSV path");

    lmmpose::BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench", "Run an ablation or SAP-comparison benchmark spec");
    bench->add_option("--spec", bench_args.spec_path, "Bench spec JSON")->required();
    bench->add_option("--out", bench_args.out_dir, "Output directory")->required();

    auto* selftest = app.add_subcommand("selftest", "Run the embedded invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : lmmpose::kExitUsage;
    }

    try {
        if (synth->parsed()) {
            if (!seed_given) synth_args.seed = default_seed();
            return lmmpose::cmd_synth(synth_args);
        }
        if (solve->parsed()) return lmmpose::cmd_solve(solve_args);
        if (eval->parsed()) {
            eval_args.curve_thresholds = curve_thresholds;
            return lmmpose::cmd_eval(eval_args);
        }
        if (bench->parsed()) return lmmpose::cmd_bench(bench_args);
        if (selftest->parsed()) return lmmpose::cmd_selftest();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return lmmpose::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return lmmpose::kExitFailure;
    }
    return lmmpose::kExitUsage;
}
