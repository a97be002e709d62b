// pcreg command-line front end: batch experiment driver over the library.
// Exit codes: 0 success, 2 usage or invalid configuration, 3 bad input data,
// 4 runtime failure. Output files are written only after a run completes, so
// a failing invocation never leaves a partial CSV behind.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcreg/bench.hpp"
#include "pcreg/errors.hpp"

namespace {

using namespace pcreg;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw DataError("read failed for " + path);
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open output file " + path);
    out << content;
    if (!out) throw DataError("write failed for " + path);
}

// Explicit paths are taken verbatim; an omitted output lands in
// $PCREG_OUT_DIR (or the working directory) under the default name.
std::string resolve_output(const std::string& cli_out, const std::string& default_name) {
    if (!cli_out.empty()) return cli_out;
    const char* dir = std::getenv("PCREG_OUT_DIR");
    if (dir && *dir) return (std::filesystem::path(dir) / default_name).string();
    return default_name;
}

// Shared experiment options: an optional JSON config plus flag overrides.
// Overrides are applied only when the flag is present, protocol first since
// it resets the perturbation pipeline.
struct ExperimentCli {
    CLI::App* sub = nullptr;
    std::string config_path;
    std::string protocol;
    std::string method;
    double max_angle_deg = 0.0;
    double max_translation = 0.0;
    std::size_t points = 0;
    std::string policy;
    std::string reward;
    std::string weights;
    bool refine = false;
    std::vector<std::string> shapes;
    std::size_t shape_points = 0;
    std::string manifest;
    std::string split;
    std::size_t pairs = 0;
    std::uint64_t seed = 0;
    std::string out;

    void attach(CLI::App* s, bool with_output) {
        sub = s;
        s->add_option("--config", config_path, "JSON experiment config file");
        s->add_option("--protocol", protocol, "clean | noisy | partial");
        s->add_option("--method", method, "transform sampling: haar | naive_euler");
        s->add_option("--max-angle-deg", max_angle_deg, "rotation cap in degrees");
        s->add_option("--max-translation", max_translation, "per-axis translation cap");
        s->add_option("--points", points, "observed points per cloud");
        s->add_option("--policy", policy, "greedy | stoch1 | stoch2 | uniform_random");
        s->add_option("--reward", reward, "oracle_se3 | oracle_l2 | oracle_mcd | network");
        s->add_option("--weights", weights, "weights file for the network reward source");
        s->add_flag("--refine,!--no-refine", refine, "run ICP refinement after the agent");
        s->add_option("--shapes", shapes, "synthetic shapes: sphere box helix torus");
        s->add_option("--shape-points", shape_points, "points per synthesized / loaded shape");
        s->add_option("--manifest", manifest, "dataset manifest (overrides synthetic shapes)");
        s->add_option("--split", split, "manifest split: train | val | test");
        s->add_option("--pairs", pairs, "number of test pairs");
        s->add_option("--seed", seed, "experiment seed");
        if (with_output) s->add_option("--out", out, "output CSV path");
    }

    bool has(const char* name) const { return sub->count(name) > 0; }

    ExperimentConfig build() const {
        ExperimentConfig cfg;
        if (!config_path.empty()) cfg = experiment_from_json(read_text_file(config_path));
        if (has("--protocol")) {
            cfg.protocol = protocol_from_string(protocol);
            cfg.perturbation = protocol_perturbation(cfg.protocol);
        }
        if (has("--method")) cfg.transform.method = sample_method_from_string(method);
        if (has("--max-angle-deg")) cfg.transform.max_angle = deg_to_rad(max_angle_deg);
        if (has("--max-translation")) cfg.transform.max_translation = max_translation;
        if (has("--points")) cfg.perturbation.n_points = points;
        if (has("--policy")) cfg.policy.kind = policy_kind_from_string(policy);
        if (has("--reward")) cfg.reward = reward_source_kind_from_string(reward);
        if (has("--weights")) cfg.weights = weights;
        if (has("--refine") || has("--no-refine")) cfg.refine_icp = refine;
        if (has("--shapes")) {
            cfg.dataset.shapes.clear();
            for (const std::string& s : shapes)
                cfg.dataset.shapes.push_back(shape_kind_from_string(s));
        }
        if (has("--shape-points")) cfg.dataset.shape_points = shape_points;
        if (has("--manifest")) cfg.dataset.manifest = manifest;
        if (has("--split")) cfg.dataset.split = split;
        if (has("--pairs")) cfg.n_pairs = pairs;
        if (has("--seed")) cfg.seed = seed;
        cfg.output = out;
        cfg.validate();
        return cfg;
    }
};

void print_report(const EvalReport& r) {
    std::printf("rot_err_deg=%.17g\n", r.rot_err_deg);
    std::printf("trans_err=%.17g\n", r.trans_err);
    std::printf("clean_l2=%.17g\n", r.clean_l2);
    std::printf("mcd=%.17g\n", r.mcd);
}

int run(int argc, char** argv) {
    CLI::App app{"pcreg: iterative point-cloud registration experiments"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset plus manifest");
    std::string gen_dir;
    std::size_t gen_categories = 8, gen_per_category = 4, gen_points = 1024;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out-dir", gen_dir, "target directory")->required();
    gen->add_option("--categories", gen_categories, "number of categories");
    gen->add_option("--per-category", gen_per_category, "clouds per category");
    gen->add_option("--points", gen_points, "points per cloud");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->callback([&]() {
        const std::string manifest =
            generate_dataset(gen_dir, gen_categories, gen_per_category, gen_points, gen_seed);
        std::printf("wrote %s\n", manifest.c_str());
    });

    // train
    auto* tr = app.add_subcommand("train", "train the reward network on synthetic shapes");
    std::string tr_config, tr_weights, tr_history;
    tr->add_option("--config", tr_config, "JSON training config file");
    tr->add_option("--weights-out", tr_weights, "weights output path");
    tr->add_option("--history-out", tr_history, "per-epoch loss CSV path");
    tr->callback([&]() {
        TrainingRunSpec spec;
        if (!tr_config.empty()) spec = training_run_from_json(read_text_file(tr_config));
        const TrainResult result = run_training(spec);
        const std::string weights_path = resolve_output(tr_weights, "weights.pcregnet");
        save_weights(weights_path, result.params, training_run_to_json(spec));
        std::printf("wrote %s\n", weights_path.c_str());
        if (!tr_history.empty()) {
            write_text_file(tr_history, history_to_csv(spec, result));
            std::printf("wrote %s\n", tr_history.c_str());
        }
        if (!result.history.empty())
            std::printf("epochs=%zu first_loss=%.17g final_loss=%.17g\n", result.history.size(),
                        result.history.front().train_loss, result.history.back().train_loss);
    });

    // register
    auto* reg = app.add_subcommand("register", "register one pair and print its metrics");
    ExperimentCli reg_cli;
    reg_cli.attach(reg, /*with_output=*/false);
    std::size_t reg_index = 0;
    reg->add_option("--pair", reg_index, "pair index within the sweep");
    reg->callback([&]() {
        const EvalRow row = run_single(reg_cli.build(), reg_index);
        print_report(row.report);
    });

    // eval
    auto* ev = app.add_subcommand("eval", "full test sweep to CSV");
    ExperimentCli ev_cli;
    ev_cli.attach(ev, /*with_output=*/true);
    ev->callback([&]() {
        ExperimentConfig cfg = ev_cli.build();
        cfg.output = resolve_output(cfg.output, "eval.csv");
        const EvalRun run = run_eval(cfg);
        write_text_file(cfg.output, eval_to_csv(cfg, run));
        std::printf("wrote %s\n", cfg.output.c_str());
        std::printf("pairs=%zu mean_rot_err_deg=%.17g mean_trans_err=%.17g "
                    "mean_clean_l2=%.17g mean_mcd=%.17g\n",
                    run.rows.size(), run.mean.rot_err_deg, run.mean.trans_err,
                    run.mean.clean_l2, run.mean.mcd);
    });

    // sample-rot
    auto* sr = app.add_subcommand("sample-rot", "rotation sampler histogram to CSV");
    std::string sr_method = "haar", sr_out;
    double sr_max_angle_deg = 60.0;
    std::size_t sr_samples = 100000, sr_bins = 64;
    std::uint64_t sr_seed = 0;
    sr->add_option("--method", sr_method, "haar | naive_euler");
    sr->add_option("--max-angle-deg", sr_max_angle_deg, "angle cap in degrees");
    sr->add_option("--samples", sr_samples, "number of rotations to draw");
    sr->add_option("--bins", sr_bins, "histogram bins");
    sr->add_option("--seed", sr_seed, "sampler seed");
    sr->add_option("--out", sr_out, "output CSV path");
    sr->callback([&]() {
        const std::string csv =
            sample_rotation_csv(sample_method_from_string(sr_method),
                                deg_to_rad(sr_max_angle_deg), sr_samples, sr_bins, sr_seed);
        const std::string path = resolve_output(sr_out, "sample_rot.csv");
        write_text_file(path, csv);
        std::printf("wrote %s\n", path.c_str());
    });

    // trace
    auto* tc = app.add_subcommand("trace", "per-iteration trace of one registration to CSV");
    ExperimentCli tc_cli;
    tc_cli.attach(tc, /*with_output=*/true);
    tc->callback([&]() {
        ExperimentConfig cfg = tc_cli.build();
        cfg.output = resolve_output(cfg.output, "trace.csv");
        const std::string csv = run_trace_csv(cfg);
        write_text_file(cfg.output, csv);
        std::printf("wrote %s\n", cfg.output.c_str());
    });

    // ablate
    auto* ab = app.add_subcommand("ablate", "comparison grid to CSV");
    ExperimentCli ab_cli;
    ab_cli.attach(ab, /*with_output=*/true);
    std::string ab_kind;
    ab->add_option("--kind", ab_kind, "reward | sampling | curriculum | policy")->required();
    ab->callback([&]() {
        const AblationKind kind = ablation_kind_from_string(ab_kind);
        ExperimentConfig cfg = ab_cli.build();
        cfg.output = resolve_output(cfg.output, std::string("ablate_") + to_string(kind) + ".csv");
        const std::vector<AblationRow> rows = run_ablation(kind, cfg);
        write_text_file(cfg.output, ablation_to_csv(kind, cfg, rows));
        std::printf("wrote %s\n", cfg.output.c_str());
        for (const AblationRow& r : rows) {
            if (r.error.empty())
                std::printf("%s: pairs=%zu rot_err_deg=%.17g trans_err=%.17g clean_l2=%.17g "
                            "mcd=%.17g\n",
                            r.arm.c_str(), r.pairs, r.mean.rot_err_deg, r.mean.trans_err,
                            r.mean.clean_l2, r.mean.mcd);
            else
                std::printf("%s: error: %s\n", r.arm.c_str(), r.error.c_str());
        }
    });

    // time
    auto* tm = app.add_subcommand("time", "wall-clock timing of the registration call");
    ExperimentCli tm_cli;
    tm_cli.attach(tm, /*with_output=*/true);
    tm->callback([&]() {
        ExperimentConfig cfg = tm_cli.build();
        const TimingResult t = run_timing(cfg);
        std::printf("pairs=%zu mean_ms=%.6f min_ms=%.6f max_ms=%.6f\n", t.pairs, t.mean_ms,
                    t.min_ms, t.max_ms);
        if (!cfg.output.empty()) {
            write_text_file(cfg.output, timing_to_csv(cfg, t));
            std::printf("wrote %s\n", cfg.output.c_str());
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e); // prints the message and usage hint
        return 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const pcreg::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const pcreg::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
}
