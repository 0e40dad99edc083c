// Anomaly-guided report generation CLI: synthesize data, train the stages,
// generate reports, evaluate them, and run the ablation grid.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "agrg/driver.hpp"
#include "agrg/kernels.hpp"

using namespace agrg;

namespace {

struct CommonFlags {
    std::string config_path;
    int64_t seed = -1;
    int threads = -1;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "run configuration JSON")->required();
    cmd->add_option("--seed", f.seed, "override config seed");
    cmd->add_option("--threads", f.threads, "cap worker threads (0 = library default)");
    cmd->add_option("--out-dir", f.out_dir, "override output directory");
}

RunConfig resolve_config(const CommonFlags& f) {
    RunConfig cfg = RunConfig::load(f.config_path);
    if (const char* env = std::getenv("AGRG_SEED")) cfg.seed = (uint64_t)std::strtoull(env, nullptr, 10);
    if (f.seed >= 0) cfg.seed = (uint64_t)f.seed;  // flag beats env beats file
    if (f.threads >= 0) cfg.threads = f.threads;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    cfg.validate();
    if (cfg.threads > 0) kern::set_threads(cfg.threads);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"anomaly-guided report generation experiments"};
    app.require_subcommand(1);

    CommonFlags synth_f, train_f, gen_f, eval_f, abl_f;

    CLI::App* synth = app.add_subcommand("synth", "synthesize the dataset splits");
    add_common(synth, synth_f);

    CLI::App* train = app.add_subcommand("train", "train one stage");
    add_common(train, train_f);
    std::string stage;
    bool resume = false, force = false;
    double lr_override = -1.0;
    int epochs_override = -1;
    train->add_option("--stage", stage, "pretrain | heads | decoder | baseline")->required();
    train->add_flag("--resume", resume, "continue from this stage's checkpoint");
    train->add_flag("--force", force, "ignore config-hash mismatches");
    train->add_option("--lr", lr_override, "override the stage learning rate");
    train->add_option("--epochs", epochs_override, "override the stage epoch count");

    CLI::App* gen = app.add_subcommand("generate", "generate reports for a split");
    add_common(gen, gen_f);
    std::string gen_split = "test";
    bool gen_force = false;
    gen->add_option("--split", gen_split, "train | val | test");
    gen->add_flag("--force", gen_force, "ignore config-hash mismatches");

    CLI::App* eval = app.add_subcommand("evaluate", "score generations against a split");
    add_common(eval, eval_f);
    std::string eval_split = "test", eval_tag = "test";
    std::vector<std::string> gen_files;
    eval->add_option("--split", eval_split, "reference split");
    eval->add_option("--tag", eval_tag, "output name under metrics/");
    eval->add_option("--generations", gen_files, "one or more generation JSONL files (multi-seed mode)")
        ->required();

    CLI::App* abl = app.add_subcommand("ablate", "train and evaluate the four variants");
    add_common(abl, abl_f);
    int n_seeds = 3;
    abl->add_option("--seeds", n_seeds, "independent runs per variant");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            cmd_synth(resolve_config(synth_f));
        } else if (*train) {
            RunConfig cfg = resolve_config(train_f);
            StageHyper* h = stage == "pretrain" ? &cfg.pretrain
                            : stage == "heads"  ? &cfg.stage_heads
                                                : &cfg.stage_decoder;
            if (lr_override >= 0.0) h->lr = lr_override;
            if (epochs_override >= 0) h->epochs = epochs_override;
            cmd_train(cfg, stage, resume, force);
        } else if (*gen) {
            cmd_generate(resolve_config(gen_f), gen_split, gen_force);
        } else if (*eval) {
            cmd_evaluate(resolve_config(eval_f), gen_files, eval_split, eval_tag);
        } else if (*abl) {
            cmd_ablate(resolve_config(abl_f), n_seeds);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const PrereqError& e) {
        std::cerr << "missing prerequisite: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
