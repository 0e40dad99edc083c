#pragma once

#include <string>
#include <vector>

#include "agrg/config.hpp"
#include "agrg/metrics.hpp"
#include "agrg/pipeline.hpp"

namespace agrg {

// Filesystem layout of a run directory.
struct RunPaths {
    std::string root;

    explicit RunPaths(const std::string& out_dir) : root(out_dir) {}
    std::string config() const { return root + "/config.json"; }
    std::string manifest() const { return root + "/manifest.json"; }
    std::string split(const std::string& name) const { return root + "/data/" + name + ".agds"; }
    std::string ckpt(const std::string& stage) const { return root + "/ckpt/" + stage + ".agrg"; }
    std::string loss_log(const std::string& stage) const { return root + "/logs/" + stage + ".csv"; }
    std::string generations(const std::string& split) const { return root + "/gen/" + split + ".jsonl"; }
    std::string metrics_json(const std::string& tag) const { return root + "/metrics/" + tag + ".json"; }
    std::string metrics_table(const std::string& tag) const { return root + "/metrics/" + tag + ".txt"; }
    std::string ablation_dir() const { return root + "/ablation"; }
};

// Subcommand bodies shared by the CLI binary and the acceptance suite. All
// of them throw ConfigError / PrereqError / NumericalError on failure.
void cmd_synth(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg, const std::string& stage, bool resume = false,
               bool force = false);
void cmd_generate(const RunConfig& cfg, const std::string& split, bool force = false);
void cmd_evaluate(const RunConfig& cfg, const std::vector<std::string>& generation_files,
                  const std::string& split, const std::string& tag);
void cmd_ablate(const RunConfig& cfg, int n_seeds);

// Helpers reused by tests.
SplitData load_split_checked(const RunConfig& cfg, const std::string& name);
std::string generation_line(int case_id, const GeneratedReport& rep);
std::vector<std::string> reports_from_jsonl(const std::string& path, int expect_n,
                                            uint64_t* seed_out = nullptr);

// Stage names in paper row order for the ablation table.
struct AblationVariant {
    const char* name;
    bool multitask;
    bool expansion;
};
inline constexpr AblationVariant kAblationVariants[4] = {
    {"baseline", false, false},
    {"multitask", true, false},
    {"embedding", false, true},
    {"full", true, true},
};

}  // namespace agrg
