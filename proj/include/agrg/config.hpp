#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "agrg/encoder.hpp"
#include "agrg/heads.hpp"
#include "agrg/textgen.hpp"

namespace agrg {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PrereqError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StageHyper {
    int epochs = 1;
    int batch = 4;
    double lr = 1e-4;
    double weight_decay = 0.0;
    bool adamw = false;
};

// Full experiment configuration. The JSON file is the source of truth; its
// canonical form is hashed and the hash stamps every artifact of the run.
struct RunConfig {
    uint64_t seed = 0;
    int threads = 0;  // 0 = leave the OpenMP default
    std::string out_dir = "runs/default";

    // dataset
    int k = 6;
    int vd = 24, vh = 48, vw = 48;
    double anomaly_p = 0.35;
    int n_train = 2000, n_val = 400, n_test = 400;
    uint64_t data_seed = 1000;

    EncoderConfig encoder;
    HeadsConfig heads;
    DecoderConfig decoder;

    // ablation axes: multi-task heads and the zero-padded slot expansion;
    // both off is the unguided baseline
    bool multitask = true;
    bool expansion = true;

    StageHyper pretrain{8, 4, 1e-4, 0.0, false};
    StageHyper stage_heads{3, 4, 1e-4, 0.0, false};
    StageHyper stage_decoder{12, 16, 3e-4, 0.01, true};

    int beam = 4;
    double beam_alpha = 0.0;

    void validate() const;
    std::string to_json_string() const;  // full form, sorted keys
    static RunConfig from_json_string(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;

    // FNV-1a 64 of the canonical JSON (out_dir and threads excluded), as 16
    // hex digits
    std::string hash() const;

    std::string json_impl(bool canonical) const;

    std::string variant_name() const;
};

uint64_t fnv1a64(const std::string& bytes);

}  // namespace agrg
