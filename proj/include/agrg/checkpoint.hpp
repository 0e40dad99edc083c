#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "agrg/graph.hpp"
#include "agrg/heads.hpp"

namespace agrg {

// SHA-256 of a byte buffer, lowercase hex. Used for freeze-contract checks
// and artifact comparison.
std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

// Checkpoint bundle: named tensors stored as 32-bit floats, the calibrated
// threshold vector and the vocabulary when present. Refuses to load into a
// different config unless forced.
struct Checkpoint {
    uint32_t version = 1;
    std::string config_hash;
    std::vector<std::pair<std::string, Tensor>> tensors;
    ThresholdVector thresholds;       // empty when not yet calibrated
    std::vector<std::string> vocab;   // empty before the decoder stage

    bool has_tensor(const std::string& name) const;
    const Tensor& tensor(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path, const std::string& expect_config_hash = "",
                           bool force = false);

// Concatenated little-endian f64 bytes of the given parameter buffers,
// hashed; the freeze contract compares this before and after a stage.
std::string params_sha256(const std::vector<Param*>& params);

}  // namespace agrg
