#pragma once

#include <vector>

#include "agrg/graph.hpp"

namespace agrg {

// Bias-corrected Adam; with decoupled_decay set the weight decay is applied
// directly to the parameters (AdamW), not through the gradients.
struct OptimizerState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool decoupled_decay = false;
    int64_t t = 0;

    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

OptimizerState make_adam(double lr);
OptimizerState make_adamw(double lr, double weight_decay = 0.01);

// One update over the given parameters (their .grad buffers hold the step's
// gradients). Moment buffers are keyed by position, so the parameter list
// must be identical across calls. Frozen parameters are skipped.
void adam_step(OptimizerState& state, const std::vector<Param*>& params);

}  // namespace agrg
