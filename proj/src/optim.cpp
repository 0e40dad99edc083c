#include "agrg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace agrg {

OptimizerState make_adam(double lr) {
    OptimizerState s;
    s.lr = lr;
    return s;
}

OptimizerState make_adamw(double lr, double weight_decay) {
    OptimizerState s;
    s.lr = lr;
    s.weight_decay = weight_decay;
    s.decoupled_decay = true;
    return s;
}

void adam_step(OptimizerState& state, const std::vector<Param*>& params) {
    if (state.m.empty()) {
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (Param* p : params) {
            state.m.emplace_back(p->value.shape);
            state.v.emplace_back(p->value.shape);
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step parameter list changed");

    state.t += 1;
    double bc1 = 1.0 - std::pow(state.beta1, (double)state.t);
    double bc2 = 1.0 - std::pow(state.beta2, (double)state.t);

    for (size_t k = 0; k < params.size(); ++k) {
        Param& p = *params[k];
        if (!p.trainable()) continue;
        if (!p.value.same_shape(state.m[k])) throw std::invalid_argument("adam_step shape mismatch for " + p.name);
        double* w = p.value.data.data();
        double* g = p.grad.data.data();
        double* m = state.m[k].data.data();
        double* v = state.v[k].data.data();
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            double gi = g[i];
            if (state.weight_decay != 0.0 && !state.decoupled_decay) gi += state.weight_decay * w[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            if (state.decoupled_decay && state.weight_decay != 0.0) w[i] -= state.lr * state.weight_decay * w[i];
            w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace agrg
