#pragma once

#include <cstdint>
#include <vector>

#include "agrg/data.hpp"
#include "agrg/graph.hpp"
#include "agrg/optim.hpp"

namespace agrg {

struct EncoderConfig {
    int pd = 8, ph = 8, pw = 8;  // patch size
    int d_h = 128;               // shared feature width
    int layers = 2;              // per-token MLP mixing blocks
};

// Volume -> non-overlapping patches, one row per patch (row-major patch
// order, row-major voxels within a patch).
Tensor extract_patches(const float* vox, int d, int h, int w, const EncoderConfig& cfg);

// Patch embedding followed by pre-norm residual MLP blocks shared across
// tokens, mean-pooled to a single feature vector h. There is no positional
// signal: the encoder is a set function of the patches.
struct VisualEncoder {
    EncoderConfig cfg;
    std::vector<Param> params;

    VisualEncoder(const EncoderConfig& c, uint64_t seed);

    // node id of h (1 x d_h)
    int forward(Graph& g, const float* vox, int d, int h, int w);

    std::vector<Param*> param_ptrs();
};

// The multi-label pretraining head: a single linear map d_h -> K emitting
// raw logits. Sigmoid is applied only inside losses and thresholding.
struct MultiLabelHead {
    int k = 0;
    std::vector<Param> params;  // W (d_h x K), b (1 x K)

    MultiLabelHead(int d_h, int k_, uint64_t seed);

    int forward(Graph& g, int h_node);  // logits (1 x K)

    std::vector<Param*> param_ptrs();
};

// One pass over the training cases with per-batch Adam updates; returns the
// mean over batches of the batch loss (mean over samples of mean-over-labels
// BCE). Deterministic given the shuffle seed.
double pretrain_epoch(VisualEncoder& enc, MultiLabelHead& head, const SplitData& data,
                      OptimizerState& opt, int batch_size, uint64_t shuffle_seed);

// Frozen forward: sigmoid scores for every case (parallel across cases).
std::vector<std::vector<double>> multilabel_scores(VisualEncoder& enc, MultiLabelHead& head,
                                                   const SplitData& data);

}  // namespace agrg
