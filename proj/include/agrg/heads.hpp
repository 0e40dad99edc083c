#pragma once

#include <cstdint>
#include <vector>

#include "agrg/graph.hpp"

namespace agrg {

struct HeadsConfig {
    int d_i = 32;     // per-label embedding width
    int hidden = 64;  // projection head hidden width
};

struct HeadLosses {
    std::vector<int> per_label;  // node ids of L_i (1x1)
    int total = -1;              // node id of L = sum L_i
};

// K independent projection heads (one hidden layer, ReLU) and classification
// heads (linear to one logit). Head i shares no parameters with head j, so
// backpropagating the summed loss routes dL_i only into head i while the
// trunk upstream of h receives the full sum.
struct MultiTaskHeads {
    int k = 0;
    int d_h = 0;
    HeadsConfig cfg;
    std::vector<Param> params;  // 6 per label: w1, b1, w2, b2, wc, bc

    MultiTaskHeads(int d_h_, int k_, const HeadsConfig& c, uint64_t seed);

    Param& param(int label, int slot) { return params[(size_t)label * 6 + slot]; }

    // h_i node ids, each 1 x d_i
    std::vector<int> project(Graph& g, int h_node);

    // raw logit nodes, each 1 x 1
    std::vector<int> classify_logits(Graph& g, const std::vector<int>& hi_nodes);

    // sigmoid score nodes plus per-label BCE losses and their sum
    std::vector<int> classify(Graph& g, const std::vector<int>& hi_nodes,
                              const std::vector<int>& labels, HeadLosses* losses);

    std::vector<Param*> param_ptrs();
    std::vector<Param*> head_param_ptrs(int label);
};

enum class ThresholdFlag : uint8_t { Ok = 0, NoPositives = 1, NoNegatives = 2 };

struct ThresholdVector {
    std::vector<double> tau;
    std::vector<ThresholdFlag> flags;

    int size() const { return (int)tau.size(); }
};

// Precision/recall/F1 with 0/0 defined as 0.
struct Prf {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};
Prf prf_from_counts(int64_t tp, int64_t fp, int64_t fn);

// Per-label threshold maximizing F1 on validation scores. Candidates are the
// midpoints between consecutive distinct sorted scores plus the sentinels 0
// and 1; ties break toward the larger threshold. A label with no positives
// gets tau = 1 (never predict), with no negatives tau = 0, both flagged.
// scores[label][case], labels[label][case].
ThresholdVector calibrate_thresholds(const std::vector<std::vector<double>>& scores,
                                     const std::vector<std::vector<int>>& labels);

enum class SelectMode { Training, Inference };

// Indices with score > tau (ascending). Training mode additionally requires
// the ground-truth label to be positive (true positives only).
std::vector<int> select_abnormal(const std::vector<double>& scores, const ThresholdVector& tau,
                                 SelectMode mode, const std::vector<int>* truth = nullptr);

}  // namespace agrg
