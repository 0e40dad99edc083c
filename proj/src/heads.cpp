#include "agrg/heads.hpp"

#include <algorithm>
#include <stdexcept>

#include "agrg/rng.hpp"

namespace agrg {

MultiTaskHeads::MultiTaskHeads(int d_h_, int k_, const HeadsConfig& c, uint64_t seed)
    : k(k_), d_h(d_h_), cfg(c) {
    for (int i = 0; i < k; ++i) {
        SplitMix64 rng(mix_seed(seed, 0x6EAD0 + (uint64_t)i));
        std::string p = "head" + std::to_string(i) + ".";
        params.emplace_back(p + "w1", glorot_uniform(d_h, cfg.hidden, rng));
        params.emplace_back(p + "b1", Tensor::matrix(1, cfg.hidden));
        params.emplace_back(p + "w2", glorot_uniform(cfg.hidden, cfg.d_i, rng));
        params.emplace_back(p + "b2", Tensor::matrix(1, cfg.d_i));
        params.emplace_back(p + "wc", glorot_uniform(cfg.d_i, 1, rng));
        params.emplace_back(p + "bc", Tensor::matrix(1, 1));
    }
}

std::vector<int> MultiTaskHeads::project(Graph& g, int h_node) {
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
        int hid = g.relu(g.bias_add(g.matmul(h_node, g.leaf(param(i, 0))), g.leaf(param(i, 1))));
        out.push_back(g.bias_add(g.matmul(hid, g.leaf(param(i, 2))), g.leaf(param(i, 3))));
    }
    return out;
}

std::vector<int> MultiTaskHeads::classify_logits(Graph& g, const std::vector<int>& hi_nodes) {
    if ((int)hi_nodes.size() != k) throw std::invalid_argument("expected one embedding per label");
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i)
        out.push_back(g.bias_add(g.matmul(hi_nodes[i], g.leaf(param(i, 4))), g.leaf(param(i, 5))));
    return out;
}

std::vector<int> MultiTaskHeads::classify(Graph& g, const std::vector<int>& hi_nodes,
                                          const std::vector<int>& labels, HeadLosses* losses) {
    if ((int)labels.size() != k) throw std::invalid_argument("expected one label per head");
    std::vector<int> logits = classify_logits(g, hi_nodes);
    std::vector<int> scores;
    scores.reserve(k);
    HeadLosses hl;
    for (int i = 0; i < k; ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("label must be binary");
        int s = g.sigmoid(logits[i]);
        scores.push_back(s);
        hl.per_label.push_back(g.bce(s, {(double)labels[i]}));
    }
    hl.total = hl.per_label[0];
    for (int i = 1; i < k; ++i) hl.total = g.add(hl.total, hl.per_label[i]);
    if (losses) *losses = hl;
    return scores;
}

std::vector<Param*> MultiTaskHeads::param_ptrs() {
    std::vector<Param*> out;
    for (Param& p : params) out.push_back(&p);
    return out;
}

std::vector<Param*> MultiTaskHeads::head_param_ptrs(int label) {
    std::vector<Param*> out;
    for (int s = 0; s < 6; ++s) out.push_back(&param(label, s));
    return out;
}

Prf prf_from_counts(int64_t tp, int64_t fp, int64_t fn) {
    Prf out;
    out.precision = tp + fp > 0 ? (double)tp / (tp + fp) : 0.0;
    out.recall = tp + fn > 0 ? (double)tp / (tp + fn) : 0.0;
    out.f1 = out.precision + out.recall > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

namespace {

double f1_at_threshold(const std::vector<double>& s, const std::vector<int>& y, double tau) {
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        bool pred = s[i] > tau;
        if (pred && y[i]) ++tp;
        else if (pred) ++fp;
        else if (y[i]) ++fn;
    }
    return prf_from_counts(tp, fp, fn).f1;
}

}  // namespace

ThresholdVector calibrate_thresholds(const std::vector<std::vector<double>>& scores,
                                     const std::vector<std::vector<int>>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("score/label label-count mismatch");
    ThresholdVector out;
    for (size_t li = 0; li < scores.size(); ++li) {
        const std::vector<double>& s = scores[li];
        const std::vector<int>& y = labels[li];
        if (s.size() != y.size() || s.empty()) throw std::invalid_argument("score/label case-count mismatch");

        int64_t pos = 0;
        for (int v : y) pos += v;
        if (pos == 0) {
            out.tau.push_back(1.0);
            out.flags.push_back(ThresholdFlag::NoPositives);
            continue;
        }
        if (pos == (int64_t)y.size()) {
            out.tau.push_back(0.0);
            out.flags.push_back(ThresholdFlag::NoNegatives);
            continue;
        }

        std::vector<double> sorted = s;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        std::vector<double> candidates = {0.0};
        for (size_t i = 0; i + 1 < sorted.size(); ++i)
            candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
        candidates.push_back(1.0);
        std::sort(candidates.begin(), candidates.end());

        double best_tau = candidates.front();
        double best_f1 = -1.0;
        for (double tau : candidates) {
            double f1 = f1_at_threshold(s, y, tau);
            if (f1 >= best_f1) {  // >= breaks ties toward the larger threshold
                best_f1 = f1;
                best_tau = tau;
            }
        }
        out.tau.push_back(best_tau);
        out.flags.push_back(ThresholdFlag::Ok);
    }
    return out;
}

std::vector<int> select_abnormal(const std::vector<double>& scores, const ThresholdVector& tau,
                                 SelectMode mode, const std::vector<int>* truth) {
    if ((int)scores.size() != tau.size()) throw std::invalid_argument("score/threshold length mismatch");
    if (mode == SelectMode::Training && truth == nullptr)
        throw std::invalid_argument("training-mode selection needs ground-truth labels");
    std::vector<int> out;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] <= tau.tau[i]) continue;
        if (mode == SelectMode::Training && !(*truth)[i]) continue;
        out.push_back((int)i);
    }
    return out;
}

}  // namespace agrg
