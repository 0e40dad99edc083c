#include "agrg/encoder.hpp"

#include <stdexcept>

#include "agrg/rng.hpp"

namespace agrg {

Tensor extract_patches(const float* vox, int d, int h, int w, const EncoderConfig& cfg) {
    if (d % cfg.pd || h % cfg.ph || w % cfg.pw)
        throw std::invalid_argument("volume shape not divisible by patch size");
    int nd = d / cfg.pd, nh = h / cfg.ph, nw = w / cfg.pw;
    int pvol = cfg.pd * cfg.ph * cfg.pw;
    Tensor out = Tensor::matrix(nd * nh * nw, pvol);
    int row = 0;
    for (int pz = 0; pz < nd; ++pz)
        for (int py = 0; py < nh; ++py)
            for (int px = 0; px < nw; ++px, ++row) {
                double* dst = &out.data[(size_t)row * pvol];
                int i = 0;
                for (int z = 0; z < cfg.pd; ++z)
                    for (int y = 0; y < cfg.ph; ++y)
                        for (int x = 0; x < cfg.pw; ++x, ++i) {
                            size_t src = ((size_t)(pz * cfg.pd + z) * h + (py * cfg.ph + y)) * w +
                                         (px * cfg.pw + x);
                            dst[i] = (double)vox[src];
                        }
                // center each patch: the smooth background level varies per
                // case and carries no label signal, the in-patch contrast
                // carries all of it
                double mean = 0.0;
                for (int v = 0; v < pvol; ++v) mean += dst[v];
                mean /= pvol;
                for (int v = 0; v < pvol; ++v) dst[v] -= mean;
            }
    return out;
}

VisualEncoder::VisualEncoder(const EncoderConfig& c, uint64_t seed) : cfg(c) {
    if (cfg.d_h % 2) throw std::invalid_argument("d_h must be even");
    SplitMix64 rng(mix_seed(seed, 0xE0C0));
    int pvol = cfg.pd * cfg.ph * cfg.pw;
    params.emplace_back("enc.embed.w", glorot_uniform(pvol, cfg.d_h, rng));
    params.emplace_back("enc.embed.b", Tensor::matrix(1, cfg.d_h));
    for (int l = 0; l < cfg.layers; ++l) {
        std::string p = "enc.mix" + std::to_string(l) + ".";
        params.emplace_back(p + "ln.g", Tensor::matrix(1, cfg.d_h, 1.0));
        params.emplace_back(p + "ln.b", Tensor::matrix(1, cfg.d_h));
        params.emplace_back(p + "w1", glorot_uniform(cfg.d_h, cfg.d_h, rng));
        params.emplace_back(p + "b1", Tensor::matrix(1, cfg.d_h));
        params.emplace_back(p + "w2", glorot_uniform(cfg.d_h, cfg.d_h, rng));
        params.emplace_back(p + "b2", Tensor::matrix(1, cfg.d_h));
    }
    params.emplace_back("enc.final_ln.g", Tensor::matrix(1, cfg.d_h, 1.0));
    params.emplace_back("enc.final_ln.b", Tensor::matrix(1, cfg.d_h));
}

int VisualEncoder::forward(Graph& g, const float* vox, int d, int h, int w) {
    int p = 0;
    int x = g.gelu(g.bias_add(g.matmul(g.input(extract_patches(vox, d, h, w, cfg)), g.leaf(params[p])),
                              g.leaf(params[p + 1])));
    p += 2;
    for (int l = 0; l < cfg.layers; ++l, p += 6) {
        int xn = g.layer_norm(x, g.leaf(params[p]), g.leaf(params[p + 1]));
        int hid = g.gelu(g.bias_add(g.matmul(xn, g.leaf(params[p + 2])), g.leaf(params[p + 3])));
        int out = g.bias_add(g.matmul(hid, g.leaf(params[p + 4])), g.leaf(params[p + 5]));
        x = g.add(x, out);
    }
    // normalize after pooling: the pooled anomaly signal is small against
    // per-case background shifts, and the norm rescales it to unit range
    return g.layer_norm(g.mean_rows(x), g.leaf(params[p]), g.leaf(params[p + 1]));
}

std::vector<Param*> VisualEncoder::param_ptrs() {
    std::vector<Param*> out;
    for (Param& p : params) out.push_back(&p);
    return out;
}

MultiLabelHead::MultiLabelHead(int d_h, int k_, uint64_t seed) : k(k_) {
    SplitMix64 rng(mix_seed(seed, 0xF00D));
    params.emplace_back("psi.w", glorot_uniform(d_h, k, rng));
    params.emplace_back("psi.b", Tensor::matrix(1, k));
}

int MultiLabelHead::forward(Graph& g, int h_node) {
    return g.bias_add(g.matmul(h_node, g.leaf(params[0])), g.leaf(params[1]));
}

std::vector<Param*> MultiLabelHead::param_ptrs() { return {&params[0], &params[1]}; }

namespace {

std::vector<double> mask_to_labels(uint32_t mask, int k) {
    std::vector<double> y(k);
    for (int i = 0; i < k; ++i) y[i] = (mask >> i) & 1u ? 1.0 : 0.0;
    return y;
}

}  // namespace

double pretrain_epoch(VisualEncoder& enc, MultiLabelHead& head, const SplitData& data,
                      OptimizerState& opt, int batch_size, uint64_t shuffle_seed) {
    if (data.cases.empty()) throw std::invalid_argument("empty dataset");
    std::vector<int> order(data.cases.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
    SplitMix64 rng(shuffle_seed);
    rng.shuffle(order);

    std::vector<Param*> all = enc.param_ptrs();
    for (Param* p : head.param_ptrs()) all.push_back(p);

    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += (size_t)batch_size) {
        size_t end = std::min(order.size(), start + (size_t)batch_size);
        int nb = (int)(end - start);
        for (Param* p : all) p->zero_grad();
        double batch_loss = 0.0;
        for (size_t s = start; s < end; ++s) {
            const CaseRecord& c = data.cases[order[s]];
            Graph g;
            int hn = enc.forward(g, c.voxels.data(), data.d, data.h, data.w);
            int logits = head.forward(g, hn);
            int loss = g.mean(g.bce(g.sigmoid(logits), mask_to_labels(c.label_mask, head.k)));
            batch_loss += g.scalar(loss);
            g.backward(g.scale(loss, 1.0 / nb));
        }
        adam_step(opt, all);
        epoch_loss += batch_loss / nb;
        ++batches;
    }
    return epoch_loss / batches;
}

std::vector<std::vector<double>> multilabel_scores(VisualEncoder& enc, MultiLabelHead& head,
                                                   const SplitData& data) {
    std::vector<std::vector<double>> out(data.cases.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < (int)data.cases.size(); ++i) {
        Graph g;
        int logits = head.forward(g, enc.forward(g, data.cases[i].voxels.data(), data.d, data.h, data.w));
        int probs = g.sigmoid(logits);
        out[i] = g.value(probs).data;
    }
    return out;
}

}  // namespace agrg
