#include "agrg/textgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "agrg/rng.hpp"

namespace agrg {

Vocabulary Vocabulary::build(const std::vector<std::string>& words) {
    Vocabulary v;
    v.tokens = {"[BOS]", "[EOS]", "[PAD]", "[UNK]"};
    for (const std::string& w : words) {
        if (w.empty()) throw std::invalid_argument("empty vocabulary word");
        v.tokens.push_back(w);
    }
    for (size_t i = 0; i < v.tokens.size(); ++i) {
        if (!v.index.emplace(v.tokens[i], (int)i).second)
            throw std::invalid_argument("duplicate vocabulary token: " + v.tokens[i]);
    }
    return v;
}

int Vocabulary::id(const std::string& word) const {
    auto it = index.find(word);
    return it == index.end() ? unk : it->second;
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
    std::vector<int> out;
    std::string lowered = text;
    for (char& c : lowered) c = (char)std::tolower((unsigned char)c);
    std::istringstream is(lowered);
    std::string word;
    while (is >> word) out.push_back(id(word));
    return out;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids) {
        if (i < 0 || i >= size()) throw std::invalid_argument("token id out of range");
        if (i == bos || i == eos || i == pad) continue;
        if (!out.empty()) out += " ";
        out += i == unk ? "[unk]" : tokens[i];
    }
    return out;
}

int ps_attention(Graph& g, int e_node, int y_node, const std::vector<PSAttnHead>& heads,
                 std::vector<int>* attn_rows) {
    int t = g.value(y_node).rows();

    // causal mask over 1 + t slots; the conditioning slot (col 0) is never
    // masked, token slot j is visible to query row i iff j <= i
    Tensor mask = Tensor::matrix(t, t + 1);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j)
            if (j > i) mask.at(i, j + 1) = -1e9;
    int mask_node = g.input(std::move(mask));

    int out = -1;
    for (const PSAttnHead& h : heads) {
        int head_dim = h.wq->value.shape[1];
        int q = g.matmul(y_node, g.leaf(*h.wq));
        int keys = g.concat_rows(g.matmul(e_node, g.leaf(*h.cond_wk)), g.matmul(y_node, g.leaf(*h.wk)));
        int vals = g.concat_rows(g.matmul(e_node, g.leaf(*h.cond_wv)), g.matmul(y_node, g.leaf(*h.wv)));
        int scores = g.add(g.scale(g.matmul_bt(q, keys), 1.0 / std::sqrt((double)head_dim)), mask_node);
        int attn = g.softmax_rows(scores);
        if (attn_rows) attn_rows->push_back(attn);
        int head_out = g.matmul(attn, vals);
        out = out < 0 ? head_out : g.concat_cols(out, head_out);
    }
    return out;
}

Decoder::Decoder(const DecoderConfig& c, int vocab, uint64_t seed) : cfg(c), vocab_size(vocab) {
    if (cfg.d_t % cfg.heads) throw std::invalid_argument("d_t must be divisible by heads");
    SplitMix64 rng(mix_seed(seed, 0xDEC0));
    int dh = cfg.d_t / cfg.heads;

    params.emplace_back("dec.tok", glorot_uniform(vocab, cfg.d_t, rng));
    params.emplace_back("dec.pos", glorot_uniform(cfg.max_pos, cfg.d_t, rng));
    params.emplace_back("dec.final_ln.g", Tensor::matrix(1, cfg.d_t, 1.0));
    params.emplace_back("dec.final_ln.b", Tensor::matrix(1, cfg.d_t));
    // zero-init output head: logits start uniform, init loss is exactly ln|V|
    params.emplace_back("dec.out.w", Tensor::matrix(cfg.d_t, vocab));
    params.emplace_back("dec.out.b", Tensor::matrix(1, vocab));

    for (int l = 0; l < cfg.layers; ++l) {
        std::string p = "dec.l" + std::to_string(l) + ".";
        params.emplace_back(p + "ln1.g", Tensor::matrix(1, cfg.d_t, 1.0));
        params.emplace_back(p + "ln1.b", Tensor::matrix(1, cfg.d_t));
        for (int h = 0; h < cfg.heads; ++h) {
            std::string q = p + "h" + std::to_string(h) + ".";
            params.emplace_back(q + "wq", glorot_uniform(cfg.d_t, dh, rng));
            params.emplace_back(q + "wk", glorot_uniform(cfg.d_t, dh, rng));
            params.emplace_back(q + "wv", glorot_uniform(cfg.d_t, dh, rng));
            params.emplace_back(q + "cwk", glorot_uniform(cfg.d_t, dh, rng));
            params.emplace_back(q + "cwv", glorot_uniform(cfg.d_t, dh, rng));
        }
        params.emplace_back(p + "wo", glorot_uniform(cfg.d_t, cfg.d_t, rng));
        params.emplace_back(p + "ln2.g", Tensor::matrix(1, cfg.d_t, 1.0));
        params.emplace_back(p + "ln2.b", Tensor::matrix(1, cfg.d_t));
        params.emplace_back(p + "ffn.w1", glorot_uniform(cfg.d_t, cfg.ffn_mult * cfg.d_t, rng));
        params.emplace_back(p + "ffn.b1", Tensor::matrix(1, cfg.ffn_mult * cfg.d_t));
        params.emplace_back(p + "ffn.w2", glorot_uniform(cfg.ffn_mult * cfg.d_t, cfg.d_t, rng));
        params.emplace_back(p + "ffn.b2", Tensor::matrix(1, cfg.d_t));
    }
}

int Decoder::forward(Graph& g, int e_node, const std::vector<int>& tokens,
                     std::vector<int>* attn_rows) {
    if (tokens.empty()) throw std::invalid_argument("decoder needs at least one token");
    if ((int)tokens.size() > cfg.max_pos) throw std::invalid_argument("sequence exceeds max positions");
    if (g.value(e_node).cols() != cfg.d_t) throw std::invalid_argument("conditioning width mismatch");
    int t = (int)tokens.size();

    int x = g.add(g.embed(g.leaf(tok_table()), tokens), g.slice_rows(g.leaf(pos_table()), 0, t));
    for (int l = 0; l < cfg.layers; ++l) {
        int base = layer_base(l);
        int xn = g.layer_norm(x, g.leaf(params[base]), g.leaf(params[base + 1]));
        std::vector<PSAttnHead> heads;
        for (int h = 0; h < cfg.heads; ++h) {
            int hb = base + 2 + h * 5;
            heads.push_back({&params[hb], &params[hb + 1], &params[hb + 2], &params[hb + 3],
                             &params[hb + 4]});
        }
        int attn = ps_attention(g, e_node, xn, heads, attn_rows);
        int proj_base = base + 2 + cfg.heads * 5;
        x = g.add(x, g.matmul(attn, g.leaf(params[proj_base])));
        int xn2 = g.layer_norm(x, g.leaf(params[proj_base + 1]), g.leaf(params[proj_base + 2]));
        int hid = g.gelu(g.bias_add(g.matmul(xn2, g.leaf(params[proj_base + 3])), g.leaf(params[proj_base + 4])));
        int ffn = g.bias_add(g.matmul(hid, g.leaf(params[proj_base + 5])), g.leaf(params[proj_base + 6]));
        x = g.add(x, ffn);
    }
    int xf = g.layer_norm(x, g.leaf(params[2]), g.leaf(params[3]));
    return g.bias_add(g.matmul(xf, g.leaf(params[4])), g.leaf(params[5]));
}

std::vector<Param*> Decoder::param_ptrs() {
    std::vector<Param*> out;
    for (Param& p : params) out.push_back(&p);
    return out;
}

int decoder_nll(Graph& g, Decoder& dec, int e_node, const std::vector<int>& tokens,
                int* n_positions) {
    if (tokens.size() < 2) throw std::invalid_argument("sequence needs [BOS] plus at least one target");
    std::vector<int> inputs(tokens.begin(), tokens.end() - 1);
    std::vector<int> targets(tokens.begin() + 1, tokens.end());
    int logits = dec.forward(g, e_node, inputs);
    if (n_positions) *n_positions = (int)targets.size();
    return g.ce_rows(logits, targets);
}

double train_decoder_step(Decoder& dec, const std::vector<CondSentence>& batch,
                          OptimizerState& opt) {
    if (batch.empty()) throw std::invalid_argument("empty decoder batch");
    int total_positions = 0;
    for (const CondSentence& s : batch) total_positions += (int)s.tokens.size() - 1;

    std::vector<Param*> params = dec.param_ptrs();
    for (Param* p : params) p->zero_grad();
    double loss_sum = 0.0;
    for (const CondSentence& s : batch) {
        Graph g;
        int nll = decoder_nll(g, dec, g.input(s.e), s.tokens, nullptr);
        loss_sum += g.scalar(nll);
        g.backward(g.scale(nll, 1.0 / total_positions));
    }
    adam_step(opt, params);
    return loss_sum / total_positions;
}

namespace {

std::vector<double> log_softmax_row(const Tensor& logits, int row) {
    int c = logits.cols();
    const double* x = &logits.data[(size_t)row * c];
    double m = x[0];
    for (int j = 1; j < c; ++j)
        if (x[j] > m) m = x[j];
    double lse = 0.0;
    for (int j = 0; j < c; ++j) lse += std::exp(x[j] - m);
    lse = m + std::log(lse);
    std::vector<double> out(c);
    for (int j = 0; j < c; ++j) out[j] = x[j] - lse;
    return out;
}

bool better_final(const BeamHypothesis& a, const BeamHypothesis& b, double alpha) {
    double sa = alpha == 0.0 ? a.logprob : a.logprob / std::pow((double)a.ids.size(), alpha);
    double sb = alpha == 0.0 ? b.logprob : b.logprob / std::pow((double)b.ids.size(), alpha);
    if (sa != sb) return sa > sb;
    if (a.ids.size() != b.ids.size()) return a.ids.size() < b.ids.size();
    return a.ids < b.ids;
}

}  // namespace

std::vector<int> beam_search(Decoder& dec, const Tensor& e, int beam, int max_len, double alpha) {
    if (beam < 1) throw std::invalid_argument("beam must be >= 1");
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    const int kBos = 0, kEos = 1;

    std::vector<BeamHypothesis> live = {{{}, 0.0, false}};
    std::vector<BeamHypothesis> finished;

    for (int step = 0; step < max_len && !live.empty(); ++step) {
        std::vector<BeamHypothesis> candidates;
        for (const BeamHypothesis& hyp : live) {
            std::vector<int> inputs = {kBos};
            inputs.insert(inputs.end(), hyp.ids.begin(), hyp.ids.end());
            Graph g;
            int logits = dec.forward(g, g.input(e), inputs);
            std::vector<double> lp = log_softmax_row(g.value(logits), (int)inputs.size() - 1);
            for (int tok = 0; tok < dec.vocab_size; ++tok) {
                BeamHypothesis next = hyp;
                next.ids.push_back(tok);
                next.logprob += lp[tok];
                if (tok == kEos) {
                    // every EOS-ended hypothesis is shelved; it is terminal
                    // and does not compete for a live slot
                    next.finished = true;
                    finished.push_back(std::move(next));
                } else {
                    candidates.push_back(std::move(next));
                }
            }
        }
        std::sort(candidates.begin(), candidates.end(), [](const BeamHypothesis& a, const BeamHypothesis& b) {
            if (a.logprob != b.logprob) return a.logprob > b.logprob;
            return a.ids < b.ids;
        });
        if ((int)candidates.size() > beam) candidates.resize(beam);
        live = std::move(candidates);
    }
    for (BeamHypothesis& hyp : live) {
        hyp.finished = true;  // max length reached
        finished.push_back(std::move(hyp));
    }

    const BeamHypothesis* best = nullptr;
    for (const BeamHypothesis& hyp : finished)
        if (!best || better_final(hyp, *best, alpha)) best = &hyp;
    return best ? best->ids : std::vector<int>{};
}

}  // namespace agrg
