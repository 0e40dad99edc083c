#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "agrg/graph.hpp"
#include "agrg/optim.hpp"

namespace agrg {

// Word-level vocabulary over the closed template grammar. Ids are dense from
// 0 with the four specials first, then the corpus words in the given order.
struct Vocabulary {
    std::vector<std::string> tokens;
    std::map<std::string, int> index;
    int bos = 0, eos = 1, pad = 2, unk = 3;

    static Vocabulary build(const std::vector<std::string>& words);

    int size() const { return (int)tokens.size(); }
    int id(const std::string& word) const;
    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;  // skips BOS/EOS/PAD
};

struct DecoderConfig {
    int layers = 2;
    int heads = 2;
    int d_t = 64;
    int max_pos = 96;  // covers whole-report targets in the unguided variant
    int max_gen = 60;
    int ffn_mult = 4;
};

struct PSAttnHead {
    Param* wq;
    Param* wk;
    Param* wv;
    Param* cond_wk;  // key projection for the conditioning vector
    Param* cond_wv;  // value projection for the conditioning vector
};

// Pseudo self-attention: the conditioning vector contributes one key/value
// slot prepended to the causal token slots, so query row t attends over
// t + 2 slots (slot 0 is the conditioning, never masked). Scores use the
// standard 1/sqrt(d_head) scaling. Returns T x d_t (head concat); optionally
// records the per-head attention row nodes.
int ps_attention(Graph& g, int e_node, int y_node, const std::vector<PSAttnHead>& heads,
                 std::vector<int>* attn_rows = nullptr);

// Pre-norm transformer decoder over PS-attention blocks, GELU feed-forward
// of width ffn_mult * d_t, learned positions, untied output projection.
struct Decoder {
    DecoderConfig cfg;
    int vocab_size = 0;
    std::vector<Param> params;

    Decoder(const DecoderConfig& c, int vocab, uint64_t seed);

    // logits for every position (T x vocab)
    int forward(Graph& g, int e_node, const std::vector<int>& tokens,
                std::vector<int>* attn_rows = nullptr);

    std::vector<Param*> param_ptrs();

    // layout helpers
    Param& tok_table() { return params[0]; }
    Param& pos_table() { return params[1]; }
    int layer_base(int layer) const { return 6 + layer * (9 + 5 * cfg.heads); }
};

// Summed next-token NLL of a [BOS] ... [EOS] sequence under conditioning e;
// n_positions gets the number of predicted tokens.
int decoder_nll(Graph& g, Decoder& dec, int e_node, const std::vector<int>& tokens,
                int* n_positions);

struct CondSentence {
    Tensor e;  // 1 x d_t conditioning vector (constant input here)
    std::vector<int> tokens;
};

// One optimizer step on a batch of (e, sentence) pairs; the loss is the mean
// NLL over all predicted positions in the batch. Only decoder parameters
// move (the conditioning vectors enter as constants).
double train_decoder_step(Decoder& dec, const std::vector<CondSentence>& batch,
                          OptimizerState& opt);

struct BeamHypothesis {
    std::vector<int> ids;  // emitted tokens after [BOS], may end with [EOS]
    double logprob = 0.0;
    bool finished = false;
};

// Standard beam search from [BOS]. Finished hypotheses (EOS or max length)
// are shelved; the best one by logprob / len^alpha wins, ties broken by
// shorter sequence then lexicographic token ids.
std::vector<int> beam_search(Decoder& dec, const Tensor& e, int beam, int max_len,
                             double alpha = 0.0);

}  // namespace agrg
