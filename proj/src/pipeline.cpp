#include "agrg/pipeline.hpp"

#include <algorithm>
#include <map>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "agrg/rng.hpp"

namespace agrg {

Tensor expand_embedding(const std::vector<double>& h_i, int label, int k, int d_i) {
    if (label < 0 || label >= k) throw std::invalid_argument("expand_embedding label out of range");
    if ((int)h_i.size() != d_i) throw std::invalid_argument("expand_embedding width mismatch");
    Tensor out = Tensor::matrix(1, k * d_i);
    std::copy(h_i.begin(), h_i.end(), out.data.begin() + (size_t)label * d_i);
    return out;
}

TextProjector::TextProjector(int in_dim_, int d_t_, uint64_t seed) : in_dim(in_dim_), d_t(d_t_) {
    SplitMix64 rng(mix_seed(seed, 0x9107));
    params.emplace_back("proj.w1", glorot_uniform(in_dim, d_t, rng));
    params.emplace_back("proj.b1", Tensor::matrix(1, d_t));
    params.emplace_back("proj.w2", glorot_uniform(d_t, d_t, rng));
    params.emplace_back("proj.b2", Tensor::matrix(1, d_t));
}

int TextProjector::forward(Graph& g, int input_node) {
    if (g.value(input_node).cols() != in_dim) throw std::invalid_argument("projector width mismatch");
    int hid = g.gelu(g.bias_add(g.matmul(input_node, g.leaf(params[0])), g.leaf(params[1])));
    return g.bias_add(g.matmul(hid, g.leaf(params[2])), g.leaf(params[3]));
}

std::vector<Param*> TextProjector::param_ptrs() {
    std::vector<Param*> out;
    for (Param& p : params) out.push_back(&p);
    return out;
}

ModelBundle::ModelBundle(const RunConfig& c)
    : cfg(c),
      registry(LabelRegistry::make(c.k)),
      vocab(Vocabulary::build(grammar_word_list(LabelRegistry::make(c.k)))),
      encoder(c.encoder, c.seed),
      psi(c.encoder.d_h, c.k, c.seed),
      projector(cond_dim_of(c), c.decoder.d_t, c.seed),
      decoder(c.decoder, (int)vocab.size(), c.seed) {
    if (cfg.multitask) heads.emplace(c.encoder.d_h, c.k, c.heads, c.seed);
}

int ModelBundle::cond_dim() const { return cond_dim_of(cfg); }

int cond_dim_of(const RunConfig& c) {
    if (c.multitask && c.expansion) return c.k * c.heads.d_i;
    if (c.multitask) return c.heads.d_i;
    if (c.expansion) return c.k * c.encoder.d_h;
    return c.encoder.d_h;
}

std::vector<Param*> ModelBundle::upstream_params() {
    std::vector<Param*> out = encoder.param_ptrs();
    for (Param* p : psi.param_ptrs()) out.push_back(p);
    if (heads)
        for (Param* p : heads->param_ptrs()) out.push_back(p);
    return out;
}

std::vector<Param*> ModelBundle::text_params() {
    std::vector<Param*> out = projector.param_ptrs();
    for (Param* p : decoder.param_ptrs()) out.push_back(p);
    return out;
}

std::vector<Param*> ModelBundle::all_params() {
    std::vector<Param*> out = upstream_params();
    for (Param* p : text_params()) out.push_back(p);
    return out;
}

Checkpoint ModelBundle::to_checkpoint() const {
    Checkpoint ck;
    ck.config_hash = cfg.hash();
    auto put_all = [&](const std::vector<Param>& ps) {
        for (const Param& p : ps) ck.tensors.emplace_back(p.name, p.value);
    };
    put_all(encoder.params);
    put_all(psi.params);
    if (heads) put_all(heads->params);
    put_all(projector.params);
    put_all(decoder.params);
    ck.thresholds = thresholds;
    ck.vocab = vocab.tokens;
    return ck;
}

void ModelBundle::restore(const Checkpoint& ck, const std::vector<std::string>& required_prefixes) {
    for (Param* p : all_params()) {
        bool required = false;
        for (const std::string& pre : required_prefixes)
            if (p->name.rfind(pre, 0) == 0) required = true;
        if (!ck.has_tensor(p->name)) {
            if (required)
                throw PrereqError("checkpoint lacks required tensor " + p->name +
                                  " (stage prerequisite not met)");
            continue;
        }
        const Tensor& t = ck.tensor(p->name);
        if (t.shape != p->value.shape)
            throw ConfigError("checkpoint tensor " + p->name + " has shape " + shape_str(t.shape) +
                              ", model wants " + shape_str(p->value.shape));
        p->value.data = t.data;
    }
    if (ck.thresholds.size() > 0) thresholds = ck.thresholds;
    if (!ck.vocab.empty() && ck.vocab != vocab.tokens)
        throw ConfigError("checkpoint vocabulary differs from the grammar vocabulary");
}

namespace {

std::vector<int> case_labels(const CaseRecord& rec, int k) {
    std::vector<int> y(k);
    for (int i = 0; i < k; ++i) y[i] = rec.has_label(i) ? 1 : 0;
    return y;
}

void check_finite_loss(double loss) {
    if (!std::isfinite(loss)) throw NumericalError("non-finite training loss");
}

// per-label calibration input: scores[label][case], labels[label][case]
ThresholdVector calibrate_from(const std::vector<std::vector<double>>& case_scores,
                               const SplitData& data, int k) {
    std::vector<std::vector<double>> s(k);
    std::vector<std::vector<int>> y(k);
    for (size_t c = 0; c < data.cases.size(); ++c)
        for (int i = 0; i < k; ++i) {
            s[i].push_back(case_scores[c][i]);
            y[i].push_back(data.cases[c].has_label(i) ? 1 : 0);
        }
    return calibrate_thresholds(s, y);
}

}  // namespace

StageLog run_stage_pretrain(ModelBundle& mb, const SplitData& train, const SplitData& val,
                            OptimizerState* opt_io) {
    if (train.cases.empty() || val.cases.empty()) throw PrereqError("pretrain needs train and val data");
    StageLog log;
    OptimizerState local = mb.cfg.pretrain.adamw
                               ? make_adamw(mb.cfg.pretrain.lr, mb.cfg.pretrain.weight_decay)
                               : make_adam(mb.cfg.pretrain.lr);
    OptimizerState& opt = opt_io ? *opt_io : local;
    for (int e = 0; e < mb.cfg.pretrain.epochs; ++e) {
        double loss = pretrain_epoch(mb.encoder, mb.psi, train, opt, mb.cfg.pretrain.batch,
                                     mix_seed(mb.cfg.seed, 0x11000 + (uint64_t)e));
        check_finite_loss(loss);
        log.epoch_losses.push_back(loss);
    }
    mb.thresholds = calibrate_from(multilabel_scores(mb.encoder, mb.psi, val), val, mb.cfg.k);
    return log;
}

StageLog run_stage_heads(ModelBundle& mb, const SplitData& train, const SplitData& val,
                         OptimizerState* opt_io) {
    if (!mb.heads) throw PrereqError("heads stage needs a multitask variant");
    if (train.cases.empty() || val.cases.empty()) throw PrereqError("heads stage needs train and val data");
    StageLog log;

    std::vector<Param*> params = mb.encoder.param_ptrs();
    for (Param* p : mb.heads->param_ptrs()) params.push_back(p);
    OptimizerState local = mb.cfg.stage_heads.adamw
                               ? make_adamw(mb.cfg.stage_heads.lr, mb.cfg.stage_heads.weight_decay)
                               : make_adam(mb.cfg.stage_heads.lr);
    OptimizerState& opt = opt_io ? *opt_io : local;

    std::vector<int> order(train.cases.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;

    for (int e = 0; e < mb.cfg.stage_heads.epochs; ++e) {
        SplitMix64 shuffle(mix_seed(mb.cfg.seed, 0x12000 + (uint64_t)e));
        shuffle.shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += (size_t)mb.cfg.stage_heads.batch) {
            size_t end = std::min(order.size(), start + (size_t)mb.cfg.stage_heads.batch);
            int nb = (int)(end - start);
            for (Param* p : params) p->zero_grad();
            double batch_loss = 0.0;
            for (size_t s = start; s < end; ++s) {
                const CaseRecord& rec = train.cases[order[s]];
                Graph g;
                int h = mb.encoder.forward(g, rec.voxels.data(), train.d, train.h, train.w);
                HeadLosses hl;
                mb.heads->classify(g, mb.heads->project(g, h), case_labels(rec, mb.cfg.k), &hl);
                batch_loss += g.scalar(hl.total);
                g.backward(g.scale(hl.total, 1.0 / nb));
            }
            adam_step(opt, params);
            epoch_loss += batch_loss / nb;
            ++batches;
        }
        check_finite_loss(epoch_loss / batches);
        log.epoch_losses.push_back(epoch_loss / batches);
    }
    mb.thresholds = calibrate_from(bundle_scores(mb, val), val, mb.cfg.k);
    return log;
}

std::vector<std::vector<double>> bundle_scores(ModelBundle& mb, const SplitData& data) {
    std::vector<std::vector<double>> out(data.cases.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < (int)data.cases.size(); ++i) {
        Graph g;
        int h = mb.encoder.forward(g, data.cases[i].voxels.data(), data.d, data.h, data.w);
        std::vector<double>& scores = out[i];
        if (mb.heads) {
            std::vector<int> logits = mb.heads->classify_logits(g, mb.heads->project(g, h));
            for (int node : logits) scores.push_back(g.scalar(g.sigmoid(node)));
        } else {
            scores = g.value(g.sigmoid(mb.psi.forward(g, h))).data;
        }
    }
    return out;
}

std::vector<std::string> split_report_sentences(const std::string& report) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(report);
    std::string tok;
    while (is >> tok) {
        if (!cur.empty()) cur += " ";
        cur += tok;
        if (tok == ".") {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string sentence_for_label(const std::string& report, int label,
                               const LabelRegistry& registry) {
    std::string anchor = registry.names[label];
    for (char& c : anchor) c = (char)std::tolower((unsigned char)c);
    for (const std::string& s : split_report_sentences(report)) {
        std::string lowered = s;
        for (char& c : lowered) c = (char)std::tolower((unsigned char)c);
        if (lowered.find(anchor) != std::string::npos) return s;
    }
    throw std::runtime_error("report has no sentence for label " + registry.names[label]);
}

namespace {

// frozen forward pass producing the conditioning tensor for (case, label)
// according to the variant flags; label < 0 means the unguided whole-case
// conditioning
struct FrozenCase {
    std::vector<double> h;
    std::vector<std::vector<double>> h_i;  // empty unless multitask
    std::vector<double> scores;
};

FrozenCase frozen_forward(ModelBundle& mb, const CaseRecord& rec, int d, int h, int w) {
    Graph g;
    int hn = mb.encoder.forward(g, rec.voxels.data(), d, h, w);
    FrozenCase out;
    out.h = g.value(hn).data;
    if (mb.heads) {
        std::vector<int> hi = mb.heads->project(g, hn);
        for (int node : hi) out.h_i.push_back(g.value(node).data);
        for (int node : mb.heads->classify_logits(g, hi)) out.scores.push_back(g.scalar(g.sigmoid(node)));
    } else {
        out.scores = g.value(g.sigmoid(mb.psi.forward(g, hn))).data;
    }
    return out;
}

Tensor conditioning_tensor(const ModelBundle& mb, const FrozenCase& fc, int label) {
    const RunConfig& c = mb.cfg;
    if (label < 0) return Tensor::row(fc.h);  // unguided
    if (c.multitask && c.expansion) return expand_embedding(fc.h_i[label], label, c.k, c.heads.d_i);
    if (c.multitask) return Tensor::row(fc.h_i[label]);
    return expand_embedding(fc.h, label, c.k, c.encoder.d_h);
}

std::vector<int> sentence_tokens(const Vocabulary& vocab, const std::string& text, int max_pos) {
    std::vector<int> toks = {vocab.bos};
    for (int id : vocab.tokenize(text)) toks.push_back(id);
    toks.push_back(vocab.eos);
    // decoder inputs are tokens minus the last; cap to the position table
    if ((int)toks.size() > max_pos + 1) {
        toks.resize(max_pos);
        toks.push_back(vocab.eos);
    }
    return toks;
}

}  // namespace

double train_conditioned_step(TextProjector& proj, Decoder& dec,
                              const std::vector<CondSentence>& batch, OptimizerState& opt) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    int total_positions = 0;
    for (const CondSentence& s : batch) total_positions += (int)s.tokens.size() - 1;

    std::vector<Param*> params = proj.param_ptrs();
    for (Param* p : dec.param_ptrs()) params.push_back(p);
    for (Param* p : params) p->zero_grad();

    double loss_sum = 0.0;
    for (const CondSentence& s : batch) {
        Graph g;
        int e = proj.forward(g, g.input(s.e));
        int nll = decoder_nll(g, dec, e, s.tokens, nullptr);
        loss_sum += g.scalar(nll);
        g.backward(g.scale(nll, 1.0 / total_positions));
    }
    adam_step(opt, params);
    return loss_sum / total_positions;
}

StageLog run_stage_decoder(ModelBundle& mb, const SplitData& train, OptimizerState* opt_io) {
    if (train.cases.empty()) throw PrereqError("decoder stage needs training data");
    bool guided = mb.cfg.multitask || mb.cfg.expansion;
    if (guided && mb.thresholds.size() != mb.cfg.k)
        throw PrereqError("decoder stage needs calibrated thresholds (run the prerequisite stage)");

    // freeze contract: upstream parameters never enter stage-2 graphs; the
    // conditioning tensors are computed once with no gradients
    std::vector<CondSentence> pairs;
    {
        std::vector<std::vector<CondSentence>> per_case(train.cases.size());
#pragma omp parallel for schedule(dynamic)
        for (int c = 0; c < (int)train.cases.size(); ++c) {
            const CaseRecord& rec = train.cases[c];
            FrozenCase fc = frozen_forward(mb, rec, train.d, train.h, train.w);
            if (!guided) {
                per_case[c].push_back(
                    {Tensor::row(fc.h), sentence_tokens(mb.vocab, rec.report, mb.cfg.decoder.max_pos)});
                continue;
            }
            std::vector<int> y = case_labels(rec, mb.cfg.k);
            std::vector<int> selected =
                select_abnormal(fc.scores, mb.thresholds, SelectMode::Training, &y);
            for (int label : selected) {
                std::string sent = sentence_for_label(rec.report, label, mb.registry);
                per_case[c].push_back({conditioning_tensor(mb, fc, label),
                                       sentence_tokens(mb.vocab, sent, mb.cfg.decoder.max_pos)});
            }
        }
        for (auto& v : per_case)
            for (CondSentence& s : v) pairs.push_back(std::move(s));
    }
    if (pairs.empty())
        throw PrereqError("no training pairs selected; classifier thresholds admit nothing");

    StageLog log;
    OptimizerState local = mb.cfg.stage_decoder.adamw
                               ? make_adamw(mb.cfg.stage_decoder.lr, mb.cfg.stage_decoder.weight_decay)
                               : make_adam(mb.cfg.stage_decoder.lr);
    OptimizerState& opt = opt_io ? *opt_io : local;
    std::vector<int> order(pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;

    for (int e = 0; e < mb.cfg.stage_decoder.epochs; ++e) {
        SplitMix64 shuffle(mix_seed(mb.cfg.seed, 0x13000 + (uint64_t)e));
        shuffle.shuffle(order);
        double num = 0.0;
        int den = 0;
        for (size_t start = 0; start < order.size(); start += (size_t)mb.cfg.stage_decoder.batch) {
            size_t end = std::min(order.size(), start + (size_t)mb.cfg.stage_decoder.batch);
            std::vector<CondSentence> batch;
            int positions = 0;
            for (size_t s = start; s < end; ++s) {
                batch.push_back(pairs[order[s]]);
                positions += (int)pairs[order[s]].tokens.size() - 1;
            }
            double mean_nll = train_conditioned_step(mb.projector, mb.decoder, batch, opt);
            check_finite_loss(mean_nll);
            num += mean_nll * positions;
            den += positions;
        }
        log.epoch_losses.push_back(num / den);
    }
    return log;
}

void copy_matching_params(ModelBundle& src, ModelBundle& dst) {
    std::map<std::string, Param*> by_name;
    for (Param* p : src.all_params()) by_name[p->name] = p;
    for (Param* p : dst.all_params()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) continue;
        if (it->second->value.shape != p->value.shape)
            throw ConfigError("parameter " + p->name + " shape differs between bundles");
        p->value.data = it->second->value.data;
    }
}

GeneratedReport generate_report(ModelBundle& mb, const CaseRecord& rec, int d, int h, int w) {
    bool guided = mb.cfg.multitask || mb.cfg.expansion;
    if (guided && mb.thresholds.size() != mb.cfg.k)
        throw PrereqError("generation needs calibrated thresholds");

    FrozenCase fc = frozen_forward(mb, rec, d, h, w);
    GeneratedReport out;

    auto decode_from = [&](const Tensor& cond) {
        Graph g;
        Tensor e = g.value(mb.projector.forward(g, g.input(cond)));
        std::vector<int> ids =
            beam_search(mb.decoder, e, mb.cfg.beam, mb.cfg.decoder.max_gen, mb.cfg.beam_alpha);
        return mb.vocab.detokenize(ids);
    };

    if (!guided) {
        out.report = decode_from(Tensor::row(fc.h));
        out.empty_flag = out.report.empty();
        return out;
    }

    std::vector<int> selected = select_abnormal(fc.scores, mb.thresholds, SelectMode::Inference);
    for (int label : selected) {
        GeneratedItem item;
        item.label = label;
        item.score = fc.scores[label];
        item.sentence = decode_from(conditioning_tensor(mb, fc, label));
        if (!out.report.empty()) out.report += " ";
        out.report += item.sentence;
        out.items.push_back(std::move(item));
    }
    out.empty_flag = out.items.empty();
    return out;
}

std::vector<GeneratedReport> generate_split(ModelBundle& mb, const SplitData& data) {
    std::vector<GeneratedReport> out(data.cases.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < (int)data.cases.size(); ++i)
        out[i] = generate_report(mb, data.cases[i], data.d, data.h, data.w);
    return out;
}

}  // namespace agrg
