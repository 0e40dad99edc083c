#pragma once

#include <optional>
#include <string>
#include <vector>

#include "agrg/checkpoint.hpp"
#include "agrg/config.hpp"
#include "agrg/data.hpp"
#include "agrg/encoder.hpp"
#include "agrg/heads.hpp"
#include "agrg/metrics.hpp"
#include "agrg/textgen.hpp"

namespace agrg {

// h_i placed in slot `label` of a K-slot zero vector (1 x K*d_i).
Tensor expand_embedding(const std::vector<double>& h_i, int label, int k, int d_i);

// Width of the decoder conditioning input under the variant flags.
int cond_dim_of(const RunConfig& c);

// Phi_T: visual latent -> decoder embedding space. One hidden layer of width
// d_t with GELU. Trained jointly with the decoder in stage 2.
struct TextProjector {
    int in_dim = 0, d_t = 0;
    std::vector<Param> params;

    TextProjector(int in_dim_, int d_t_, uint64_t seed);
    int forward(Graph& g, int input_node);
    std::vector<Param*> param_ptrs();
};

struct GeneratedItem {
    int label = -1;
    double score = 0.0;
    std::string sentence;
};

struct GeneratedReport {
    std::vector<GeneratedItem> items;  // ascending label index
    std::string report;                // sentences joined by single spaces
    bool empty_flag = false;           // no abnormality selected
};

// Everything a run needs, constructed deterministically from the config.
// The variant flags decide which pieces exist and what conditions the
// decoder: multitask+expansion = slot-expanded h_i (K*d_i), multitask only =
// h_i (d_i), expansion only = slot-expanded h (K*d_h), neither = unguided
// full-report generation from h (d_h).
struct ModelBundle {
    RunConfig cfg;
    LabelRegistry registry;
    Vocabulary vocab;
    VisualEncoder encoder;
    MultiLabelHead psi;
    std::optional<MultiTaskHeads> heads;
    TextProjector projector;
    Decoder decoder;
    ThresholdVector thresholds;

    explicit ModelBundle(const RunConfig& cfg);

    int cond_dim() const;
    std::vector<Param*> upstream_params();  // encoder, psi, heads
    std::vector<Param*> text_params();      // projector, decoder
    std::vector<Param*> all_params();

    Checkpoint to_checkpoint() const;
    // copy matching tensors; every parameter whose name starts with one of
    // required_prefixes must be present in the checkpoint
    void restore(const Checkpoint& ck, const std::vector<std::string>& required_prefixes);
};

struct StageLog {
    std::vector<double> epoch_losses;
};

// Multi-label BCE pretraining of the encoder and psi; calibrates psi-score
// thresholds on validation afterwards.
StageLog run_stage_pretrain(ModelBundle& mb, const SplitData& train, const SplitData& val,
                            OptimizerState* opt_io = nullptr);

// Step 1: per-label heads over the pretrained trunk with summed-loss
// backward; calibrates head-score thresholds on validation.
StageLog run_stage_heads(ModelBundle& mb, const SplitData& train, const SplitData& val,
                         OptimizerState* opt_io = nullptr);

// Step 2: conditioned sentence generation training. Upstream is frozen
// (never enters the graphs); only Phi_T and the decoder move.
StageLog run_stage_decoder(ModelBundle& mb, const SplitData& train,
                           OptimizerState* opt_io = nullptr);

// Sigmoid scores per case from the frozen model (heads when multitask,
// otherwise psi).
std::vector<std::vector<double>> bundle_scores(ModelBundle& mb, const SplitData& data);

GeneratedReport generate_report(ModelBundle& mb, const CaseRecord& rec, int d, int h, int w);
std::vector<GeneratedReport> generate_split(ModelBundle& mb, const SplitData& data);

// One optimizer step over (conditioning, sentence) pairs; loss is the mean
// NLL over all predicted positions; updates projector and decoder.
double train_conditioned_step(TextProjector& proj, Decoder& dec,
                              const std::vector<CondSentence>& batch, OptimizerState& opt);

// Copy every parameter whose name and shape match from src into dst.
void copy_matching_params(ModelBundle& src, ModelBundle& dst);

// Sentences of a rendered report (each ends with the period token).
std::vector<std::string> split_report_sentences(const std::string& report);

// The sentence of `report` that carries label `label`'s anchor phrase.
std::string sentence_for_label(const std::string& report, int label,
                               const LabelRegistry& registry);

}  // namespace agrg
