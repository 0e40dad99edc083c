#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agrg/data.hpp"

namespace agrg {

// Normalizing tokenizer shared by all text metrics: lowercase, split on
// whitespace.
std::vector<std::string> metric_tokenize(const std::string& text);

// Fixed English suffix stripper (ing, es, ed, s) used by METEOR-lite.
std::string stem_word(const std::string& word);

// Corpus-level BLEU-4: clipped n-gram counts summed over the corpus before
// the ratios, geometric mean over n = 1..4 with 1e-9 on zero counts, and the
// standard brevity penalty.
double bleu4(const std::vector<std::string>& candidates,
             const std::vector<std::string>& references);

struct RougeScore {
    double precision = 0.0, recall = 0.0, f = 0.0;
};

// LCS-based ROUGE-L with F as the plain harmonic mean (beta = 1). Both
// inputs empty yields (0, 0, 0).
RougeScore rouge_l(const std::string& candidate, const std::string& reference);

// Unigram-alignment METEOR with exact + stem matching only: matches
// maximized per stem class, chunks from greedy longest contiguous runs,
// F_mean = 10PR / (R + 9P), penalty = 0.5 * (chunks / matches)^3.
double meteor_lite(const std::string& candidate, const std::string& reference);

// Deterministic labeler: label i is positive iff the report contains label
// i's name (case-insensitive).
std::vector<int> extract_labels(const std::string& report, const LabelRegistry& registry);

struct LabelScore {
    std::string name;
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    bool in_truth = false;  // label occurs in the ground truth; else skipped by macro averages
};

struct CeResult {
    std::vector<LabelScore> per_label;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
};

// Confusion counts of extract_labels(report) against ground-truth masks;
// per-label P/R/F1 with 0/0 := 0, macro-averaged over labels present in the
// ground truth at least once.
CeResult ce_metrics(const std::vector<std::string>& reports,
                    const std::vector<uint32_t>& truth_masks, const LabelRegistry& registry);

struct MetricsReport {
    double bleu = 0.0;
    double rouge = 0.0;   // mean ROUGE-L F over cases
    double meteor = 0.0;  // mean METEOR-lite over cases
    CeResult ce;
    int n_cases = 0;
    uint64_t seed = 0;
    std::string config_hash;
};

// All metrics of a candidate corpus against its reference split.
MetricsReport evaluate_corpus(const std::vector<std::string>& candidates, const SplitData& refs,
                              const LabelRegistry& registry, uint64_t seed = 0,
                              const std::string& config_hash = "");

std::string metrics_to_json(const MetricsReport& r);

// One aligned row of the comparison table; header() gives the column line.
std::string metrics_table_header();
std::string metrics_table_row(const std::string& name, const MetricsReport& r);

struct MetricsSummary {
    double bleu_mean = 0, bleu_std = 0;
    double meteor_mean = 0, meteor_std = 0;
    double rouge_mean = 0, rouge_std = 0;
    double p_mean = 0, p_std = 0;
    double r_mean = 0, r_std = 0;
    double f1_mean = 0, f1_std = 0;
    int runs = 0;
};

// Mean and (sample) standard deviation across runs; std is 0 for one run.
MetricsSummary summarize_runs(const std::vector<MetricsReport>& runs);
std::string summary_table_row(const std::string& name, const MetricsSummary& s);

}  // namespace agrg
