#include "agrg/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace agrg {

std::vector<std::string> metric_tokenize(const std::string& text) {
    std::string lowered = text;
    for (char& c : lowered) c = (char)std::tolower((unsigned char)c);
    std::istringstream is(lowered);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::string stem_word(const std::string& word) {
    auto ends = [&](const std::string& w, const char* suf) {
        size_t n = std::strlen(suf);
        return w.size() > n + 1 && w.compare(w.size() - n, n, suf) == 0;
    };
    if (ends(word, "ing") && word.size() > 5) return word.substr(0, word.size() - 3);
    if (ends(word, "ed")) return word.substr(0, word.size() - 2);
    if (ends(word, "es")) {
        // strip "es" only after sibilants (boxes, patches); otherwise the
        // trailing "e" belongs to the stem (nodules -> nodule)
        std::string base = word.substr(0, word.size() - 2);
        if (base.ends_with("ch") || base.ends_with("sh") || base.ends_with("s") ||
            base.ends_with("x") || base.ends_with("z"))
            return base;
        return word.substr(0, word.size() - 1);
    }
    if (ends(word, "s") && !word.ends_with("ss")) return word.substr(0, word.size() - 1);
    return word;
}

double bleu4(const std::vector<std::string>& candidates,
             const std::vector<std::string>& references) {
    if (candidates.size() != references.size())
        throw std::invalid_argument("bleu4 corpus length mismatch");
    if (candidates.empty()) throw std::invalid_argument("bleu4 on empty corpus");

    int64_t cand_len = 0, ref_len = 0;
    int64_t matched[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};

    for (size_t c = 0; c < candidates.size(); ++c) {
        std::vector<std::string> cand = metric_tokenize(candidates[c]);
        std::vector<std::string> ref = metric_tokenize(references[c]);
        cand_len += (int64_t)cand.size();
        ref_len += (int64_t)ref.size();
        for (int n = 1; n <= 4; ++n) {
            std::map<std::string, int64_t> ref_counts;
            for (size_t i = 0; n <= (int)ref.size() && i + n <= ref.size(); ++i) {
                std::string gram;
                for (int j = 0; j < n; ++j) gram += ref[i + j] + "\x1f";
                ++ref_counts[gram];
            }
            std::map<std::string, int64_t> cand_counts;
            for (size_t i = 0; n <= (int)cand.size() && i + n <= cand.size(); ++i) {
                std::string gram;
                for (int j = 0; j < n; ++j) gram += cand[i + j] + "\x1f";
                ++cand_counts[gram];
            }
            for (auto& [gram, cnt] : cand_counts) {
                total[n - 1] += cnt;
                auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) matched[n - 1] += std::min(cnt, it->second);
            }
        }
    }
    if (cand_len == 0) return 0.0;

    double log_sum = 0.0;
    for (int n = 0; n < 4; ++n) {
        double p = total[n] > 0 ? (double)matched[n] / (double)total[n] : 0.0;
        if (p <= 0.0) p = 1e-9;
        log_sum += std::log(p);
    }
    double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - (double)ref_len / (double)cand_len);
    return bp * std::exp(log_sum / 4.0);
}

RougeScore rouge_l(const std::string& candidate, const std::string& reference) {
    std::vector<std::string> cand = metric_tokenize(candidate);
    std::vector<std::string> ref = metric_tokenize(reference);
    RougeScore out;
    if (cand.empty() || ref.empty()) return out;

    size_t n = cand.size(), m = ref.size();
    std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            if (cand[i - 1] == ref[j - 1]) cur[j] = prev[j - 1] + 1;
            else cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    int lcs = prev[m];
    out.precision = (double)lcs / (double)n;
    out.recall = (double)lcs / (double)m;
    out.f = out.precision + out.recall > 0.0
                ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                : 0.0;
    return out;
}

double meteor_lite(const std::string& candidate, const std::string& reference) {
    std::vector<std::string> cand = metric_tokenize(candidate);
    std::vector<std::string> ref = metric_tokenize(reference);
    if (cand.empty() || ref.empty()) return 0.0;

    std::vector<std::string> cs(cand.size()), rs(ref.size());
    for (size_t i = 0; i < cand.size(); ++i) cs[i] = stem_word(cand[i]);
    for (size_t j = 0; j < ref.size(); ++j) rs[j] = stem_word(ref[j]);

    // maximum matches: per stem class, min of the two multiplicities
    std::map<std::string, int64_t> cc, rc;
    for (auto& s : cs) ++cc[s];
    for (auto& s : rs) ++rc[s];
    int64_t matches = 0;
    for (auto& [s, cnt] : cc) {
        auto it = rc.find(s);
        if (it != rc.end()) matches += std::min(cnt, it->second);
    }
    if (matches == 0) return 0.0;

    // chunks: repeatedly align the longest contiguous stem run over the
    // unconsumed positions (ties: earliest candidate, then earliest reference)
    std::vector<bool> cused(cs.size(), false), rused(rs.size(), false);
    int64_t chunks = 0, aligned = 0;
    while (aligned < matches) {
        size_t best_len = 0, best_i = 0, best_j = 0;
        for (size_t i = 0; i < cs.size(); ++i) {
            if (cused[i]) continue;
            for (size_t j = 0; j < rs.size(); ++j) {
                if (rused[j]) continue;
                size_t len = 0;
                while (i + len < cs.size() && j + len < rs.size() && !cused[i + len] &&
                       !rused[j + len] && cs[i + len] == rs[j + len])
                    ++len;
                if (len > best_len) {
                    best_len = len;
                    best_i = i;
                    best_j = j;
                }
            }
        }
        if (best_len == 0) break;
        for (size_t t = 0; t < best_len; ++t) {
            cused[best_i + t] = true;
            rused[best_j + t] = true;
        }
        aligned += (int64_t)best_len;
        ++chunks;
    }

    double p = (double)aligned / (double)cs.size();
    double r = (double)aligned / (double)rs.size();
    double f_mean = 10.0 * p * r / (r + 9.0 * p);
    double frac = (double)chunks / (double)aligned;
    double penalty = 0.5 * frac * frac * frac;
    return f_mean * (1.0 - penalty);
}

std::vector<int> extract_labels(const std::string& report, const LabelRegistry& registry) {
    std::string lowered = report;
    for (char& c : lowered) c = (char)std::tolower((unsigned char)c);
    std::vector<int> out(registry.size(), 0);
    for (int i = 0; i < registry.size(); ++i) {
        std::string anchor = registry.names[i];
        for (char& c : anchor) c = (char)std::tolower((unsigned char)c);
        if (lowered.find(anchor) != std::string::npos) out[i] = 1;
    }
    return out;
}

CeResult ce_metrics(const std::vector<std::string>& reports,
                    const std::vector<uint32_t>& truth_masks, const LabelRegistry& registry) {
    if (reports.size() != truth_masks.size()) throw std::invalid_argument("ce corpus length mismatch");
    CeResult out;
    out.per_label.resize(registry.size());
    for (int i = 0; i < registry.size(); ++i) out.per_label[i].name = registry.names[i];

    for (size_t c = 0; c < reports.size(); ++c) {
        std::vector<int> pred = extract_labels(reports[c], registry);
        for (int i = 0; i < registry.size(); ++i) {
            bool t = (truth_masks[c] >> i) & 1u;
            bool p = pred[i] != 0;
            LabelScore& ls = out.per_label[i];
            if (p && t) ++ls.tp;
            else if (p) ++ls.fp;
            else if (t) ++ls.fn;
            else ++ls.tn;
        }
    }

    int included = 0;
    for (LabelScore& ls : out.per_label) {
        ls.precision = ls.tp + ls.fp > 0 ? (double)ls.tp / (ls.tp + ls.fp) : 0.0;
        ls.recall = ls.tp + ls.fn > 0 ? (double)ls.tp / (ls.tp + ls.fn) : 0.0;
        ls.f1 = ls.precision + ls.recall > 0.0
                    ? 2.0 * ls.precision * ls.recall / (ls.precision + ls.recall)
                    : 0.0;
        ls.in_truth = ls.tp + ls.fn > 0;
        if (!ls.in_truth) continue;
        ++included;
        out.macro_precision += ls.precision;
        out.macro_recall += ls.recall;
        out.macro_f1 += ls.f1;
    }
    if (included > 0) {
        out.macro_precision /= included;
        out.macro_recall /= included;
        out.macro_f1 /= included;
    }
    return out;
}

MetricsReport evaluate_corpus(const std::vector<std::string>& candidates, const SplitData& refs,
                              const LabelRegistry& registry, uint64_t seed,
                              const std::string& config_hash) {
    if (candidates.size() != refs.cases.size())
        throw std::invalid_argument("candidate corpus does not align with the reference split");
    MetricsReport out;
    out.n_cases = (int)candidates.size();
    out.seed = seed;
    out.config_hash = config_hash;

    std::vector<std::string> ref_reports;
    std::vector<uint32_t> masks;
    for (const CaseRecord& c : refs.cases) {
        ref_reports.push_back(c.report);
        masks.push_back(c.label_mask);
    }

    out.bleu = bleu4(candidates, ref_reports);
    for (size_t i = 0; i < candidates.size(); ++i) {
        out.rouge += rouge_l(candidates[i], ref_reports[i]).f;
        out.meteor += meteor_lite(candidates[i], ref_reports[i]);
    }
    out.rouge /= out.n_cases;
    out.meteor /= out.n_cases;
    out.ce = ce_metrics(candidates, masks, registry);
    return out;
}

std::string metrics_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["n_cases"] = r.n_cases;
    j["seed"] = r.seed;
    j["config_hash"] = r.config_hash;
    j["nlg"]["bleu4"] = r.bleu;
    j["nlg"]["rouge_l"] = r.rouge;
    j["nlg"]["meteor_lite"] = r.meteor;
    j["ce"]["macro_precision"] = r.ce.macro_precision;
    j["ce"]["macro_recall"] = r.ce.macro_recall;
    j["ce"]["macro_f1"] = r.ce.macro_f1;
    for (const LabelScore& ls : r.ce.per_label) {
        nlohmann::json e;
        e["label"] = ls.name;
        e["tp"] = ls.tp;
        e["fp"] = ls.fp;
        e["fn"] = ls.fn;
        e["tn"] = ls.tn;
        e["precision"] = ls.precision;
        e["recall"] = ls.recall;
        e["f1"] = ls.f1;
        e["in_truth"] = ls.in_truth;
        j["ce"]["per_label"].push_back(e);
    }
    return j.dump(2);
}

namespace {

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%8.4f", v);
    return buf;
}

std::string pm(double mean, double sd) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%7.4f+-%.4f", mean, sd);
    return buf;
}

}  // namespace

std::string metrics_table_header() {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-28s %8s %8s %8s %8s %8s %8s", "method", "BLEU-4", "METEOR",
                  "ROUGE-L", "P", "R", "F1");
    return buf;
}

std::string metrics_table_row(const std::string& name, const MetricsReport& r) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-28s %s %s %s %s %s %s", name.c_str(),
                  fixed(r.bleu).c_str(), fixed(r.meteor).c_str(), fixed(r.rouge).c_str(),
                  fixed(r.ce.macro_precision).c_str(), fixed(r.ce.macro_recall).c_str(),
                  fixed(r.ce.macro_f1).c_str());
    return buf;
}

MetricsSummary summarize_runs(const std::vector<MetricsReport>& runs) {
    if (runs.empty()) throw std::invalid_argument("no runs to summarize");
    MetricsSummary s;
    s.runs = (int)runs.size();
    auto acc = [&](auto get, double& mean, double& sd) {
        double sum = 0.0;
        for (const MetricsReport& r : runs) sum += get(r);
        mean = sum / runs.size();
        if (runs.size() > 1) {
            double ss = 0.0;
            for (const MetricsReport& r : runs) ss += (get(r) - mean) * (get(r) - mean);
            sd = std::sqrt(ss / (runs.size() - 1));
        }
    };
    acc([](const MetricsReport& r) { return r.bleu; }, s.bleu_mean, s.bleu_std);
    acc([](const MetricsReport& r) { return r.meteor; }, s.meteor_mean, s.meteor_std);
    acc([](const MetricsReport& r) { return r.rouge; }, s.rouge_mean, s.rouge_std);
    acc([](const MetricsReport& r) { return r.ce.macro_precision; }, s.p_mean, s.p_std);
    acc([](const MetricsReport& r) { return r.ce.macro_recall; }, s.r_mean, s.r_std);
    acc([](const MetricsReport& r) { return r.ce.macro_f1; }, s.f1_mean, s.f1_std);
    return s;
}

std::string summary_table_row(const std::string& name, const MetricsSummary& s) {
    std::string out = name;
    out.resize(28, ' ');
    out += " " + pm(s.bleu_mean, s.bleu_std) + " " + pm(s.meteor_mean, s.meteor_std) + " " +
           pm(s.rouge_mean, s.rouge_std) + " " + pm(s.p_mean, s.p_std) + " " +
           pm(s.r_mean, s.r_std) + " " + pm(s.f1_mean, s.f1_std);
    return out;
}

}  // namespace agrg
