#include "agrg/driver.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "agrg/rng.hpp"

namespace agrg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw ConfigError("cannot create directory " + path + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    ensure_dir(fs::path(path).parent_path().string());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + path);
    os << text;
}

void write_loss_log(const std::string& path, const StageLog& log, const RunConfig& cfg) {
    char head[96];
    std::snprintf(head, sizeof(head), "# config_hash=%s seed=%llu\n", cfg.hash().c_str(),
                  (unsigned long long)cfg.seed);
    std::string csv = head;
    csv += "epoch,loss\n";
    for (size_t i = 0; i < log.epoch_losses.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, log.epoch_losses[i]);
        csv += buf;
    }
    write_text(path, csv);
}

// optimizer state embedded in a stage checkpoint so a resumed run keeps its
// step counter and moments
void save_opt_state(Checkpoint& ck, const OptimizerState& opt) {
    Tensor meta = Tensor::row({(double)opt.t});
    ck.tensors.emplace_back("opt.t", meta);
    for (size_t i = 0; i < opt.m.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "opt.m.%04zu", i);
        ck.tensors.emplace_back(name, opt.m[i]);
        std::snprintf(name, sizeof(name), "opt.v.%04zu", i);
        ck.tensors.emplace_back(name, opt.v[i]);
    }
}

bool load_opt_state(const Checkpoint& ck, OptimizerState& opt, size_t n_params) {
    if (!ck.has_tensor("opt.t")) return false;
    opt.t = (int64_t)ck.tensor("opt.t").data[0];
    opt.m.clear();
    opt.v.clear();
    for (size_t i = 0; i < n_params; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "opt.m.%04zu", i);
        opt.m.push_back(ck.tensor(name));
        std::snprintf(name, sizeof(name), "opt.v.%04zu", i);
        opt.v.push_back(ck.tensor(name));
    }
    return true;
}

std::vector<std::string> stage_prefixes(const RunConfig& cfg, const std::string& stage) {
    if (stage == "pretrain") return {"enc.", "psi."};
    if (stage == "heads") return {"enc.", "psi.", "head"};
    std::vector<std::string> all = {"enc.", "psi.", "proj.", "dec."};
    if (cfg.multitask) all.push_back("head");
    return all;
}

json manifest_json(const RunConfig& cfg, const SplitSeeds& tr, const SplitSeeds& va,
                   const SplitSeeds& te, const SplitData& train, const SplitData& val,
                   const SplitData& test) {
    LabelRegistry reg = LabelRegistry::make(cfg.k);
    json m;
    m["config_hash"] = cfg.hash();
    m["k"] = cfg.k;
    m["shape"] = {cfg.vd, cfg.vh, cfg.vw};
    m["p"] = cfg.anomaly_p;
    m["labels"] = reg.names;
    auto split_entry = [&](const SplitSeeds& s, const SplitData& d) {
        json e;
        e["count"] = d.cases.size();
        e["seed_begin"] = s.begin;
        e["seed_end"] = s.end;
        std::vector<int64_t> pos(cfg.k, 0);
        for (const CaseRecord& c : d.cases)
            for (int i = 0; i < cfg.k; ++i)
                if (c.has_label(i)) ++pos[i];
        e["label_positives"] = pos;
        return e;
    };
    m["train"] = split_entry(tr, train);
    m["val"] = split_entry(va, val);
    m["test"] = split_entry(te, test);
    return m;
}

MetricsReport evaluate_reports(const RunConfig& cfg, const std::vector<std::string>& reports,
                               const SplitData& refs, uint64_t seed) {
    LabelRegistry reg = LabelRegistry::make(cfg.k);
    return evaluate_corpus(reports, refs, reg, seed, cfg.hash());
}

}  // namespace

SplitData load_split_checked(const RunConfig& cfg, const std::string& name) {
    RunPaths paths(cfg.out_dir);
    std::string path = paths.split(name);
    if (!fs::exists(path)) throw PrereqError("missing dataset split " + path + "; run synth first");
    SplitData data = read_split(path);
    if (data.k != cfg.k || data.d != cfg.vd || data.h != cfg.vh || data.w != cfg.vw)
        throw ConfigError("dataset " + path + " does not match the config dimensions");
    return data;
}

void cmd_synth(const RunConfig& cfg) {
    cfg.validate();
    RunPaths paths(cfg.out_dir);
    ensure_dir(cfg.out_dir + "/data");

    SplitSeeds tr, va, te;
    split_dataset(cfg.n_train, cfg.n_val, cfg.n_test, cfg.data_seed, tr, va, te);
    LabelRegistry reg = LabelRegistry::make(cfg.k);
    SplitData train = synthesize_split(tr, reg, cfg.vd, cfg.vh, cfg.vw, cfg.anomaly_p);
    SplitData val = synthesize_split(va, reg, cfg.vd, cfg.vh, cfg.vw, cfg.anomaly_p);
    SplitData test = synthesize_split(te, reg, cfg.vd, cfg.vh, cfg.vw, cfg.anomaly_p);

    write_split(paths.split("train"), train);
    write_split(paths.split("val"), val);
    write_split(paths.split("test"), test);
    write_text(paths.manifest(), manifest_json(cfg, tr, va, te, train, val, test).dump(2) + "\n");
    cfg.save(paths.config());
}

void cmd_train(const RunConfig& cfg_in, const std::string& stage, bool resume, bool force) {
    RunConfig cfg = cfg_in;
    if (stage == "baseline") {
        cfg.multitask = false;
        cfg.expansion = false;
    }
    cfg.validate();
    RunPaths paths(cfg.out_dir);
    ensure_dir(cfg.out_dir + "/ckpt");
    ensure_dir(cfg.out_dir + "/logs");

    SplitData train = load_split_checked(cfg, "train");
    ModelBundle mb(cfg);

    std::string save_name = stage;
    StageLog log;
    OptimizerState opt;
    auto maybe_resume = [&](const std::string& own_ckpt, const StageHyper& hyper,
                            const std::vector<std::string>& prefixes,
                            size_t n_params) -> OptimizerState* {
        opt = hyper.adamw ? make_adamw(hyper.lr, hyper.weight_decay) : make_adam(hyper.lr);
        if (!resume) return &opt;
        if (!fs::exists(own_ckpt)) throw PrereqError("cannot resume: " + own_ckpt + " missing");
        Checkpoint ck = load_checkpoint(own_ckpt, cfg.hash(), force);
        mb.restore(ck, prefixes);
        load_opt_state(ck, opt, n_params);
        return &opt;
    };

    if (stage == "pretrain") {
        SplitData val = load_split_checked(cfg, "val");
        std::vector<Param*> ps = mb.encoder.param_ptrs();
        for (Param* p : mb.psi.param_ptrs()) ps.push_back(p);
        OptimizerState* o = maybe_resume(paths.ckpt(stage), cfg.pretrain, {"enc.", "psi."}, ps.size());
        log = run_stage_pretrain(mb, train, val, o);
    } else if (stage == "heads") {
        if (!cfg.multitask) throw ConfigError("heads stage needs a multitask variant");
        SplitData val = load_split_checked(cfg, "val");
        if (resume) {
            maybe_resume(paths.ckpt(stage), cfg.stage_heads, stage_prefixes(cfg, "heads"),
                         mb.encoder.params.size() + mb.heads->params.size());
        } else {
            if (!fs::exists(paths.ckpt("pretrain")))
                throw PrereqError("heads stage needs " + paths.ckpt("pretrain"));
            mb.restore(load_checkpoint(paths.ckpt("pretrain"), cfg.hash(), force), {"enc.", "psi."});
            opt = cfg.stage_heads.adamw ? make_adamw(cfg.stage_heads.lr, cfg.stage_heads.weight_decay)
                                        : make_adam(cfg.stage_heads.lr);
        }
        log = run_stage_heads(mb, train, val, &opt);
    } else if (stage == "decoder" || stage == "baseline") {
        std::string prereq = cfg.multitask ? "heads" : "pretrain";
        if (resume) {
            maybe_resume(paths.ckpt(save_name), cfg.stage_decoder, stage_prefixes(cfg, "decoder"),
                         mb.projector.params.size() + mb.decoder.params.size());
        } else {
            if (!fs::exists(paths.ckpt(prereq)))
                throw PrereqError(stage + " stage needs " + paths.ckpt(prereq));
            std::vector<std::string> prefixes = {"enc.", "psi."};
            if (cfg.multitask) prefixes.push_back("head");
            mb.restore(load_checkpoint(paths.ckpt(prereq), cfg.hash(), force), prefixes);
            opt = cfg.stage_decoder.adamw
                      ? make_adamw(cfg.stage_decoder.lr, cfg.stage_decoder.weight_decay)
                      : make_adam(cfg.stage_decoder.lr);
        }
        bool guided = cfg.multitask || cfg.expansion;
        if (guided && mb.thresholds.size() != cfg.k)
            throw PrereqError("prerequisite checkpoint carries no thresholds");
        log = run_stage_decoder(mb, train, &opt);
    } else {
        throw ConfigError("unknown stage: " + stage + " (want pretrain|heads|decoder|baseline)");
    }

    Checkpoint ck = mb.to_checkpoint();
    save_opt_state(ck, opt);
    save_checkpoint(paths.ckpt(save_name), ck);
    write_loss_log(paths.loss_log(save_name), log, cfg);
}

std::string generation_line(int case_id, const GeneratedReport& rep) {
    json j;
    j["case_id"] = case_id;
    j["labels"] = json::array();
    for (const GeneratedItem& it : rep.items) {
        json e;
        e["label"] = it.label;
        e["score"] = it.score;
        e["sentence"] = it.sentence;
        j["labels"].push_back(e);
    }
    j["report"] = rep.report;
    j["empty"] = rep.empty_flag;
    return j.dump();
}

void cmd_generate(const RunConfig& cfg, const std::string& split, bool force) {
    cfg.validate();
    RunPaths paths(cfg.out_dir);
    SplitData data = load_split_checked(cfg, split);

    bool guided = cfg.multitask || cfg.expansion;
    std::string ckpt_path = paths.ckpt("decoder");
    if (!guided && !fs::exists(ckpt_path) && fs::exists(paths.ckpt("baseline")))
        ckpt_path = paths.ckpt("baseline");
    if (!fs::exists(ckpt_path)) throw PrereqError("generation needs " + ckpt_path);

    ModelBundle mb(cfg);
    mb.restore(load_checkpoint(ckpt_path, cfg.hash(), force), stage_prefixes(cfg, "decoder"));
    if (guided && mb.thresholds.size() != cfg.k) throw PrereqError("checkpoint carries no thresholds");

    std::vector<GeneratedReport> gens = generate_split(mb, data);

    json meta;
    meta["kind"] = "agrg-generations";
    meta["config_hash"] = cfg.hash();
    meta["seed"] = cfg.seed;
    meta["split"] = split;
    meta["k"] = cfg.k;
    meta["n"] = gens.size();
    std::string out = meta.dump() + "\n";
    for (size_t i = 0; i < gens.size(); ++i) out += generation_line((int)i, gens[i]) + "\n";
    write_text(paths.generations(split), out);
}

std::vector<std::string> reports_from_jsonl(const std::string& path, int expect_n,
                                            uint64_t* seed_out) {
    std::ifstream is(path);
    if (!is) throw PrereqError("cannot open generations " + path);
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("empty generations file " + path);
    json meta = json::parse(line);
    if (meta.value("kind", "") != "agrg-generations")
        throw ConfigError(path + " is not a generations file");
    if (seed_out) *seed_out = meta.value("seed", (uint64_t)0);

    std::vector<std::string> reports;
    int idx = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.value("case_id", -1) != idx)
            throw ConfigError("generation case ids do not align at line " + std::to_string(idx + 2));
        reports.push_back(j.value("report", ""));
        ++idx;
    }
    if (expect_n >= 0 && idx != expect_n)
        throw ConfigError("generation count " + std::to_string(idx) + " does not match split size " +
                          std::to_string(expect_n));
    return reports;
}

void cmd_evaluate(const RunConfig& cfg, const std::vector<std::string>& generation_files,
                  const std::string& split, const std::string& tag) {
    cfg.validate();
    if (generation_files.empty()) throw ConfigError("no generation files given");
    RunPaths paths(cfg.out_dir);
    SplitData refs = load_split_checked(cfg, split);

    std::vector<MetricsReport> runs;
    for (const std::string& f : generation_files) {
        uint64_t seed = 0;
        std::vector<std::string> reports = reports_from_jsonl(f, (int)refs.cases.size(), &seed);
        runs.push_back(evaluate_reports(cfg, reports, refs, seed));
    }

    std::string table = metrics_table_header() + "\n";
    json all = json::array();
    for (size_t i = 0; i < runs.size(); ++i) {
        std::string name = runs.size() == 1 ? tag : tag + "/run" + std::to_string(i);
        table += metrics_table_row(name, runs[i]) + "\n";
        all.push_back(json::parse(metrics_to_json(runs[i])));
    }
    if (runs.size() > 1) {
        MetricsSummary s = summarize_runs(runs);
        table += summary_table_row(tag + " (mean+-std)", s) + "\n";
    }
    write_text(paths.metrics_json(tag), all.dump(2) + "\n");
    write_text(paths.metrics_table(tag), table);
}

void cmd_ablate(const RunConfig& cfg, int n_seeds) {
    cfg.validate();
    if (n_seeds < 1) throw ConfigError("ablation needs at least one seed");
    RunPaths paths(cfg.out_dir);
    ensure_dir(paths.ablation_dir());

    SplitData train = load_split_checked(cfg, "train");
    SplitData val = load_split_checked(cfg, "val");
    SplitData test = load_split_checked(cfg, "test");

    std::vector<std::vector<MetricsReport>> runs(4);
    for (int s = 0; s < n_seeds; ++s) {
        RunConfig base = cfg;
        base.seed = cfg.seed + (uint64_t)s;

        // shared upstream per seed: one pretrain, one heads stage
        RunConfig shared_cfg = base;
        shared_cfg.multitask = true;
        shared_cfg.expansion = true;
        ModelBundle shared(shared_cfg);
        run_stage_pretrain(shared, train, val);
        ThresholdVector psi_thresholds = shared.thresholds;
        run_stage_heads(shared, train, val);
        ThresholdVector head_thresholds = shared.thresholds;

        for (int v = 0; v < 4; ++v) {
            const AblationVariant& var = kAblationVariants[v];
            RunConfig vcfg = base;
            vcfg.multitask = var.multitask;
            vcfg.expansion = var.expansion;
            ModelBundle mb(vcfg);
            copy_matching_params(shared, mb);
            mb.thresholds = var.multitask ? head_thresholds : psi_thresholds;

            run_stage_decoder(mb, train);
            std::vector<GeneratedReport> gens = generate_split(mb, test);
            std::vector<std::string> reports;
            for (const GeneratedReport& g : gens) reports.push_back(g.report);
            MetricsReport r = evaluate_reports(vcfg, reports, test, vcfg.seed);
            runs[v].push_back(r);

            // eager write: partial results survive a later failure
            std::string tag = std::string(var.name) + "_seed" + std::to_string(s);
            write_text(paths.ablation_dir() + "/" + tag + ".json", metrics_to_json(r) + "\n");
        }
    }

    std::string table = metrics_table_header() + "\n";
    json summary;
    for (int v = 0; v < 4; ++v) {
        MetricsSummary s = summarize_runs(runs[v]);
        table += summary_table_row(kAblationVariants[v].name, s) + "\n";
        json e;
        e["variant"] = kAblationVariants[v].name;
        e["f1_mean"] = s.f1_mean;
        e["f1_std"] = s.f1_std;
        e["recall_mean"] = s.r_mean;
        e["bleu_mean"] = s.bleu_mean;
        e["meteor_mean"] = s.meteor_mean;
        e["runs"] = s.runs;
        summary["rows"].push_back(e);
    }
    summary["config_hash"] = cfg.hash();
    summary["seeds"] = n_seeds;
    write_text(paths.ablation_dir() + "/table.txt", table);
    write_text(paths.ablation_dir() + "/summary.json", summary.dump(2) + "\n");
}

}  // namespace agrg
