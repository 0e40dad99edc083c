#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "agrg/driver.hpp"
#include "agrg/pipeline.hpp"
#include "agrg/rng.hpp"

using namespace agrg;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(const std::string& out_dir) {
    RunConfig c;
    c.seed = 5;
    c.out_dir = out_dir;
    c.k = 3;
    c.vd = 8;
    c.vh = 16;
    c.vw = 16;
    c.anomaly_p = 0.5;
    c.n_train = 24;
    c.n_val = 12;
    c.n_test = 8;
    c.data_seed = 4000;
    c.encoder.pd = c.encoder.ph = c.encoder.pw = 4;
    c.encoder.d_h = 16;
    c.encoder.layers = 1;
    c.heads.d_i = 8;
    c.heads.hidden = 12;
    c.decoder.layers = 1;
    c.decoder.heads = 1;
    c.decoder.d_t = 16;
    c.decoder.max_pos = 96;
    c.decoder.max_gen = 20;
    c.decoder.ffn_mult = 2;
    c.pretrain = {3, 4, 3e-3, 0.0, false};
    c.stage_heads = {2, 4, 1e-3, 0.0, false};
    c.stage_decoder = {3, 8, 3e-3, 0.0, true};
    c.beam = 2;
    return c;
}

std::string file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

struct TempDir {
    std::string path;
    explicit TempDir(const std::string& name) : path("tmp_test/" + name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("expand_embedding: construction, identity, and padding") {
    Tensor t = expand_embedding({1.5, -2.0}, 0, 3, 2);
    CHECK(t.data == std::vector<double>{1.5, -2.0, 0, 0, 0, 0});

    Tensor mid = expand_embedding({1.5, -2.0}, 1, 3, 2);
    CHECK(mid.data == std::vector<double>{0, 0, 1.5, -2.0, 0, 0});

    Tensor one = expand_embedding({0.25, 0.5}, 0, 1, 2);
    CHECK(one.data == std::vector<double>{0.25, 0.5});

    double sum_abs = 0.0;
    for (double v : mid.data) sum_abs += std::fabs(v);
    CHECK(sum_abs == doctest::Approx(3.5).epsilon(1e-15));

    CHECK_THROWS(expand_embedding({1.0}, 3, 3, 1));
    CHECK_THROWS(expand_embedding({1.0, 2.0}, 0, 2, 1));
}

TEST_CASE("project_to_text: zeros, slot sensitivity, and gradients") {
    TextProjector proj(6, 8, 11);
    for (Param& p : proj.params) p.value.zero();
    Graph g;
    int out = proj.forward(g, g.input(Tensor::matrix(1, 6)));
    for (double v : g.value(out).data) CHECK(v == 0.0);

    // identical h_i content in different slots maps to different e_i
    TextProjector rnd(6, 8, 12);
    Graph g2;
    Tensor a = g2.value(rnd.forward(g2, g2.input(expand_embedding({0.7, -0.4}, 0, 3, 2))));
    Tensor b = g2.value(rnd.forward(g2, g2.input(expand_embedding({0.7, -0.4}, 2, 3, 2))));
    CHECK(a.data != b.data);

    // decoder NLL gradient flows through the projector
    Vocabulary v = Vocabulary::build({"a", "b"});
    DecoderConfig dc;
    dc.layers = 1;
    dc.heads = 1;
    dc.d_t = 8;
    dc.max_pos = 8;
    dc.ffn_mult = 2;
    Decoder dec(dc, v.size(), 13);
    SplitMix64 wrng(14);
    dec.params[4].value.data = glorot_uniform(8, v.size(), wrng).data;
    TextProjector pj(4, 8, 15);
    Graph g3;
    SplitMix64 irng(16);
    Tensor cond = Tensor::matrix(1, 4);
    for (double& x : cond.data) x = irng.uniform(-1.0, 1.0);
    int e = pj.forward(g3, g3.input(cond));
    int loss = g3.scale(decoder_nll(g3, dec, e, {v.bos, 4, 5, v.eos}, nullptr), 1.0 / 3.0);
    for (Param& p : pj.params) CHECK(finite_diff_check(g3, loss, p) < 1e-4);
}

TEST_CASE("report sentence splitting and per-label lookup") {
    LabelRegistry reg = LabelRegistry::make(6);
    SyntheticCase c = synthesize_case(77, reg, 24, 48, 48, 0.9);
    REQUIRE(c.specs.size() >= 2);

    std::vector<std::string> sentences = split_report_sentences(c.report);
    CHECK(sentences.size() == c.specs.size());
    for (size_t i = 0; i < sentences.size(); ++i) CHECK(sentences[i] == c.sentences[i]);

    for (const AnomalySpec& s : c.specs) {
        std::string found = sentence_for_label(c.report, s.label, reg);
        std::string anchor = reg.names[s.label];
        for (char& ch : anchor) ch = (char)std::tolower((unsigned char)ch);
        CHECK(found.find(anchor) != std::string::npos);
    }
    CHECK_THROWS(sentence_for_label("", 0, reg));
}

TEST_CASE("model bundle: checkpoint round-trip preserves forward outputs") {
    TempDir tmp("ckpt_roundtrip");
    RunConfig cfg = tiny_config(tmp.path);
    ModelBundle mb(cfg);

    // make the state non-trivial
    SplitMix64 rng(21);
    for (Param* p : mb.all_params())
        for (double& v : p->value.data) v += rng.uniform(-0.05, 0.05);
    mb.thresholds.tau = {0.25, 0.5, 0.75};
    mb.thresholds.flags = {ThresholdFlag::Ok, ThresholdFlag::Ok, ThresholdFlag::NoPositives};

    LabelRegistry reg = LabelRegistry::make(cfg.k);
    SyntheticCase sc = synthesize_case(12, reg, cfg.vd, cfg.vh, cfg.vw, 0.6);
    CaseRecord rec;
    rec.voxels.assign(sc.volume.vox.begin(), sc.volume.vox.end());
    for (int i = 0; i < cfg.k; ++i)
        if (sc.labels[i]) rec.label_mask |= 1u << i;
    rec.report = sc.report;

    GeneratedReport before = generate_report(mb, rec, cfg.vd, cfg.vh, cfg.vw);

    std::string path = tmp.path + "/bundle.agrg";
    save_checkpoint(path, mb.to_checkpoint());

    ModelBundle fresh(cfg);
    fresh.restore(load_checkpoint(path, cfg.hash()), {"enc.", "psi.", "head", "proj.", "dec."});
    CHECK(fresh.thresholds.tau == mb.thresholds.tau);

    // forward outputs agree within amplified f32 rounding (weight truncation
    // is ~6e-8 relative; matmul fan-in and layer norms gain a few decades)
    Graph ga, gb;
    Tensor ha = ga.value(mb.encoder.forward(ga, rec.voxels.data(), cfg.vd, cfg.vh, cfg.vw));
    Tensor hb = gb.value(fresh.encoder.forward(gb, rec.voxels.data(), cfg.vd, cfg.vh, cfg.vw));
    for (int64_t i = 0; i < ha.numel(); ++i) {
        double denom = std::fabs(ha.data[i]) + 1e-6;
        CHECK(std::fabs(ha.data[i] - hb.data[i]) / denom < 1e-4);
    }

    GeneratedReport after = generate_report(fresh, rec, cfg.vd, cfg.vh, cfg.vw);
    CHECK(after.report == before.report);  // token-for-token through f32

    // config-hash guard
    RunConfig other = cfg;
    other.seed = 999;
    CHECK_THROWS(load_checkpoint(path, other.hash()));
    CHECK_NOTHROW(load_checkpoint(path, other.hash(), true));
}

TEST_CASE("generate_report: selection contracts") {
    TempDir tmp("genrep");
    RunConfig cfg = tiny_config(tmp.path);
    ModelBundle mb(cfg);
    LabelRegistry reg = LabelRegistry::make(cfg.k);
    SyntheticCase sc = synthesize_case(31, reg, cfg.vd, cfg.vh, cfg.vw, 0.6);
    CaseRecord rec;
    rec.voxels.assign(sc.volume.vox.begin(), sc.volume.vox.end());
    rec.report = sc.report;

    // all thresholds above any sigmoid score: empty report with flag
    mb.thresholds.tau.assign(cfg.k, 1.0);
    mb.thresholds.flags.assign(cfg.k, ThresholdFlag::Ok);
    GeneratedReport empty = generate_report(mb, rec, cfg.vd, cfg.vh, cfg.vw);
    CHECK(empty.empty_flag);
    CHECK(empty.items.empty());
    CHECK(empty.report.empty());

    // forcing exactly one label selects exactly one sentence
    mb.thresholds.tau = {1.0, 0.0, 1.0};
    GeneratedReport one = generate_report(mb, rec, cfg.vd, cfg.vh, cfg.vw);
    REQUIRE(one.items.size() == 1);
    CHECK(one.items[0].label == 1);
    CHECK(one.report == one.items[0].sentence);
    CHECK(!one.empty_flag);

    // selection order fixed: forcing all labels yields ascending indices and
    // the report is the sentences joined by single spaces
    mb.thresholds.tau.assign(cfg.k, 0.0);
    GeneratedReport all = generate_report(mb, rec, cfg.vd, cfg.vh, cfg.vw);
    REQUIRE(all.items.size() == (size_t)cfg.k);
    std::string joined;
    for (int i = 0; i < cfg.k; ++i) {
        CHECK(all.items[i].label == i);
        if (!joined.empty()) joined += " ";
        joined += all.items[i].sentence;
    }
    CHECK(all.report == joined);

    // missing thresholds
    ModelBundle bare(cfg);
    CHECK_THROWS_AS(generate_report(bare, rec, cfg.vd, cfg.vh, cfg.vw), PrereqError);
}

TEST_CASE("driver: synth is deterministic and manifest counts match") {
    TempDir tmp("synth");
    RunConfig cfg = tiny_config(tmp.path);
    cmd_synth(cfg);
    RunPaths paths(cfg.out_dir);
    std::string train1 = file_bytes(paths.split("train"));
    std::string manifest1 = file_bytes(paths.manifest());
    CHECK(read_split(paths.split("train")).cases.size() == 24);
    CHECK(read_split(paths.split("val")).cases.size() == 12);
    CHECK(read_split(paths.split("test")).cases.size() == 8);
    CHECK(manifest1.find("\"config_hash\"") != std::string::npos);

    cmd_synth(cfg);
    CHECK(file_bytes(paths.split("train")) == train1);
    CHECK(file_bytes(paths.manifest()) == manifest1);
}

TEST_CASE("driver: full tiny flow with prerequisites, freeze, resume, determinism") {
    TempDir tmp("flow");
    RunConfig cfg = tiny_config(tmp.path);
    RunPaths paths(cfg.out_dir);

    // prerequisite errors before anything exists
    CHECK_THROWS_AS(cmd_train(cfg, "pretrain"), PrereqError);
    cmd_synth(cfg);
    CHECK_THROWS_AS(cmd_train(cfg, "decoder"), PrereqError);
    CHECK_THROWS_AS(cmd_train(cfg, "heads"), PrereqError);

    cmd_train(cfg, "pretrain");
    CHECK(fs::exists(paths.ckpt("pretrain")));
    std::string loss_csv = file_bytes(paths.loss_log("pretrain"));
    CHECK(loss_csv.rfind("# config_hash=", 0) == 0);
    CHECK(loss_csv.find("epoch,loss") != std::string::npos);

    cmd_train(cfg, "heads");
    CHECK(fs::exists(paths.ckpt("heads")));

    // freeze contract at the driver level: encoder/psi/head tensors in the
    // decoder checkpoint match the heads checkpoint bitwise (f32 payload)
    cmd_train(cfg, "decoder");
    Checkpoint heads_ck = load_checkpoint(paths.ckpt("heads"), cfg.hash());
    Checkpoint dec_ck = load_checkpoint(paths.ckpt("decoder"), cfg.hash());
    for (auto& [name, t] : heads_ck.tensors) {
        if (name.rfind("enc.", 0) == 0 || name.rfind("psi.", 0) == 0 || name.rfind("head", 0) == 0) {
            REQUIRE(dec_ck.has_tensor(name));
            CHECK(dec_ck.tensor(name).data == t.data);
        }
    }

    // resume continues the optimizer step counter
    int64_t t1 = (int64_t)dec_ck.tensor("opt.t").data[0];
    CHECK(t1 > 0);
    cmd_train(cfg, "decoder", /*resume=*/true);
    Checkpoint dec_ck2 = load_checkpoint(paths.ckpt("decoder"), cfg.hash());
    CHECK((int64_t)dec_ck2.tensor("opt.t").data[0] > t1);

    // generation: deterministic bytes, parseable, labels in range
    cmd_generate(cfg, "test");
    std::string gen1 = file_bytes(paths.generations("test"));
    cmd_generate(cfg, "test");
    CHECK(file_bytes(paths.generations("test")) == gen1);
    std::vector<std::string> reports = reports_from_jsonl(paths.generations("test"), 8);
    CHECK(reports.size() == 8);

    // evaluation emits the JSON and table artifacts
    cmd_evaluate(cfg, {paths.generations("test")}, "test", "test");
    CHECK(file_bytes(paths.metrics_json("test")).find("macro_f1") != std::string::npos);
    std::string table = file_bytes(paths.metrics_table("test"));
    CHECK(table.find("BLEU-4") != std::string::npos);
    CHECK(table.find("F1") != std::string::npos);

    // multi-run mode emits a mean +- std row
    cmd_evaluate(cfg, {paths.generations("test"), paths.generations("test")}, "test", "multi");
    CHECK(file_bytes(paths.metrics_table("multi")).find("+-") != std::string::npos);

    // self-evaluation of the references scores 1.0
    SplitData test = read_split(paths.split("test"));
    std::vector<std::string> self;
    for (const CaseRecord& c : test.cases) self.push_back(c.report);
    MetricsReport r = evaluate_corpus(self, test, LabelRegistry::make(cfg.k));
    CHECK(r.bleu == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.ce.macro_f1 == 1.0);
}

TEST_CASE("driver: stage-2 freeze contract holds at the parameter-buffer level") {
    TempDir tmp("freeze");
    RunConfig cfg = tiny_config(tmp.path);
    cmd_synth(cfg);
    SplitData train = load_split_checked(cfg, "train");
    SplitData val = load_split_checked(cfg, "val");

    ModelBundle mb(cfg);
    run_stage_pretrain(mb, train, val);
    run_stage_heads(mb, train, val);

    std::string before = params_sha256(mb.upstream_params());
    run_stage_decoder(mb, train);
    CHECK(params_sha256(mb.upstream_params()) == before);
}

TEST_CASE("driver: generation jsonl alignment is validated") {
    TempDir tmp("jsonl");
    fs::create_directories(tmp.path);
    std::string path = tmp.path + "/bad.jsonl";
    {
        std::ofstream os(path);
        os << "{\"kind\":\"agrg-generations\",\"seed\":1}\n";
        os << "{\"case_id\":0,\"report\":\"x\"}\n";
        os << "{\"case_id\":5,\"report\":\"y\"}\n";
    }
    CHECK_THROWS_AS(reports_from_jsonl(path, 2), ConfigError);
    std::string missing_meta = tmp.path + "/meta.jsonl";
    {
        std::ofstream os(missing_meta);
        os << "{\"case_id\":0}\n";
    }
    CHECK_THROWS_AS(reports_from_jsonl(missing_meta, 1), ConfigError);
}

TEST_CASE("config: canonical hash, validation, and save/load") {
    RunConfig cfg = tiny_config("x");
    std::string h = cfg.hash();
    CHECK(h.size() == 16);
    CHECK(RunConfig::from_json_string(cfg.to_json_string()).hash() == h);

    RunConfig other = cfg;
    other.seed += 1;
    CHECK(other.hash() != h);

    RunConfig bad = cfg;
    bad.vd = 9;  // not divisible by patch
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    RunConfig bad2 = cfg;
    bad2.decoder.d_t = 10;
    bad2.decoder.heads = 4;
    CHECK_THROWS_AS(bad2.validate(), ConfigError);
}
