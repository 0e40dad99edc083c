#include "agrg/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace agrg {

using nlohmann::json;

void RunConfig::validate() const {
    if (k < 1 || k > 18) throw ConfigError("k must be in [1, 18]");
    if (vd <= 0 || vh <= 0 || vw <= 0) throw ConfigError("volume shape must be positive");
    if (vd % encoder.pd || vh % encoder.ph || vw % encoder.pw)
        throw ConfigError("volume shape must be divisible by the patch size");
    if (encoder.d_h % 2) throw ConfigError("d_h must be even");
    if (decoder.d_t % decoder.heads) throw ConfigError("d_t must be divisible by decoder heads");
    if (decoder.max_gen + 2 > decoder.max_pos)
        throw ConfigError("max_pos must cover [BOS] plus max_gen tokens");
    if (n_train <= 0 || n_val <= 0 || n_test <= 0) throw ConfigError("split sizes must be positive");
    if (anomaly_p < 0.0 || anomaly_p > 1.0) throw ConfigError("anomaly probability must be in [0, 1]");
    if (heads.d_i <= 0 || heads.hidden <= 0) throw ConfigError("head widths must be positive");
    if (beam < 1) throw ConfigError("beam must be >= 1");
    if (pretrain.epochs < 0 || stage_heads.epochs < 0 || stage_decoder.epochs < 0)
        throw ConfigError("epochs must be nonnegative");
    if (threads < 0) throw ConfigError("threads must be nonnegative");
}

namespace {

json stage_to_json(const StageHyper& s) {
    return json{{"epochs", s.epochs},
                {"batch", s.batch},
                {"lr", s.lr},
                {"weight_decay", s.weight_decay},
                {"adamw", s.adamw}};
}

StageHyper stage_from_json(const json& j, StageHyper dflt) {
    StageHyper s = dflt;
    if (j.contains("epochs")) s.epochs = j["epochs"].get<int>();
    if (j.contains("batch")) s.batch = j["batch"].get<int>();
    if (j.contains("lr")) s.lr = j["lr"].get<double>();
    if (j.contains("weight_decay")) s.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("adamw")) s.adamw = j["adamw"].get<bool>();
    return s;
}

}  // namespace

std::string RunConfig::to_json_string() const { return json_impl(false); }

std::string RunConfig::json_impl(bool canonical) const {
    json j;
    j["seed"] = seed;
    if (!canonical) {
        // execution-irrelevant fields: excluded from the canonical form so
        // the hash identifies the computation, not where it lands
        j["threads"] = threads;
        j["out_dir"] = out_dir;
    }
    j["data"] = {{"k", k},
                 {"shape", {vd, vh, vw}},
                 {"p", anomaly_p},
                 {"n_train", n_train},
                 {"n_val", n_val},
                 {"n_test", n_test},
                 {"base_seed", data_seed}};
    j["encoder"] = {{"patch", {encoder.pd, encoder.ph, encoder.pw}},
                    {"d_h", encoder.d_h},
                    {"layers", encoder.layers}};
    j["heads"] = {{"d_i", heads.d_i}, {"hidden", heads.hidden}};
    j["decoder"] = {{"layers", decoder.layers}, {"heads", decoder.heads},
                    {"d_t", decoder.d_t},       {"max_pos", decoder.max_pos},
                    {"max_gen", decoder.max_gen}, {"ffn_mult", decoder.ffn_mult}};
    j["variant"] = {{"multitask", multitask}, {"expansion", expansion}};
    j["train"] = {{"pretrain", stage_to_json(pretrain)},
                  {"heads", stage_to_json(stage_heads)},
                  {"decoder", stage_to_json(stage_decoder)}};
    j["beam"] = {{"size", beam}, {"alpha", beam_alpha}};
    return j.dump(2);  // nlohmann objects keep sorted keys: canonical form
}

RunConfig RunConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    RunConfig c;
    try {
        if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
        if (j.contains("threads")) c.threads = j["threads"].get<int>();
        if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
        if (j.contains("data")) {
            const json& d = j["data"];
            if (d.contains("k")) c.k = d["k"].get<int>();
            if (d.contains("shape")) {
                c.vd = d["shape"][0].get<int>();
                c.vh = d["shape"][1].get<int>();
                c.vw = d["shape"][2].get<int>();
            }
            if (d.contains("p")) c.anomaly_p = d["p"].get<double>();
            if (d.contains("n_train")) c.n_train = d["n_train"].get<int>();
            if (d.contains("n_val")) c.n_val = d["n_val"].get<int>();
            if (d.contains("n_test")) c.n_test = d["n_test"].get<int>();
            if (d.contains("base_seed")) c.data_seed = d["base_seed"].get<uint64_t>();
        }
        if (j.contains("encoder")) {
            const json& e = j["encoder"];
            if (e.contains("patch")) {
                c.encoder.pd = e["patch"][0].get<int>();
                c.encoder.ph = e["patch"][1].get<int>();
                c.encoder.pw = e["patch"][2].get<int>();
            }
            if (e.contains("d_h")) c.encoder.d_h = e["d_h"].get<int>();
            if (e.contains("layers")) c.encoder.layers = e["layers"].get<int>();
        }
        if (j.contains("heads")) {
            if (j["heads"].contains("d_i")) c.heads.d_i = j["heads"]["d_i"].get<int>();
            if (j["heads"].contains("hidden")) c.heads.hidden = j["heads"]["hidden"].get<int>();
        }
        if (j.contains("decoder")) {
            const json& d = j["decoder"];
            if (d.contains("layers")) c.decoder.layers = d["layers"].get<int>();
            if (d.contains("heads")) c.decoder.heads = d["heads"].get<int>();
            if (d.contains("d_t")) c.decoder.d_t = d["d_t"].get<int>();
            if (d.contains("max_pos")) c.decoder.max_pos = d["max_pos"].get<int>();
            if (d.contains("max_gen")) c.decoder.max_gen = d["max_gen"].get<int>();
            if (d.contains("ffn_mult")) c.decoder.ffn_mult = d["ffn_mult"].get<int>();
        }
        if (j.contains("variant")) {
            if (j["variant"].contains("multitask")) c.multitask = j["variant"]["multitask"].get<bool>();
            if (j["variant"].contains("expansion")) c.expansion = j["variant"]["expansion"].get<bool>();
        }
        if (j.contains("train")) {
            const json& t = j["train"];
            if (t.contains("pretrain")) c.pretrain = stage_from_json(t["pretrain"], c.pretrain);
            if (t.contains("heads")) c.stage_heads = stage_from_json(t["heads"], c.stage_heads);
            if (t.contains("decoder")) c.stage_decoder = stage_from_json(t["decoder"], c.stage_decoder);
        }
        if (j.contains("beam")) {
            if (j["beam"].contains("size")) c.beam = j["beam"]["size"].get<int>();
            if (j["beam"].contains("alpha")) c.beam_alpha = j["beam"]["alpha"].get<double>();
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json_string(ss.str());
}

void RunConfig::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write config: " + path);
    os << to_json_string() << "\n";
}

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string RunConfig::hash() const {
    uint64_t h = fnv1a64(json_impl(true));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return buf;
}

std::string RunConfig::variant_name() const {
    if (multitask && expansion) return "full";
    if (multitask) return "multitask";
    if (expansion) return "embedding";
    return "baseline";
}

}  // namespace agrg
