#include "agrg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "agrg/rng.hpp"

namespace agrg {

namespace {

// CT-RATE abnormality set, fixed order.
const char* kLabelNames[18] = {
    "Medical material",
    "Arterial wall calcification",
    "Cardiomegaly",
    "Pericardial effusion",
    "Coronary artery wall calcification",
    "Hiatal hernia",
    "Lymphadenopathy",
    "Emphysema",
    "Atelectasis",
    "Lung nodule",
    "Lung opacity",
    "Pulmonary fibrotic sequela",
    "Pleural effusion",
    "Mosaic attenuation pattern",
    "Peribronchial thickening",
    "Consolidation",
    "Bronchiectasis",
    "Interlobular septal thickening",
};

const char* kTemplates[4] = {
    "there is a {size} {label} in the {loc} region .",
    "a {size} {label} is seen in the {loc} region .",
    "{size} {label} noted in the {loc} region .",
    "the {loc} region shows a {size} {label} .",
};

// Substream tags for the per-case generators.
enum : uint64_t { kTagLabels = 1, kTagBackground = 2, kTagSpecBase = 100 };

std::string lower(std::string s) {
    for (char& c : s) c = (char)std::tolower((unsigned char)c);
    return s;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

// Smooth low-frequency background: a coarse random grid around -880 HU,
// trilinearly interpolated to full resolution.
Volume background_field(uint64_t seed, int d, int h, int w) {
    SplitMix64 rng(mix_seed(seed, kTagBackground));
    int cd = std::max(2, d / 8 + 1), ch = std::max(2, h / 8 + 1), cw = std::max(2, w / 8 + 1);
    std::vector<double> coarse((size_t)cd * ch * cw);
    for (double& v : coarse) v = rng.uniform(-940.0, -820.0);

    auto cval = [&](int z, int y, int x) { return coarse[((size_t)z * ch + y) * cw + x]; };
    Volume out(d, h, w);
    for (int z = 0; z < d; ++z) {
        double fz = d == 1 ? 0.0 : (double)z / (d - 1) * (cd - 1);
        int z0 = std::min((int)fz, cd - 2);
        double tz = fz - z0;
        for (int y = 0; y < h; ++y) {
            double fy = h == 1 ? 0.0 : (double)y / (h - 1) * (ch - 1);
            int y0 = std::min((int)fy, ch - 2);
            double ty = fy - y0;
            for (int x = 0; x < w; ++x) {
                double fx = w == 1 ? 0.0 : (double)x / (w - 1) * (cw - 1);
                int x0 = std::min((int)fx, cw - 2);
                double tx = fx - x0;
                double c00 = cval(z0, y0, x0) * (1 - tx) + cval(z0, y0, x0 + 1) * tx;
                double c01 = cval(z0, y0 + 1, x0) * (1 - tx) + cval(z0, y0 + 1, x0 + 1) * tx;
                double c10 = cval(z0 + 1, y0, x0) * (1 - tx) + cval(z0 + 1, y0, x0 + 1) * tx;
                double c11 = cval(z0 + 1, y0 + 1, x0) * (1 - tx) + cval(z0 + 1, y0 + 1, x0 + 1) * tx;
                double c0 = c00 * (1 - ty) + c01 * ty;
                double c1 = c10 * (1 - ty) + c11 * ty;
                out.at(z, y, x) = c0 * (1 - tz) + c1 * tz;
            }
        }
    }
    return out;
}

void render_primitive(Volume& v, const AnomalySpec& s) {
    int r = (int)std::ceil(s.size * 2.5) + 2;
    int z0 = std::max(0, s.cz - r), z1 = std::min(v.d - 1, s.cz + r);
    int y0 = std::max(0, s.cy - r), y1 = std::min(v.h - 1, s.cy + r);
    int x0 = std::max(0, s.cx - r), x1 = std::min(v.w - 1, s.cx + r);
    double sz = s.size;
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double dz = z - s.cz, dy = y - s.cy, dx = x - s.cx;
                bool inside = false;
                switch (s.kind) {
                    case 0:  // sphere
                        inside = dz * dz + dy * dy + dx * dx <= sz * sz;
                        break;
                    case 1:  // box
                        inside = std::fabs(dz) <= sz * 0.85 && std::fabs(dy) <= sz * 0.85 &&
                                 std::fabs(dx) <= sz * 0.85;
                        break;
                    case 2: {  // hollow shell
                        double rr = std::sqrt(dz * dz + dy * dy + dx * dx);
                        inside = rr >= std::max(1.0, sz - 1.2) && rr <= sz + 0.8;
                        break;
                    }
                    case 3:  // elongated rod along z
                        inside = dy * dy + dx * dx <= (sz * 0.5) * (sz * 0.5) &&
                                 std::fabs(dz) <= sz * 2.2;
                        break;
                    case 4:  // wide flat slab
                        inside = std::fabs(dz) <= std::max(1.0, sz * 0.3) &&
                                 std::fabs(dy) <= sz * 2.0 && std::fabs(dx) <= sz * 2.0;
                        break;
                    case 5:  // checker patch
                        inside = std::fabs(dz) <= sz * 1.3 && std::fabs(dy) <= sz * 1.3 &&
                                 std::fabs(dx) <= sz * 1.3 && ((z + y + x) & 1) == 0;
                        break;
                    default:
                        throw std::invalid_argument("unknown primitive kind");
                }
                if (inside) v.at(z, y, x) += s.intensity;
            }
}

int center_coord(SplitMix64& rng, double size, int extent) {
    int margin = (int)std::ceil(size) + 1;
    if (2 * margin >= extent) return extent / 2;
    return margin + (int)rng.below((uint64_t)(extent - 2 * margin));
}

uint64_t spec_fingerprint(const AnomalySpec& s) {
    uint64_t v = 0;
    v = mix_seed(v, (uint64_t)s.label);
    v = mix_seed(v, (uint64_t)s.cz * 73856093ull + (uint64_t)s.cy * 19349663ull +
                        (uint64_t)s.cx * 83492791ull);
    v = mix_seed(v, (uint64_t)std::llround(s.size * 64.0));
    return v;
}

}  // namespace

LabelRegistry LabelRegistry::make(int k) {
    if (k < 1 || k > 18) throw std::invalid_argument("label count must be in [1, 18]");
    LabelRegistry r;
    for (int i = 0; i < k; ++i) r.names.push_back(kLabelNames[i]);
    return r;
}

double clip_normalize_hu(double v) {
    double c = std::min(std::max(v, -1000.0), 200.0);
    return 2.0 * (c + 1000.0) / 1200.0 - 1.0;
}

double denormalize_hu(double v) { return (v + 1.0) / 2.0 * 1200.0 - 1000.0; }

Volume clip_normalize_hu(const Volume& raw) {
    Volume out(raw.d, raw.h, raw.w);
    for (size_t i = 0; i < raw.vox.size(); ++i) {
        if (!std::isfinite(raw.vox[i])) throw std::runtime_error("non-finite voxel value");
        out.vox[i] = clip_normalize_hu(raw.vox[i]);
    }
    return out;
}

Volume crop_or_pad(const Volume& v, int td, int th, int tw) {
    if (td <= 0 || th <= 0 || tw <= 0) throw std::invalid_argument("target extents must be positive");
    Volume out(td, th, tw, -1.0);
    // source start (crop) and destination start (pad) per axis; the extra
    // voxel of an odd difference lands on the high-index side
    auto starts = [](int n, int t, int& src, int& dst, int& len) {
        if (n >= t) {
            src = (n - t) / 2;
            dst = 0;
            len = t;
        } else {
            src = 0;
            dst = (t - n) / 2;
            len = n;
        }
    };
    int sz, dz, lz, sy, dy, ly, sx, dx, lx;
    starts(v.d, td, sz, dz, lz);
    starts(v.h, th, sy, dy, ly);
    starts(v.w, tw, sx, dx, lx);
    for (int z = 0; z < lz; ++z)
        for (int y = 0; y < ly; ++y)
            for (int x = 0; x < lx; ++x)
                out.at(dz + z, dy + y, dx + x) = v.at(sz + z, sy + y, sx + x);
    return out;
}

std::vector<int> sample_labels(uint64_t seed, int k, double p) {
    SplitMix64 rng(mix_seed(seed, kTagLabels));
    std::vector<int> labels(k, 0);
    for (int i = 0; i < k; ++i) labels[i] = rng.uniform() < p ? 1 : 0;
    return labels;
}

Volume render_volume(uint64_t seed, const std::vector<AnomalySpec>& specs, int d, int h, int w) {
    Volume raw = background_field(seed, d, h, w);
    for (const AnomalySpec& s : specs) render_primitive(raw, s);
    return crop_or_pad(clip_normalize_hu(raw), d, h, w);
}

SyntheticCase synthesize_case(uint64_t seed, const LabelRegistry& registry, int d, int h, int w,
                              double p) {
    if (registry.size() == 0) throw std::invalid_argument("empty label registry");
    SyntheticCase c;
    c.labels = sample_labels(seed, registry.size(), p);

    int min_dim = std::min(d, std::min(h, w));
    for (int i = 0; i < registry.size(); ++i) {
        if (!c.labels[i]) continue;
        SplitMix64 rng(mix_seed(seed, kTagSpecBase + (uint64_t)i));
        AnomalySpec s;
        s.label = i;
        s.kind = i % 6;
        // disjoint size ranges for the compact kinds (sphere/box/shell look
        // alike at patch granularity); rods and slabs are distinctive by
        // extent already
        static const double kSizeLo[6] = {0.09, 0.145, 0.20, 0.10, 0.13, 0.13};
        static const double kSizeHi[6] = {0.13, 0.19, 0.26, 0.14, 0.18, 0.18};
        s.size = rng.uniform(kSizeLo[s.kind], kSizeHi[s.kind]) * min_dim;
        s.cz = center_coord(rng, s.size, d);
        s.cy = center_coord(rng, s.size, h);
        s.cx = center_coord(rng, s.size, w);
        // per-label intensity band; (kind, band) is unique for all K <= 18
        int band = i % 8;
        s.intensity = rng.uniform(500.0 + 90.0 * band, 530.0 + 90.0 * band);
        c.specs.push_back(s);
    }

    c.volume = render_volume(seed, c.specs, d, h, w);
    for (const AnomalySpec& s : c.specs) c.sentences.push_back(render_sentence(s, registry, d, h, w));
    c.report = render_report(c.specs, registry, d, h, w);
    return c;
}

std::string size_bucket(double size) {
    if (size < 4.0) return "small";
    if (size < 5.0) return "moderate";
    return "large";
}

std::string location_octant(const AnomalySpec& s, int d, int h, int w) {
    std::string lr = 2 * s.cx < w ? "left" : "right";
    std::string ud = 2 * s.cz < d ? "upper" : "lower";
    std::string ap = 2 * s.cy < h ? "anterior" : "posterior";
    return lr + " " + ud + " " + ap;
}

std::string render_sentence(const AnomalySpec& s, const LabelRegistry& registry, int d, int h,
                            int w) {
    if (s.label < 0 || s.label >= registry.size()) throw std::invalid_argument("label out of range");
    const std::string tpl = kTemplates[spec_fingerprint(s) % 4];
    std::string out = replace_all(tpl, "{size}", size_bucket(s.size));
    out = replace_all(out, "{label}", lower(registry.names[s.label]));
    out = replace_all(out, "{loc}", location_octant(s, d, h, w));
    return out;
}

std::string render_report(const std::vector<AnomalySpec>& specs, const LabelRegistry& registry,
                          int d, int h, int w) {
    std::string out;
    int prev = -1;
    for (const AnomalySpec& s : specs) {
        if (s.label == prev) throw std::invalid_argument("duplicate label index in specs");
        if (s.label < prev) throw std::invalid_argument("specs must be sorted by label index");
        prev = s.label;
        if (!out.empty()) out += " ";
        out += render_sentence(s, registry, d, h, w);
    }
    return out;
}

std::vector<std::string> grammar_word_list(const LabelRegistry& registry) {
    std::set<std::string> words;
    auto add_words = [&](const std::string& text) {
        std::istringstream is(text);
        std::string tok;
        while (is >> tok)
            if (tok.front() != '{') words.insert(lower(tok));
    };
    for (const char* t : kTemplates) add_words(t);
    for (const std::string& name : registry.names) add_words(name);
    for (const char* s : {"small", "moderate", "large"}) words.insert(s);
    for (const char* l : {"left", "right", "upper", "lower", "anterior", "posterior"}) words.insert(l);
    return {words.begin(), words.end()};
}

void split_dataset(int n_train, int n_val, int n_test, uint64_t base_seed, SplitSeeds& train,
                   SplitSeeds& val, SplitSeeds& test) {
    if (n_train <= 0 || n_val <= 0 || n_test <= 0) throw std::invalid_argument("split counts must be positive");
    train = {base_seed, base_seed + (uint64_t)n_train};
    val = {train.end, train.end + (uint64_t)n_val};
    test = {val.end, val.end + (uint64_t)n_test};
}

SplitData synthesize_split(const SplitSeeds& seeds, const LabelRegistry& registry, int d, int h,
                           int w, double p) {
    SplitData out;
    out.k = registry.size();
    out.d = d;
    out.h = h;
    out.w = w;
    int n = (int)(seeds.end - seeds.begin);
    out.cases.resize(n);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        SyntheticCase c = synthesize_case(seeds.begin + (uint64_t)i, registry, d, h, w, p);
        CaseRecord& rec = out.cases[i];
        rec.label_mask = 0;
        for (int j = 0; j < registry.size(); ++j)
            if (c.labels[j]) rec.label_mask |= (1u << j);
        rec.report = c.report;
        rec.voxels.resize(c.volume.vox.size());
        for (size_t v = 0; v < c.volume.vox.size(); ++v) rec.voxels[v] = (float)c.volume.vox[v];
    }
    return out;
}

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void write_split(const std::string& path, const SplitData& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("AGDS", 4);
    put<uint32_t>(os, 1);  // version
    put<uint32_t>(os, (uint32_t)data.k);
    put<uint32_t>(os, (uint32_t)data.d);
    put<uint32_t>(os, (uint32_t)data.h);
    put<uint32_t>(os, (uint32_t)data.w);
    for (const CaseRecord& c : data.cases) {
        put<uint32_t>(os, c.label_mask);
        put<uint32_t>(os, (uint32_t)c.report.size());
        os.write(c.report.data(), (std::streamsize)c.report.size());
        os.write(reinterpret_cast<const char*>(c.voxels.data()),
                 (std::streamsize)(c.voxels.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

SplitData read_split(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "AGDS", 4) != 0) throw std::runtime_error("bad dataset magic in " + path);
    uint32_t version = get<uint32_t>(is);
    if (version != 1) throw std::runtime_error("unsupported dataset version");
    SplitData data;
    data.k = (int)get<uint32_t>(is);
    data.d = (int)get<uint32_t>(is);
    data.h = (int)get<uint32_t>(is);
    data.w = (int)get<uint32_t>(is);
    size_t nvox = (size_t)data.d * data.h * data.w;
    while (true) {
        uint32_t mask;
        is.read(reinterpret_cast<char*>(&mask), sizeof(mask));
        if (is.eof()) break;
        if (!is) throw std::runtime_error("truncated dataset: " + path);
        CaseRecord c;
        c.label_mask = mask;
        uint32_t rlen = get<uint32_t>(is);
        c.report.resize(rlen);
        is.read(c.report.data(), rlen);
        c.voxels.resize(nvox);
        is.read(reinterpret_cast<char*>(c.voxels.data()), (std::streamsize)(nvox * sizeof(float)));
        if (!is) throw std::runtime_error("truncated dataset: " + path);
        data.cases.push_back(std::move(c));
    }
    return data;
}

}  // namespace agrg
