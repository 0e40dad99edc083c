#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace agrg {

// Ordered abnormality label set. Index i is the class index everywhere.
struct LabelRegistry {
    std::vector<std::string> names;

    static LabelRegistry make(int k);
    int size() const { return static_cast<int>(names.size()); }
};

// One injected finding: a geometric primitive plus intensity offset in
// HU-like units. Each label renders one fixed primitive kind; the intensity
// band also depends on the label so classes stay separable at any K <= 18.
struct AnomalySpec {
    int label = 0;
    int kind = 0;  // 0 sphere, 1 box, 2 shell, 3 rod, 4 slab, 5 checker
    int cz = 0, cy = 0, cx = 0;
    double size = 0.0;       // characteristic radius in voxels
    double intensity = 0.0;  // additive HU offset
};

struct Volume {
    int d = 0, h = 0, w = 0;
    std::vector<double> vox;

    Volume() = default;
    Volume(int dd, int hh, int ww, double fill = 0.0) : d(dd), h(hh), w(ww) {
        vox.assign((size_t)dd * hh * ww, fill);
    }
    double& at(int z, int y, int x) { return vox[((size_t)z * h + y) * w + x]; }
    double at(int z, int y, int x) const { return vox[((size_t)z * h + y) * w + x]; }
    int64_t numel() const { return (int64_t)vox.size(); }
};

struct SyntheticCase {
    Volume volume;  // preprocessed, values in [-1, 1]
    std::vector<int> labels;
    std::vector<AnomalySpec> specs;            // sorted by label index
    std::vector<std::string> sentences;        // one per spec, label order
    std::string report;                        // sentences joined by single spaces
};

// --- preprocessing -----------------------------------------------------

// HU clip to [-1000, 200] then affine map to [-1, 1].
Volume clip_normalize_hu(const Volume& raw);
double clip_normalize_hu(double v);
double denormalize_hu(double v);  // inverse of the affine map (no clip)

// Per-axis center crop / symmetric pad with -1; a 1-voxel asymmetry goes to
// the high-index side.
Volume crop_or_pad(const Volume& v, int td, int th, int tw);

// --- synthesis ----------------------------------------------------------

// Label presence draws for a case seed (the exact stream synthesize_case uses).
std::vector<int> sample_labels(uint64_t seed, int k, double p);

// Fully deterministic case from its seed.
SyntheticCase synthesize_case(uint64_t seed, const LabelRegistry& registry, int d, int h, int w,
                              double p = 0.35);

// Deterministic render of given specs over the seed's background; used by
// synthesize_case and by tests that need controlled label toggles.
Volume render_volume(uint64_t seed, const std::vector<AnomalySpec>& specs, int d, int h, int w);

// --- report templates ----------------------------------------------------

std::string size_bucket(double size);                           // small / moderate / large
std::string location_octant(const AnomalySpec& s, int d, int h, int w);
std::string render_sentence(const AnomalySpec& s, const LabelRegistry& registry, int d, int h, int w);

// One sentence per spec (specs must be sorted by label, no duplicates),
// joined by single spaces. Every sentence contains its label name verbatim
// (lowercased), which is what the deterministic labeler keys on.
std::string render_report(const std::vector<AnomalySpec>& specs, const LabelRegistry& registry,
                          int d, int h, int w);

// Closed word list of the whole template grammar (scaffold words, size and
// location words, label words, sentence period), lowercase, sorted, unique.
std::vector<std::string> grammar_word_list(const LabelRegistry& registry);

// --- dataset ------------------------------------------------------------

struct CaseRecord {
    uint32_t label_mask = 0;
    std::string report;
    std::vector<float> voxels;  // preprocessed, row-major d*h*w

    bool has_label(int i) const { return (label_mask >> i) & 1u; }
};

struct SplitData {
    int k = 0;
    int d = 0, h = 0, w = 0;
    std::vector<CaseRecord> cases;
};

struct SplitSeeds {
    uint64_t begin = 0;
    uint64_t end = 0;  // half-open
};

// Disjoint arithmetic seed ranges for train/val/test.
void split_dataset(int n_train, int n_val, int n_test, uint64_t base_seed, SplitSeeds& train,
                   SplitSeeds& val, SplitSeeds& test);

// Synthesize all cases of a seed range (parallel across seeds).
SplitData synthesize_split(const SplitSeeds& seeds, const LabelRegistry& registry, int d, int h,
                           int w, double p);

// Binary split file: magic "AGDS", u32 version, u32 K, u32 d/h/w, then per
// case u32 label mask, u32 report length + UTF-8 bytes, f32 voxels. LE.
void write_split(const std::string& path, const SplitData& data);
SplitData read_split(const std::string& path);

}  // namespace agrg
