#include "agrg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace agrg {

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), compact single-buffer implementation.

namespace {

struct Sha256 {
    uint32_t h[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                     0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    uint64_t total = 0;
    uint8_t buf[64];
    size_t fill = 0;

    static uint32_t rotr(uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

    void block(const uint8_t* p) {
        static const uint32_t k[64] = {
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
            0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
            0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
            0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
            0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
            0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
            0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
            0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
            0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
            0xc67178f2};
        uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = (uint32_t)p[4 * i] << 24 | (uint32_t)p[4 * i + 1] << 16 |
                   (uint32_t)p[4 * i + 2] << 8 | p[4 * i + 3];
        for (int i = 16; i < 64; ++i) {
            uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5], g = h[6], hh = h[7];
        for (int i = 0; i < 64; ++i) {
            uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            uint32_t ch = (e & f) ^ (~e & g);
            uint32_t t1 = hh + s1 + ch + k[i] + w[i];
            uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            uint32_t t2 = s0 + maj;
            hh = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
        h[5] += f;
        h[6] += g;
        h[7] += hh;
    }

    void update(const void* data, size_t len) {
        const uint8_t* p = (const uint8_t*)data;
        total += len;
        while (len > 0) {
            size_t take = std::min(len, (size_t)64 - fill);
            std::memcpy(buf + fill, p, take);
            fill += take;
            p += take;
            len -= take;
            if (fill == 64) {
                block(buf);
                fill = 0;
            }
        }
    }

    std::string finish() {
        uint64_t bits = total * 8;
        uint8_t pad = 0x80;
        update(&pad, 1);
        uint8_t zero = 0;
        while (fill != 56) update(&zero, 1);
        uint8_t lenbuf[8];
        for (int i = 0; i < 8; ++i) lenbuf[i] = (uint8_t)(bits >> (56 - 8 * i));
        update(lenbuf, 8);
        char out[65];
        for (int i = 0; i < 8; ++i) std::snprintf(out + 8 * i, 9, "%08x", h[i]);
        return std::string(out, 64);
    }
};

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put<uint32_t>(os, (uint32_t)s.size());
    os.write(s.data(), (std::streamsize)s.size());
}

std::string get_string(std::istream& is) {
    uint32_t n = get<uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

}  // namespace

std::string sha256_hex(const void* data, size_t len) {
    Sha256 s;
    s.update(data, len);
    return s.finish();
}

std::string sha256_hex(const std::string& bytes) { return sha256_hex(bytes.data(), bytes.size()); }

std::string sha256_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for hashing: " + path);
    Sha256 s;
    char buf[65536];
    while (is) {
        is.read(buf, sizeof(buf));
        s.update(buf, (size_t)is.gcount());
    }
    return s.finish();
}

std::string params_sha256(const std::vector<Param*>& params) {
    Sha256 s;
    for (const Param* p : params)
        s.update(p->value.data.data(), p->value.data.size() * sizeof(double));
    return s.finish();
}

bool Checkpoint::has_tensor(const std::string& name) const {
    for (auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (auto& [n, t] : tensors)
        if (n == name) return t;
    throw std::runtime_error("checkpoint tensor missing: " + name);
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write("AGRG", 4);
    put<uint32_t>(os, ck.version);
    put_string(os, ck.config_hash);

    put<uint32_t>(os, (uint32_t)ck.tensors.size());
    for (auto& [name, t] : ck.tensors) {
        put_string(os, name);
        put<uint32_t>(os, (uint32_t)t.shape.size());
        for (int e : t.shape) put<uint32_t>(os, (uint32_t)e);
        for (double v : t.data) put<float>(os, (float)v);
    }

    put<uint8_t>(os, ck.thresholds.size() > 0 ? 1 : 0);
    if (ck.thresholds.size() > 0) {
        put<uint32_t>(os, (uint32_t)ck.thresholds.size());
        for (double t : ck.thresholds.tau) put<double>(os, t);
        for (ThresholdFlag f : ck.thresholds.flags) put<uint8_t>(os, (uint8_t)f);
    }

    std::string blob;
    for (size_t i = 0; i < ck.vocab.size(); ++i) {
        if (i) blob += "\n";
        blob += ck.vocab[i];
    }
    put<uint8_t>(os, ck.vocab.empty() ? 0 : 1);
    if (!ck.vocab.empty()) put_string(os, blob);
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expect_config_hash,
                           bool force) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "AGRG", 4) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path);
    Checkpoint ck;
    ck.version = get<uint32_t>(is);
    if (ck.version != 1) throw std::runtime_error("unsupported checkpoint version");
    ck.config_hash = get_string(is);
    if (!expect_config_hash.empty() && ck.config_hash != expect_config_hash && !force)
        throw std::runtime_error("checkpoint config hash mismatch (" + ck.config_hash +
                                 " != " + expect_config_hash + "); pass force to override");

    uint32_t nt = get<uint32_t>(is);
    for (uint32_t i = 0; i < nt; ++i) {
        std::string name = get_string(is);
        uint32_t ndim = get<uint32_t>(is);
        std::vector<int> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = (int)get<uint32_t>(is);
        Tensor t(shape);
        for (int64_t v = 0; v < t.numel(); ++v) t.data[v] = (double)get<float>(is);
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }

    if (get<uint8_t>(is)) {
        uint32_t k = get<uint32_t>(is);
        ck.thresholds.tau.resize(k);
        ck.thresholds.flags.resize(k);
        for (uint32_t i = 0; i < k; ++i) ck.thresholds.tau[i] = get<double>(is);
        for (uint32_t i = 0; i < k; ++i) ck.thresholds.flags[i] = (ThresholdFlag)get<uint8_t>(is);
    }
    if (get<uint8_t>(is)) {
        std::string blob = get_string(is);
        std::stringstream ss(blob);
        std::string line;
        while (std::getline(ss, line)) ck.vocab.push_back(line);
    }
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    return ck;
}

}  // namespace agrg
