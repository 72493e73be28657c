#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gltd/common.hpp"
#include "gltd/image.hpp"
#include "gltd/rng.hpp"
#include "gltd/tape.hpp"
#include "gltd/tensor.hpp"

namespace gltd {

// Backbone and head hyperparameters. Blocks preserve token order, so row k of
// the dense output always corresponds to token k of the patch grid.
struct BackboneConfig {
    std::size_t r = 16;       // patch size == token downscale factor
    std::size_t d = 32;       // token feature dimension
    std::size_t blocks = 1;
    std::string block_type = "attention";  // "attention" | "mlp"
    std::size_t mlp_hidden = 64;
    std::size_t head_hidden = 64;
    std::size_t bottleneck = 16;
    std::size_t prototypes = 256;  // output distribution support I
    bool positional = false;       // fixed sinusoidal token-position terms

    void validate() const {
        check_config(r > 0, "patch size must be positive");
        check_config(d >= 4, "feature dimension must be at least 4");
        check_config(prototypes >= 2, "prototype count must be at least 2");
        check_config(blocks >= 1, "need at least one mixing block");
        check_config(block_type == "attention" || block_type == "mlp",
                     "block type must be 'attention' or 'mlp'");
        check_config(mlp_hidden > 0 && head_hidden > 0 && bottleneck > 0,
                     "hidden sizes must be positive");
    }
};

// Flat named parameter list; construction order defines the parameter index
// space shared by gradients, optimizer moments, EMA, and checkpoints.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> values;

    std::size_t add(const std::string& name, Tensor v) {
        names.push_back(name);
        values.push_back(std::move(v));
        return values.size() - 1;
    }
    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw Error("unknown parameter: " + name);
    }
    std::size_t count() const { return values.size(); }
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& v : values) n += v.numel();
        return n;
    }
};

inline std::vector<Tensor> zero_like(const ParamSet& p) {
    std::vector<Tensor> g;
    g.reserve(p.count());
    for (const auto& v : p.values) g.push_back(Tensor::zeros(v.shape));
    return g;
}

namespace detail {

inline void add_linear(ParamSet& p, const std::string& prefix, std::size_t in, std::size_t out,
                       Rng& rng, bool bias = true) {
    p.add(prefix + ".w", Tensor::randn({in, out}, rng, 0.02));
    if (bias) p.add(prefix + ".b", Tensor::zeros({1, out}));
}

inline void add_norm(ParamSet& p, const std::string& prefix, std::size_t d) {
    p.add(prefix + ".gain", Tensor::full({1, d}, 1.0));
    p.add(prefix + ".bias", Tensor::zeros({1, d}));
}

inline void add_head(ParamSet& p, const std::string& prefix, const BackboneConfig& c, Rng& rng) {
    add_linear(p, prefix + ".fc1", c.d, c.head_hidden, rng);
    add_linear(p, prefix + ".fc2", c.head_hidden, c.bottleneck, rng);
    p.add(prefix + ".proto", Tensor::randn({c.prototypes, c.bottleneck}, rng, 0.02));
}

}  // namespace detail

inline ParamSet init_params(const BackboneConfig& c, Rng& rng) {
    c.validate();
    ParamSet p;
    detail::add_linear(p, "embed", c.r * c.r * 3, c.d, rng);
    for (std::size_t b = 0; b < c.blocks; ++b) {
        const std::string bp = "block" + std::to_string(b);
        if (c.block_type == "attention") {
            detail::add_norm(p, bp + ".norm1", c.d);
            detail::add_linear(p, bp + ".q", c.d, c.d, rng, false);
            detail::add_linear(p, bp + ".k", c.d, c.d, rng, false);
            detail::add_linear(p, bp + ".v", c.d, c.d, rng, false);
            detail::add_linear(p, bp + ".proj", c.d, c.d, rng);
        }
        detail::add_norm(p, bp + ".norm2", c.d);
        detail::add_linear(p, bp + ".fc1", c.d, c.mlp_hidden, rng);
        detail::add_linear(p, bp + ".fc2", c.mlp_hidden, c.d, rng);
    }
    detail::add_norm(p, "final_norm", c.d);
    detail::add_head(p, "head_g", c, rng);
    detail::add_head(p, "head_d", c, rng);
    return p;
}

// Student/teacher parameter pair plus the teacher-output centering vectors.
// Both parameter sets start from the same draw; only ema_update ever moves
// the teacher. Each head keeps its own center: global and dense logits have
// different batch statistics, and a shared center lets one prototype sit
// permanently above its mean, collapsing the teacher targets one-hot.
struct ModelState {
    BackboneConfig cfg;
    ParamSet student;
    ParamSet teacher;
    Tensor center;    // [1×I], global head
    Tensor center_d;  // [1×I], dense head
    std::uint64_t step = 0;
};

inline ModelState init_model(const BackboneConfig& cfg, Rng& rng) {
    ModelState s;
    s.cfg = cfg;
    s.student = init_params(cfg, rng);
    s.teacher = s.student;
    s.center = Tensor::zeros({1, cfg.prototypes});
    s.center_d = Tensor::zeros({1, cfg.prototypes});
    return s;
}

// θ_t ← λ·θ_t + (1−λ)·θ_s, elementwise over every parameter.
inline void ema_update(ModelState& s, double lambda) {
    check(lambda >= 0.0 && lambda <= 1.0, "ema_update: lambda must lie in [0, 1]");
    check(s.teacher.count() == s.student.count(), "ema_update: parameter count mismatch");
    for (std::size_t i = 0; i < s.teacher.count(); ++i) {
        Tensor& t = s.teacher.values[i];
        const Tensor& st = s.student.values[i];
        check(t.same_shape(st), "ema_update: parameter shape mismatch");
        for (std::size_t j = 0; j < t.data.size(); ++j)
            t.data[j] = lambda * t.data[j] + (1.0 - lambda) * st.data[j];
    }
}

// c ← m·c + (1−m)·row-mean of the batch's teacher logits for one head.
inline void center_update(Tensor& c, const Tensor& teacher_logits, double m) {
    check(m >= 0.0 && m <= 1.0, "center_update: momentum must lie in [0, 1]");
    check(teacher_logits.rank() == 2 && teacher_logits.rows() > 0,
          "center_update: need a nonempty logit batch");
    check(c.rank() == 2 && c.rows() == 1 && c.cols() == teacher_logits.cols(),
          "center_update: center/logit width mismatch");
    const std::size_t R = teacher_logits.rows(), I = teacher_logits.cols();
    for (std::size_t i = 0; i < I; ++i) {
        double mean = 0.0;
        for (std::size_t r = 0; r < R; ++r) mean += teacher_logits.at(r, i);
        mean /= static_cast<double>(R);
        c.data[i] = m * c.data[i] + (1.0 - m) * mean;
    }
    ensure_finite(c, "center");
}

// ---- forward pass ------------------------------------------------------------

// One row per token, row-major over the patch grid; each row is the patch's
// pixels in (y, x, channel) order.
inline Tensor patchify(const Image& im, std::size_t r) {
    check(r > 0 && im.height % r == 0 && im.width % r == 0,
          "patchify: image size must be divisible by the patch size");
    const std::size_t gh = im.height / r, gw = im.width / r;
    Tensor out({gh * gw, r * r * 3});
    for (std::size_t ti = 0; ti < gh; ++ti)
        for (std::size_t tj = 0; tj < gw; ++tj) {
            double* row = out.data.data() + (ti * gw + tj) * out.cols();
            std::size_t o = 0;
            for (std::size_t y = 0; y < r; ++y)
                for (std::size_t x = 0; x < r; ++x)
                    for (std::size_t c = 0; c < 3; ++c)
                        row[o++] = im.at(ti * r + y, tj * r + x, c);
        }
    return out;
}

namespace detail {

// Fixed sinusoidal position terms for a gh×gw grid, interleaved over feature
// groups of four: sin(ω·i), cos(ω·i), sin(ω·j), cos(ω·j).
inline Tensor positional_terms(std::size_t gh, std::size_t gw, std::size_t d) {
    Tensor pe({gh * gw, d});
    const std::size_t groups = d / 4;
    if (groups == 0) return pe;
    for (std::size_t i = 0; i < gh; ++i)
        for (std::size_t j = 0; j < gw; ++j) {
            const std::size_t k = i * gw + j;
            for (std::size_t m = 0; m < groups; ++m) {
                const double omega =
                    std::pow(10000.0, -static_cast<double>(4 * m) / static_cast<double>(d));
                pe.at(k, 4 * m + 0) = std::sin(omega * static_cast<double>(i));
                pe.at(k, 4 * m + 1) = std::cos(omega * static_cast<double>(i));
                pe.at(k, 4 * m + 2) = std::sin(omega * static_cast<double>(j));
                pe.at(k, 4 * m + 3) = std::cos(omega * static_cast<double>(j));
            }
        }
    return pe;
}

}  // namespace detail

// Parameters bound onto a tape. Student binding uses gradient-tracked leaves;
// teacher binding uses constants, so teacher gradients cannot exist by
// construction.
struct BoundParams {
    const ParamSet* set = nullptr;
    std::vector<VarId> vars;

    VarId operator[](const std::string& name) const { return vars[set->index_of(name)]; }
};

inline BoundParams bind_leaves(Tape& t, const ParamSet& p) {
    BoundParams b;
    b.set = &p;
    b.vars.reserve(p.count());
    for (std::size_t i = 0; i < p.count(); ++i)
        b.vars.push_back(t.leaf(p.values[i], static_cast<int>(i)));
    return b;
}

inline BoundParams bind_constants(Tape& t, const ParamSet& p) {
    BoundParams b;
    b.set = &p;
    b.vars.reserve(p.count());
    for (std::size_t i = 0; i < p.count(); ++i) b.vars.push_back(t.constant(p.values[i]));
    return b;
}

struct ForwardOut {
    VarId zbar;  // [1×d] token mean
    VarId z;     // [K×d] dense tokens
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
};

namespace detail {

inline VarId linear(Tape& t, const BoundParams& p, const std::string& prefix, VarId x) {
    return add_rowvec(t, matmul(t, x, p[prefix + ".w"]), p[prefix + ".b"]);
}

inline VarId linear_nobias(Tape& t, const BoundParams& p, const std::string& prefix, VarId x) {
    return matmul(t, x, p[prefix + ".w"]);
}

inline VarId norm(Tape& t, const BoundParams& p, const std::string& prefix, VarId x) {
    return layer_norm(t, x, p[prefix + ".gain"], p[prefix + ".bias"]);
}

}  // namespace detail

// Patch embedding, token-mixing blocks, final norm; returns the dense token
// matrix and its mean. Token order is the patch-grid row-major order shared
// with token_centers.
inline ForwardOut forward(Tape& t, const BoundParams& p, const BackboneConfig& cfg,
                          const Image& view) {
    cfg.validate();
    const Tensor patches = patchify(view, cfg.r);
    const std::size_t gh = view.height / cfg.r, gw = view.width / cfg.r;

    VarId h = detail::linear(t, p, "embed", t.constant(patches));
    if (cfg.positional)
        h = add(t, h, t.constant(detail::positional_terms(gh, gw, cfg.d)));

    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string bp = "block" + std::to_string(b);
        if (cfg.block_type == "attention") {
            VarId xn = detail::norm(t, p, bp + ".norm1", h);
            VarId q = detail::linear_nobias(t, p, bp + ".q", xn);
            VarId k = detail::linear_nobias(t, p, bp + ".k", xn);
            VarId v = detail::linear_nobias(t, p, bp + ".v", xn);
            VarId scores = scale(t, matmul_nt(t, q, k), 1.0 / std::sqrt(static_cast<double>(cfg.d)));
            VarId attn = softmax_rows(t, scores, 1.0);
            VarId mixed = detail::linear(t, p, bp + ".proj", matmul(t, attn, v));
            h = add(t, h, mixed);
        }
        VarId xn2 = detail::norm(t, p, bp + ".norm2", h);
        VarId m = detail::linear(t, p, bp + ".fc2", gelu(t, detail::linear(t, p, bp + ".fc1", xn2)));
        h = add(t, h, m);
    }

    ForwardOut out;
    out.z = detail::norm(t, p, "final_norm", h);
    out.zbar = mean_rows(t, out.z);
    out.grid_h = gh;
    out.grid_w = gw;
    return out;
}

// ---- projection heads ----------------------------------------------------------

enum class Role { Student, Teacher };

struct Temps {
    double tau_s = 0.1;
    double tau_t = 0.04;
};

// MLP → L2-normalized bottleneck → unit-norm prototypes → logits.
inline VarId head_logits(Tape& t, const BoundParams& p, const std::string& prefix, VarId rep) {
    VarId h1 = gelu(t, detail::linear(t, p, prefix + ".fc1", rep));
    VarId u = detail::linear(t, p, prefix + ".fc2", h1);
    VarId uhat = l2_normalize_rows(t, u, 1e-9);
    VarId proto = l2_normalize_rows(t, p[prefix + ".proto"], 1e-9);
    return matmul_nt(t, uhat, proto);
}

// Student: softmax(ℓ/τ_s). Teacher: softmax((ℓ − c)/τ_t), the sharpened and
// centered target distribution.
inline VarId head_probs(Tape& t, VarId logits, Role role, const Temps& temps,
                        const Tensor& center) {
    if (role == Role::Student) return softmax_rows(t, logits, temps.tau_s);
    check(center.rank() == 2 && center.rows() == 1 && center.cols() == t.value(logits).cols(),
          "teacher head requires a center vector of logit width");
    Tensor neg = center;
    for (auto& v : neg.data) v = -v;
    VarId centered = add_rowvec(t, logits, t.constant(neg));
    return softmax_rows(t, centered, temps.tau_t);
}

inline VarId head(Tape& t, const BoundParams& p, const std::string& prefix, VarId rep, Role role,
                  const Temps& temps, const Tensor& center) {
    return head_probs(t, head_logits(t, p, prefix, rep), role, temps, center);
}

// ---- checkpoints ----------------------------------------------------------------

// Layout: magic "GLTC", u32 version, u64 manifest length, JSON manifest, then
// raw tensor records (student params, teacher params, center) in manifest
// order. The manifest stores names, shapes, the step counter, and the full
// config key/value snapshot with an FNV-1a hash for compatibility checks.
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t config_hash(const std::map<std::string, std::string>& kv) {
    std::string joined;
    for (const auto& [k, v] : kv) joined += k + "=" + v + "\n";
    return fnv1a(joined);
}

inline void save_checkpoint(const std::string& path, const ModelState& s,
                            const std::map<std::string, std::string>& config_kv) {
    nlohmann::json manifest;
    manifest["version"] = kCheckpointVersion;
    manifest["step"] = s.step;
    manifest["config"] = config_kv;
    manifest["config_hash"] = config_hash(config_kv);
    nlohmann::json names = nlohmann::json::array();
    nlohmann::json shapes = nlohmann::json::array();
    const auto record = [&](const std::string& name, const Tensor& v) {
        names.push_back(name);
        shapes.push_back(v.shape);
    };
    for (std::size_t i = 0; i < s.student.count(); ++i)
        record("student." + s.student.names[i], s.student.values[i]);
    for (std::size_t i = 0; i < s.teacher.count(); ++i)
        record("teacher." + s.teacher.names[i], s.teacher.values[i]);
    record("center", s.center);
    record("center_d", s.center_d);
    manifest["names"] = names;
    manifest["shapes"] = shapes;

    const std::string mjson = manifest.dump();
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "checkpoint: cannot open " + path + " for writing");
    out.write("GLTC", 4);
    const std::uint32_t ver = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&ver), sizeof ver);
    const std::uint64_t mlen = mjson.size();
    out.write(reinterpret_cast<const char*>(&mlen), sizeof mlen);
    out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
    const auto dump_tensor = [&](const Tensor& v) {
        const std::string bytes = tensor_to_bytes(v);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };
    for (const auto& v : s.student.values) dump_tensor(v);
    for (const auto& v : s.teacher.values) dump_tensor(v);
    dump_tensor(s.center);
    dump_tensor(s.center_d);
    check(out.good(), "checkpoint: write failed for " + path);
}

// Restores parameters into a ModelState built from `cfg`; parameter names and
// shapes must agree with the file.
inline ModelState load_checkpoint(const std::string& path, const BackboneConfig& cfg,
                                  std::map<std::string, std::string>* config_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    check(in.gcount() == 4 && std::string(magic, 4) == "GLTC", "checkpoint: bad magic in " + path);
    std::uint32_t ver = 0;
    in.read(reinterpret_cast<char*>(&ver), sizeof ver);
    check(ver == kCheckpointVersion, "checkpoint: unsupported version");
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof mlen);
    check(mlen > 0 && mlen < (1ULL << 30), "checkpoint: implausible manifest length");
    std::string mjson(mlen, '\0');
    in.read(mjson.data(), static_cast<std::streamsize>(mlen));
    check(in.gcount() == static_cast<std::streamsize>(mlen), "checkpoint: truncated manifest");
    const nlohmann::json manifest = nlohmann::json::parse(mjson);

    const std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;

    Rng dummy(0);
    ModelState s;
    s.cfg = cfg;
    s.student = init_params(cfg, dummy);
    s.teacher = s.student;
    s.center = Tensor::zeros({1, cfg.prototypes});
    s.center_d = Tensor::zeros({1, cfg.prototypes});
    s.step = manifest.at("step").get<std::uint64_t>();
    if (config_out) *config_out = manifest.at("config").get<std::map<std::string, std::string>>();

    const auto& names = manifest.at("names");
    const std::size_t expected = s.student.count() + s.teacher.count() + 2;
    check(names.size() == expected, "checkpoint: parameter count mismatch");
    std::size_t ni = 0;
    const auto restore = [&](const std::string& want, Tensor& dst) {
        check(names[ni].get<std::string>() == want, "checkpoint: parameter order mismatch at " + want);
        Tensor v = tensor_from_bytes(rest, pos);
        check(v.same_shape(dst), "checkpoint: shape mismatch for " + want);
        dst = std::move(v);
        ++ni;
    };
    for (std::size_t i = 0; i < s.student.count(); ++i)
        restore("student." + s.student.names[i], s.student.values[i]);
    for (std::size_t i = 0; i < s.teacher.count(); ++i)
        restore("teacher." + s.teacher.names[i], s.teacher.values[i]);
    restore("center", s.center);
    restore("center_d", s.center_d);
    check(pos == rest.size(), "checkpoint: trailing bytes in " + path);
    return s;
}

}  // namespace gltd
