#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "gltd/common.hpp"
#include "gltd/rng.hpp"

namespace gltd {

// Dense row-major tensor of 64-bit floats. Plain value type: copyable,
// immutable by convention once handed to a tape.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, double v) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }

    static Tensor scalar(double v) {
        Tensor t({1, 1});
        t.data[0] = v;
        return t;
    }

    static Tensor matrix(std::size_t r, std::size_t c, std::initializer_list<double> vals) {
        Tensor t({r, c});
        check(vals.size() == t.data.size(), "Tensor::matrix: initializer size mismatch");
        std::copy(vals.begin(), vals.end(), t.data.begin());
        return t;
    }

    static Tensor row(std::initializer_list<double> vals) {
        Tensor t({1, vals.size()});
        std::copy(vals.begin(), vals.end(), t.data.begin());
        return t;
    }

    static Tensor randn(std::vector<std::size_t> s, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = rng.normal(0.0, stddev);
        return t;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const {
        check(rank() == 2, "Tensor::rows: not a matrix");
        return shape[0];
    }
    std::size_t cols() const {
        check(rank() == 2, "Tensor::cols: not a matrix");
        return shape[1];
    }

    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    double scalar_value() const {
        check(numel() == 1, "Tensor::scalar_value: not a scalar");
        return data[0];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void ensure_finite(const Tensor& t, const std::string& what) {
    if (!t.all_finite()) throw Error(std::string("non-finite values in ") + what);
}

// ---- matrix kernels ------------------------------------------------------
// Row-major, k-inner accumulation over C's rows so the compiler can
// vectorize the innermost loop.

inline Tensor mm(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2, "mm: operands must be matrices");
    check(a.cols() == b.rows(), "mm: inner dimensions disagree");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = pc + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double aik = pa[i * k + l];
            const double* brow = pb + l * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * brow[j];
        }
    }
    return c;
}

// a · bᵀ
inline Tensor mm_nt(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2, "mm_nt: operands must be matrices");
    check(a.cols() == b.cols(), "mm_nt: inner dimensions disagree");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.data.data() + i * k;
        double* ci = c.data.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b.data.data() + j * k;
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s += ai[l] * bj[l];
            ci[j] = s;
        }
    }
    return c;
}

// aᵀ · b
inline Tensor mm_tn(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2, "mm_tn: operands must be matrices");
    check(a.rows() == b.rows(), "mm_tn: inner dimensions disagree");
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    Tensor c({m, n});
    for (std::size_t l = 0; l < k; ++l) {
        const double* al = a.data.data() + l * m;
        const double* bl = b.data.data() + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double ali = al[i];
            double* ci = c.data.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += ali * bl[j];
        }
    }
    return c;
}

// ---- raw tensor file format ----------------------------------------------
// Magic "GLTD", u32 version=1, u32 rank, u64 dims[rank], little-endian f64
// payload. All multi-byte integers little-endian.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline std::string tensor_to_bytes(const Tensor& t) {
    std::string out;
    out.reserve(16 + 8 * t.rank() + 8 * t.numel());
    out += "GLTD";
    detail::put_u32(out, 1u);
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) detail::put_u64(out, static_cast<std::uint64_t>(d));
    for (double v : t.data) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

// Parses one tensor record starting at `pos`; advances `pos` past it.
inline Tensor tensor_from_bytes(const std::string& bytes, std::size_t& pos) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();
    check_config(pos + 12 <= n && std::memcmp(p + pos, "GLTD", 4) == 0,
                 "tensor record: bad magic");
    check_config(detail::get_u32(p + pos + 4) == 1u, "tensor record: unsupported version");
    const std::uint32_t rank = detail::get_u32(p + pos + 8);
    check_config(rank <= 8, "tensor record: implausible rank");
    std::size_t off = pos + 12;
    check_config(off + 8ull * rank <= n, "tensor record: truncated dims");
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<std::size_t>(detail::get_u64(p + off));
        off += 8;
    }
    Tensor t(shape);
    check_config(off + 8 * t.numel() <= n, "tensor record: truncated payload");
    for (auto& v : t.data) {
        v = std::bit_cast<double>(detail::get_u64(p + off));
        off += 8;
    }
    pos = off;
    check_config(t.all_finite(), "tensor record: non-finite payload");
    return t;
}

inline void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), "cannot open for writing: " + path.string());
    const std::string bytes = tensor_to_bytes(t);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    check(f.good(), "write failed: " + path.string());
}

inline Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    check_config(f.good(), "cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    Tensor t = tensor_from_bytes(bytes, pos);
    check_config(pos == bytes.size(), "trailing bytes in tensor file: " + path.string());
    return t;
}

}  // namespace gltd
