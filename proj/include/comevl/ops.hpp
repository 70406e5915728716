#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "comevl/tensor.hpp"

namespace comevl {

inline constexpr double default_ln_epsilon = 1e-6;

// ---------------------------------------------------------------------------
// Elementwise helpers
// ---------------------------------------------------------------------------

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    require(a.shape() == b.shape(), ErrorKind::invalid_shape,
            std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

/// a + s * b
inline Tensor axpy(const Tensor& a, double s, const Tensor& b) {
    require_same_shape(a, b, "axpy");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * b[i];
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Sum of elementwise products over all entries.
inline double inner(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "inner");
    return dot(a.data(), b.data());
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double frobenius_norm(const Tensor& a) { return norm2(a.data()); }

inline double frobenius_distance(const Tensor& a, const Tensor& b) { return frobenius_norm(sub(a, b)); }

inline double max_abs_difference(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_difference");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

inline Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose operand");
    Tensor out({a.cols(), a.rows()});
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

/// Standard product; each output entry sums over the inner index left to right.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul lhs");
    require_matrix(b, "matmul rhs");
    require(a.cols() == b.rows(), ErrorKind::invalid_shape,
            "matmul inner dimensions differ: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(p, j);
            out(i, j) = s;
        }
    }
    return out;
}

/// a * b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt lhs");
    require_matrix(b, "matmul_nt rhs");
    require(a.cols() == b.cols(), ErrorKind::invalid_shape,
            "matmul_nt width mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Tensor out({a.rows(), b.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    return out;
}

/// Columns [c0, c0 + n) of a matrix.
inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t n) {
    require_matrix(a, "slice_cols operand");
    require(c0 + n <= a.cols(), ErrorKind::invalid_shape, "column slice out of range");
    Tensor out({a.rows(), n});
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) out(r, c) = a(r, c0 + c);
    return out;
}

/// Top-left rows x cols block.
inline Tensor leading_block(const Tensor& a, std::size_t rows, std::size_t cols) {
    require_matrix(a, "leading_block operand");
    require(rows <= a.rows() && cols <= a.cols(), ErrorKind::invalid_shape, "block out of range");
    Tensor out({rows, cols});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = a(r, c);
    return out;
}

/// Writes `block` into columns [c0, c0 + block.cols()) of `dst`.
inline void assign_cols(Tensor& dst, std::size_t c0, const Tensor& block) {
    require(block.rows() == dst.rows() && c0 + block.cols() <= dst.cols(), ErrorKind::invalid_shape,
            "column assignment out of range");
    for (std::size_t r = 0; r < block.rows(); ++r)
        for (std::size_t c = 0; c < block.cols(); ++c) dst(r, c0 + c) = block(r, c);
}

// ---------------------------------------------------------------------------
// Neural primitives
// ---------------------------------------------------------------------------

/// Row-wise normalization without affine parameters:
/// out = (x - mean) / sqrt(var + epsilon), population variance.
inline Tensor layer_norm(const Tensor& x, double epsilon = default_ln_epsilon) {
    require_matrix(x, "layer_norm input");
    require(x.rows() >= 1 && x.cols() >= 1, ErrorKind::invalid_shape, "layer_norm on empty tensor");
    require(epsilon >= 0.0 && std::isfinite(epsilon), ErrorKind::invalid_value,
            "layer_norm epsilon must be finite and non-negative");
    const std::size_t d = x.cols();
    Tensor out({x.rows(), d});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto row = x.row(r);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double denom = std::sqrt(var + epsilon);
        require(denom > 0.0, ErrorKind::invalid_value,
                "layer_norm row " + std::to_string(r) + " is constant and epsilon is 0");
        auto o = out.row(r);
        for (std::size_t c = 0; c < d; ++c) o[c] = (row[c] - mean) / denom;
    }
    return out;
}

/// Max-subtracted softmax.
inline std::vector<double> softmax(std::span<const double> v) {
    require(!v.empty(), ErrorKind::invalid_shape, "softmax of empty vector");
    double mx = v[0];
    for (double x : v) {
        require(std::isfinite(x), ErrorKind::invalid_value, "softmax input is not finite");
        mx = std::max(mx, x);
    }
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (double& o : out) o /= sum;
    return out;
}

inline Tensor softmax_rows(const Tensor& x) {
    require_matrix(x, "softmax_rows input");
    Tensor out({x.rows(), x.cols()});
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto p = softmax(x.row(r));
        std::copy(p.begin(), p.end(), out.row(r).begin());
    }
    return out;
}

/// tanh-approximated GELU.
inline double gelu(double x) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

inline double gelu_derivative(double x) {
    constexpr double k = 0.7978845608028654;
    const double u = k * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * x * x);
}

/// Averages each 2x2 block of patch tokens; a class token passes through.
inline TokenGrid pool2x2(const TokenGrid& g) {
    require(g.rows() % 2 == 0 && g.cols() % 2 == 0, ErrorKind::invalid_shape,
            "pool2x2 needs even grid extents, got " + std::to_string(g.rows()) + "x" +
                std::to_string(g.cols()));
    const std::size_t pr = g.rows() / 2, pc = g.cols() / 2, d = g.dim();
    const std::size_t off = g.patch_offset();
    Tensor out({pr * pc + off, d});
    if (off) std::copy(g.tokens().row(0).begin(), g.tokens().row(0).end(), out.row(0).begin());
    for (std::size_t r = 0; r < pr; ++r) {
        for (std::size_t c = 0; c < pc; ++c) {
            auto o = out.row(off + r * pc + c);
            const auto t00 = g.patch(2 * r, 2 * c), t01 = g.patch(2 * r, 2 * c + 1);
            const auto t10 = g.patch(2 * r + 1, 2 * c), t11 = g.patch(2 * r + 1, 2 * c + 1);
            for (std::size_t k = 0; k < d; ++k) o[k] = ((t00[k] + t01[k]) + (t10[k] + t11[k])) / 4.0;
        }
    }
    return TokenGrid(pr, pc, std::move(out), g.has_class_token());
}

}  // namespace comevl
