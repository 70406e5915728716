#pragma once

// Orthogonal Layer: (semi-)orthogonal projections built from a skew-symmetric
// parameter through the Cayley transform or the matrix exponential.

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>

#include "comevl/linalg.hpp"
#include "comevl/ops.hpp"

namespace comevl {

enum class OrthoMethod { cayley, expm };

inline const char* to_string(OrthoMethod m) { return m == OrthoMethod::cayley ? "cayley" : "expm"; }

inline OrthoMethod parse_ortho_method(const std::string& s) {
    if (s == "cayley") return OrthoMethod::cayley;
    if (s == "expm") return OrthoMethod::expm;
    fail(ErrorKind::config, "unknown orthogonal method '" + s + "' (expected cayley or expm)");
}

/// (W - W^T) / 2
inline Tensor skew_project(const Tensor& w) {
    require(w.is_square(), ErrorKind::invalid_shape, "skew_project needs a square matrix, got " + shape_string(w.shape()));
    const std::size_t n = w.rows();
    Tensor a({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (w(i, j) - w(j, i));
    return a;
}

/// Q = (I + A/2)(I - A/2)^{-1}. The two factors commute, so Q is obtained from
/// the single linear solve (I - A/2) Q = (I + A/2).
inline Tensor cayley(const Tensor& a) {
    require(a.is_square(), ErrorKind::invalid_shape, "cayley needs a square matrix");
    require_finite(a, "cayley parameter");
    const std::size_t n = a.rows();
    Tensor plus = Tensor::identity(n), minus = Tensor::identity(n);
    for (std::size_t i = 0; i < a.size(); ++i) {
        plus[i] += 0.5 * a[i];
        minus[i] -= 0.5 * a[i];
    }
    return LuFactorization(minus).solve(plus);
}

inline double one_norm(const Tensor& a) {
    double best = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < a.rows(); ++r) s += std::abs(a(r, c));
        best = std::max(best, s);
    }
    return best;
}

/// Scaling and squaring around a truncated Taylor series. The argument is
/// scaled to 1-norm <= 1/4, where 24 terms are far below double precision.
inline Tensor expm_skew(const Tensor& a) {
    require(a.is_square(), ErrorKind::invalid_shape, "expm needs a square matrix");
    require_finite(a, "expm parameter");
    const std::size_t n = a.rows();
    const double norm = one_norm(a);
    int squarings = 0;
    if (norm > 0.25) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.25)));
    require(squarings <= 64, ErrorKind::invalid_value,
            "expm parameter norm too large (" + std::to_string(squarings) + " squarings needed)");
    const Tensor b = scale(a, std::ldexp(1.0, -squarings));

    Tensor result = Tensor::identity(n);
    Tensor term = Tensor::identity(n);
    for (int k = 1; k <= 24; ++k) {
        term = scale(matmul(term, b), 1.0 / k);
        result = add(result, term);
        if (frobenius_norm(term) < 1e-20) break;
    }
    for (int s = 0; s < squarings; ++s) result = matmul(result, result);
    return result;
}

/// One projection z = Q h with Q in R^{d_out x d_in}. The raw parameter is a
/// square matrix of side max(d_in, d_out); its skew part generates a square
/// orthogonal matrix whose leading d_out x d_in block is Q.
class OrthoLayer {
public:
    OrthoLayer(std::size_t d_in, std::size_t d_out, Tensor raw, OrthoMethod method = OrthoMethod::cayley)
        : d_in_(d_in), d_out_(d_out), method_(method), raw_(std::move(raw)), cache_(std::make_shared<Cache>()) {
        require(d_in_ >= 1 && d_out_ >= 1, ErrorKind::invalid_shape, "orthogonal layer widths must be >= 1");
        require(raw_.is_square() && raw_.rows() == side(), ErrorKind::invalid_shape,
                "orthogonal layer parameter must be " + std::to_string(side()) + "x" + std::to_string(side()) +
                    ", got " + shape_string(raw_.shape()));
        require_finite(raw_, "orthogonal layer parameter");
        skew_ = skew_project(raw_);
    }

    /// A = 0, so Q is the leading block of the identity.
    static OrthoLayer identity(std::size_t d_in, std::size_t d_out, OrthoMethod method = OrthoMethod::cayley) {
        const std::size_t s = std::max(d_in, d_out);
        return OrthoLayer(d_in, d_out, Tensor({s, s}), method);
    }

    std::size_t d_in() const noexcept { return d_in_; }
    std::size_t d_out() const noexcept { return d_out_; }
    std::size_t side() const noexcept { return std::max(d_in_, d_out_); }
    OrthoMethod method() const noexcept { return method_; }
    const Tensor& raw() const noexcept { return raw_; }
    const Tensor& skew() const noexcept { return skew_; }

    /// Materialized d_out x d_in projection, computed once.
    const Tensor& matrix() const {
        std::call_once(cache_->once, [this] {
            const Tensor full = method_ == OrthoMethod::cayley ? cayley(skew_) : expm_skew(skew_);
            cache_->q = leading_block(full, d_out_, d_in_);
        });
        return cache_->q;
    }

private:
    struct Cache {
        std::once_flag once;
        Tensor q;
    };

    std::size_t d_in_;
    std::size_t d_out_;
    OrthoMethod method_;
    Tensor raw_;
    Tensor skew_;
    std::shared_ptr<Cache> cache_;
};

inline Tensor materialize(const OrthoLayer& layer) { return layer.matrix(); }

/// Row-vector convention: out = Z Q^T, (T x d_in) -> (T x d_out).
inline Tensor apply_ol(const OrthoLayer& layer, const Tensor& z) {
    require_matrix(z, "orthogonal layer input");
    require(z.cols() == layer.d_in(), ErrorKind::invalid_shape,
            "orthogonal layer expects width " + std::to_string(layer.d_in()) + ", got " + std::to_string(z.cols()));
    return matmul_nt(z, layer.matrix());
}

/// ||Q^T Q - I_d||_F when d_out >= d_in, else ||Q Q^T - I_m||_F.
inline double orthogonality_defect(const Tensor& q) {
    require_matrix(q, "orthogonality_defect operand");
    const Tensor gram = q.rows() >= q.cols() ? matmul(transpose(q), q) : matmul_nt(q, q);
    return frobenius_distance(gram, Tensor::identity(gram.rows()));
}

}  // namespace comevl
