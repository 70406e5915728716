#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "comevl/ops.hpp"

namespace comevl {

/// LU factorization with partial pivoting, P * M = L * U stored compactly.
class LuFactorization {
public:
    explicit LuFactorization(const Tensor& m) : lu_(m), pivot_(m.rows()) {
        require(m.is_square(), ErrorKind::invalid_shape, "LU needs a square matrix, got " + shape_string(m.shape()));
        require_finite(m, "LU operand");
        const std::size_t n = m.rows();
        for (std::size_t i = 0; i < n; ++i) pivot_[i] = i;
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t p = k;
            for (std::size_t i = k + 1; i < n; ++i)
                if (std::abs(lu_(i, k)) > std::abs(lu_(p, k))) p = i;
            require(lu_(p, k) != 0.0, ErrorKind::invalid_value, "matrix is singular");
            if (p != k) {
                for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
                std::swap(pivot_[k], pivot_[p]);
            }
            for (std::size_t i = k + 1; i < n; ++i) {
                const double f = lu_(i, k) / lu_(k, k);
                lu_(i, k) = f;
                for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= f * lu_(k, j);
            }
        }
    }

    std::size_t size() const { return lu_.rows(); }

    /// Solves M X = B for a matrix right-hand side.
    Tensor solve(const Tensor& b) const {
        const std::size_t n = size();
        require(b.is_matrix() && b.rows() == n, ErrorKind::invalid_shape, "LU solve rhs has wrong height");
        const std::size_t k = b.cols();
        Tensor x({n, k});
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<double> y(n);
            for (std::size_t i = 0; i < n; ++i) {
                double s = b(pivot_[i], c);
                for (std::size_t j = 0; j < i; ++j) s -= lu_(i, j) * y[j];
                y[i] = s;
            }
            for (std::size_t i = n; i-- > 0;) {
                double s = y[i];
                for (std::size_t j = i + 1; j < n; ++j) s -= lu_(i, j) * x(j, c);
                x(i, c) = s / lu_(i, i);
            }
        }
        return x;
    }

private:
    Tensor lu_;
    std::vector<std::size_t> pivot_;
};

/// B * M^{-1}, computed as the solve M^T X^T = B^T.
inline Tensor solve_right(const Tensor& m, const Tensor& b) {
    return transpose(LuFactorization(transpose(m)).solve(transpose(b)));
}

}  // namespace comevl
