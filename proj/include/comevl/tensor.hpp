#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "comevl/error.hpp"

namespace comevl {

using Shape = std::vector<std::size_t>;

/// Storage precision tag. Arithmetic is always carried out in double; the tag
/// only decides how a tensor is written to disk.
enum class DType : std::uint32_t { f32 = 0, f64 = 1 };

inline std::string shape_string(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

inline std::size_t shape_volume(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major n-dimensional array of doubles.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, DType dtype = DType::f64)
        : shape_(std::move(shape)), data_(shape_volume(shape_), 0.0), dtype_(dtype) {}

    Tensor(Shape shape, std::vector<double> data, DType dtype = DType::f64)
        : shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
        require(shape_volume(shape_) == data_.size(), ErrorKind::invalid_shape,
                "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                    shape_string(shape_));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            require(row.size() == c, ErrorKind::invalid_shape, "ragged matrix literal");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(data));
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    DType dtype() const noexcept { return dtype_; }

    Tensor with_dtype(DType dtype) const {
        Tensor t = *this;
        t.dtype_ = dtype;
        return t;
    }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // 2-D accessors; the tensor must be a matrix.
    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

    std::span<const double> row(std::size_t r) const {
        const std::size_t w = data_.size() / shape_.at(0);
        return std::span<const double>(data_).subspan(r * w, w);
    }
    std::span<double> row(std::size_t r) {
        const std::size_t w = data_.size() / shape_.at(0);
        return std::span<double>(data_).subspan(r * w, w);
    }

    bool is_matrix() const noexcept { return shape_.size() == 2; }
    bool is_square() const noexcept { return is_matrix() && shape_[0] == shape_[1]; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_, dtype_); }

    /// Slice along axis 0 of a rank >= 2 tensor, dropping that axis.
    Tensor slab(std::size_t index) const {
        require(rank() >= 2, ErrorKind::invalid_shape, "slab needs rank >= 2");
        require(index < shape_[0], ErrorKind::invalid_shape, "slab index out of range");
        Shape sub(shape_.begin() + 1, shape_.end());
        const std::size_t w = shape_volume(sub);
        std::vector<double> d(data_.begin() + static_cast<std::ptrdiff_t>(index * w),
                              data_.begin() + static_cast<std::ptrdiff_t>((index + 1) * w));
        return Tensor(std::move(sub), std::move(d), dtype_);
    }

    /// Value equality (shape and payload; the storage tag is ignored).
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
    DType dtype_ = DType::f64;
};

inline void require_matrix(const Tensor& t, const char* what) {
    require(t.is_matrix(), ErrorKind::invalid_shape,
            std::string(what) + " must be a matrix, got shape " + shape_string(t.shape()));
}

inline void require_finite(const Tensor& t, const char* what) {
    require(t.all_finite(), ErrorKind::invalid_value, std::string(what) + " contains NaN or Inf");
}

/// Patch tokens laid out on a rows x cols grid, optionally preceded by a
/// class token at row 0 of `tokens()`.
class TokenGrid {
public:
    TokenGrid() = default;

    TokenGrid(std::size_t rows, std::size_t cols, Tensor tokens, bool class_token = false)
        : rows_(rows), cols_(cols), tokens_(std::move(tokens)), class_token_(class_token) {
        require(rows_ >= 1 && cols_ >= 1, ErrorKind::invalid_shape, "token grid needs rows, cols >= 1");
        require_matrix(tokens_, "grid tokens");
        require(tokens_.cols() >= 1, ErrorKind::invalid_shape, "token grid needs dim >= 1");
        const std::size_t expected = rows_ * cols_ + (class_token_ ? 1 : 0);
        require(tokens_.rows() == expected, ErrorKind::invalid_shape,
                "grid " + std::to_string(rows_) + "x" + std::to_string(cols_) + " expects " +
                    std::to_string(expected) + " token rows, got " + std::to_string(tokens_.rows()));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t dim() const { return tokens_.cols(); }
    std::size_t patch_count() const noexcept { return rows_ * cols_; }
    std::size_t token_count() const noexcept { return patch_count() + (class_token_ ? 1 : 0); }
    bool has_class_token() const noexcept { return class_token_; }
    std::size_t patch_offset() const noexcept { return class_token_ ? 1 : 0; }

    const Tensor& tokens() const noexcept { return tokens_; }

    /// Patch token at grid cell (r, c).
    std::span<const double> patch(std::size_t r, std::size_t c) const {
        return tokens_.row(patch_offset() + r * cols_ + c);
    }
    std::span<const double> patch(std::size_t i) const { return tokens_.row(patch_offset() + i); }

    bool same_geometry(const TokenGrid& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && class_token_ == other.class_token_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Tensor tokens_;
    bool class_token_ = false;
};

}  // namespace comevl
