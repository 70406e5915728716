#pragma once

// Layer-wise attention rollout: head-mean fusion, discard-ratio pruning that
// keeps class-token links, chaining, and class-to-patch heatmaps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "comevl/ops.hpp"

namespace comevl::rollout {

/// Per-head self-attention of one layer, shape (heads, T, T); rows are
/// queries and index 0 is the class token.
class AttnLayer {
public:
    explicit AttnLayer(Tensor heads, double row_tolerance = 1e-6) : heads_(std::move(heads)) {
        require(heads_.rank() == 3 && heads_.extent(1) == heads_.extent(2), ErrorKind::invalid_shape,
                "attention layer must be (heads, T, T), got " + shape_string(heads_.shape()));
        require(heads_.extent(0) >= 1, ErrorKind::invalid_shape, "attention layer has zero heads");
        require(heads_.extent(1) >= 1, ErrorKind::invalid_shape, "attention layer has zero tokens");
        require_finite(heads_, "attention");
        const std::size_t t = token_count();
        for (std::size_t h = 0; h < head_count(); ++h) {
            for (std::size_t r = 0; r < t; ++r) {
                double s = 0.0;
                bool nonneg = true;
                for (std::size_t c = 0; c < t; ++c) {
                    const double v = heads_[(h * t + r) * t + c];
                    s += v;
                    nonneg = nonneg && v >= 0.0;
                }
                require(nonneg && std::abs(s - 1.0) <= row_tolerance, ErrorKind::invalid_value,
                        "attention head " + std::to_string(h) + " row " + std::to_string(r) +
                            " is not stochastic (sum " + std::to_string(s) + ")");
            }
        }
    }

    std::size_t head_count() const { return heads_.extent(0); }
    std::size_t token_count() const { return heads_.extent(1); }
    const Tensor& heads() const { return heads_; }
    Tensor head(std::size_t h) const { return heads_.slab(h); }

private:
    Tensor heads_;
};

/// Splits a (layers, heads, T, T) tensor into validated layers.
inline std::vector<AttnLayer> split_layers(const Tensor& all) {
    require(all.rank() == 4, ErrorKind::invalid_shape,
            "stacked attention must be (layers, heads, T, T), got " + shape_string(all.shape()));
    std::vector<AttnLayer> out;
    for (std::size_t l = 0; l < all.extent(0); ++l)
        out.push_back(with_context("attention layer " + std::to_string(l), [&] { return AttnLayer(all.slab(l)); }));
    return out;
}

enum class Mode { per_layer, chained };

struct RolloutConfig {
    double discard_ratio = 0.0;
    bool renormalize_rows = true;
    Mode mode = Mode::per_layer;
    /// Test hook: disable the 0.5 * (A + I) residual mixing.
    bool residual = true;

    void validate() const {
        require(discard_ratio >= 0.0 && discard_ratio < 1.0, ErrorKind::invalid_value,
                "discard ratio must lie in [0, 1)");
    }
};

inline Tensor head_mean(const AttnLayer& layer) {
    const std::size_t t = layer.token_count(), heads = layer.head_count();
    Tensor m({t, t});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < t * t; ++i) m[i] += layer.heads()[h * t * t + i];
    for (double& v : m.data()) v /= static_cast<double>(heads);
    return m;
}

/// Rescales rows to sum 1; an all-zero row becomes one-hot on the class column.
inline void renormalize_rows(Tensor& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        double s = 0.0;
        for (double v : row) s += v;
        if (s > 0.0) {
            for (double& v : row) v /= s;
        } else {
            std::fill(row.begin(), row.end(), 0.0);
            row[0] = 1.0;
        }
    }
}

/// Zeroes the floor(ratio * (T^2 - (2T - 1))) smallest entries outside row 0
/// and column 0, with a single global threshold (ties broken by position).
inline Tensor prune_discard(const Tensor& m, const RolloutConfig& cfg) {
    cfg.validate();
    require(m.is_square(), ErrorKind::invalid_shape, "prune_discard needs a square matrix");
    const std::size_t t = m.rows();
    Tensor out = m;
    std::vector<std::size_t> candidates;
    for (std::size_t r = 1; r < t; ++r)
        for (std::size_t c = 1; c < t; ++c) candidates.push_back(r * t + c);
    const auto count = static_cast<std::size_t>(std::floor(cfg.discard_ratio * static_cast<double>(candidates.size())));
    if (count > 0) {
        std::stable_sort(candidates.begin(), candidates.end(),
                         [&](std::size_t a, std::size_t b) { return m[a] < m[b]; });
        for (std::size_t i = 0; i < count; ++i) out[candidates[i]] = 0.0;
    }
    if (cfg.renormalize_rows) renormalize_rows(out);
    return out;
}

/// head_mean -> prune -> optional 0.5 * (A + I) for one layer.
inline Tensor prepare_layer(const AttnLayer& layer, const RolloutConfig& cfg) {
    Tensor a = prune_discard(head_mean(layer), cfg);
    if (cfg.residual) {
        for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += 1.0;
        a = scale(a, 0.5);
    }
    return a;
}

/// Per-layer mode processes layers[layer_index] alone; chained mode returns
/// A_k ... A_1 A_0 over layers[0..layer_index].
inline Tensor rollout(const std::vector<AttnLayer>& layers, const RolloutConfig& cfg, std::size_t layer_index) {
    cfg.validate();
    require(!layers.empty(), ErrorKind::invalid_value, "rollout of an empty chain");
    require(layer_index < layers.size(), ErrorKind::invalid_value,
            "rollout layer index " + std::to_string(layer_index) + " beyond " + std::to_string(layers.size()) + " layers");
    const std::size_t t = layers.front().token_count();
    for (const auto& l : layers)
        require(l.token_count() == t, ErrorKind::invalid_shape, "attention layers disagree on token count");
    if (cfg.mode == Mode::per_layer) return prepare_layer(layers[layer_index], cfg);
    Tensor result = prepare_layer(layers[0], cfg);
    for (std::size_t l = 1; l <= layer_index; ++l) result = matmul(prepare_layer(layers[l], cfg), result);
    return result;
}

/// Class row over patch columns, min-max normalized (flat rows map to zero),
/// reshaped to rows x cols.
inline Tensor class_heatmap(const Tensor& r, std::size_t rows, std::size_t cols) {
    require(r.is_square() && r.rows() == rows * cols + 1, ErrorKind::invalid_shape,
            "rollout matrix " + shape_string(r.shape()) + " does not match a " + std::to_string(rows) + "x" +
                std::to_string(cols) + " grid plus class token");
    const auto cls = r.row(0).subspan(1);
    const auto [mn_it, mx_it] = std::minmax_element(cls.begin(), cls.end());
    const double mn = *mn_it, range = *mx_it - *mn_it;
    Tensor map({rows, cols});
    for (std::size_t i = 0; i < cls.size(); ++i) map[i] = range > 0.0 ? (cls[i] - mn) / range : 0.0;
    return map;
}

/// ASCII PGM (P2), maxval 255, pixel = round(255 * value).
inline std::string to_pgm(const Tensor& heatmap) {
    require_matrix(heatmap, "heatmap");
    std::string s = "P2\n" + std::to_string(heatmap.cols()) + " " + std::to_string(heatmap.rows()) + "\n255\n";
    for (std::size_t r = 0; r < heatmap.rows(); ++r) {
        for (std::size_t c = 0; c < heatmap.cols(); ++c) {
            if (c) s += ' ';
            s += std::to_string(static_cast<int>(std::lround(255.0 * std::clamp(heatmap(r, c), 0.0, 1.0))));
        }
        s += '\n';
    }
    return s;
}

}  // namespace comevl::rollout
