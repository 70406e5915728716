#pragma once

// Spatial entropy per encoder layer, entropy-band layer selection, softmax
// mixing weights and the LN -> OL -> weighted-sum aggregation of one encoder.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "comevl/ops.hpp"
#include "comevl/ortho.hpp"
#include "comevl/parallel.hpp"

namespace comevl {

/// Per-layer hidden states of one encoder. `attn`, when non-empty, holds one
/// (heads, T, T) tensor per layer with the class token at index 0.
struct LayerStack {
    std::string encoder_id;
    std::vector<TokenGrid> layers;
    std::vector<int> layer_indices;
    std::vector<Tensor> attn;

    void validate() const {
        require(!layers.empty(), ErrorKind::invalid_shape, encoder_id + ": empty layer stack");
        require(layer_indices.size() == layers.size(), ErrorKind::invalid_shape,
                encoder_id + ": layer index list length differs from layer count");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            require(layers[i].same_geometry(layers[0]) && layers[i].dim() == layers[0].dim(),
                    ErrorKind::invalid_shape, encoder_id + ": layer " + std::to_string(layer_indices[i]) +
                                                  " geometry differs from the first layer");
            if (i) require(layer_indices[i] > layer_indices[i - 1], ErrorKind::invalid_value,
                           encoder_id + ": layer indices must be strictly increasing");
        }
        require(attn.empty() || attn.size() == layers.size(), ErrorKind::invalid_shape,
                encoder_id + ": attention list length differs from layer count");
    }

    std::size_t position_of(int layer_index) const {
        const auto it = std::find(layer_indices.begin(), layer_indices.end(), layer_index);
        require(it != layer_indices.end(), ErrorKind::invalid_value,
                encoder_id + ": layer " + std::to_string(layer_index) + " not in stack");
        return static_cast<std::size_t>(it - layer_indices.begin());
    }
};

enum class MassSource { activation_norm, attention_mass };

inline MassSource parse_mass_source(const std::string& s) {
    if (s == "activation_norm") return MassSource::activation_norm;
    if (s == "attention_mass") return MassSource::attention_mass;
    fail(ErrorKind::config, "unknown entropy source '" + s + "'");
}

/// Per-patch mass: L2 norm of each patch token, or (with attention) the
/// class-token row restricted to patch columns and averaged over heads.
inline std::vector<double> patch_mass(const TokenGrid& grid, MassSource source, const Tensor* attn = nullptr) {
    const std::size_t n = grid.patch_count();
    std::vector<double> mass(n, 0.0);
    if (source == MassSource::activation_norm) {
        for (std::size_t i = 0; i < n; ++i) mass[i] = norm2(grid.patch(i));
        return mass;
    }
    require(attn != nullptr, ErrorKind::invalid_value, "attention_mass entropy needs an attention tensor");
    require(attn->rank() == 3 && attn->extent(1) == n + 1 && attn->extent(2) == n + 1, ErrorKind::invalid_shape,
            "attention tensor must be (heads, N+1, N+1) with N = " + std::to_string(n) + ", got " +
                shape_string(attn->shape()));
    const std::size_t heads = attn->extent(0);
    require(heads >= 1, ErrorKind::invalid_shape, "attention tensor has zero heads");
    const std::size_t t = n + 1;
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < n; ++i) mass[i] += (*attn)[h * t * t + (i + 1)];
    for (double& m : mass) m /= static_cast<double>(heads);
    return mass;
}

/// Shannon entropy (nats) of a non-negative mass vector after normalization.
inline double entropy_of_mass(const std::vector<double>& mass) {
    require(!mass.empty(), ErrorKind::invalid_shape, "entropy of empty mass");
    double total = 0.0;
    for (double m : mass) {
        require(std::isfinite(m) && m >= 0.0, ErrorKind::invalid_value, "mass must be finite and non-negative");
        total += m;
    }
    require(total > 0.0, ErrorKind::degenerate_distribution, "all-zero mass: entropy undefined");
    double h = 0.0;
    for (double m : mass) {
        if (m <= 0.0) continue;
        const double p = m / total;
        h -= p * std::log(p);
    }
    return std::clamp(h, 0.0, std::log(static_cast<double>(mass.size())));
}

inline double spatial_entropy(const TokenGrid& grid, MassSource source, const Tensor* attn = nullptr) {
    return entropy_of_mass(patch_mass(grid, source, attn));
}

struct EntropyProfile {
    std::vector<int> layer_indices;
    std::vector<double> entropy_nats;
};

inline EntropyProfile entropy_profile(const LayerStack& stack, MassSource source) {
    stack.validate();
    if (source == MassSource::attention_mass)
        require(!stack.attn.empty(), ErrorKind::invalid_value, stack.encoder_id + ": attention_mass needs attention");
    EntropyProfile p{stack.layer_indices, std::vector<double>(stack.layers.size())};
    parallel_for(stack.layers.size(), [&](std::size_t i) {
        p.entropy_nats[i] = with_context("layer " + std::to_string(stack.layer_indices[i]), [&] {
            return spatial_entropy(stack.layers[i], source, stack.attn.empty() ? nullptr : &stack.attn[i]);
        });
    });
    return p;
}

/// "layer,entropy_nats" CSV with six decimals.
inline std::string entropy_csv(const EntropyProfile& p) {
    std::string out = "layer,entropy_nats\n";
    char buf[64];
    for (std::size_t i = 0; i < p.layer_indices.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%d,%.6f\n", p.layer_indices[i], p.entropy_nats[i]);
        out += buf;
    }
    return out;
}

struct SelectionPolicy {
    bool explicit_list = false;
    double q_lo = 0.0;
    double q_hi = 1.0;
};

struct LayerSelection {
    std::string encoder_id;
    std::vector<int> selected;
    SelectionPolicy policy;
};

/// Linear-interpolation empirical quantile of `values` at q in [0, 1].
inline double empirical_quantile(std::vector<double> values, double q) {
    require(!values.empty(), ErrorKind::invalid_shape, "quantile of empty list");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return frac == 0.0 ? values[lo] : values[lo] + frac * (values[hi] - values[lo]);
}

/// Longest contiguous run of layers whose entropy falls inside the
/// [quantile(q_lo), quantile(q_hi)] band; equal-length runs resolve to the
/// deeper one.
inline LayerSelection select_layers(const EntropyProfile& profile, double q_lo, double q_hi,
                                    const std::string& encoder_id = {}) {
    require(0.0 <= q_lo && q_lo < q_hi && q_hi <= 1.0, ErrorKind::invalid_value,
            "quantile band must satisfy 0 <= q_lo < q_hi <= 1");
    const auto& h = profile.entropy_nats;
    require(!h.empty() && h.size() == profile.layer_indices.size(), ErrorKind::invalid_shape,
            "entropy profile is empty or inconsistent");
    const double lo = empirical_quantile(h, q_lo);
    const double hi = empirical_quantile(h, q_hi);

    std::size_t best_start = 0, best_len = 0;
    for (std::size_t i = 0; i < h.size();) {
        if (h[i] < lo || h[i] > hi) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < h.size() && h[j] >= lo && h[j] <= hi) ++j;
        if (j - i >= best_len) {
            best_start = i;
            best_len = j - i;
        }
        i = j;
    }
    require(best_len > 0, ErrorKind::no_layers_selected, "no layer entropy falls inside the quantile band");
    LayerSelection sel{encoder_id, {}, {false, q_lo, q_hi}};
    sel.selected.assign(profile.layer_indices.begin() + static_cast<std::ptrdiff_t>(best_start),
                        profile.layer_indices.begin() + static_cast<std::ptrdiff_t>(best_start + best_len));
    return sel;
}

/// Explicit index list, e.g. {11, ..., 24}; every index must exist in the stack.
inline LayerSelection select_explicit(const LayerStack& stack, std::vector<int> indices) {
    require(!indices.empty(), ErrorKind::no_layers_selected, stack.encoder_id + ": empty explicit layer list");
    for (int idx : indices) (void)stack.position_of(idx);
    for (std::size_t i = 1; i < indices.size(); ++i)
        require(indices[i] > indices[i - 1], ErrorKind::invalid_value,
                stack.encoder_id + ": explicit layer list must be strictly increasing");
    return {stack.encoder_id, std::move(indices), {true, 0.0, 1.0}};
}

inline LayerSelection select_all(const LayerStack& stack) { return select_explicit(stack, stack.layer_indices); }

struct MixingWeights {
    std::vector<double> logits;
    std::vector<double> weights;
};

inline MixingWeights mixing_weights(std::vector<double> logits) {
    auto w = softmax(logits);
    return {std::move(logits), std::move(w)};
}

inline MixingWeights mixing_weights(std::vector<double> logits, const LayerSelection& sel) {
    require(logits.size() == sel.selected.size(), ErrorKind::invalid_shape,
            "mixing logits count " + std::to_string(logits.size()) + " differs from selected layer count " +
                std::to_string(sel.selected.size()));
    return mixing_weights(std::move(logits));
}

/// Zero logits: uniform weights.
inline MixingWeights uniform_mixing(std::size_t k) { return mixing_weights(std::vector<double>(k, 0.0)); }

struct AggregateOptions {
    double ln_epsilon = default_ln_epsilon;
    /// Test hook: skip LN so inputs are fed to the orthogonal layers unchanged.
    bool apply_layer_norm = true;
};

/// OL_l(LN(Z^(l))) for every selected layer, in selection order.
inline std::vector<Tensor> project_layers(const LayerStack& stack, const LayerSelection& sel,
                                          const std::vector<OrthoLayer>& ols, const AggregateOptions& opt = {}) {
    stack.validate();
    require(ols.size() == sel.selected.size(), ErrorKind::invalid_shape,
            stack.encoder_id + ": need one orthogonal layer per selected layer (" +
                std::to_string(sel.selected.size()) + "), got " + std::to_string(ols.size()));
    for (const auto& ol : ols)
        require(ol.d_out() == ols.front().d_out(), ErrorKind::invalid_shape,
                stack.encoder_id + ": orthogonal layers disagree on output width");
    std::vector<Tensor> out(sel.selected.size());
    parallel_for(sel.selected.size(), [&](std::size_t i) {
        out[i] = with_context(stack.encoder_id + " layer " + std::to_string(sel.selected[i]), [&] {
            const Tensor& z = stack.layers[stack.position_of(sel.selected[i])].tokens();
            return apply_ol(ols[i], opt.apply_layer_norm ? layer_norm(z, opt.ln_epsilon) : z);
        });
    });
    return out;
}

/// Weighted sum in selection order.
inline Tensor weighted_sum(const std::vector<Tensor>& parts, const std::vector<double>& weights) {
    require(!parts.empty() && parts.size() == weights.size(), ErrorKind::invalid_shape,
            "weighted_sum needs one weight per part");
    Tensor acc = scale(parts[0], weights[0]);
    for (std::size_t i = 1; i < parts.size(); ++i) acc = axpy(acc, weights[i], parts[i]);
    return acc;
}

/// V_e = sum_l w_l * OL_l(LN(Z^(l))).
inline TokenGrid aggregate(const LayerStack& stack, const LayerSelection& sel, const MixingWeights& mw,
                           const std::vector<OrthoLayer>& ols, const AggregateOptions& opt = {}) {
    require(mw.weights.size() == sel.selected.size(), ErrorKind::invalid_shape,
            stack.encoder_id + ": mixing weight count differs from selected layer count");
    const auto parts = project_layers(stack, sel, ols, opt);
    const TokenGrid& geom = stack.layers.front();
    return TokenGrid(geom.rows(), geom.cols(), weighted_sum(parts, mw.weights), geom.has_class_token());
}

}  // namespace comevl
