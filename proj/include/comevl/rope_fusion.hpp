#pragma once

// Geometry-aware fusion of two encoders: 2-D rotary position encoding,
// SigLIP-query / DINO-key cross-attention, the tanh-gated residual, the
// projection connector, and the attention cost model.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "comevl/entropy_select.hpp"
#include "comevl/ops.hpp"
#include "comevl/parallel.hpp"

namespace comevl {

struct Position {
    double x = 0.0;
    double y = 0.0;
};

/// One position per token. A leading class token sits at (0, 0) and is not
/// rotated.
struct GridPositions {
    std::vector<Position> positions;
    bool class_token = false;

    std::size_t size() const { return positions.size(); }
};

/// Cell centres in the unit square: token (r, c) -> ((c + .5)/cols, (r + .5)/rows).
inline GridPositions grid_positions(std::size_t rows, std::size_t cols, bool class_token = false) {
    require(rows >= 1 && cols >= 1, ErrorKind::invalid_shape, "grid_positions needs rows, cols >= 1");
    GridPositions g;
    g.class_token = class_token;
    g.positions.reserve(rows * cols + (class_token ? 1 : 0));
    if (class_token) g.positions.push_back({0.0, 0.0});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            g.positions.push_back({(static_cast<double>(c) + 0.5) / static_cast<double>(cols),
                                   (static_cast<double>(r) + 0.5) / static_cast<double>(rows)});
    return g;
}

inline GridPositions grid_positions(const TokenGrid& g) {
    return grid_positions(g.rows(), g.cols(), g.has_class_token());
}

inline constexpr double default_rope_base = 10000.0;
inline constexpr double default_rope_scale = 2.0 * std::numbers::pi;

/// Angle of channel pair j (0-based within one half of width `half`).
inline double rope_angle(double coordinate, std::size_t pair, std::size_t half, double base, double scale) {
    return scale * coordinate / std::pow(base, 2.0 * static_cast<double>(pair) / static_cast<double>(half));
}

/// Axial 2-D RoPE: channels [0, d/2) rotate in pairs by x, [d/2, d) by y.
inline Tensor rope2d(const Tensor& tokens, const GridPositions& pos, double base = default_rope_base,
                     double scale = default_rope_scale) {
    require_matrix(tokens, "rope2d input");
    const std::size_t d = tokens.cols();
    require(d % 4 == 0 && d > 0, ErrorKind::invalid_shape,
            "rope2d head width must be divisible by 4, got " + std::to_string(d));
    require(pos.size() == tokens.rows(), ErrorKind::invalid_shape,
            "rope2d: " + std::to_string(pos.size()) + " positions for " + std::to_string(tokens.rows()) + " tokens");
    require(base > 0.0 && std::isfinite(base) && std::isfinite(scale), ErrorKind::invalid_value,
            "rope2d base must be positive and finite");
    const std::size_t half = d / 2;
    Tensor out = tokens;
    for (std::size_t t = pos.class_token ? 1 : 0; t < tokens.rows(); ++t) {
        auto row = out.row(t);
        for (std::size_t axis = 0; axis < 2; ++axis) {
            const double coord = axis == 0 ? pos.positions[t].x : pos.positions[t].y;
            for (std::size_t j = 0; j < half / 2; ++j) {
                const double theta = rope_angle(coord, j, half, base, scale);
                const double c = std::cos(theta), s = std::sin(theta);
                double& a = row[axis * half + 2 * j];
                double& b = row[axis * half + 2 * j + 1];
                const double a0 = a, b0 = b;
                a = a0 * c - b0 * s;
                b = a0 * s + b0 * c;
            }
        }
    }
    return out;
}

/// Cross-attention and gate parameters. Projections act on row vectors:
/// Q = X W_Q with W_Q of shape (d_query, heads * d_h). `w_out` maps the
/// concatenated heads back to the query width; when empty the concatenation
/// is returned as is (heads * d_h must then equal the query width).
struct FusionParams {
    Tensor w_q;
    Tensor w_k;
    Tensor w_v;
    Tensor w_out;
    std::size_t heads = 1;
    std::size_t d_h = 4;
    double gamma = 0.0;
    double rope_base = default_rope_base;
    double rope_scale = default_rope_scale;
    bool pool = true;

    std::size_t inner_width() const { return heads * d_h; }
    bool has_output_merge() const { return !w_out.empty(); }

    void validate(std::size_t d_query, std::size_t d_kv) const {
        require(heads >= 1, ErrorKind::invalid_value, "heads must be >= 1");
        require(d_h % 2 == 0 && d_h > 0, ErrorKind::invalid_shape, "d_h must be even");
        require(std::isfinite(gamma), ErrorKind::invalid_value, "gamma must be finite");
        const std::size_t inner = inner_width();
        auto check = [&](const Tensor& w, std::size_t in, const char* name) {
            require(w.is_matrix() && w.rows() == in && w.cols() == inner, ErrorKind::invalid_shape,
                    std::string(name) + " must be " + std::to_string(in) + "x" + std::to_string(inner) + ", got " +
                        shape_string(w.shape()));
            require_finite(w, name);
        };
        check(w_q, d_query, "W_Q");
        check(w_k, d_kv, "W_K");
        check(w_v, d_kv, "W_V");
        if (has_output_merge()) {
            require(w_out.is_matrix() && w_out.rows() == inner && w_out.cols() == d_query, ErrorKind::invalid_shape,
                    "W_out must be " + std::to_string(inner) + "x" + std::to_string(d_query) + ", got " +
                        shape_string(w_out.shape()));
            require_finite(w_out, "W_out");
        } else {
            require(inner == d_query, ErrorKind::invalid_shape,
                    "without W_out, heads * d_h (" + std::to_string(inner) + ") must equal the query width (" +
                        std::to_string(d_query) + ")");
        }
    }
};

/// Intermediate values of one cross-attention evaluation, per head.
struct AttentionTrace {
    Tensor queries;  // RoPE(X_q W_Q), (N_q, heads * d_h)
    Tensor keys;     // RoPE(X_kv W_K)
    Tensor values;   // X_kv W_V
    std::vector<Tensor> probabilities;  // per head, (N_q, N_kv)
    Tensor concat;   // heads concatenated, before W_out
};

/// Applies RoPE to each head's slice of a projected tensor.
inline Tensor rope_heads(const Tensor& projected, const GridPositions& pos, const FusionParams& p) {
    Tensor out({projected.rows(), projected.cols()});
    for (std::size_t h = 0; h < p.heads; ++h)
        assign_cols(out, h * p.d_h, rope2d(slice_cols(projected, h * p.d_h, p.d_h), pos, p.rope_base, p.rope_scale));
    return out;
}

/// LN on both streams, RoPE on queries and keys, scaled dot-product attention
/// per head, heads concatenated and merged by W_out.
inline Tensor cross_attention(const Tensor& query_tokens, const GridPositions& query_pos, const Tensor& kv_tokens,
                              const GridPositions& kv_pos, const FusionParams& p,
                              double ln_epsilon = default_ln_epsilon, AttentionTrace* trace = nullptr) {
    require_matrix(query_tokens, "query tokens");
    require_matrix(kv_tokens, "key/value tokens");
    require_finite(query_tokens, "query tokens");
    require_finite(kv_tokens, "key/value tokens");
    p.validate(query_tokens.cols(), kv_tokens.cols());
    require(p.d_h % 4 == 0, ErrorKind::invalid_shape, "d_h must be divisible by 4 for 2-D RoPE");
    require(query_pos.size() == query_tokens.rows() && kv_pos.size() == kv_tokens.rows(), ErrorKind::invalid_shape,
            "position count differs from token count");

    const Tensor xq = layer_norm(query_tokens, ln_epsilon);
    const Tensor xkv = layer_norm(kv_tokens, ln_epsilon);
    const Tensor q = rope_heads(matmul(xq, p.w_q), query_pos, p);
    const Tensor k = rope_heads(matmul(xkv, p.w_k), kv_pos, p);
    const Tensor v = matmul(xkv, p.w_v);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.d_h));

    std::vector<Tensor> probs(p.heads), head_out(p.heads);
    parallel_for(p.heads, [&](std::size_t h) {
        const Tensor qh = slice_cols(q, h * p.d_h, p.d_h);
        const Tensor kh = slice_cols(k, h * p.d_h, p.d_h);
        probs[h] = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
        head_out[h] = matmul(probs[h], slice_cols(v, h * p.d_h, p.d_h));
    });
    Tensor concat({query_tokens.rows(), p.inner_width()});
    for (std::size_t h = 0; h < p.heads; ++h) assign_cols(concat, h * p.d_h, head_out[h]);
    Tensor out = p.has_output_merge() ? matmul(concat, p.w_out) : concat;
    if (trace) *trace = AttentionTrace{q, k, v, std::move(probs), std::move(concat)};
    return out;
}

/// SigLIP-grid queries attend to DINO-grid keys/values; one output row per query.
inline Tensor cross_attention(const TokenGrid& v_sig, const TokenGrid& v_dino, const FusionParams& p,
                              double ln_epsilon = default_ln_epsilon, AttentionTrace* trace = nullptr) {
    return cross_attention(v_sig.tokens(), grid_positions(v_sig), v_dino.tokens(), grid_positions(v_dino), p,
                           ln_epsilon, trace);
}

/// V_sig + tanh(gamma) * attn_out. A closed gate returns V_sig untouched.
inline Tensor gated_fuse(const Tensor& v_sig, const Tensor& attn_out, double gamma) {
    require_same_shape(v_sig, attn_out, "gated_fuse");
    require(std::isfinite(gamma), ErrorKind::invalid_value, "gamma must be finite");
    const double g = std::tanh(gamma);
    if (g == 0.0) return v_sig;
    return axpy(v_sig, g, attn_out);
}

/// Connector projection to the language-model width: X W, or
/// gelu(X W_in) W with one hidden layer. No matrices means identity.
struct Projection {
    Tensor w_in;  // optional hidden layer (d, hidden)
    Tensor w;     // (d or hidden, d_llm)

    bool is_identity() const { return w.empty(); }
    bool has_hidden() const { return !w_in.empty(); }

    Tensor hidden_pre(const Tensor& x) const { return matmul(x, w_in); }

    Tensor apply(const Tensor& x) const {
        if (is_identity()) {
            require(!has_hidden(), ErrorKind::invalid_shape, "projection hidden layer without output matrix");
            return x;
        }
        if (!has_hidden()) return matmul(x, w);
        Tensor h = hidden_pre(x);
        for (double& v : h.data()) v = gelu(v);
        return matmul(h, w);
    }
};

struct EncoderBranch {
    LayerSelection selection;
    MixingWeights mixing;
    std::vector<OrthoLayer> ols;
};

struct ConnectorParams {
    EncoderBranch sig;
    EncoderBranch dino;
    FusionParams fusion;
    Projection projection;
    double ln_epsilon = default_ln_epsilon;
};

struct ConnectorOutput {
    TokenGrid v_sig;   // aggregated SigLIP tokens (queries)
    TokenGrid v_dino;  // aggregated DINO tokens after optional pooling
    Tensor attn_out;
    Tensor fused;      // gated residual, pre-projection
    Tensor projected;  // (N_s, d_llm)
};

/// aggregate(sig), aggregate(dino) -> [pool2x2 dino] -> cross_attention ->
/// gated_fuse -> projection. Failures carry the stage name.
inline ConnectorOutput connector_forward(const LayerStack& sig_stack, const LayerStack& dino_stack,
                                         const ConnectorParams& cp) {
    AggregateOptions opt;
    opt.ln_epsilon = cp.ln_epsilon;
    ConnectorOutput out;
    out.v_sig = with_context("aggregate_sig", [&] {
        return aggregate(sig_stack, cp.sig.selection, cp.sig.mixing, cp.sig.ols, opt);
    });
    out.v_dino = with_context("aggregate_dino", [&] {
        return aggregate(dino_stack, cp.dino.selection, cp.dino.mixing, cp.dino.ols, opt);
    });
    if (cp.fusion.pool) out.v_dino = with_context("pool", [&] { return pool2x2(out.v_dino); });
    out.attn_out = with_context("cross_attention", [&] {
        return cross_attention(out.v_sig, out.v_dino, cp.fusion, cp.ln_epsilon);
    });
    out.fused = with_context("gated_fuse", [&] {
        return gated_fuse(out.v_sig.tokens(), out.attn_out, cp.fusion.gamma);
    });
    out.projected = with_context("projection", [&] { return cp.projection.apply(out.fused); });
    return out;
}

struct AttentionCost {
    std::uint64_t concat_cost;
    std::uint64_t cross_cost;
    double ratio;
};

/// Self-attention over [text; visual] costs (Nt + Nv)^2; cross-attention from
/// text queries to visual memory costs Nt * Nv.
inline AttentionCost attention_cost(std::uint64_t n_text, std::uint64_t n_vis) {
    require(n_text > 0 && n_vis > 0, ErrorKind::invalid_value, "attention_cost needs positive token counts");
    require(n_text < (std::uint64_t{1} << 31) && n_vis < (std::uint64_t{1} << 31), ErrorKind::invalid_value,
            "token counts too large");
    const std::uint64_t total = n_text + n_vis;
    const std::uint64_t concat = total * total;
    const std::uint64_t cross = n_text * n_vis;
    return {concat, cross, static_cast<double>(concat) / static_cast<double>(cross)};
}

}  // namespace comevl
