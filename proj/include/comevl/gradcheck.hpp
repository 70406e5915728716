#pragma once

// Forward-mode derivatives (JVPs) of the learned pieces of the connector and
// a central finite-difference oracle to validate them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "comevl/entropy_select.hpp"
#include "comevl/ortho.hpp"
#include "comevl/random.hpp"
#include "comevl/rope_fusion.hpp"

namespace comevl::grad {

/// (f(x + h v) - f(x - h v)) / 2h
inline double fd_directional(const std::function<double(const Tensor&)>& f, const Tensor& x, const Tensor& v,
                             double h = 1e-5) {
    require(h > 0.0 && std::isfinite(h), ErrorKind::invalid_value, "finite-difference step must be positive");
    require_same_shape(x, v, "fd_directional");
    const double fp = f(axpy(x, h, v));
    const double fm = f(axpy(x, -h, v));
    require(std::isfinite(fp) && std::isfinite(fm), ErrorKind::invalid_value,
            "function is not finite at x +/- h v");
    return (fp - fm) / (2.0 * h);
}

/// d/dt sum_l softmax(s + t u)_l V_l = sum_l w_l (u_l - <w, u>) V_l
inline Tensor jvp_mixing(const std::vector<double>& logits, const std::vector<double>& direction,
                         const std::vector<Tensor>& projected) {
    require(direction.size() == logits.size() && projected.size() == logits.size(), ErrorKind::invalid_shape,
            "jvp_mixing: logits, direction and projected layers must have equal length");
    const auto w = softmax(logits);
    double mean = 0.0;
    for (std::size_t l = 0; l < w.size(); ++l) mean += w[l] * direction[l];
    std::vector<double> dw(w.size());
    for (std::size_t l = 0; l < w.size(); ++l) dw[l] = w[l] * (direction[l] - mean);
    return weighted_sum(projected, dw);
}

/// dQ = (E/2) M^{-1} + Q (E/2) M^{-1} with M = I - A/2.
inline Tensor jvp_cayley(const Tensor& a, const Tensor& e) {
    require(a.is_square() && e.shape() == a.shape(), ErrorKind::invalid_shape, "jvp_cayley: A and E must be square and equal-sized");
    const std::size_t n = a.rows();
    Tensor minus = Tensor::identity(n);
    for (std::size_t i = 0; i < a.size(); ++i) minus[i] -= 0.5 * a[i];
    const Tensor q = cayley(a);
    const Tensor half_e = scale(e, 0.5);
    return solve_right(minus, add(half_e, matmul(q, half_e)));
}

/// d/dt apply_ol for a Cayley layer whose raw parameter moves along `raw_direction`.
inline Tensor jvp_ortho_layer(const OrthoLayer& layer, const Tensor& z, const Tensor& raw_direction) {
    require(layer.method() == OrthoMethod::cayley, ErrorKind::invalid_value, "jvp_ortho_layer supports cayley only");
    const Tensor dq_full = jvp_cayley(layer.skew(), skew_project(raw_direction));
    return matmul_nt(z, leading_block(dq_full, layer.d_out(), layer.d_in()));
}

/// d/dgamma [V + tanh(gamma) X] along a scalar direction.
inline Tensor jvp_gate(double gamma, double direction, const Tensor& attn_out) {
    require(std::isfinite(gamma), ErrorKind::invalid_value, "gamma must be finite");
    const double t = std::tanh(gamma);
    return scale(attn_out, (1.0 - t * t) * direction);
}

/// Tangents of the cross-attention weights; empty tensors mean zero.
struct AttentionTangent {
    Tensor w_q, w_k, w_v, w_out;
};

/// Forward-mode derivative of cross_attention with respect to its weights.
inline Tensor jvp_cross_attention(const Tensor& query_tokens, const GridPositions& query_pos, const Tensor& kv_tokens,
                                  const GridPositions& kv_pos, const FusionParams& p, const AttentionTangent& dt,
                                  double ln_epsilon = default_ln_epsilon) {
    AttentionTrace tr;
    (void)cross_attention(query_tokens, query_pos, kv_tokens, kv_pos, p, ln_epsilon, &tr);
    const Tensor xq = layer_norm(query_tokens, ln_epsilon);
    const Tensor xkv = layer_norm(kv_tokens, ln_epsilon);
    auto tangent_or_zero = [](const Tensor& t, const Tensor& like) { return t.empty() ? Tensor(like.shape()) : t; };
    const Tensor dq = rope_heads(matmul(xq, tangent_or_zero(dt.w_q, p.w_q)), query_pos, p);
    const Tensor dk = rope_heads(matmul(xkv, tangent_or_zero(dt.w_k, p.w_k)), kv_pos, p);
    const Tensor dv = matmul(xkv, tangent_or_zero(dt.w_v, p.w_v));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.d_h));

    Tensor dconcat({query_tokens.rows(), p.inner_width()});
    for (std::size_t h = 0; h < p.heads; ++h) {
        const std::size_t c0 = h * p.d_h;
        const Tensor& prob = tr.probabilities[h];
        const Tensor ds = scale(add(matmul_nt(slice_cols(dq, c0, p.d_h), slice_cols(tr.keys, c0, p.d_h)),
                                    matmul_nt(slice_cols(tr.queries, c0, p.d_h), slice_cols(dk, c0, p.d_h))),
                                inv_sqrt);
        Tensor dp({prob.rows(), prob.cols()});
        for (std::size_t i = 0; i < prob.rows(); ++i) {
            const double m = dot(prob.row(i), ds.row(i));
            for (std::size_t j = 0; j < prob.cols(); ++j) dp(i, j) = prob(i, j) * (ds(i, j) - m);
        }
        assign_cols(dconcat, c0,
                    add(matmul(dp, slice_cols(tr.values, c0, p.d_h)), matmul(prob, slice_cols(dv, c0, p.d_h))));
    }
    if (!p.has_output_merge()) return dconcat;
    Tensor out = matmul(dconcat, p.w_out);
    if (!dt.w_out.empty()) out = add(out, matmul(tr.concat, dt.w_out));
    return out;
}

/// Derivative of Projection::apply along tangents of its matrices.
inline Tensor jvp_projection(const Projection& proj, const Tensor& x, const Tensor& dw_in, const Tensor& dw) {
    require(!proj.is_identity(), ErrorKind::invalid_value, "identity projection has no parameters");
    if (!proj.has_hidden()) return dw.empty() ? Tensor({x.rows(), proj.w.cols()}) : matmul(x, dw);
    const Tensor pre = proj.hidden_pre(x);
    Tensor act = pre;
    for (double& v : act.data()) v = gelu(v);
    Tensor dact({pre.rows(), pre.cols()});
    if (!dw_in.empty()) {
        const Tensor dpre = matmul(x, dw_in);
        for (std::size_t i = 0; i < pre.size(); ++i) dact[i] = gelu_derivative(pre[i]) * dpre[i];
    }
    Tensor out = matmul(dact, proj.w);
    if (!dw.empty()) out = add(out, matmul(act, dw));
    return out;
}

struct GradReport {
    std::string component;
    std::string param;
    double analytic = 0.0;
    double fd = 0.0;
    double rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline GradReport make_report(std::string component, std::string param, double analytic, double fd, double tol) {
    const double rel = std::abs(analytic - fd) / std::max(std::abs(fd), 1e-12);
    return {std::move(component), std::move(param), analytic, fd, rel, tol, rel <= tol};
}

struct SuiteOptions {
    std::uint64_t seed = 0;
    double step = 1e-5;
    std::size_t instances = 20;
    double tolerance = 1e-4;         // nonlinear maps
    double linear_tolerance = 1e-5;  // maps linear in the probed parameter
};

namespace detail {

inline Tensor random_skew(Rng& rng, std::size_t n, double stddev) {
    return skew_project(rng.normal_tensor({n, n}, stddev));
}

inline Tensor unit_direction(Rng& rng, Shape shape) {
    Tensor v = rng.normal_tensor(std::move(shape));
    return scale(v, 1.0 / std::max(frobenius_norm(v), 1e-300));
}

// Random probe with the component along `base` removed, so the scalarized map
// is zero at the base point and central differences do not cancel a large offset.
inline Tensor centered_probe(Rng& rng, const Tensor& base) {
    Tensor p = rng.normal_tensor(base.shape());
    const double bb = inner(base, base);
    if (bb > 0.0) p = sub(p, scale(base, inner(p, base) / bb));
    return p;
}

}  // namespace detail

/// Seeded JVP-versus-FD checks for every learned parameter family, ordered by
/// component name. Each check scalarizes tensor outputs with a fixed random probe.
inline std::vector<GradReport> gradcheck_suite(const SuiteOptions& opt = {}) {
    std::vector<GradReport> reports;
    const double h = opt.step;
    for (std::size_t inst = 0; inst < opt.instances; ++inst) {
        Rng rng(hash_key({opt.seed, inst}));

        // cayley: Q(A) along skew E
        {
            const std::size_t n = 2 + rng.index(15);
            const Tensor a = detail::random_skew(rng, n, 0.5);
            const Tensor e = detail::random_skew(rng, n, 1.0);
            const Tensor probe = rng.normal_tensor({n, n});
            const auto f = [&](const Tensor& x) { return inner(probe, cayley(x)); };
            reports.push_back(make_report("cayley", "A", inner(probe, jvp_cayley(a, e)),
                                          fd_directional(f, a, e, h), opt.tolerance));
        }

        // shared small attention instance
        const std::size_t heads = 1 + rng.index(2);
        const std::size_t d_h = rng.index(2) ? 8 : 4;
        const std::size_t inner_width = heads * d_h, widen = 1 + rng.index(2);
        const std::size_t d = inner_width * widen <= 16 ? inner_width * widen : inner_width;
        const std::size_t qr = 1 + rng.index(3), qc = 1 + rng.index(2);
        const std::size_t kr = 1 + rng.index(3), kc = 1 + rng.index(2);
        const Tensor xq = rng.normal_tensor({qr * qc, d});
        const Tensor xkv = rng.normal_tensor({kr * kc, d});
        const auto qpos = grid_positions(qr, qc), kpos = grid_positions(kr, kc);
        FusionParams base;
        base.heads = heads;
        base.d_h = d_h;
        const double ws = 1.0 / std::sqrt(static_cast<double>(d));
        base.w_q = rng.normal_tensor({d, heads * d_h}, ws);
        base.w_k = rng.normal_tensor({d, heads * d_h}, ws);
        base.w_v = rng.normal_tensor({d, heads * d_h}, ws);
        base.w_out = rng.normal_tensor({heads * d_h, d}, 1.0 / std::sqrt(static_cast<double>(heads * d_h)));
        base.gamma = rng.uniform(-1.0, 1.0);
        const Tensor probe_attn = rng.normal_tensor({qr * qc, d});

        {
            struct Item {
                const char* name;
                Tensor FusionParams::*member;
                Tensor AttentionTangent::*tangent;
                bool linear;
            };
            const Item items[] = {{"W_K", &FusionParams::w_k, &AttentionTangent::w_k, false},
                                  {"W_Q", &FusionParams::w_q, &AttentionTangent::w_q, false},
                                  {"W_V", &FusionParams::w_v, &AttentionTangent::w_v, true},
                                  {"W_out", &FusionParams::w_out, &AttentionTangent::w_out, true}};
            const Tensor y0 = cross_attention(xq, qpos, xkv, kpos, base);
            for (const auto& item : items) {
                const Tensor dir = detail::unit_direction(rng, (base.*item.member).shape());
                const Tensor probe = item.linear ? detail::centered_probe(rng, y0) : probe_attn;
                AttentionTangent tangent;
                tangent.*item.tangent = dir;
                const double analytic =
                    inner(probe, jvp_cross_attention(xq, qpos, xkv, kpos, base, tangent));
                const auto f = [&](const Tensor& w) {
                    FusionParams p = base;
                    p.*item.member = w;
                    return inner(probe, cross_attention(xq, qpos, xkv, kpos, p));
                };
                reports.push_back(make_report("cross_attention", item.name, analytic,
                                              fd_directional(f, base.*item.member, dir, h),
                                              item.linear ? opt.linear_tolerance : opt.tolerance));
            }
        }

        // gate: d/dgamma of V + tanh(gamma) X
        {
            const Tensor attn_out = rng.normal_tensor({qr * qc, d});
            const Tensor v_sig = rng.normal_tensor({qr * qc, d});
            const double gamma = rng.uniform(-2.0, 2.0);
            const auto f = [&](const Tensor& g) { return inner(probe_attn, gated_fuse(v_sig, attn_out, g[0])); };
            const Tensor g0({1}, {gamma});
            const Tensor one({1}, {1.0});
            reports.push_back(make_report("gate", "gamma", inner(probe_attn, jvp_gate(gamma, 1.0, attn_out)),
                                          fd_directional(f, g0, one, h), opt.tolerance));
        }

        // mixing logits over projected layers
        {
            const std::size_t k = 2 + rng.index(5);
            std::vector<Tensor> parts;
            for (std::size_t l = 0; l < k; ++l) parts.push_back(rng.normal_tensor({qr * qc, d}));
            Tensor logits({k});
            for (double& v : logits.data()) v = rng.normal();
            const Tensor dir = detail::unit_direction(rng, {k});
            const std::vector<double> lv(logits.data().begin(), logits.data().end());
            const std::vector<double> dv(dir.data().begin(), dir.data().end());
            const auto f = [&](const Tensor& s) {
                return inner(probe_attn, weighted_sum(parts, softmax(s.data())));
            };
            reports.push_back(make_report("mixing", "logits", inner(probe_attn, jvp_mixing(lv, dv, parts)),
                                          fd_directional(f, logits, dir, h), opt.tolerance));
        }

        // orthogonal layer raw parameter (semi-orthogonal slice)
        {
            const std::size_t d_in = 2 + rng.index(11), d_out = 2 + rng.index(11);
            const std::size_t side = std::max(d_in, d_out);
            const Tensor raw = rng.normal_tensor({side, side}, 0.5);
            const Tensor dir = detail::unit_direction(rng, {side, side});
            const std::size_t tokens = 1 + rng.index(8);
            const Tensor z = rng.normal_tensor({tokens, d_in});
            const Tensor probe = rng.normal_tensor({tokens, d_out});
            const OrthoLayer layer(d_in, d_out, raw);
            const auto f = [&](const Tensor& r) { return inner(probe, apply_ol(OrthoLayer(d_in, d_out, r), z)); };
            reports.push_back(make_report("ortho_layer", "A", inner(probe, jvp_ortho_layer(layer, z, dir)),
                                          fd_directional(f, raw, dir, h), opt.tolerance));
        }

        // projection: linear map and one-hidden-layer MLP
        {
            const std::size_t d_llm = 2 + rng.index(15), hidden = 2 + rng.index(15);
            const Tensor x = rng.normal_tensor({qr * qc, d});
            const Tensor probe = rng.normal_tensor({qr * qc, d_llm});
            Projection lin{{}, rng.normal_tensor({d, d_llm}, ws)};
            const Tensor dir = detail::unit_direction(rng, lin.w.shape());
            const Tensor probe_lin = detail::centered_probe(rng, lin.apply(x));
            const auto f_lin = [&](const Tensor& w) { return inner(probe_lin, Projection{{}, w}.apply(x)); };
            reports.push_back(make_report("projection", "W_proj", inner(probe_lin, jvp_projection(lin, x, {}, dir)),
                                          fd_directional(f_lin, lin.w, dir, h), opt.linear_tolerance));

            Projection mlp{rng.normal_tensor({d, hidden}, ws),
                           rng.normal_tensor({hidden, d_llm}, 1.0 / std::sqrt(static_cast<double>(hidden)))};
            const Tensor dir_in = detail::unit_direction(rng, mlp.w_in.shape());
            const auto f_mlp = [&](const Tensor& w_in) { return inner(probe, Projection{w_in, mlp.w}.apply(x)); };
            reports.push_back(make_report("projection", "W_proj_in", inner(probe, jvp_projection(mlp, x, dir_in, {})),
                                          fd_directional(f_mlp, mlp.w_in, dir_in, h), opt.tolerance));
        }
    }
    std::stable_sort(reports.begin(), reports.end(),
                     [](const GradReport& a, const GradReport& b) { return a.component < b.component; });
    return reports;
}

inline bool all_pass(const std::vector<GradReport>& reports) {
    return std::all_of(reports.begin(), reports.end(), [](const GradReport& r) { return r.pass; });
}

inline double worst_relative_error(const std::vector<GradReport>& reports) {
    double worst = 0.0;
    for (const auto& r : reports) worst = std::max(worst, r.rel_err);
    return worst;
}

/// "component,param,analytic,fd,rel_err,pass"
inline std::string report_csv(const std::vector<GradReport>& reports) {
    std::string out = "component,param,analytic,fd,rel_err,pass\n";
    char buf[256];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.12e,%.12e,%.3e,%s\n", r.component.c_str(), r.param.c_str(),
                      r.analytic, r.fd, r.rel_err, r.pass ? "true" : "false");
        out += buf;
    }
    return out;
}

}  // namespace comevl::grad
