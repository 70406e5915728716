#pragma once

// Run configuration: one strictly parsed JSON document describing encoders,
// orthogonal layers, mixing logits, fusion weights, projection, box codec and
// rollout settings. Parameters not supplied as files are initialized from the
// seed, so a config plus a seed fully determines every output.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "comevl/boxcodec.hpp"
#include "comevl/io.hpp"
#include "comevl/random.hpp"
#include "comevl/rollout.hpp"
#include "comevl/rope_fusion.hpp"

namespace comevl::config {

namespace fs = std::filesystem;
using io::json;

struct SelectSpec {
    std::vector<int> layers;  // explicit list wins when non-empty
    std::optional<std::pair<double, double>> band;
    MassSource source = MassSource::activation_norm;
};

struct EncoderConfig {
    io::StackSource stack;
    SelectSpec select;
};

struct OlConfig {
    OrthoMethod method = OrthoMethod::cayley;
    std::optional<std::size_t> d_out;  // default: encoder width
    double init_scale = 0.0;
    std::vector<std::string> sig_params;  // file prefixes, one per selected layer
    std::vector<std::string> dino_params;
};

struct FusionConfig {
    std::optional<fs::path> weights;
    std::optional<double> gamma;
    std::optional<std::size_t> heads;
    std::optional<std::size_t> d_h;
    std::optional<double> rope_base;
    std::optional<double> rope_scale;
    std::optional<bool> pool;
    bool output_merge = true;
    double ln_epsilon = default_ln_epsilon;
};

struct ProjectionConfig {
    bool identity = false;
    std::optional<std::size_t> d_llm;
    std::size_t hidden = 0;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::optional<EncoderConfig> sig;
    std::optional<EncoderConfig> dino;
    OlConfig ol;
    std::optional<std::vector<double>> sig_logits;
    std::optional<std::vector<double>> dino_logits;
    FusionConfig fusion;
    ProjectionConfig projection;
    int box_bins = box::default_bins;
    rollout::RolloutConfig rollout;
};

inline SelectSpec parse_select(const json& j, const std::string& where) {
    io::check_keys(j, {"layers", "band", "source"}, where);
    SelectSpec s;
    s.layers = io::get_or<std::vector<int>>(j, "layers", {}, where);
    if (j.contains("band")) {
        const auto b = io::get<std::vector<double>>(j, "band", where);
        require(b.size() == 2, ErrorKind::config, where + ": band must be [q_lo, q_hi]");
        s.band = std::make_pair(b[0], b[1]);
    }
    if (j.contains("source")) s.source = parse_mass_source(io::get<std::string>(j, "source", where));
    return s;
}

inline EncoderConfig parse_encoder(const json& j, const fs::path& base, const std::string& name) {
    const std::string where = "encoders." + name;
    io::check_keys(j, {"encoder_id", "layers", "attn", "rows", "cols", "class_token", "layer_indices", "manifest", "select"},
                   where);
    EncoderConfig e;
    if (j.contains("manifest")) {
        require(!j.contains("layers"), ErrorKind::config, where + ": give either 'manifest' or 'layers', not both");
        e.stack = io::read_manifest(io::resolve(base, io::get<std::string>(j, "manifest", where)));
    } else {
        e.stack = io::parse_stack_source(j, base, where);
        if (!j.contains("encoder_id")) e.stack.encoder_id = name;
    }
    if (j.contains("select")) e.select = parse_select(j.at("select"), where + ".select");
    return e;
}

inline RunConfig parse(const json& j, const fs::path& base) {
    io::check_keys(j, {"seed", "encoders", "ol", "mixing", "fusion", "projection", "box", "rollout"}, "config");
    RunConfig c;
    c.seed = io::get_or<std::uint64_t>(j, "seed", 0, "config");
    if (j.contains("encoders")) {
        const json& e = j.at("encoders");
        io::check_keys(e, {"sig", "dino"}, "encoders");
        if (e.contains("sig")) c.sig = parse_encoder(e.at("sig"), base, "sig");
        if (e.contains("dino")) c.dino = parse_encoder(e.at("dino"), base, "dino");
    }
    if (j.contains("ol")) {
        const json& o = j.at("ol");
        io::check_keys(o, {"method", "d_out", "init_scale", "params"}, "ol");
        if (o.contains("method")) c.ol.method = parse_ortho_method(io::get<std::string>(o, "method", "ol"));
        if (o.contains("d_out")) c.ol.d_out = io::get<std::size_t>(o, "d_out", "ol");
        c.ol.init_scale = io::get_or<double>(o, "init_scale", 0.0, "ol");
        if (o.contains("params")) {
            const json& p = o.at("params");
            io::check_keys(p, {"sig", "dino"}, "ol.params");
            c.ol.sig_params = io::get_or<std::vector<std::string>>(p, "sig", {}, "ol.params");
            c.ol.dino_params = io::get_or<std::vector<std::string>>(p, "dino", {}, "ol.params");
            for (auto& s : c.ol.sig_params) s = io::resolve(base, s).string();
            for (auto& s : c.ol.dino_params) s = io::resolve(base, s).string();
        }
    }
    if (j.contains("mixing")) {
        const json& m = j.at("mixing");
        io::check_keys(m, {"sig", "dino"}, "mixing");
        if (m.contains("sig")) c.sig_logits = io::get<std::vector<double>>(m, "sig", "mixing");
        if (m.contains("dino")) c.dino_logits = io::get<std::vector<double>>(m, "dino", "mixing");
    }
    if (j.contains("fusion")) {
        const json& f = j.at("fusion");
        io::check_keys(f, {"weights", "gamma", "heads", "d_h", "rope_base", "rope_scale", "pool", "output_merge", "ln_epsilon"},
                       "fusion");
        if (f.contains("weights")) c.fusion.weights = io::resolve(base, io::get<std::string>(f, "weights", "fusion"));
        if (f.contains("gamma")) c.fusion.gamma = io::get<double>(f, "gamma", "fusion");
        if (f.contains("heads")) c.fusion.heads = io::get<std::size_t>(f, "heads", "fusion");
        if (f.contains("d_h")) c.fusion.d_h = io::get<std::size_t>(f, "d_h", "fusion");
        if (f.contains("rope_base")) c.fusion.rope_base = io::get<double>(f, "rope_base", "fusion");
        if (f.contains("rope_scale")) c.fusion.rope_scale = io::get<double>(f, "rope_scale", "fusion");
        if (f.contains("pool")) c.fusion.pool = io::get<bool>(f, "pool", "fusion");
        c.fusion.output_merge = io::get_or<bool>(f, "output_merge", true, "fusion");
        c.fusion.ln_epsilon = io::get_or<double>(f, "ln_epsilon", default_ln_epsilon, "fusion");
    }
    if (j.contains("projection")) {
        const json& p = j.at("projection");
        io::check_keys(p, {"identity", "d_llm", "hidden"}, "projection");
        c.projection.identity = io::get_or<bool>(p, "identity", false, "projection");
        if (p.contains("d_llm")) c.projection.d_llm = io::get<std::size_t>(p, "d_llm", "projection");
        c.projection.hidden = io::get_or<std::size_t>(p, "hidden", 0, "projection");
    }
    if (j.contains("box")) {
        io::check_keys(j.at("box"), {"bins"}, "box");
        c.box_bins = io::get_or<int>(j.at("box"), "bins", box::default_bins, "box");
    }
    if (j.contains("rollout")) {
        const json& r = j.at("rollout");
        io::check_keys(r, {"discard_ratio", "renormalize", "mode"}, "rollout");
        c.rollout.discard_ratio = io::get_or<double>(r, "discard_ratio", 0.0, "rollout");
        c.rollout.renormalize_rows = io::get_or<bool>(r, "renormalize", true, "rollout");
        const auto mode = io::get_or<std::string>(r, "mode", "per_layer", "rollout");
        require(mode == "per_layer" || mode == "chained", ErrorKind::config, "rollout.mode must be per_layer or chained");
        c.rollout.mode = mode == "chained" ? rollout::Mode::chained : rollout::Mode::per_layer;
    }
    return c;
}

inline RunConfig load(const fs::path& path) {
    return parse(io::read_json(path), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

// ---------------------------------------------------------------------------
// Materializing the connector
// ---------------------------------------------------------------------------

/// Random-stream identifiers for parameters initialized from the seed.
enum class Stream : std::uint64_t { ol_sig = 10, ol_dino = 11, w_q = 20, w_k, w_v, w_out, w_proj = 30, w_proj_in };

inline Rng stream_rng(std::uint64_t seed, Stream s, std::uint64_t sub = 0) {
    return Rng(hash_key({seed, static_cast<std::uint64_t>(s), sub}));
}

inline LayerSelection resolve_selection(const LayerStack& stack, const SelectSpec& spec) {
    if (!spec.layers.empty()) return select_explicit(stack, spec.layers);
    if (spec.band) {
        auto sel = select_layers(entropy_profile(stack, spec.source), spec.band->first, spec.band->second,
                                 stack.encoder_id);
        return sel;
    }
    return select_all(stack);
}

inline EncoderBranch build_branch(const LayerStack& stack, const SelectSpec& spec, const OlConfig& ol,
                                  const std::vector<std::string>& param_files,
                                  const std::optional<std::vector<double>>& logits, std::uint64_t seed,
                                  Stream stream) {
    EncoderBranch b;
    b.selection = resolve_selection(stack, spec);
    const std::size_t k = b.selection.selected.size();
    const std::size_t d_in = stack.layers.front().dim();
    const std::size_t d_out = ol.d_out.value_or(d_in);
    if (!param_files.empty()) {
        require(param_files.size() == k, ErrorKind::config,
                stack.encoder_id + ": " + std::to_string(param_files.size()) + " OL parameter files for " +
                    std::to_string(k) + " selected layers");
        for (const auto& f : param_files) b.ols.push_back(io::load_ortho_layer(f));
    } else {
        const std::size_t side = std::max(d_in, d_out);
        for (std::size_t i = 0; i < k; ++i) {
            Rng rng = stream_rng(seed, stream, static_cast<std::uint64_t>(b.selection.selected[i]));
            Tensor raw = ol.init_scale > 0.0 ? rng.normal_tensor({side, side}, ol.init_scale) : Tensor({side, side});
            b.ols.emplace_back(d_in, d_out, std::move(raw), ol.method);
        }
    }
    b.mixing = logits ? mixing_weights(*logits, b.selection) : uniform_mixing(k);
    return b;
}

struct Connector {
    LayerStack sig_stack;
    LayerStack dino_stack;
    ConnectorParams params;
};

/// Loads stacks and parameter files and fills in seeded defaults.
inline Connector build_connector(const RunConfig& c) {
    require(c.sig && c.dino, ErrorKind::config, "fuse needs encoders.sig and encoders.dino");
    Connector out;
    out.sig_stack = io::load_stack(c.sig->stack);
    out.dino_stack = io::load_stack(c.dino->stack);
    out.params.ln_epsilon = c.fusion.ln_epsilon;
    out.params.sig = with_context("select_sig", [&] {
        return build_branch(out.sig_stack, c.sig->select, c.ol, c.ol.sig_params, c.sig_logits, c.seed, Stream::ol_sig);
    });
    out.params.dino = with_context("select_dino", [&] {
        return build_branch(out.dino_stack, c.dino->select, c.ol, c.ol.dino_params, c.dino_logits, c.seed,
                            Stream::ol_dino);
    });
    const std::size_t d_sig = out.params.sig.ols.front().d_out();
    const std::size_t d_dino = out.params.dino.ols.front().d_out();

    FusionParams& fp = out.params.fusion;
    Projection& proj = out.params.projection;
    if (c.fusion.weights) {
        auto bundle = io::load_fusion(*c.fusion.weights);
        fp = std::move(bundle.params);
        proj = std::move(bundle.projection);
    } else {
        fp.heads = c.fusion.heads.value_or(4);
        fp.d_h = c.fusion.d_h.value_or(std::max<std::size_t>(4, d_sig / fp.heads));
        const std::size_t inner = fp.heads * fp.d_h;
        auto init = [&](Stream s, std::size_t in, std::size_t outw) {
            Rng rng = stream_rng(c.seed, s);
            return rng.normal_tensor({in, outw}, 1.0 / std::sqrt(static_cast<double>(in)));
        };
        fp.w_q = init(Stream::w_q, d_sig, inner);
        fp.w_k = init(Stream::w_k, d_dino, inner);
        fp.w_v = init(Stream::w_v, d_dino, inner);
        if (c.fusion.output_merge) fp.w_out = init(Stream::w_out, inner, d_sig);
        if (!c.projection.identity) {
            const std::size_t d_llm = c.projection.d_llm.value_or(d_sig);
            if (c.projection.hidden > 0) {
                proj.w_in = init(Stream::w_proj_in, d_sig, c.projection.hidden);
                proj.w = init(Stream::w_proj, c.projection.hidden, d_llm);
            } else {
                proj.w = init(Stream::w_proj, d_sig, d_llm);
            }
        }
    }
    if (c.fusion.gamma) fp.gamma = *c.fusion.gamma;
    if (c.fusion.heads && c.fusion.weights) fp.heads = *c.fusion.heads;
    if (c.fusion.d_h && c.fusion.weights) fp.d_h = *c.fusion.d_h;
    if (c.fusion.rope_base) fp.rope_base = *c.fusion.rope_base;
    if (c.fusion.rope_scale) fp.rope_scale = *c.fusion.rope_scale;
    if (c.fusion.pool) fp.pool = *c.fusion.pool;
    if (c.projection.identity) proj = Projection{};
    return out;
}

}  // namespace comevl::config
