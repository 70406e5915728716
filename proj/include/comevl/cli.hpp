#pragma once

// Command-line front end. run_cli() is the whole program; tools/comevl.cpp
// only forwards argv, so tests can drive every subcommand in-process.
//
// Exit codes: 0 ok, 1 usage/config/parse, 2 I/O, 3 numeric.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "comevl/boxcodec.hpp"
#include "comevl/config.hpp"
#include "comevl/gradcheck.hpp"
#include "comevl/io.hpp"
#include "comevl/rollout.hpp"
#include "comevl/synth.hpp"

namespace comevl::cli {

namespace fs = std::filesystem;
using io::json;

enum Exit : int { ok = 0, usage = 1, io_error = 2, numeric = 3 };

inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config:
        case ErrorKind::parse: return usage;
        case ErrorKind::io: return io_error;
        default: return numeric;
    }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string join(const std::vector<int>& v, const char* sep = ",") {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + std::to_string(v[i]);
    return s;
}

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool quiet = false;
};

/// Shared plumbing for one invocation.
struct Context {
    Globals g;
    std::ostream& out;
    std::ostream& err;

    config::RunConfig load_config(bool required) const {
        config::RunConfig c;
        if (!g.config.empty())
            c = config::load(g.config);
        else
            require(!required, ErrorKind::config, "this command needs --config");
        if (g.seed) c.seed = *g.seed;
        return c;
    }

    void info(const std::string& line) const {
        if (!g.quiet) out << line << '\n';
    }

    /// Writes `text` to --out when given, to stdout otherwise.
    void emit(const std::string& text) const {
        if (g.out.empty())
            out << text;
        else
            io::write_text(g.out, text);
    }
};

// ---------------------------------------------------------------------------
// Where a single stack comes from: --stack MANIFEST, --layers GLOB + geometry,
// or an encoder section of the config.
// ---------------------------------------------------------------------------

struct StackArgs {
    std::string stack;
    std::string layers;
    std::string attn;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool class_token = false;
    std::string encoder = "sig";
    std::string source;
    std::vector<double> band;

    void add_to(CLI::App* app) {
        app->add_option("--stack", stack, "stack.json manifest or its directory");
        app->add_option("--layers", layers, "glob of per-layer CMVT token files");
        app->add_option("--attn", attn, "glob of per-layer attention files");
        app->add_option("--rows", rows, "patch grid rows");
        app->add_option("--cols", cols, "patch grid cols");
        app->add_flag("--class-token", class_token, "row 0 of every layer is a class token");
        app->add_option("--encoder", encoder, "config encoder section (sig or dino)")->check(CLI::IsMember({"sig", "dino"}));
        app->add_option("--source", source, "activation_norm or attention_mass");
        app->add_option("--band", band, "quantile band q_lo q_hi")->expected(2);
    }

    /// Resolves the stack and its selection spec.
    std::pair<LayerStack, config::SelectSpec> load(const config::RunConfig& c) const {
        config::SelectSpec spec;
        io::StackSource src;
        if (!stack.empty()) {
            src = io::read_manifest(stack);
        } else if (!layers.empty()) {
            require(rows > 0 && cols > 0, ErrorKind::config, "--layers needs --rows and --cols");
            src.encoder_id = encoder;
            src.layers = layers;
            src.attn = attn;
            src.rows = rows;
            src.cols = cols;
            src.class_token = class_token;
        } else {
            const auto& e = encoder == "dino" ? c.dino : c.sig;
            require(e.has_value(), ErrorKind::config,
                    "no input stack: give --stack, --layers or a config with encoders." + encoder);
            src = e->stack;
            spec = e->select;
        }
        if (!source.empty()) spec.source = parse_mass_source(source);
        if (!band.empty()) {
            spec.band = std::make_pair(band[0], band[1]);
            spec.layers.clear();
        }
        return {io::load_stack(src), spec};
    }
};

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int cmd_entropy(const Context& ctx, const StackArgs& a) {
    const auto c = ctx.load_config(false);
    const auto [stack, spec] = a.load(c);
    const auto profile = entropy_profile(stack, spec.source);
    ctx.emit(entropy_csv(profile));
    if (spec.band) {
        const auto sel = select_layers(profile, spec.band->first, spec.band->second, stack.encoder_id);
        if (!ctx.g.out.empty() || !ctx.g.quiet) {
            std::ostream& dst = ctx.g.out.empty() ? ctx.err : ctx.out;
            dst << "selected " << stack.encoder_id << ": " << join(sel.selected) << '\n';
        }
    }
    return ok;
}

inline int cmd_select(const Context& ctx, const StackArgs& a) {
    const auto c = ctx.load_config(false);
    const auto [stack, spec] = a.load(c);
    const auto sel = config::resolve_selection(stack, spec);
    ctx.emit(sel.encoder_id + ": " + join(sel.selected) + "\n");
    return ok;
}

struct FuseArgs {
    std::string dump_stages;
    std::string save_params;
    std::string dtype = "f64";
};

inline void save_params(const fs::path& dir, const config::Connector& conn) {
    fs::create_directories(dir / "ol");
    json params = {{"sig", json::array()}, {"dino", json::array()}};
    auto save_branch = [&](const char* name, const EncoderBranch& b) {
        for (std::size_t i = 0; i < b.ols.size(); ++i) {
            char leaf[48];
            std::snprintf(leaf, sizeof leaf, "%s_%03d", name, b.selection.selected[i]);
            io::save_ortho_layer(dir / "ol" / leaf, b.ols[i]);
            params[name].push_back((fs::path("ol") / leaf).string());
        }
    };
    save_branch("sig", conn.params.sig);
    save_branch("dino", conn.params.dino);
    io::save_fusion(dir / "fusion", conn.params.fusion, conn.params.projection);
    io::write_json(dir / "params.json",
                   {{"ol", {{"params", params}}},
                    {"mixing", {{"sig", conn.params.sig.mixing.logits}, {"dino", conn.params.dino.mixing.logits}}},
                    {"fusion", {{"weights", "fusion"}}}});
}

inline int cmd_fuse(const Context& ctx, const FuseArgs& a) {
    const auto c = ctx.load_config(true);
    require(a.dtype == "f64" || a.dtype == "f32", ErrorKind::config, "--dtype must be f32 or f64");
    const DType dtype = a.dtype == "f32" ? DType::f32 : DType::f64;
    const auto conn = config::build_connector(c);
    const auto result = connector_forward(conn.sig_stack, conn.dino_stack, conn.params);

    const fs::path out_path = ctx.g.out.empty() ? fs::path("fused.cmvt") : fs::path(ctx.g.out);
    const auto bytes = cmvt::encode(result.projected.with_dtype(dtype));
    cmvt::write_bytes(out_path, bytes);

    if (!a.dump_stages.empty()) {
        const fs::path d = a.dump_stages;
        fs::create_directories(d);
        cmvt::write(d / "v_sig.cmvt", result.v_sig.tokens().with_dtype(dtype));
        cmvt::write(d / "v_dino.cmvt", result.v_dino.tokens().with_dtype(dtype));
        cmvt::write(d / "attn_out.cmvt", result.attn_out.with_dtype(dtype));
        cmvt::write(d / "fused_pre_projection.cmvt", result.fused.with_dtype(dtype));
        io::write_json(d / "selection.json",
                       {{"sig", {{"selected", conn.params.sig.selection.selected},
                                 {"weights", conn.params.sig.mixing.weights}}},
                        {"dino", {{"selected", conn.params.dino.selection.selected},
                                  {"weights", conn.params.dino.mixing.weights}}}});
    }
    if (!a.save_params.empty()) save_params(a.save_params, conn);

    if (!ctx.g.quiet)
        ctx.out << out_path.string() << " shape " << shape_string(result.projected.shape()) << " fnv1a64 "
                << hex64(fnv1a64(bytes)) << '\n';
    return ok;
}

struct RolloutArgs {
    std::string attn;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> layers;
    std::string mode;
    std::optional<double> discard_ratio;
    bool raw = false;
};

inline std::size_t grid_side(std::size_t tokens) {
    require(tokens >= 2, ErrorKind::invalid_shape, "attention needs a class token and at least one patch");
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tokens - 1))));
    require(side * side == tokens - 1, ErrorKind::config,
            "patch count " + std::to_string(tokens - 1) + " is not square; pass --rows and --cols");
    return side;
}

inline int cmd_rollout(const Context& ctx, const RolloutArgs& a) {
    const auto c = ctx.load_config(false);
    rollout::RolloutConfig cfg = c.rollout;
    if (!a.mode.empty()) cfg.mode = a.mode == "chained" ? rollout::Mode::chained : rollout::Mode::per_layer;
    if (a.discard_ratio) cfg.discard_ratio = *a.discard_ratio;
    if (a.raw) cfg.renormalize_rows = false;

    std::vector<Tensor> raw;
    std::size_t rows = a.rows, cols = a.cols;
    if (!a.attn.empty()) {
        const auto files = io::glob_files(a.attn);
        for (const auto& f : files) {
            const Tensor t = cmvt::read(f);
            if (t.rank() == 4)
                for (std::size_t l = 0; l < t.extent(0); ++l) raw.push_back(t.slab(l));
            else
                raw.push_back(t);
        }
    } else {
        require(c.sig.has_value() && !c.sig->stack.attn.empty(), ErrorKind::config,
                "rollout needs --attn or encoders.sig.attn in the config");
        const auto stack = io::load_stack(c.sig->stack);
        raw = stack.attn;
        if (!rows) rows = c.sig->stack.rows;
        if (!cols) cols = c.sig->stack.cols;
    }

    std::vector<rollout::AttnLayer> layers;
    layers.reserve(raw.size());
    for (std::size_t l = 0; l < raw.size(); ++l)
        layers.push_back(with_context("attention layer " + std::to_string(l),
                                       [&] { return rollout::AttnLayer(std::move(raw[l])); }));
    require(!layers.empty(), ErrorKind::io, "no attention layers loaded");
    if (!rows || !cols) rows = cols = grid_side(layers.front().token_count());

    const fs::path dir = ctx.g.out.empty() ? fs::path(".") : fs::path(ctx.g.out);
    fs::create_directories(dir);
    auto write_map = [&](const Tensor& r, const std::string& name) {
        io::write_text(dir / name, rollout::to_pgm(rollout::class_heatmap(r, rows, cols)));
        ctx.info((dir / name).string());
    };
    if (cfg.mode == rollout::Mode::chained) {
        const std::size_t last = a.layers.empty() ? layers.size() - 1 : a.layers.back();
        write_map(rollout::rollout(layers, cfg, last), "rollout_chain.pgm");
    } else {
        std::vector<std::size_t> which = a.layers;
        if (which.empty())
            for (std::size_t l = 0; l < layers.size(); ++l) which.push_back(l);
        char name[32];
        for (std::size_t l : which) {
            std::snprintf(name, sizeof name, "rollout_%03zu.pgm", l);
            write_map(rollout::rollout(layers, cfg, l), name);
        }
    }
    return ok;
}

inline std::vector<std::string> input_lines(const std::vector<std::string>& args, std::istream& in) {
    std::vector<std::string> lines;
    if (!args.empty()) {
        std::string joined;
        for (std::size_t i = 0; i < args.size(); ++i) joined += (i ? " " : "") + args[i];
        lines.push_back(joined);
        return lines;
    }
    for (std::string line; std::getline(in, line);)
        if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
    return lines;
}

/// "x1 y1 x2 y2 W H" per line.
inline int cmd_box_encode(const Context& ctx, const std::vector<std::string>& args, std::optional<int> bins,
                          std::istream& in) {
    const auto c = ctx.load_config(false);
    const int b = bins.value_or(c.box_bins);
    std::string text;
    std::size_t line_no = 0;
    for (const auto& line : input_lines(args, in)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<double> v;
        for (std::string w; ls >> w;) {
            char* end = nullptr;
            const double x = std::strtod(w.c_str(), &end);
            if (end == w.c_str() || *end != '\0') throw Error::parse_at(v.size(), "not a number: '" + w + "'");
            v.push_back(x);
        }
        require(v.size() == 6, ErrorKind::parse,
                "line " + std::to_string(line_no) + ": expected 'x1 y1 x2 y2 W H', got " + std::to_string(v.size()) +
                    " values");
        text += box::to_string(box::encode_box({v[0], v[1], v[2], v[3], v[4], v[5]}, b)) + "\n";
    }
    ctx.emit(text);
    return ok;
}

/// Token line followed by "W H", or --width/--height.
inline int cmd_box_decode(const Context& ctx, const std::vector<std::string>& args, std::optional<int> bins,
                          std::optional<double> width, std::optional<double> height, std::istream& in) {
    const auto c = ctx.load_config(false);
    const int b = bins.value_or(c.box_bins);
    std::string text;
    for (const auto& line : input_lines(args, in)) {
        std::istringstream ls(line);
        std::vector<std::string> words;
        for (std::string w; ls >> w;) words.push_back(w);
        double w = 0.0, h = 0.0;
        if (width && height) {
            w = *width;
            h = *height;
        } else {
            require(words.size() >= 2, ErrorKind::parse, "expected tokens followed by 'W H'");
            auto number = [&](std::size_t i) {
                char* end = nullptr;
                const double x = std::strtod(words[i].c_str(), &end);
                if (end == words[i].c_str() || *end != '\0')
                    throw Error::parse_at(i, "expected image size, got '" + words[i] + "'");
                return x;
            };
            w = number(words.size() - 2);
            h = number(words.size() - 1);
            words.resize(words.size() - 2);
        }
        std::string tokens;
        for (std::size_t i = 0; i < words.size(); ++i) tokens += (i ? " " : "") + words[i];
        for (const auto& bx : box::decode_boxes(box::parse_tokens(tokens, b), w, h)) text += box::format_box(bx) + "\n";
    }
    ctx.emit(text);
    return ok;
}

struct GradArgs {
    double step = 1e-5;
    std::size_t instances = 20;
};

inline int cmd_gradcheck(const Context& ctx, const GradArgs& a) {
    const auto c = ctx.load_config(false);
    grad::SuiteOptions opt;
    opt.seed = c.seed;
    opt.step = a.step;
    opt.instances = a.instances;
    const auto reports = grad::gradcheck_suite(opt);
    ctx.emit(grad::report_csv(reports));
    const bool pass = grad::all_pass(reports);
    if (!pass) {
        for (const auto& r : reports)
            if (!r.pass) ctx.err << "FAIL " << r.component << " " << r.param << " rel_err " << r.rel_err << '\n';
    }
    if (!ctx.g.out.empty() || !ctx.g.quiet) {
        std::ostream& dst = ctx.g.out.empty() ? ctx.err : ctx.out;
        dst << reports.size() << " checks, worst rel_err " << grad::worst_relative_error(reports) << '\n';
    }
    return pass ? ok : numeric;
}

inline int cmd_cost(const Context& ctx, std::uint64_t nt, std::uint64_t nv) {
    const auto cost = attention_cost(nt, nv);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%llu,%llu,%.4f\n", static_cast<unsigned long long>(cost.concat_cost),
                  static_cast<unsigned long long>(cost.cross_cost), cost.ratio);
    ctx.emit(buf);
    return ok;
}

/// SynthSpec from JSON. "kappa" is a list, or {"geometric": {"start", "ratio"}}.
inline synth::SynthSpec parse_synth_spec(const json& j, const std::string& where) {
    io::check_keys(j,
                   {"seed", "layers", "rows", "cols", "dim", "kappa", "blob_center", "with_attention", "heads", "noise",
                    "encoder_id", "first_layer_index"},
                   where);
    synth::SynthSpec s;
    s.seed = io::get_or<std::uint64_t>(j, "seed", 0, where);
    s.layers = io::get_or<std::size_t>(j, "layers", s.layers, where);
    s.rows = io::get_or<std::size_t>(j, "rows", s.rows, where);
    s.cols = io::get_or<std::size_t>(j, "cols", s.cols, where);
    s.dim = io::get_or<std::size_t>(j, "dim", s.dim, where);
    s.with_attention = io::get_or<bool>(j, "with_attention", false, where);
    s.heads = io::get_or<std::size_t>(j, "heads", s.heads, where);
    s.noise = io::get_or<double>(j, "noise", s.noise, where);
    s.encoder_id = io::get_or<std::string>(j, "encoder_id", s.encoder_id, where);
    s.first_layer_index = io::get_or<int>(j, "first_layer_index", 1, where);
    if (j.contains("blob_center")) {
        const auto c = io::get<std::vector<double>>(j, "blob_center", where);
        require(c.size() == 2, ErrorKind::config, where + ": blob_center must be [x, y]");
        s.blob_center = {c[0], c[1]};
    }
    if (!j.contains("kappa")) {
        s.kappa = synth::geometric_schedule(s.layers);
    } else if (j.at("kappa").is_array()) {
        s.kappa = io::get<std::vector<double>>(j, "kappa", where);
    } else {
        const json& k = j.at("kappa");
        io::check_keys(k, {"geometric"}, where + ".kappa");
        const json& g = k.at("geometric");
        io::check_keys(g, {"start", "ratio"}, where + ".kappa.geometric");
        s.kappa = synth::geometric_schedule(s.layers, io::get_or<double>(g, "start", 1.0, where),
                                            io::get_or<double>(g, "ratio", 2.0, where));
    }
    return s;
}

struct SynthArgs {
    std::string spec;
    std::optional<std::size_t> layers, rows, cols, dim, heads;
    bool with_attention = false;
    std::optional<double> noise;
    std::string dtype = "f64";
};

inline int cmd_synth(const Context& ctx, const SynthArgs& a) {
    const json j = a.spec.empty() ? json::object() : io::read_json(a.spec);
    synth::SynthSpec s = parse_synth_spec(j, a.spec.empty() ? "synth" : a.spec);
    const bool kappa_given = j.contains("kappa");
    if (a.layers) s.layers = *a.layers;
    if (a.rows) s.rows = *a.rows;
    if (a.cols) s.cols = *a.cols;
    if (a.dim) s.dim = *a.dim;
    if (a.heads) s.heads = *a.heads;
    if (a.noise) s.noise = *a.noise;
    if (a.with_attention) s.with_attention = true;
    if (ctx.g.seed) s.seed = *ctx.g.seed;
    if (!kappa_given) s.kappa = synth::geometric_schedule(s.layers);
    require(a.dtype == "f64" || a.dtype == "f32", ErrorKind::config, "--dtype must be f32 or f64");
    require(!ctx.g.out.empty(), ErrorKind::config, "synth needs --out DIR");

    const auto stack = with_context("synth", [&] { return synth::make_stack(s); });
    io::write_stack(ctx.g.out, stack, a.dtype == "f32" ? DType::f32 : DType::f64);
    ctx.info("wrote " + std::to_string(stack.layers.size()) + " layers to " + ctx.g.out);
    return ok;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr,
                   std::istream& in = std::cin) {
    CLI::App app{"Multi-encoder vision connector toolkit", "comevl"};
    app.require_subcommand(1);
    app.fallthrough();

    Context ctx{{}, out, err};
    app.add_option("--config", ctx.g.config, "run configuration JSON");
    app.add_option("--seed", ctx.g.seed, "seed overriding the config");
    app.add_option("--out", ctx.g.out, "output file or directory");
    app.add_flag("--quiet", ctx.g.quiet, "suppress informational output");

    StackArgs entropy_args, select_args;
    auto* entropy = app.add_subcommand("entropy", "per-layer spatial entropy CSV");
    entropy_args.add_to(entropy);
    auto* select = app.add_subcommand("select", "entropy-band or explicit layer selection");
    select_args.add_to(select);

    FuseArgs fuse_args;
    auto* fuse = app.add_subcommand("fuse", "run the connector and write fused.cmvt");
    fuse->add_option("--dump-stages", fuse_args.dump_stages, "directory for intermediate tensors");
    fuse->add_option("--save-params", fuse_args.save_params, "directory for all parameters used");
    fuse->add_option("--dtype", fuse_args.dtype, "output dtype f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

    RolloutArgs rollout_args;
    auto* roll = app.add_subcommand("rollout", "attention rollout heatmaps as PGM");
    roll->add_option("--attn", rollout_args.attn, "attention file glob");
    roll->add_option("--rows", rollout_args.rows, "patch grid rows");
    roll->add_option("--cols", rollout_args.cols, "patch grid cols");
    roll->add_option("--layer", rollout_args.layers, "0-based layer index (repeatable)");
    roll->add_option("--mode", rollout_args.mode, "per_layer or chained")->check(CLI::IsMember({"per_layer", "chained"}));
    roll->add_option("--discard-ratio", rollout_args.discard_ratio, "fraction of weakest links to drop");
    roll->add_flag("--no-renormalize", rollout_args.raw, "skip row renormalization after pruning");

    std::vector<std::string> box_words;
    std::optional<int> bins;
    std::optional<double> width, height;
    auto* box = app.add_subcommand("box", "bounding box token codec");
    box->require_subcommand(1);
    auto* box_enc = box->add_subcommand("encode", "'x1 y1 x2 y2 W H' to tokens");
    auto* box_dec = box->add_subcommand("decode", "tokens plus 'W H' to pixel boxes");
    for (auto* sub : {box_enc, box_dec}) {
        sub->add_option("words", box_words, "input line (stdin when absent)");
        sub->add_option("--bins", bins, "number of coordinate bins");
        sub->allow_extras(false);
    }
    box_dec->add_option("--width", width, "image width");
    box_dec->add_option("--height", height, "image height");

    GradArgs grad_args;
    auto* gradcheck = app.add_subcommand("gradcheck", "analytic JVPs against finite differences");
    gradcheck->add_option("--step", grad_args.step, "finite-difference step");
    gradcheck->add_option("--instances", grad_args.instances, "random instances per component");

    std::uint64_t nt = 0, nv = 0;
    auto* cost = app.add_subcommand("cost", "concatenation vs cross-attention cost");
    cost->add_option("n_text", nt, "query tokens")->required();
    cost->add_option("n_vis", nv, "visual tokens")->required();

    SynthArgs synth_args;
    auto* syn = app.add_subcommand("synth", "write a seeded synthetic layer stack");
    syn->add_option("--spec", synth_args.spec, "SynthSpec JSON");
    syn->add_option("--layers", synth_args.layers, "layer count");
    syn->add_option("--rows", synth_args.rows, "grid rows");
    syn->add_option("--cols", synth_args.cols, "grid cols");
    syn->add_option("--dim", synth_args.dim, "token width");
    syn->add_option("--heads", synth_args.heads, "attention heads");
    syn->add_option("--noise", synth_args.noise, "noise amplitude relative to the bump peak");
    syn->add_flag("--with-attention", synth_args.with_attention, "add a class token and attention maps");
    syn->add_option("--dtype", synth_args.dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage;
    }

    try {
        if (*entropy) return cmd_entropy(ctx, entropy_args);
        if (*select) return cmd_select(ctx, select_args);
        if (*fuse) return cmd_fuse(ctx, fuse_args);
        if (*roll) return cmd_rollout(ctx, rollout_args);
        if (*box_enc) return cmd_box_encode(ctx, box_words, bins, in);
        if (*box_dec) return cmd_box_decode(ctx, box_words, bins, width, height, in);
        if (*gradcheck) return cmd_gradcheck(ctx, grad_args);
        if (*cost) return cmd_cost(ctx, nt, nv);
        if (*syn) return cmd_synth(ctx, synth_args);
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "error (io): " << e.what() << '\n';
        return io_error;
    } catch (const std::bad_alloc&) {
        err << "error: out of memory\n";
        return numeric;
    }
    return usage;
}

}  // namespace comevl::cli
