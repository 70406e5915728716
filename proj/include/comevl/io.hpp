#pragma once

// File-level persistence: layer stacks on disk, orthogonal-layer parameters,
// fusion weights. JSON is handled with nlohmann/json and parsed strictly.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "comevl/cmvt.hpp"
#include "comevl/entropy_select.hpp"
#include "comevl/ortho.hpp"
#include "comevl/rope_fusion.hpp"

namespace comevl::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Rejects any key of `obj` outside `allowed`.
inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    require(obj.is_object(), ErrorKind::config, where + " must be a JSON object");
    for (const auto& [key, _] : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        require(known, ErrorKind::config, "unknown key '" + key + "' in " + where);
    }
}

/// Typed lookup with a config error naming the key on mismatch.
template <class T>
T get(const json& obj, const char* key, const std::string& where) {
    require(obj.contains(key), ErrorKind::config, "missing key '" + std::string(key) + "' in " + where);
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorKind::config, "bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
    }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
    return obj.contains(key) ? get<T>(obj, key, where) : fallback;
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::config, path.string() + ": invalid JSON: " + e.what());
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
    out << text;
    require(static_cast<bool>(out), ErrorKind::io, "short write to " + path.string());
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// '*' and '?' wildcard match.
inline bool wildcard_match(const std::string& pattern, const std::string& name) {
    std::size_t p = 0, n = 0, star = std::string::npos, mark = 0;
    while (n < name.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
            ++p;
            ++n;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = n;
        } else if (star != std::string::npos) {
            p = star + 1;
            n = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

/// Files matching a glob whose wildcards are confined to the final path
/// component, sorted lexicographically. A pattern without wildcards must name
/// an existing file.
inline std::vector<fs::path> glob_files(const fs::path& pattern) {
    const std::string leaf = pattern.filename().string();
    if (leaf.find_first_of("*?") == std::string::npos) {
        require(fs::is_regular_file(pattern), ErrorKind::io, "missing file " + pattern.string());
        return {pattern};
    }
    const fs::path dir = pattern.has_parent_path() ? pattern.parent_path() : fs::path(".");
    require(fs::is_directory(dir), ErrorKind::io, "missing directory " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && wildcard_match(leaf, entry.path().filename().string())) out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    require(!out.empty(), ErrorKind::io, "no files match " + pattern.string());
    return out;
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

// ---------------------------------------------------------------------------
// Layer stacks
// ---------------------------------------------------------------------------

/// Where a stack lives on disk and how its tokens are arranged.
struct StackSource {
    std::string encoder_id = "encoder";
    fs::path layers;  // glob of (T, dim) CMVT files
    fs::path attn;    // optional glob of (heads, T, T) files, or one (layers, heads, T, T) file
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool class_token = false;
    std::vector<int> layer_indices;  // default 1..n
};

/// Reads the stack fields of `j` (other keys must be vetted by the caller).
inline StackSource parse_stack_source(const json& j, const fs::path& base, const std::string& where) {
    StackSource s;
    s.encoder_id = get_or<std::string>(j, "encoder_id", "encoder", where);
    s.layers = resolve(base, get<std::string>(j, "layers", where));
    if (j.contains("attn") && !j.at("attn").is_null()) s.attn = resolve(base, get<std::string>(j, "attn", where));
    s.rows = get<std::size_t>(j, "rows", where);
    s.cols = get<std::size_t>(j, "cols", where);
    s.class_token = get_or<bool>(j, "class_token", false, where);
    s.layer_indices = get_or<std::vector<int>>(j, "layer_indices", {}, where);
    return s;
}

/// A stack.json manifest as written by write_stack.
inline StackSource read_manifest(const fs::path& path) {
    const fs::path file = fs::is_directory(path) ? path / "stack.json" : path;
    const json j = read_json(file);
    check_keys(j, {"encoder_id", "layers", "attn", "rows", "cols", "class_token", "layer_indices"}, file.string());
    return parse_stack_source(j, file.parent_path(), file.string());
}

inline LayerStack load_stack(const StackSource& src) {
    LayerStack stack;
    stack.encoder_id = src.encoder_id;
    const auto files = glob_files(src.layers);
    for (const auto& f : files) {
        Tensor t = cmvt::read(f);
        stack.layers.push_back(with_context(f.string(), [&] {
            return TokenGrid(src.rows, src.cols, std::move(t), src.class_token);
        }));
    }
    if (src.layer_indices.empty()) {
        for (std::size_t i = 0; i < files.size(); ++i) stack.layer_indices.push_back(static_cast<int>(i) + 1);
    } else {
        require(src.layer_indices.size() == files.size(), ErrorKind::config,
                src.encoder_id + ": layer_indices names " + std::to_string(src.layer_indices.size()) + " layers but " +
                    std::to_string(files.size()) + " files match");
        stack.layer_indices = src.layer_indices;
    }
    if (!src.attn.empty()) {
        const auto attn_files = glob_files(src.attn);
        if (attn_files.size() == 1) {
            const Tensor all = cmvt::read(attn_files[0]);
            if (all.rank() == 4) {
                for (std::size_t l = 0; l < all.extent(0); ++l) stack.attn.push_back(all.slab(l));
            } else {
                stack.attn.push_back(all);
            }
        } else {
            for (const auto& f : attn_files) stack.attn.push_back(cmvt::read(f));
        }
    }
    stack.validate();
    return stack;
}

/// Writes layer_%03d.cmvt (and attn_%03d.cmvt) named by layer index, plus stack.json.
inline void write_stack(const fs::path& dir, const LayerStack& stack, DType dtype = DType::f64) {
    stack.validate();
    fs::create_directories(dir);
    char name[32];
    for (std::size_t i = 0; i < stack.layers.size(); ++i) {
        std::snprintf(name, sizeof name, "layer_%03d.cmvt", stack.layer_indices[i]);
        cmvt::write(dir / name, stack.layers[i].tokens().with_dtype(dtype));
        if (!stack.attn.empty()) {
            std::snprintf(name, sizeof name, "attn_%03d.cmvt", stack.layer_indices[i]);
            cmvt::write(dir / name, stack.attn[i].with_dtype(dtype));
        }
    }
    const auto& g = stack.layers.front();
    json j = {{"encoder_id", stack.encoder_id},
              {"layers", "layer_*.cmvt"},
              {"rows", g.rows()},
              {"cols", g.cols()},
              {"class_token", g.has_class_token()},
              {"layer_indices", stack.layer_indices}};
    if (!stack.attn.empty()) j["attn"] = "attn_*.cmvt";
    write_json(dir / "stack.json", j);
}

// ---------------------------------------------------------------------------
// Orthogonal layers: <prefix>.cmvt holds the raw square parameter,
// <prefix>.json holds {"d_in", "d_out", "method"}.
// ---------------------------------------------------------------------------

inline void save_ortho_layer(const fs::path& prefix, const OrthoLayer& ol) {
    cmvt::write(fs::path(prefix.string() + ".cmvt"), ol.raw());
    write_json(fs::path(prefix.string() + ".json"),
               {{"d_in", ol.d_in()}, {"d_out", ol.d_out()}, {"method", to_string(ol.method())}});
}

inline OrthoLayer load_ortho_layer(const fs::path& prefix) {
    const fs::path meta = prefix.string() + ".json";
    const json j = read_json(meta);
    check_keys(j, {"d_in", "d_out", "method"}, meta.string());
    return with_context(prefix.string(), [&] {
        return OrthoLayer(get<std::size_t>(j, "d_in", meta.string()), get<std::size_t>(j, "d_out", meta.string()),
                          cmvt::read(prefix.string() + ".cmvt"),
                          parse_ortho_method(get<std::string>(j, "method", meta.string())));
    });
}

// ---------------------------------------------------------------------------
// Fusion weights: W_Q/W_K/W_V/W_out/W_proj[_in].cmvt + fusion.json scalars.
// ---------------------------------------------------------------------------

inline void save_fusion(const fs::path& dir, const FusionParams& p, const Projection& proj) {
    fs::create_directories(dir);
    cmvt::write(dir / "W_Q.cmvt", p.w_q);
    cmvt::write(dir / "W_K.cmvt", p.w_k);
    cmvt::write(dir / "W_V.cmvt", p.w_v);
    if (p.has_output_merge()) cmvt::write(dir / "W_out.cmvt", p.w_out);
    if (!proj.is_identity()) cmvt::write(dir / "W_proj.cmvt", proj.w);
    if (proj.has_hidden()) cmvt::write(dir / "W_proj_in.cmvt", proj.w_in);
    write_json(dir / "fusion.json", {{"gamma", p.gamma},
                                     {"heads", p.heads},
                                     {"d_h", p.d_h},
                                     {"rope_base", p.rope_base},
                                     {"rope_scale", p.rope_scale},
                                     {"pool", p.pool}});
}

struct FusionBundle {
    FusionParams params;
    Projection projection;
};

inline FusionBundle load_fusion(const fs::path& dir) {
    const fs::path meta = dir / "fusion.json";
    const json j = read_json(meta);
    const std::string where = meta.string();
    check_keys(j, {"gamma", "heads", "d_h", "rope_base", "rope_scale", "pool"}, where);
    FusionBundle b;
    b.params.gamma = get<double>(j, "gamma", where);
    b.params.heads = get<std::size_t>(j, "heads", where);
    b.params.d_h = get<std::size_t>(j, "d_h", where);
    b.params.rope_base = get_or<double>(j, "rope_base", default_rope_base, where);
    b.params.rope_scale = get_or<double>(j, "rope_scale", default_rope_scale, where);
    b.params.pool = get_or<bool>(j, "pool", true, where);
    b.params.w_q = cmvt::read(dir / "W_Q.cmvt");
    b.params.w_k = cmvt::read(dir / "W_K.cmvt");
    b.params.w_v = cmvt::read(dir / "W_V.cmvt");
    if (fs::exists(dir / "W_out.cmvt")) b.params.w_out = cmvt::read(dir / "W_out.cmvt");
    if (fs::exists(dir / "W_proj.cmvt")) b.projection.w = cmvt::read(dir / "W_proj.cmvt");
    if (fs::exists(dir / "W_proj_in.cmvt")) b.projection.w_in = cmvt::read(dir / "W_proj_in.cmvt");
    return b;
}

}  // namespace comevl::io
