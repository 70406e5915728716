#pragma once

// Seeded synthetic encoder stacks whose spatial concentration grows with a
// per-layer sharpness kappa, standing in for pretrained encoders.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "comevl/entropy_select.hpp"
#include "comevl/parallel.hpp"
#include "comevl/random.hpp"
#include "comevl/rope_fusion.hpp"

namespace comevl::synth {

inline constexpr double default_noise = 0.01;

struct SynthSpec {
    std::uint64_t seed = 0;
    std::size_t layers = 8;
    std::size_t rows = 8;
    std::size_t cols = 8;
    std::size_t dim = 16;
    std::vector<double> kappa;  // one sharpness per layer
    Position blob_center{0.5, 0.5};
    bool with_attention = false;
    std::size_t heads = 2;
    /// Noise amplitude relative to the bump peak (which is 1).
    double noise = default_noise;
    std::string encoder_id = "synth";
    int first_layer_index = 1;

    void validate() const {
        require(layers >= 1 && rows >= 1 && cols >= 1 && dim >= 1, ErrorKind::invalid_value,
                "synth layers, rows, cols and dim must be >= 1");
        require(kappa.size() == layers, ErrorKind::invalid_value,
                "kappa schedule has " + std::to_string(kappa.size()) + " entries for " + std::to_string(layers) +
                    " layers");
        for (double k : kappa)
            require(std::isfinite(k) && k > 0.0, ErrorKind::invalid_value, "kappa must be finite and positive");
        require(std::isfinite(noise) && noise >= 0.0, ErrorKind::invalid_value, "noise must be non-negative");
        require(!with_attention || heads >= 1, ErrorKind::invalid_value, "attention needs heads >= 1");
    }
};

/// kappa_l = ratio^l * start for l = 0..layers-1.
inline std::vector<double> geometric_schedule(std::size_t layers, double start = 1.0, double ratio = 2.0) {
    std::vector<double> k(layers);
    for (std::size_t l = 0; l < layers; ++l) k[l] = start * std::pow(ratio, static_cast<double>(l));
    return k;
}

namespace detail {

enum Stream : std::uint64_t { noise_stream = 1, direction_stream = 2, attention_stream = 3 };

inline std::vector<double> patch_norms(const SynthSpec& s, std::size_t layer) {
    const CounterRng rng{s.seed};
    const auto pos = grid_positions(s.rows, s.cols);
    std::vector<double> norms(s.rows * s.cols);
    for (std::size_t i = 0; i < norms.size(); ++i) {
        const double dx = pos.positions[i].x - s.blob_center.x;
        const double dy = pos.positions[i].y - s.blob_center.y;
        const double bump = std::exp(-s.kappa[layer] * (dx * dx + dy * dy));
        norms[i] = bump + s.noise * rng.uniform({noise_stream, layer, i});
    }
    return norms;
}

}  // namespace detail

/// Patch tokens have norm = bump + noise and seeded random directions; with
/// attention, a class token (mean of patches) leads the grid and each head's
/// class row is proportional to [1, norms...].
inline LayerStack make_stack(const SynthSpec& s) {
    s.validate();
    const CounterRng rng{s.seed};
    LayerStack stack;
    stack.encoder_id = s.encoder_id;
    stack.layers.resize(s.layers);
    stack.layer_indices.resize(s.layers);
    if (s.with_attention) stack.attn.resize(s.layers);
    const std::size_t n = s.rows * s.cols;
    const std::size_t off = s.with_attention ? 1 : 0;

    parallel_for(s.layers, [&](std::size_t l) {
        const auto norms = detail::patch_norms(s, l);
        Tensor tokens({n + off, s.dim});
        for (std::size_t i = 0; i < n; ++i) {
            auto row = tokens.row(off + i);
            for (std::size_t c = 0; c < s.dim; ++c) row[c] = rng.normal(detail::direction_stream, l, i, c);
            const double len = norm2(row);
            for (double& v : row) v *= norms[i] / len;
        }
        if (off) {
            auto cls = tokens.row(0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < s.dim; ++c) cls[c] += tokens(1 + i, c) / static_cast<double>(n);
        }
        stack.layers[l] = TokenGrid(s.rows, s.cols, std::move(tokens), s.with_attention);
        stack.layer_indices[l] = s.first_layer_index + static_cast<int>(l);

        if (s.with_attention) {
            const std::size_t t = n + 1;
            Tensor attn({s.heads, t, t});
            for (std::size_t h = 0; h < s.heads; ++h) {
                for (std::size_t r = 0; r < t; ++r) {
                    double* row = attn.data().data() + (h * t + r) * t;
                    double sum = 0.0;
                    for (std::size_t c = 0; c < t; ++c) {
                        if (r == 0)
                            row[c] = c == 0 ? 1.0 : norms[c - 1];
                        else
                            row[c] = 0.5 + rng.uniform({detail::attention_stream, l, h, r, c});
                        sum += row[c];
                    }
                    for (std::size_t c = 0; c < t; ++c) row[c] /= sum;
                }
            }
            stack.attn[l] = std::move(attn);
        }
    });
    return stack;
}

}  // namespace comevl::synth
