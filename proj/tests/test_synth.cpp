#include <gtest/gtest.h>

#include <cmath>

#include "comevl/cmvt.hpp"
#include "comevl/parallel.hpp"
#include "comevl/synth.hpp"

using namespace comevl;
using namespace comevl::synth;

namespace {

SynthSpec spec_with(std::vector<double> kappa) {
    SynthSpec s;
    s.layers = kappa.size();
    s.kappa = std::move(kappa);
    return s;
}

std::vector<double> entropies(const SynthSpec& s) {
    return entropy_profile(make_stack(s), MassSource::activation_norm).entropy_nats;
}

}  // namespace

TEST(Synth, GeometricScheduleIsStrictlyDecreasing) {
    const auto h = entropies(spec_with(geometric_schedule(8)));
    for (std::size_t l = 1; l < h.size(); ++l) EXPECT_LT(h[l], h[l - 1]) << "layer " << l;
}

TEST(Synth, ConstantScheduleIsFlat) {
    const auto h = entropies(spec_with(std::vector<double>(6, 5.0)));
    for (double v : h) EXPECT_NEAR(v, h[0], 1e-2);
}

TEST(Synth, VanishingSharpnessIsNearUniform) {
    SynthSpec s = spec_with({1e-9, 1e-9});
    for (double v : entropies(s)) EXPECT_NEAR(v, std::log(64.0), 1e-3);
}

TEST(Synth, BumpingKappaLowersEntropy) {
    auto base = spec_with(geometric_schedule(4));
    const auto h0 = entropies(base);
    base.kappa[2] *= 1.5;
    const auto h1 = entropies(base);
    EXPECT_LT(h1[2], h0[2]);
    EXPECT_EQ(h1[1], h0[1]);
}

TEST(Synth, DeterministicAcrossThreadCounts) {
    SynthSpec s = spec_with(geometric_schedule(5));
    s.with_attention = true;
    const std::size_t saved = thread_cap();
    set_thread_cap(1);
    const auto a = make_stack(s);
    set_thread_cap(8);
    const auto b = make_stack(s);
    set_thread_cap(saved);
    for (std::size_t l = 0; l < 5; ++l) {
        EXPECT_EQ(cmvt::encode(a.layers[l].tokens()), cmvt::encode(b.layers[l].tokens()));
        EXPECT_EQ(cmvt::encode(a.attn[l]), cmvt::encode(b.attn[l]));
    }
    s.seed = 1;
    EXPECT_NE(make_stack(s).layers[0].tokens(), a.layers[0].tokens());
}

TEST(Synth, AttentionRowsAreStochasticAndTrackTheBump) {
    SynthSpec s = spec_with(geometric_schedule(3));
    s.with_attention = true;
    const auto st = make_stack(s);
    ASSERT_EQ(st.attn.size(), 3u);
    const std::size_t t = 65;
    for (const auto& a : st.attn) {
        ASSERT_EQ(a.shape(), (Shape{2, t, t}));
        for (std::size_t r = 0; r < 2 * t; ++r) {
            double sum = 0;
            for (std::size_t c = 0; c < t; ++c) sum += a[r * t + c];
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
    const auto ha = entropy_profile(st, MassSource::attention_mass).entropy_nats;
    EXPECT_LT(ha[2], ha[0]);
    EXPECT_TRUE(st.layers[0].has_class_token());
}

TEST(Synth, InvalidSpecs) {
    EXPECT_THROW(make_stack(spec_with({1.0, -1.0})), Error);
    EXPECT_THROW(make_stack(spec_with({1.0, NAN})), Error);
    SynthSpec s = spec_with({1.0});
    s.layers = 2;
    EXPECT_THROW(make_stack(s), Error);
}
