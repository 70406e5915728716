#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "comevl/entropy_select.hpp"
#include "comevl/random.hpp"
#include "oracles.hpp"

using namespace comevl;

namespace {

// Stack whose layer l has all patch norms equal except one, so entropy is
// controlled by `peaks[l]`.
LayerStack stack_from_profile(const std::vector<double>& peaks, std::size_t side = 4) {
    LayerStack s;
    s.encoder_id = "test";
    for (std::size_t l = 0; l < peaks.size(); ++l) {
        Tensor t({side * side, 2});
        for (std::size_t i = 0; i < side * side; ++i) t(i, 0) = 1.0;
        t(0, 0) = peaks[l];
        s.layers.emplace_back(side, side, t, false);
        s.layer_indices.push_back(static_cast<int>(l) + 1);
    }
    return s;
}

EntropyProfile profile_of(std::vector<double> h) {
    EntropyProfile p;
    p.entropy_nats = std::move(h);
    for (std::size_t i = 0; i < p.entropy_nats.size(); ++i) p.layer_indices.push_back(static_cast<int>(i) + 1);
    return p;
}

}  // namespace

TEST(Entropy, UniformOneHotAndHandValue) {
    EXPECT_NEAR(entropy_of_mass(std::vector<double>(576, 2.0)), std::log(576.0), 1e-10);
    std::vector<double> onehot(576, 0.0);
    onehot[17] = 3.0;
    EXPECT_EQ(entropy_of_mass(onehot), 0.0);
    const std::vector<double> m{1, 2, 3, 4};
    EXPECT_NEAR(entropy_of_mass(m), oracle::shannon({0.1, 0.2, 0.3, 0.4}), 1e-15);
}

TEST(Entropy, ErrorsOnDegenerateInput) {
    try {
        entropy_of_mass(std::vector<double>(4, 0.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate_distribution);
    }
    EXPECT_THROW(entropy_of_mass({1.0, -1.0}), Error);
    EXPECT_THROW(entropy_of_mass({}), Error);
}

TEST(Entropy, ActivationNormAndAttentionMass) {
    Tensor t({5, 2}, {9, 9, 3, 4, 0, 0, 0, 0, 0, 0});
    const TokenGrid g(2, 2, t, true);
    EXPECT_EQ(spatial_entropy(g, MassSource::activation_norm), 0.0);
    Tensor attn({2, 5, 5});
    for (std::size_t h = 0; h < 2; ++h) {
        attn[h * 25 + 0] = 0.2;
        for (std::size_t c = 1; c < 5; ++c) attn[h * 25 + c] = 0.2;
    }
    EXPECT_NEAR(spatial_entropy(g, MassSource::attention_mass, &attn), std::log(4.0), 1e-15);
    EXPECT_THROW(spatial_entropy(g, MassSource::attention_mass), Error);
    EXPECT_THROW(spatial_entropy(g, MassSource::attention_mass, &t), Error);
}

TEST(Entropy, ProfileAndCsv) {
    const auto s = stack_from_profile({1.0, 5.0});
    const auto p = entropy_profile(s, MassSource::activation_norm);
    ASSERT_EQ(p.entropy_nats.size(), 2u);
    EXPECT_NEAR(p.entropy_nats[0], std::log(16.0), 1e-12);
    EXPECT_LT(p.entropy_nats[1], p.entropy_nats[0]);
    const std::string csv = entropy_csv(p);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "layer,entropy_nats");
    EXPECT_NE(csv.find("1,2.772589\n"), std::string::npos);
}

TEST(Quantile, LinearInterpolation) {
    EXPECT_EQ(empirical_quantile({3, 1, 2}, 0.5), 2.0);
    EXPECT_EQ(empirical_quantile({1, 2, 3, 4}, 0.0), 1.0);
    EXPECT_EQ(empirical_quantile({1, 2, 3, 4}, 1.0), 4.0);
    EXPECT_NEAR(empirical_quantile({1, 2, 3, 4}, 0.5), 2.5, 1e-15);
}

TEST(Select, DecreasingProfileDeepBand) {
    std::vector<double> h;
    for (int l = 0; l < 24; ++l) h.push_back(10.0 - 0.3 * l);
    const auto sel = select_layers(profile_of(h), 0.0, 0.58);
    std::vector<int> expect(14);
    std::iota(expect.begin(), expect.end(), 11);
    EXPECT_EQ(sel.selected, expect);
    EXPECT_FALSE(sel.policy.explicit_list);
}

TEST(Select, FullBandSelectsEverything) {
    const auto sel = select_layers(profile_of({3, 1, 2, 5}), 0.0, 1.0);
    EXPECT_EQ(sel.selected, (std::vector<int>{1, 2, 3, 4}));
}

TEST(Select, TieBreakPrefersDeeperRun) {
    // runs {1,2} and {4,5} are both inside the band; {3} is outside
    const auto sel = select_layers(profile_of({1.0, 1.1, 9.0, 1.2, 1.3, 9.5}), 0.0, 0.6);
    EXPECT_EQ(sel.selected, (std::vector<int>{4, 5}));
}

TEST(Select, BadBandAndEmpty) {
    EXPECT_THROW(select_layers(profile_of({1, 2}), 0.6, 0.4), Error);
    EXPECT_THROW(select_layers(profile_of({1, 2}), -0.1, 0.4), Error);
    try {
        select_explicit(stack_from_profile({1, 2}), {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::no_layers_selected);
    }
}

TEST(Select, ExplicitListsAreKeptVerbatim) {
    const auto s = stack_from_profile({1, 2, 3, 4});
    EXPECT_EQ(select_explicit(s, {2, 4}).selected, (std::vector<int>{2, 4}));
    EXPECT_TRUE(select_explicit(s, {2, 4}).policy.explicit_list);
    EXPECT_THROW(select_explicit(s, {5}), Error);
    EXPECT_THROW(select_explicit(s, {3, 2}), Error);
}

TEST(Mixing, WeightsAreSoftmax) {
    const auto mw = mixing_weights({0.0, std::log(3.0)});
    EXPECT_NEAR(mw.weights[0], 0.25, 1e-15);
    EXPECT_NEAR(mw.weights[1], 0.75, 1e-15);
    const auto u = uniform_mixing(7);
    for (double w : u.weights) EXPECT_EQ(w, 1.0 / 7.0);
    LayerSelection sel{"x", {1, 2, 3}, {}};
    EXPECT_THROW(mixing_weights({1.0, 2.0}, sel), Error);
}

TEST(Aggregate, SingleLayerIdentityOlEqualsLayerNorm) {
    Rng rng(2);
    LayerStack s;
    s.encoder_id = "e";
    s.layers.emplace_back(2, 2, rng.normal_tensor({4, 6}), false);
    s.layer_indices = {1};
    const auto sel = select_all(s);
    const std::vector<OrthoLayer> ols{OrthoLayer::identity(6, 6)};
    const auto v = aggregate(s, sel, uniform_mixing(1), ols);
    EXPECT_LE(max_abs_difference(v.tokens(), layer_norm(s.layers[0].tokens())), 1e-15);
}

TEST(Aggregate, IdenticalLayersGiveThatLayer) {
    Rng rng(3);
    const Tensor z = rng.normal_tensor({4, 5});
    LayerStack s;
    s.encoder_id = "e";
    for (int l = 0; l < 3; ++l) s.layers.emplace_back(2, 2, z, false);
    s.layer_indices = {1, 2, 3};
    const OrthoLayer ol(5, 5, rng.normal_tensor({5, 5}));
    const std::vector<OrthoLayer> ols(3, ol);
    const auto v = aggregate(s, select_all(s), mixing_weights({0.3, -1.0, 2.0}), ols);
    EXPECT_LE(max_abs_difference(v.tokens(), apply_ol(ol, layer_norm(z))), 1e-14);
}

TEST(Aggregate, MatchesHandWeightedSumWithoutLn) {
    Rng rng(4);
    LayerStack s;
    s.encoder_id = "e";
    std::vector<OrthoLayer> ols;
    for (int l = 0; l < 3; ++l) {
        s.layers.emplace_back(1, 3, rng.normal_tensor({3, 4}), false);
        ols.emplace_back(4, 2, rng.normal_tensor({4, 4}));
    }
    s.layer_indices = {2, 5, 9};
    AggregateOptions opt;
    opt.apply_layer_norm = false;
    const auto mw = mixing_weights({0.5, 0.1, -0.2});
    const auto v = aggregate(s, select_all(s), mw, ols, opt);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < 2; ++i) {
            double acc = 0;
            for (int l = 0; l < 3; ++l) {
                const auto q = oracle::to_mat(ols[l].matrix());
                double p = 0;
                for (std::size_t j = 0; j < 4; ++j) p += q[i][j] * s.layers[l].tokens()(t, j);
                acc += mw.weights[l] * p;
            }
            EXPECT_NEAR(v.tokens()(t, i), acc, 1e-14);
        }
}

TEST(Aggregate, RequiresOneOlPerSelectedLayer) {
    const auto s = stack_from_profile({1, 2});
    EXPECT_THROW(aggregate(s, select_all(s), uniform_mixing(2), {OrthoLayer::identity(2, 2)}), Error);
}
