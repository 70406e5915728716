#include <gtest/gtest.h>

#include <cmath>

#include "comevl/boxcodec.hpp"
#include "comevl/random.hpp"

using namespace comevl;
using namespace comevl::box;

TEST(Quantize, EndpointsAndRounding) {
    EXPECT_EQ(quantize(0.0), 0);
    EXPECT_EQ(quantize(1.0), 999);
    EXPECT_EQ(quantize(0.5), 500);  // 499.5 rounds up
    EXPECT_EQ(quantize(-3.0), 0);
    EXPECT_EQ(quantize(7.0), 999);
    EXPECT_EQ(quantize(0.5, 2), 1);
    EXPECT_THROW(quantize(NAN), Error);
    EXPECT_THROW(quantize(0.5, 1), Error);
}

TEST(Quantize, ExhaustiveRoundTrip) {
    for (int bins : {2, 10, 1000, 4096})
        for (int k = 0; k < bins; ++k) ASSERT_EQ(quantize(dequantize(k, bins), bins), k);
    EXPECT_THROW(dequantize(1000), Error);
    EXPECT_THROW(dequantize(-1), Error);
}

TEST(Quantize, HalfBinErrorBound) {
    for (int i = 0; i <= 10000; ++i) {
        const double u = i / 10000.0;
        ASSERT_LE(std::abs(dequantize(quantize(u)) - u), 1.0 / 1998.0 + 1e-12) << u;
    }
}

TEST(Encode, FullFrameBox) {
    const auto seq = encode_box({0, 0, 384, 384, 384, 384});
    EXPECT_EQ(to_string(seq), "<BOX> <COORD_0> <COORD_0> <COORD_999> <COORD_999> <END_BOX>");
}

TEST(Encode, SwappedCornersNormalized) {
    EXPECT_EQ(encode_box({300, 200, 10, 20, 384, 384}), encode_box({10, 20, 300, 200, 384, 384}));
    EXPECT_THROW(encode_box({0, 0, 1, 1, 0, 10}), Error);
    EXPECT_THROW(encode_box({0, NAN, 1, 1, 10, 10}), Error);
}

TEST(Decode, FullFrame) {
    const auto seq = parse_tokens("<BOX> <COORD_0> <COORD_0> <COORD_999> <COORD_999> <END_BOX>");
    EXPECT_EQ(format_box(decode_box(seq, 384, 384)), "0.0000 0.0000 384.0000 384.0000");
}

TEST(Decode, SwappedTokensComeBackOrdered) {
    const auto seq = parse_tokens("<BOX> <COORD_900> <COORD_800> <COORD_100> <COORD_200> <END_BOX>");
    const Box b = decode_box(seq, 999, 999);
    EXPECT_EQ(b.x1, 100.0);
    EXPECT_EQ(b.x2, 900.0);
    EXPECT_EQ(b.y1, 200.0);
    EXPECT_EQ(b.y2, 800.0);
}

TEST(Decode, RandomBoxesSatisfyInvariants) {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const double w = rng.uniform(1, 2000), h = rng.uniform(1, 2000);
        const Box in{rng.uniform(-100, w + 100), rng.uniform(-100, h + 100), rng.uniform(-100, w + 100),
                     rng.uniform(-100, h + 100), w, h};
        const Box out = decode_box(encode_box(in), w, h);
        ASSERT_LE(out.x1, out.x2);
        ASSERT_LE(out.y1, out.y2);
        ASSERT_GE(out.x1, 0.0);
        ASSERT_GE(out.y1, 0.0);
        ASSERT_LE(out.x2, w);
        ASSERT_LE(out.y2, h);
    }
}

TEST(Parse, ErrorsCarryTokenPosition) {
    auto position_of = [](const std::string& text) {
        try {
            decode_boxes(parse_tokens(text), 10, 10);
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::parse);
            return e.position();
        }
        return Error::npos;
    };
    EXPECT_EQ(position_of("<BOX> <COORD_1> <COORD_2> <COORD_3> <COORD_4> <END_BOX> <BOX> <COORD_9> <COORD_> "
                          "<COORD_1> <COORD_2> <END_BOX>"),
              8u);
    EXPECT_EQ(position_of("<BOX> <COORD_1> <FOO> <COORD_3> <COORD_4> <END_BOX>"), 2u);
    EXPECT_EQ(position_of("<BOX> <COORD_1> <COORD_1000> <COORD_3> <COORD_4> <END_BOX>"), 2u);
    EXPECT_EQ(position_of("<COORD_1> <COORD_1> <COORD_2> <COORD_3> <COORD_4> <END_BOX>"), 0u);
    EXPECT_EQ(position_of("<BOX> <COORD_1> <COORD_2> <COORD_3> <COORD_4>"), 5u);
    EXPECT_EQ(position_of("<BOX> <COORD_1> <COORD_2> <COORD_3> <COORD_4> <END_BOX> <BOX> <COORD_1> <END_BOX>"), 8u);
}

TEST(Parse, MultipleBoxes) {
    const auto seq = encode_boxes({{0, 0, 10, 10, 100, 100}, {50, 50, 100, 100, 100, 100}});
    EXPECT_EQ(seq.tokens.size(), 12u);
    const auto boxes = decode_boxes(parse_tokens(to_string(seq)), 100, 100);
    ASSERT_EQ(boxes.size(), 2u);
    EXPECT_NEAR(boxes[1].x1, 50.0, 0.06);
    EXPECT_EQ(boxes[1].x2, 100.0);
}
