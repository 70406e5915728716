#pragma once

// Bounding boxes as coordinate tokens:
//   <BOX> <COORD_q(x1)> <COORD_q(y1)> <COORD_q(x2)> <COORD_q(y2)> <END_BOX>
// with q(u) = floor(clip(u, 0, 1) * (B - 1) + 0.5) over normalized coordinates.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "comevl/error.hpp"

namespace comevl::box {

inline constexpr int default_bins = 1000;

inline void require_bins(int bins) {
    require(bins >= 2, ErrorKind::invalid_value, "bin count must be >= 2, got " + std::to_string(bins));
}

inline int quantize(double u, int bins = default_bins) {
    require_bins(bins);
    require(std::isfinite(u), ErrorKind::invalid_value, "cannot quantize a non-finite coordinate");
    const double c = std::clamp(u, 0.0, 1.0);
    return static_cast<int>(std::floor(c * static_cast<double>(bins - 1) + 0.5));
}

inline double dequantize(int k, int bins = default_bins) {
    require_bins(bins);
    require(k >= 0 && k < bins, ErrorKind::invalid_value,
            "bin " + std::to_string(k) + " outside [0, " + std::to_string(bins - 1) + "]");
    return static_cast<double>(k) / static_cast<double>(bins - 1);
}

struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    double width = 1, height = 1;  // image frame in pixels
};

enum class TokenKind { box, coord, end_box };

struct Token {
    TokenKind kind;
    int bin = 0;  // meaningful for coord tokens

    friend bool operator==(const Token&, const Token&) = default;
};

struct BoxTokenSeq {
    std::vector<Token> tokens;
    int bins = default_bins;

    friend bool operator==(const BoxTokenSeq&, const BoxTokenSeq&) = default;
};

inline std::string to_string(const Token& t) {
    switch (t.kind) {
        case TokenKind::box: return "<BOX>";
        case TokenKind::end_box: return "<END_BOX>";
        case TokenKind::coord: return "<COORD_" + std::to_string(t.bin) + ">";
    }
    return {};
}

/// Tokens joined by single spaces.
inline std::string to_string(const BoxTokenSeq& seq) {
    std::string s;
    for (const auto& t : seq.tokens) {
        if (!s.empty()) s += ' ';
        s += to_string(t);
    }
    return s;
}

inline BoxTokenSeq encode_box(Box b, int bins = default_bins) {
    require_bins(bins);
    require(std::isfinite(b.width) && std::isfinite(b.height) && b.width > 0 && b.height > 0,
            ErrorKind::invalid_value, "box frame must be positive");
    require(std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) && std::isfinite(b.y2),
            ErrorKind::invalid_value, "box coordinates must be finite");
    if (b.x2 < b.x1) std::swap(b.x1, b.x2);
    if (b.y2 < b.y1) std::swap(b.y1, b.y2);
    BoxTokenSeq seq{{}, bins};
    seq.tokens.push_back({TokenKind::box});
    for (double v : {b.x1 / b.width, b.y1 / b.height, b.x2 / b.width, b.y2 / b.height})
        seq.tokens.push_back({TokenKind::coord, quantize(v, bins)});
    seq.tokens.push_back({TokenKind::end_box});
    return seq;
}

/// Multiple boxes are plain concatenations of single-box sequences.
inline BoxTokenSeq encode_boxes(const std::vector<Box>& boxes, int bins = default_bins) {
    BoxTokenSeq out{{}, bins};
    for (const auto& b : boxes) {
        const auto s = encode_box(b, bins);
        out.tokens.insert(out.tokens.end(), s.tokens.begin(), s.tokens.end());
    }
    return out;
}

/// Dequantize, scale to pixels, clip to the frame, then restore corner order.
inline Box decode_box(const BoxTokenSeq& seq, double width, double height) {
    require(std::isfinite(width) && std::isfinite(height) && width > 0 && height > 0, ErrorKind::invalid_value,
            "box frame must be positive");
    const auto& t = seq.tokens;
    for (std::size_t i = 0; i < std::min<std::size_t>(t.size(), 6); ++i) {
        const TokenKind want = i == 0 ? TokenKind::box : i == 5 ? TokenKind::end_box : TokenKind::coord;
        if (t[i].kind != want) {
            const char* name = want == TokenKind::box ? "<BOX>" : want == TokenKind::end_box ? "<END_BOX>" : "<COORD_k>";
            throw Error::parse_at(i, std::string("expected ") + name + ", got " + to_string(t[i]));
        }
        if (want == TokenKind::coord && (t[i].bin < 0 || t[i].bin >= seq.bins))
            throw Error::parse_at(i, "coordinate bin " + std::to_string(t[i].bin) + " outside [0, " +
                                         std::to_string(seq.bins - 1) + "]");
    }
    if (t.size() != 6) throw Error::parse_at(std::min<std::size_t>(t.size(), 6), "box sequence must have exactly 6 tokens");

    auto pixel = [&](int k, double extent) { return std::clamp(dequantize(k, seq.bins) * extent, 0.0, extent); };
    Box b{pixel(t[1].bin, width), pixel(t[2].bin, height), pixel(t[3].bin, width), pixel(t[4].bin, height), width,
          height};
    if (b.x2 < b.x1) std::swap(b.x1, b.x2);
    if (b.y2 < b.y1) std::swap(b.y1, b.y2);
    return b;
}

/// Parses whitespace-separated "<BOX>", "<COORD_k>", "<END_BOX>" tokens.
/// Errors name the 0-based position of the first bad token.
inline BoxTokenSeq parse_tokens(const std::string& text, int bins = default_bins) {
    require_bins(bins);
    BoxTokenSeq seq{{}, bins};
    std::istringstream in(text);
    std::string word;
    for (std::size_t pos = 0; in >> word; ++pos) {
        if (word == "<BOX>") {
            seq.tokens.push_back({TokenKind::box});
        } else if (word == "<END_BOX>") {
            seq.tokens.push_back({TokenKind::end_box});
        } else if (word.size() > 8 && word.compare(0, 7, "<COORD_") == 0 && word.back() == '>') {
            const std::string digits = word.substr(7, word.size() - 8);
            const bool numeric = !digits.empty() && digits.size() <= 9 &&
                                 std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; });
            if (!numeric) throw Error::parse_at(pos, "malformed coordinate token '" + word + "'");
            const int k = std::stoi(digits);
            if (k >= bins) throw Error::parse_at(pos, "coordinate bin " + digits + " outside [0, " + std::to_string(bins - 1) + "]");
            seq.tokens.push_back({TokenKind::coord, k});
        } else {
            throw Error::parse_at(pos, "unknown token '" + word + "'");
        }
    }
    return seq;
}

/// Splits a concatenation of box sequences and decodes each one.
inline std::vector<Box> decode_boxes(const BoxTokenSeq& seq, double width, double height) {
    std::vector<Box> out;
    for (std::size_t start = 0; start < seq.tokens.size(); start += 6) {
        BoxTokenSeq one{{}, seq.bins};
        const std::size_t end = std::min(seq.tokens.size(), start + 6);
        one.tokens.assign(seq.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                          seq.tokens.begin() + static_cast<std::ptrdiff_t>(end));
        try {
            out.push_back(decode_box(one, width, height));
        } catch (const Error& e) {
            if (e.position() == Error::npos) throw;
            throw Error::parse_at(start + e.position(), "box " + std::to_string(start / 6) + ": " +
                                                            std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
        }
    }
    require(!out.empty(), ErrorKind::parse, "no box tokens");
    return out;
}

inline std::string format_box(const Box& b) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.4f %.4f %.4f %.4f", b.x1, b.y1, b.x2, b.y2);
    return buf;
}

}  // namespace comevl::box
