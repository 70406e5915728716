#pragma once

// CMVT binary tensor files.
//
//   bytes 0..3    "CMVT"
//   bytes 4..7    version (u32 LE) = 1
//   bytes 8..11   dtype (u32 LE): 0 = f32, 1 = f64
//   bytes 12..15  ndim (u32 LE)
//   ndim x u64 LE extents
//   payload, row-major, little-endian IEEE-754

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "comevl/tensor.hpp"

namespace comevl::cmvt {

inline constexpr std::uint32_t format_version = 1;
inline constexpr char magic[4] = {'C', 'M', 'V', 'T'};

namespace detail {

template <class U>
void put_le(std::vector<std::uint8_t>& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <class U>
U get_le(const std::uint8_t* p) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
    return v;
}

}  // namespace detail

/// Serializes using the tensor's storage tag.
inline std::vector<std::uint8_t> encode(const Tensor& t) {
    std::vector<std::uint8_t> out(std::begin(magic), std::end(magic));
    detail::put_le<std::uint32_t>(out, format_version);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dtype()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) detail::put_le<std::uint64_t>(out, e);
    const std::size_t width = t.dtype() == DType::f32 ? 4 : 8;
    out.reserve(out.size() + t.size() * width);
    for (double v : t.data()) {
        if (t.dtype() == DType::f32)
            detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        else
            detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline Tensor decode(const std::vector<std::uint8_t>& bytes) {
    auto need = [&](std::size_t n, const char* what) {
        require(bytes.size() >= n, ErrorKind::io, std::string("CMVT truncated in ") + what);
    };
    need(16, "header");
    require(std::memcmp(bytes.data(), magic, 4) == 0, ErrorKind::io, "CMVT bad magic");
    const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
    require(version == format_version, ErrorKind::io,
            "CMVT unsupported version " + std::to_string(version));
    const auto code = detail::get_le<std::uint32_t>(bytes.data() + 8);
    require(code <= 1, ErrorKind::io, "CMVT unknown dtype code " + std::to_string(code));
    const DType dtype = static_cast<DType>(code);
    const auto ndim = detail::get_le<std::uint32_t>(bytes.data() + 12);
    require(ndim <= 32, ErrorKind::io, "CMVT implausible ndim " + std::to_string(ndim));
    need(16 + 8 * std::size_t{ndim}, "extents");
    Shape shape(ndim);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        const auto e = detail::get_le<std::uint64_t>(bytes.data() + 16 + 8 * i);
        require(e < (std::uint64_t{1} << 40), ErrorKind::io, "CMVT implausible extent");
        shape[i] = static_cast<std::size_t>(e);
        count *= shape[i];
    }
    const std::size_t width = dtype == DType::f32 ? 4 : 8;
    const std::size_t header = 16 + 8 * std::size_t{ndim};
    require(bytes.size() == header + count * width, ErrorKind::io,
            "CMVT payload length " + std::to_string(bytes.size() - header) + " does not match shape " +
                shape_string(shape));
    std::vector<double> data(count);
    const std::uint8_t* p = bytes.data() + header;
    for (std::size_t i = 0; i < count; ++i) {
        if (dtype == DType::f32)
            data[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i));
        else
            data[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(p + 8 * i));
    }
    return Tensor(std::move(shape), std::move(data), dtype);
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::io, "short write to " + path.string());
}

inline Tensor read(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    return with_context(path.string(), [&] { return decode(bytes); });
}

inline void write(const std::filesystem::path& path, const Tensor& t) { write_bytes(path, encode(t)); }

}  // namespace comevl::cmvt
