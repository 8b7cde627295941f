#pragma once

// Dense real64 tensors and the SGT1 binary container.
//
// SGT1 layout, all integers little-endian:
//
//   offset  size      field
//   0       4         magic "SGT1"
//   4       2         version (u16) = 1
//   6       1         dtype (u8)    = 1  (IEEE-754 binary64, little-endian)
//   7       1         ndim (u8)     >= 1
//   8       8*ndim    extents (u64 each, all >= 1)
//   ...     8*prod    payload, row-major
//
// Nothing may follow the payload.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "specgeo/error.hpp"
#include "specgeo/matrix.hpp"

namespace specgeo {

inline constexpr std::array<char, 4> kSgtMagic{'S', 'G', 'T', '1'};
inline constexpr std::uint16_t kSgtVersion = 1;
inline constexpr std::uint8_t kSgtDtypeF64 = 1;

class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::uint64_t> dims, std::vector<double> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        validate_shape(dims_);
        require(data_.size() == element_count(dims_), Errc::length_mismatch,
                "tensor data length does not equal product of dims");
    }

    explicit Tensor(const Matrix& m) : Tensor({m.rows(), m.cols()}, m.data()) {}

    static std::uint64_t element_count(const std::vector<std::uint64_t>& dims) {
        std::uint64_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }

    static void validate_shape(const std::vector<std::uint64_t>& dims) {
        require(!dims.empty(), Errc::invalid_shape, "tensor needs at least one dimension");
        require(dims.size() <= 255, Errc::invalid_shape, "tensor has more than 255 dimensions");
        for (auto d : dims) require(d >= 1, Errc::invalid_shape, "tensor extents must be positive");
    }

    const std::vector<std::uint64_t>& dims() const noexcept { return dims_; }
    std::size_t ndim() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    /// Row-major strides, computed right to left.
    std::vector<std::uint64_t> strides() const {
        std::vector<std::uint64_t> s(dims_.size(), 1);
        for (std::size_t k = dims_.size(); k-- > 1;) s[k - 1] = s[k] * dims_[k];
        return s;
    }

    std::uint64_t flat_index(std::span<const std::uint64_t> idx) const {
        require(idx.size() == dims_.size(), Errc::dimension_mismatch, "index rank mismatch");
        const auto s = strides();
        std::uint64_t flat = 0;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            require(idx[k] < dims_[k], Errc::invalid_argument, "index out of range");
            flat += idx[k] * s[k];
        }
        return flat;
    }

    double at(std::initializer_list<std::uint64_t> idx) const {
        return data_[flat_index(std::span<const std::uint64_t>(idx.begin(), idx.size()))];
    }

    /// Interpret as a matrix. 1-D tensors become a single row.
    Matrix to_matrix() const {
        require(ndim() == 1 || ndim() == 2, Errc::invalid_shape, "tensor is not 1-D or 2-D");
        const std::size_t rows = ndim() == 1 ? 1 : static_cast<std::size_t>(dims_[0]);
        const std::size_t cols = static_cast<std::size_t>(dims_.back());
        return Matrix(rows, cols, data_);
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::uint64_t> dims_;
    std::vector<double> data_;
};

struct LoadOptions {
    /// Accept NaN/Inf payload values ("raw" files).
    bool allow_non_finite = false;
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(const unsigned char* p) noexcept {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::io, "write failed for " + path.string());
}

struct Header {
    std::vector<std::uint64_t> dims;
    std::size_t payload_offset = 0;
};

inline Header parse_header(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 4 || std::memcmp(p, kSgtMagic.data(), 4) != 0)
        fail(Errc::bad_magic, "missing SGT1 magic");
    if (bytes.size() < 8) fail(Errc::truncated_payload, "header truncated");
    const std::uint16_t version = static_cast<std::uint16_t>(p[4] | (p[5] << 8));
    if (version != kSgtVersion) fail(Errc::version_mismatch, "unsupported SGT1 version " + std::to_string(version));
    if (p[6] != kSgtDtypeF64) fail(Errc::unsupported_dtype, "unsupported dtype " + std::to_string(p[6]));
    const std::size_t ndim = p[7];
    if (ndim == 0) fail(Errc::invalid_shape, "ndim is zero");
    Header h;
    h.payload_offset = 8 + 8 * ndim;
    if (bytes.size() < h.payload_offset) fail(Errc::truncated_payload, "extent table truncated");
    h.dims.resize(ndim);
    for (std::size_t k = 0; k < ndim; ++k) {
        h.dims[k] = get_u64(p + 8 + 8 * k);
        if (h.dims[k] == 0) fail(Errc::invalid_shape, "zero extent");
    }
    return h;
}

} // namespace detail

/// Serialize to SGT1 bytes.
inline std::string encode_tensor(const Tensor& t) {
    Tensor::validate_shape(t.dims());
    require(t.size() == Tensor::element_count(t.dims()), Errc::length_mismatch,
            "tensor data length does not equal product of dims");
    require(all_finite(t.data()), Errc::non_finite, "tensor contains NaN or Inf");
    std::string out;
    out.reserve(8 + 8 * t.ndim() + 8 * t.size());
    out.append(kSgtMagic.data(), 4);
    detail::put_u16(out, kSgtVersion);
    out.push_back(static_cast<char>(kSgtDtypeF64));
    out.push_back(static_cast<char>(t.ndim()));
    for (auto d : t.dims()) detail::put_u64(out, d);
    for (double x : t.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(x));
    return out;
}

inline Tensor decode_tensor(const std::string& bytes, const LoadOptions& opts = {}) {
    const auto header = detail::parse_header(bytes);
    // Guard the multiplication against absurd extents before allocating.
    std::uint64_t count = 1;
    for (auto d : header.dims) {
        if (count > (bytes.size() / 8) / d + 1) fail(Errc::truncated_payload, "payload shorter than extents imply");
        count *= d;
    }
    const std::uint64_t available = bytes.size() - header.payload_offset;
    if (available < count * 8) fail(Errc::truncated_payload, "payload shorter than extents imply");
    if (available != count * 8) fail(Errc::length_mismatch, "payload longer than extents imply");
    std::vector<double> data(count);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + header.payload_offset;
    for (std::uint64_t i = 0; i < count; ++i) data[i] = std::bit_cast<double>(detail::get_u64(p + 8 * i));
    if (!opts.allow_non_finite && !all_finite(data)) fail(Errc::non_finite, "payload contains NaN or Inf");
    return Tensor(header.dims, std::move(data));
}

inline void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    detail::write_file(path, encode_tensor(t));
}

inline void save_tensor(const Matrix& m, const std::filesystem::path& path) { save_tensor(Tensor(m), path); }

inline Tensor load_tensor(const std::filesystem::path& path, const LoadOptions& opts = {}) {
    return decode_tensor(detail::read_file(path), opts);
}

/// Extents only, without reading the payload.
inline std::vector<std::uint64_t> read_tensor_dims(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open " + path.string());
    std::string head(8, '\0');
    in.read(head.data(), 8);
    head.resize(static_cast<std::size_t>(in.gcount()));
    if (head.size() == 8) {
        const std::size_t ndim = static_cast<unsigned char>(head[7]);
        std::string ext(8 * ndim, '\0');
        in.read(ext.data(), static_cast<std::streamsize>(ext.size()));
        ext.resize(static_cast<std::size_t>(in.gcount()));
        head += ext;
    }
    return detail::parse_header(head).dims;
}

inline Matrix load_matrix(const std::filesystem::path& path) { return load_tensor(path).to_matrix(); }

} // namespace specgeo
