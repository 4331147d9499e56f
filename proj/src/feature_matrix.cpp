#include "venomguard/feature_matrix.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "venomguard/error.hpp"

namespace venomguard {

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t dims, double fill)
    : rows_(rows), dims_(dims), data_(rows * dims, fill) {}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t dims, std::vector<double> data)
    : rows_(rows), dims_(dims), data_(std::move(data)) {
    if (data_.size() != rows_ * dims_) {
        throw_argument("matrix data length " + std::to_string(data_.size()) +
                       " does not equal " + std::to_string(rows_) + "x" +
                       std::to_string(dims_));
    }
}

FeatureMatrix FeatureMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t dims = rows.empty() ? 0 : rows.front().size();
    std::vector<double> data;
    data.reserve(rows.size() * dims);
    for (const auto& r : rows) {
        if (r.size() != dims) throw_argument("ragged rows in FeatureMatrix::from_rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return FeatureMatrix(rows.size(), dims, std::move(data));
}

bool FeatureMatrix::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

constexpr std::size_t kHeaderBytes = 4 + 8 + 8;

}  // namespace

void append_vgf(std::vector<std::uint8_t>& out, const FeatureMatrix& m) {
    out.reserve(out.size() + kHeaderBytes + m.values().size() * 4);
    out.insert(out.end(), std::begin(kVgfMagic), std::end(kVgfMagic));
    put_u64(out, m.rows());
    put_u64(out, m.dims());
    std::size_t index = 0;
    for (double v : m.values()) {
        const auto f = static_cast<float>(v);
        if (!std::isfinite(f)) {
            throw Error(ErrorCode::NonFinite,
                        "value at flat index " + std::to_string(index) +
                            " is not representable as a finite f32");
        }
        put_u32(out, std::bit_cast<std::uint32_t>(f));
        ++index;
    }
}

FeatureMatrix decode_vgf(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    const std::size_t available = bytes.size() - offset;
    if (available < 4) throw Error(ErrorCode::Truncated, "missing VGF1 header");
    const std::uint8_t* p = bytes.data() + offset;
    if (!std::equal(std::begin(kVgfMagic), std::end(kVgfMagic), p)) {
        throw Error(ErrorCode::BadMagic, "expected VGF1 magic");
    }
    if (available < kHeaderBytes) throw Error(ErrorCode::Truncated, "short VGF1 header");
    const std::uint64_t rows = get_u64(p + 4);
    const std::uint64_t dims = get_u64(p + 12);
    const std::size_t payload_available = available - kHeaderBytes;
    // Compare in element units first so rows*dims*4 cannot overflow.
    if (dims != 0 && rows > payload_available / 4 / dims) {
        throw Error(ErrorCode::Truncated, "declared " + std::to_string(rows) + "x" +
                                              std::to_string(dims) + " exceeds payload");
    }
    const std::size_t count = static_cast<std::size_t>(rows * dims);
    if (count * 4 > payload_available) {
        throw Error(ErrorCode::Truncated, "declared " + std::to_string(rows) + "x" +
                                              std::to_string(dims) + " exceeds payload");
    }
    std::vector<double> data(count);
    const std::uint8_t* q = p + kHeaderBytes;
    for (std::size_t i = 0; i < count; ++i) {
        const float f = std::bit_cast<float>(get_u32(q + 4 * i));
        if (!std::isfinite(f)) {
            throw Error(ErrorCode::NonFinite,
                        "non-finite value at flat index " + std::to_string(i));
        }
        data[i] = f;
    }
    offset += kHeaderBytes + count * 4;
    return FeatureMatrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(dims),
                         std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::Io, "read failed for " + path.string());
    return bytes;
}

void write_file_bytes(std::span<const std::uint8_t> bytes,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    append_vgf(bytes, m);
    write_file_bytes(bytes, path);
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t offset = 0;
    FeatureMatrix m = decode_vgf(bytes, offset);
    if (offset != bytes.size()) {
        throw Error(ErrorCode::TrailingData,
                    std::to_string(bytes.size() - offset) + " bytes after record in " +
                        path.string());
    }
    return m;
}

void write_matrix_set(std::span<const FeatureMatrix> matrices,
                      const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    for (const auto& m : matrices) append_vgf(bytes, m);
    write_file_bytes(bytes, path);
}

std::vector<FeatureMatrix> read_matrix_set(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    std::vector<FeatureMatrix> out;
    std::size_t offset = 0;
    while (offset < bytes.size()) out.push_back(decode_vgf(bytes, offset));
    return out;
}

}  // namespace venomguard
