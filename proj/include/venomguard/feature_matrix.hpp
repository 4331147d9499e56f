#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace venomguard {

// Dense row-major matrix of doubles. Used for image features, logits,
// metadata features and serialized model tensors alike.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t dims, double fill = 0.0);
    FeatureMatrix(std::size_t rows, std::size_t dims, std::vector<double> data);

    static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t dims() const noexcept { return dims_; }
    bool empty() const noexcept { return data_.empty(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * dims_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * dims_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * dims_, dims_}; }
    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * dims_, dims_};
    }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }

    bool all_finite() const noexcept;

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t dims_ = 0;
    std::vector<double> data_;
};

// VGF1 container: "VGF1", rows (u64 LE), dims (u64 LE), rows*dims f32 LE,
// row-major. Several records may be concatenated in one file.
inline constexpr char kVgfMagic[4] = {'V', 'G', 'F', '1'};

void append_vgf(std::vector<std::uint8_t>& out, const FeatureMatrix& m);

// Decodes one record starting at `offset` and advances it past the record.
FeatureMatrix decode_vgf(std::span<const std::uint8_t> bytes, std::size_t& offset);

void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path);

// Reads exactly one record; bytes after it are a TrailingData error.
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

void write_matrix_set(std::span<const FeatureMatrix> matrices,
                      const std::filesystem::path& path);
std::vector<FeatureMatrix> read_matrix_set(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(std::span<const std::uint8_t> bytes,
                      const std::filesystem::path& path);

}  // namespace venomguard
