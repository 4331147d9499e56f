#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "venomguard/feature_matrix.hpp"

namespace venomguard {

inline constexpr std::size_t kDefaultPcaDims = 32;

struct PcaModel {
    std::vector<double> mean;         // d_in
    FeatureMatrix components;         // k x d_in, orthonormal rows
    std::vector<double> eigenvalues;  // k, non-increasing
    double total_variance = 0.0;      // trace of the sample covariance
    bool degenerate = false;          // input had zero variance

    std::size_t input_dims() const noexcept { return mean.size(); }
    std::size_t output_dims() const noexcept { return eigenvalues.size(); }
    double explained_variance_ratio() const noexcept;
};

// Top-k principal directions of the (n-1)-normalized sample covariance.
// Each component is sign-fixed so its largest-magnitude entry (first one on
// ties) is non-negative.
PcaModel fit_pca(const FeatureMatrix& x, std::size_t k);

FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& x);
FeatureMatrix pca_inverse(const PcaModel& model, const FeatureMatrix& y);

// Three VGF1 records (mean 1xd, components kxd, eigenvalues 1xk) in `path`
// plus a `<path>.meta` line "k=<k> d=<d>".
void save_pca(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_pca(const std::filesystem::path& path);

}  // namespace venomguard
