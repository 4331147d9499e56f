#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "venomguard/feature_matrix.hpp"

namespace testing_support {

// Sample covariance with 1/(n-1), by explicit loops.
inline std::vector<std::vector<double>> covariance(const venomguard::FeatureMatrix& x) {
    const std::size_t n = x.rows(), d = x.dims();
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j) / static_cast<double>(n);
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += (x.at(i, a) - mean[a]) * (x.at(i, b) - mean[b]);
            cov[a][b] = s / static_cast<double>(n - 1);
        }
    return cov;
}

// Cyclic Jacobi rotations; eigenvalues sorted descending.
inline std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
    const std::size_t d = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = a[i][i];
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

}  // namespace testing_support
