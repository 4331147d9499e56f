#include "venomguard/pca.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "venomguard/diagnostics.hpp"
#include "venomguard/error.hpp"

namespace venomguard {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_eigen(const FeatureMatrix& m) {
    return {m.values().data(), static_cast<Eigen::Index>(m.rows()),
            static_cast<Eigen::Index>(m.dims())};
}

std::filesystem::path meta_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta");
}

}  // namespace

double PcaModel::explained_variance_ratio() const noexcept {
    if (total_variance <= 0.0) return 0.0;
    double kept = 0.0;
    for (double e : eigenvalues) kept += e;
    return kept / total_variance;
}

PcaModel fit_pca(const FeatureMatrix& x, std::size_t k) {
    const std::size_t n = x.rows();
    const std::size_t d = x.dims();
    if (n < 2) throw_argument("PCA needs at least 2 samples, got " + std::to_string(n));
    if (k < 1 || k > std::min(n, d)) {
        throw_argument("PCA target dimension " + std::to_string(k) + " outside [1, " +
                       std::to_string(std::min(n, d)) + "]");
    }
    if (!x.all_finite()) throw Error(ErrorCode::NonFinite, "PCA input contains non-finite values");

    const auto data = as_eigen(x);
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const RowMatrix centered = data.rowwise() - mean;
    const Eigen::MatrixXd cov =
        (centered.transpose() * centered) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorCode::Numeric, "covariance eigendecomposition did not converge");
    }

    PcaModel model;
    model.mean.assign(mean.data(), mean.data() + d);
    model.total_variance = cov.trace();
    model.components = FeatureMatrix(k, d);
    model.eigenvalues.resize(k);

    // Eigen returns ascending eigenvalues; walk from the top.
    const auto& values = solver.eigenvalues();
    const auto& vectors = solver.eigenvectors();
    for (std::size_t c = 0; c < k; ++c) {
        const auto src = static_cast<Eigen::Index>(d - 1 - c);
        model.eigenvalues[c] = std::max(0.0, values(src));
        std::size_t pivot = 0;
        for (std::size_t j = 1; j < d; ++j) {
            if (std::abs(vectors(static_cast<Eigen::Index>(j), src)) >
                std::abs(vectors(static_cast<Eigen::Index>(pivot), src))) {
                pivot = j;
            }
        }
        const double sign = vectors(static_cast<Eigen::Index>(pivot), src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            model.components.at(c, j) = sign * vectors(static_cast<Eigen::Index>(j), src);
        }
    }

    // Identical rows can leave rounding-level variance behind after centering.
    const double scale = data.cwiseAbs2().maxCoeff();
    if (model.total_variance <= 1e-24 * std::max(scale, 1.0)) {
        model.degenerate = true;
        model.total_variance = 0.0;
        std::fill(model.eigenvalues.begin(), model.eigenvalues.end(), 0.0);
        warn("PCA input has zero variance; components are an arbitrary orthonormal basis");
    }
    return model;
}

FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& x) {
    const std::size_t d = model.input_dims();
    const std::size_t k = model.output_dims();
    if (x.dims() != d) {
        throw_argument("pca_transform: input has " + std::to_string(x.dims()) +
                       " dims, model expects " + std::to_string(d));
    }
    FeatureMatrix out(x.rows(), k);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto row = x.row(r);
        for (std::size_t c = 0; c < k; ++c) {
            const auto comp = model.components.row(c);
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += comp[j] * (row[j] - model.mean[j]);
            out.at(r, c) = acc;
        }
    }
    return out;
}

FeatureMatrix pca_inverse(const PcaModel& model, const FeatureMatrix& y) {
    const std::size_t d = model.input_dims();
    const std::size_t k = model.output_dims();
    if (y.dims() != k) {
        throw_argument("pca_inverse: input has " + std::to_string(y.dims()) +
                       " dims, model has " + std::to_string(k) + " components");
    }
    FeatureMatrix out(y.rows(), d);
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto dst = out.row(r);
        std::copy(model.mean.begin(), model.mean.end(), dst.begin());
        const auto coeffs = y.row(r);
        for (std::size_t c = 0; c < k; ++c) {
            const auto comp = model.components.row(c);
            for (std::size_t j = 0; j < d; ++j) dst[j] += coeffs[c] * comp[j];
        }
    }
    return out;
}

void save_pca(const PcaModel& model, const std::filesystem::path& path) {
    const std::size_t d = model.input_dims();
    const std::size_t k = model.output_dims();
    const FeatureMatrix parts[] = {
        FeatureMatrix(1, d, model.mean),
        model.components,
        FeatureMatrix(1, k, model.eigenvalues),
    };
    write_matrix_set(parts, path);
    std::ofstream meta(meta_path(path), std::ios::trunc);
    if (!meta) throw Error(ErrorCode::Io, "cannot write " + meta_path(path).string());
    meta << "k=" << k << " d=" << d << '\n';
}

PcaModel load_pca(const std::filesystem::path& path) {
    auto parts = read_matrix_set(path);
    if (parts.size() != 3) {
        throw Error(ErrorCode::Parse, path.string() + ": expected 3 matrices in PCA model, found " +
                                          std::to_string(parts.size()));
    }
    std::ifstream meta(meta_path(path));
    if (!meta) throw Error(ErrorCode::Io, "cannot open " + meta_path(path).string());
    std::string line;
    std::getline(meta, line);
    std::size_t k = 0, d = 0;
    if (std::sscanf(line.c_str(), "k=%zu d=%zu", &k, &d) != 2) {
        throw Error(ErrorCode::Parse, meta_path(path).string() + ": expected `k=<k> d=<d>`", 1);
    }
    if (parts[0].rows() != 1 || parts[0].dims() != d || parts[1].rows() != k ||
        parts[1].dims() != d || parts[2].rows() != 1 || parts[2].dims() != k) {
        throw Error(ErrorCode::Parse, path.string() + ": matrix shapes disagree with sidecar");
    }
    PcaModel model;
    model.mean.assign(parts[0].values().begin(), parts[0].values().end());
    model.components = std::move(parts[1]);
    model.eigenvalues.assign(parts[2].values().begin(), parts[2].values().end());
    // The file does not carry the full covariance trace, only the retained part.
    for (double e : model.eigenvalues) model.total_variance += e;
    return model;
}

}  // namespace venomguard
