#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "venomguard/dataset.hpp"
#include "venomguard/feature_matrix.hpp"
#include "venomguard/losses.hpp"
#include "venomguard/optim.hpp"
#include "venomguard/pca.hpp"
#include "venomguard/rng.hpp"

namespace venomguard {

struct PriorMlpShape {
    std::size_t input_dims = 0;
    std::size_t hidden = 256;
    std::size_t output_dims = 0;

    std::size_t parameter_count() const noexcept;
    friend bool operator==(const PriorMlpShape&, const PriorMlpShape&) = default;
};

enum class ForwardMode { Train, Eval };

// Three fully connected layers, ReLU after the first two, inverted dropout
// after each ReLU in training mode. Parameters live in one flat vector:
// W1 (hidden x in), b1, W2 (hidden x hidden), b2, W3 (out x hidden), b3,
// matrices column-major.
class PriorMlp {
public:
    PriorMlp() = default;
    // All-zero parameters.
    PriorMlp(PriorMlpShape shape, double dropout_rate, std::uint64_t seed);

    // He-uniform weights drawn from `seed`, zero biases.
    static PriorMlp initialized(PriorMlpShape shape, double dropout_rate, std::uint64_t seed);

    const PriorMlpShape& shape() const noexcept { return shape_; }
    double dropout_rate() const noexcept { return dropout_rate_; }
    std::uint64_t seed() const noexcept { return seed_; }

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    struct LayerView {
        std::size_t offset;  // into parameters()
        std::size_t rows;
        std::size_t cols;
        std::size_t bias_offset;
    };
    LayerView layer(std::size_t index) const;  // 0, 1, 2

    friend bool operator==(const PriorMlp&, const PriorMlp&) = default;

private:
    PriorMlpShape shape_;
    double dropout_rate_ = 0.0;
    std::uint64_t seed_ = 0;
    std::vector<double> params_;
};

// Inverted-dropout multipliers (0 or 1/(1-p)) for the two hidden layers.
struct DropoutMasks {
    std::vector<double> first;
    std::vector<double> second;
};

DropoutMasks sample_dropout_masks(const PriorMlp& model, Rng& rng);

// Train mode draws masks from `rng` (required); eval mode ignores it.
std::vector<double> prior_forward(const PriorMlp& model, std::span<const double> x,
                                  ForwardMode mode, Rng* rng = nullptr);
// Forward with explicit masks (nullptr = no dropout).
std::vector<double> prior_forward_masked(const PriorMlp& model, std::span<const double> x,
                                         const DropoutMasks* masks);

// Row c holds the prototype of class c (the column O_:,c of the embedding
// matrix, stored transposed).
struct PrototypeMatrix {
    FeatureMatrix prototypes;  // C x d_out
    bool normalized = true;

    std::size_t classes() const noexcept { return prototypes.rows(); }
    std::size_t dims() const noexcept { return prototypes.dims(); }
};

// Class means of `features`, L2-normalized when `normalize` is set. Classes
// without rows, or whose mean is zero, get a zero prototype and a warning.
PrototypeMatrix compute_prototypes(const FeatureMatrix& features,
                                   std::span<const ClassId> labels, std::size_t classes,
                                   bool normalize = true);

// Prototypes from the bundle's embeddings, one row per labeled image.
PrototypeMatrix bundle_prototypes(const DatasetBundle& bundle, bool normalize = true);

// P_c = g(x) . O_:,c in eval mode.
std::vector<double> prior_scores(const PriorMlp& model, std::span<const double> x,
                                 const PrototypeMatrix& prototypes);

// Location loss for a batch, averaged over samples:
//   -lambda log s(g(x).O_y) - sum_{i != y} log(1 - s(g(x).O_i)) - sum_i log(1 - s(g(r).O_i))
// with s the logistic sigmoid and probabilities clamped to [1e-12, 1 - 1e-12].
// `grad` is d value / d parameters. Masks, when given, hold one entry per
// sample for the x pass and one per sample for the r pass.
struct LocBatch {
    const FeatureMatrix* inputs = nullptr;     // B x d_in
    const FeatureMatrix* random_locs = nullptr;  // B x d_in
    std::span<const ClassId> labels;
    std::span<const DropoutMasks> input_masks;   // empty = no dropout
    std::span<const DropoutMasks> random_masks;  // empty = no dropout
};

LossResult loc_loss_batch(const PriorMlp& model, const LocBatch& batch,
                          const PrototypeMatrix& prototypes, double lambda);

// Single-sample form.
LossResult loc_loss(const PriorMlp& model, std::span<const double> x, std::span<const double> r,
                    const PrototypeMatrix& prototypes, ClassId label, double lambda,
                    const DropoutMasks* x_masks = nullptr, const DropoutMasks* r_masks = nullptr);

struct FeatureBounds {
    std::vector<double> lo;
    std::vector<double> hi;

    static FeatureBounds of(const FeatureMatrix& m);
};

std::vector<double> sample_random_location(const FeatureBounds& bounds, Rng& rng);

// Uniform class, then uniform example within that class.
class BalancedSampler {
public:
    BalancedSampler(std::span<const ClassId> labels, std::size_t classes);
    std::size_t next(Rng& rng) const;
    std::size_t classes() const noexcept { return by_class_.size(); }

private:
    std::vector<std::vector<std::size_t>> by_class_;
};

struct PriorTrainConfig {
    double lambda = 10.0;
    std::size_t epochs = 30;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
    FeatureBounds feature_bounds;  // empty = derived from the training inputs
    std::size_t hidden = 256;
    double dropout_rate = 0.3;
    AdamWConfig optimizer{};
    double base_lr = 1e-3;
    double warmup_lr = 1e-5;
    double final_lr = 0.0;
    std::size_t warmup_epochs = 1;
};

struct PriorTrainingSet {
    FeatureMatrix inputs;  // N x d_in, PCA-reduced metadata
    std::vector<ClassId> labels;
};

// One sample per distinct (observation, label, location) in the bundle;
// metadata rows are passed through `pca` when given.
PriorTrainingSet build_prior_training_set(const DatasetBundle& bundle, const PcaModel* pca);

struct PriorTrainResult {
    PriorMlp model;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

PriorTrainResult train_prior(const PriorTrainingSet& data, const PrototypeMatrix& prototypes,
                             const PriorTrainConfig& cfg);

// Layers as VGF1 records (out x (in + 1), bias in the last column), then the
// prototype matrix (d_out x C), plus a one-line `<path>.meta` sidecar.
void save_prior(const PriorMlp& model, const PrototypeMatrix& prototypes,
                const std::filesystem::path& path);

struct LoadedPrior {
    PriorMlp model;
    PrototypeMatrix prototypes;
};
LoadedPrior load_prior(const std::filesystem::path& path);

}  // namespace venomguard
