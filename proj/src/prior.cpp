#include "venomguard/prior.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <tuple>

#include "venomguard/diagnostics.hpp"
#include "venomguard/error.hpp"

namespace venomguard {

namespace {

using Eigen::MatrixXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using Map = Eigen::Map<MatrixXd>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

ConstMap weights(const PriorMlp& model, std::size_t layer) {
    const auto v = model.layer(layer);
    return {model.parameters().data() + v.offset, static_cast<Eigen::Index>(v.rows),
            static_cast<Eigen::Index>(v.cols)};
}

Eigen::Map<const Eigen::VectorXd> bias(const PriorMlp& model, std::size_t layer) {
    const auto v = model.layer(layer);
    return {model.parameters().data() + v.bias_offset, static_cast<Eigen::Index>(v.rows)};
}

// Samples as columns.
MatrixXd as_columns(const FeatureMatrix& m) {
    Eigen::Map<const RowMatrix> rows(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                                     static_cast<Eigen::Index>(m.dims()));
    return rows.transpose();
}

MatrixXd mask_columns(std::span<const DropoutMasks> masks, bool second, std::size_t units) {
    MatrixXd out(static_cast<Eigen::Index>(units), static_cast<Eigen::Index>(masks.size()));
    for (std::size_t b = 0; b < masks.size(); ++b) {
        const auto& m = second ? masks[b].second : masks[b].first;
        if (m.size() != units) throw_argument("dropout mask has wrong length");
        for (std::size_t u = 0; u < units; ++u) {
            out(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(b)) = m[u];
        }
    }
    return out;
}

struct Pass {
    MatrixXd input;
    MatrixXd pre1, act1, pre2, act2, out;
    MatrixXd mask1, mask2;  // empty when dropout is off
};

Pass forward_pass(const PriorMlp& model, MatrixXd input, std::span<const DropoutMasks> masks) {
    const auto& shape = model.shape();
    Pass p;
    p.input = std::move(input);
    if (!masks.empty()) {
        if (masks.size() != static_cast<std::size_t>(p.input.cols())) {
            throw_argument("need one dropout mask per sample");
        }
        p.mask1 = mask_columns(masks, false, shape.hidden);
        p.mask2 = mask_columns(masks, true, shape.hidden);
    }
    p.pre1 = (weights(model, 0) * p.input).colwise() + bias(model, 0);
    p.act1 = p.pre1.cwiseMax(0.0);
    if (p.mask1.size()) p.act1 = p.act1.cwiseProduct(p.mask1);
    p.pre2 = (weights(model, 1) * p.act1).colwise() + bias(model, 1);
    p.act2 = p.pre2.cwiseMax(0.0);
    if (p.mask2.size()) p.act2 = p.act2.cwiseProduct(p.mask2);
    p.out = (weights(model, 2) * p.act2).colwise() + bias(model, 2);
    return p;
}

// Accumulates d loss / d params into `grad` given d loss / d output.
void backward_pass(const PriorMlp& model, const Pass& p, const MatrixXd& d_out,
                   std::vector<double>& grad) {
    auto grad_w = [&](std::size_t layer) {
        const auto v = model.layer(layer);
        return Map(grad.data() + v.offset, static_cast<Eigen::Index>(v.rows),
                   static_cast<Eigen::Index>(v.cols));
    };
    auto grad_b = [&](std::size_t layer) {
        const auto v = model.layer(layer);
        return Eigen::Map<Eigen::VectorXd>(grad.data() + v.bias_offset,
                                           static_cast<Eigen::Index>(v.rows));
    };
    auto relu_gate = [](const MatrixXd& pre) {
        return (pre.array() > 0.0).cast<double>().matrix();
    };

    grad_w(2).noalias() += d_out * p.act2.transpose();
    grad_b(2) += d_out.rowwise().sum();

    MatrixXd d_hidden = weights(model, 2).transpose() * d_out;
    if (p.mask2.size()) d_hidden = d_hidden.cwiseProduct(p.mask2);
    d_hidden = d_hidden.cwiseProduct(relu_gate(p.pre2));
    grad_w(1).noalias() += d_hidden * p.act1.transpose();
    grad_b(1) += d_hidden.rowwise().sum();

    MatrixXd d_first = weights(model, 1).transpose() * d_hidden;
    if (p.mask1.size()) d_first = d_first.cwiseProduct(p.mask1);
    d_first = d_first.cwiseProduct(relu_gate(p.pre1));
    grad_w(0).noalias() += d_first * p.input.transpose();
    grad_b(0) += d_first.rowwise().sum();
}

double sigmoid(double a) {
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

constexpr double kClamp = kProbabilityClamp;

bool inside(double p) { return p > kClamp && p < 1.0 - kClamp; }

// -log clamp(s(a)) and its derivative in a.
std::pair<double, double> neg_log_sigmoid(double a) {
    const double s = sigmoid(a);
    const double one_minus = sigmoid(-a);
    return {-std::log(std::clamp(s, kClamp, 1.0 - kClamp)), inside(s) ? -one_minus : 0.0};
}

// -log clamp(1 - s(a)) and its derivative in a.
std::pair<double, double> neg_log_one_minus_sigmoid(double a) {
    const double s = sigmoid(a);
    const double one_minus = sigmoid(-a);
    return {-std::log(std::clamp(one_minus, kClamp, 1.0 - kClamp)), inside(one_minus) ? s : 0.0};
}

Eigen::Map<const RowMatrix> prototype_rows(const PrototypeMatrix& o) {
    return {o.prototypes.values().data(), static_cast<Eigen::Index>(o.classes()),
            static_cast<Eigen::Index>(o.dims())};
}

std::filesystem::path meta_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta");
}

}  // namespace

std::size_t PriorMlpShape::parameter_count() const noexcept {
    return hidden * input_dims + hidden + hidden * hidden + hidden + output_dims * hidden +
           output_dims;
}

PriorMlp::PriorMlp(PriorMlpShape shape, double dropout_rate, std::uint64_t seed)
    : shape_(shape), dropout_rate_(dropout_rate), seed_(seed) {
    if (shape.input_dims == 0 || shape.hidden == 0 || shape.output_dims == 0) {
        throw_argument("prior MLP dimensions must be positive");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw_argument("dropout rate must lie in [0, 1)");
    }
    params_.assign(shape.parameter_count(), 0.0);
}

PriorMlp PriorMlp::initialized(PriorMlpShape shape, double dropout_rate, std::uint64_t seed) {
    PriorMlp model(shape, dropout_rate, seed);
    Rng rng(seed);
    for (std::size_t l = 0; l < 3; ++l) {
        const auto v = model.layer(l);
        const double limit = std::sqrt(6.0 / static_cast<double>(v.cols));
        for (std::size_t i = 0; i < v.rows * v.cols; ++i) {
            model.params_[v.offset + i] = rng.uniform(-limit, limit);
        }
    }
    return model;
}

PriorMlp::LayerView PriorMlp::layer(std::size_t index) const {
    const std::size_t h = shape_.hidden;
    const std::size_t first = h * shape_.input_dims + h;
    const std::size_t second = first + h * h + h;
    switch (index) {
        case 0: return {0, h, shape_.input_dims, h * shape_.input_dims};
        case 1: return {first, h, h, first + h * h};
        case 2: return {second, shape_.output_dims, h, second + shape_.output_dims * h};
        default: throw_argument("prior MLP has three layers");
    }
}

DropoutMasks sample_dropout_masks(const PriorMlp& model, Rng& rng) {
    const double p = model.dropout_rate();
    const double keep_scale = 1.0 / (1.0 - p);
    DropoutMasks masks;
    masks.first.resize(model.shape().hidden);
    masks.second.resize(model.shape().hidden);
    for (double& m : masks.first) m = rng.bernoulli(p) ? 0.0 : keep_scale;
    for (double& m : masks.second) m = rng.bernoulli(p) ? 0.0 : keep_scale;
    return masks;
}

std::vector<double> prior_forward_masked(const PriorMlp& model, std::span<const double> x,
                                         const DropoutMasks* masks) {
    if (x.size() != model.shape().input_dims) {
        throw_argument("prior_forward: input has " + std::to_string(x.size()) +
                       " dims, model expects " + std::to_string(model.shape().input_dims));
    }
    MatrixXd input = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    std::span<const DropoutMasks> mask_span;
    if (masks) mask_span = std::span<const DropoutMasks>(masks, 1);
    const Pass p = forward_pass(model, std::move(input), mask_span);
    return {p.out.data(), p.out.data() + p.out.size()};
}

std::vector<double> prior_forward(const PriorMlp& model, std::span<const double> x,
                                  ForwardMode mode, Rng* rng) {
    if (mode == ForwardMode::Eval) return prior_forward_masked(model, x, nullptr);
    if (!rng) throw_argument("prior_forward: training mode needs a random stream");
    const DropoutMasks masks = sample_dropout_masks(model, *rng);
    return prior_forward_masked(model, x, &masks);
}

PrototypeMatrix compute_prototypes(const FeatureMatrix& features, std::span<const ClassId> labels,
                                   std::size_t classes, bool normalize) {
    if (features.rows() != labels.size()) {
        throw_argument("compute_prototypes: " + std::to_string(features.rows()) +
                       " feature rows but " + std::to_string(labels.size()) + " labels");
    }
    if (classes == 0) throw_argument("compute_prototypes: no classes");
    PrototypeMatrix out{FeatureMatrix(classes, features.dims()), normalize};
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] >= classes) {
            throw_argument("compute_prototypes: label " + std::to_string(labels[r]) +
                           " out of range for " + std::to_string(classes) + " classes");
        }
        auto dst = out.prototypes.row(labels[r]);
        const auto src = features.row(r);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
        ++counts[labels[r]];
    }
    for (std::size_t c = 0; c < classes; ++c) {
        auto row = out.prototypes.row(c);
        if (counts[c] == 0) {
            warn("class " + std::to_string(c) + " has no feature rows; zero prototype");
            continue;
        }
        for (double& v : row) v /= static_cast<double>(counts[c]);
        double norm = 0.0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            warn("class " + std::to_string(c) + " has a zero mean feature; zero prototype");
            continue;
        }
        if (normalize) {
            for (double& v : row) v /= norm;
        }
    }
    return out;
}

std::vector<double> prior_scores(const PriorMlp& model, std::span<const double> x,
                                 const PrototypeMatrix& prototypes) {
    if (prototypes.dims() != model.shape().output_dims) {
        throw_argument("prior_scores: prototype dimension " + std::to_string(prototypes.dims()) +
                       " differs from model output " + std::to_string(model.shape().output_dims));
    }
    const auto embedding = prior_forward(model, x, ForwardMode::Eval);
    std::vector<double> scores(prototypes.classes(), 0.0);
    for (std::size_t c = 0; c < scores.size(); ++c) {
        const auto proto = prototypes.prototypes.row(c);
        double acc = 0.0;
        for (std::size_t j = 0; j < embedding.size(); ++j) acc += embedding[j] * proto[j];
        scores[c] = acc;
    }
    return scores;
}

LossResult loc_loss_batch(const PriorMlp& model, const LocBatch& batch,
                          const PrototypeMatrix& prototypes, double lambda) {
    if (!batch.inputs || !batch.random_locs) throw_argument("loc_loss: missing batch inputs");
    const std::size_t n = batch.inputs->rows();
    const std::size_t classes = prototypes.classes();
    if (n == 0 || batch.random_locs->rows() != n || batch.labels.size() != n) {
        throw_argument("loc_loss: inputs, random locations and labels must have equal length");
    }
    if (batch.inputs->dims() != model.shape().input_dims ||
        batch.random_locs->dims() != model.shape().input_dims) {
        throw_argument("loc_loss: input dimension mismatch");
    }
    if (prototypes.dims() != model.shape().output_dims) {
        throw_argument("loc_loss: prototype dimension mismatch");
    }
    if (!(lambda >= 0.0)) throw_argument("loc_loss: lambda must be >= 0");
    for (ClassId y : batch.labels) {
        if (y >= classes) throw_argument("loc_loss: label out of range");
    }

    const MatrixXd proto = prototype_rows(prototypes);
    const Pass px = forward_pass(model, as_columns(*batch.inputs), batch.input_masks);
    const Pass pr = forward_pass(model, as_columns(*batch.random_locs), batch.random_masks);
    const MatrixXd score_x = proto * px.out;  // C x B
    const MatrixXd score_r = proto * pr.out;

    MatrixXd d_score_x(score_x.rows(), score_x.cols());
    MatrixXd d_score_r(score_r.rows(), score_r.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        const auto col = static_cast<Eigen::Index>(b);
        for (std::size_t i = 0; i < classes; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            if (i == batch.labels[b]) {
                const auto [v, d] = neg_log_sigmoid(score_x(row, col));
                total += lambda * v;
                d_score_x(row, col) = lambda * d * inv_n;
            } else {
                const auto [v, d] = neg_log_one_minus_sigmoid(score_x(row, col));
                total += v;
                d_score_x(row, col) = d * inv_n;
            }
            const auto [v, d] = neg_log_one_minus_sigmoid(score_r(row, col));
            total += v;
            d_score_r(row, col) = d * inv_n;
        }
    }

    LossResult out;
    out.value = total * inv_n;
    out.grad.assign(model.parameters().size(), 0.0);
    backward_pass(model, px, proto.transpose() * d_score_x, out.grad);
    backward_pass(model, pr, proto.transpose() * d_score_r, out.grad);

    if (!std::isfinite(out.value)) throw Error(ErrorCode::Numeric, "loc_loss value is not finite");
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
        if (!std::isfinite(out.grad[i])) {
            throw Error(ErrorCode::Numeric,
                        "loc_loss gradient is not finite at parameter " + std::to_string(i));
        }
    }
    return out;
}

LossResult loc_loss(const PriorMlp& model, std::span<const double> x, std::span<const double> r,
                    const PrototypeMatrix& prototypes, ClassId label, double lambda,
                    const DropoutMasks* x_masks, const DropoutMasks* r_masks) {
    const FeatureMatrix xs(1, x.size(), std::vector<double>(x.begin(), x.end()));
    const FeatureMatrix rs(1, r.size(), std::vector<double>(r.begin(), r.end()));
    const ClassId labels[] = {label};
    LocBatch batch;
    batch.inputs = &xs;
    batch.random_locs = &rs;
    batch.labels = labels;
    if (x_masks) batch.input_masks = std::span<const DropoutMasks>(x_masks, 1);
    if (r_masks) batch.random_masks = std::span<const DropoutMasks>(r_masks, 1);
    return loc_loss_batch(model, batch, prototypes, lambda);
}

FeatureBounds FeatureBounds::of(const FeatureMatrix& m) {
    if (m.rows() == 0) throw_argument("feature bounds need at least one row");
    FeatureBounds b;
    b.lo.assign(m.row(0).begin(), m.row(0).end());
    b.hi = b.lo;
    for (std::size_t r = 1; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) {
            b.lo[j] = std::min(b.lo[j], row[j]);
            b.hi[j] = std::max(b.hi[j], row[j]);
        }
    }
    return b;
}

std::vector<double> sample_random_location(const FeatureBounds& bounds, Rng& rng) {
    if (bounds.lo.size() != bounds.hi.size()) throw_argument("bounds lo/hi length mismatch");
    std::vector<double> out(bounds.lo.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = bounds.lo[j] + (bounds.hi[j] - bounds.lo[j]) * rng.uniform();
    }
    return out;
}

BalancedSampler::BalancedSampler(std::span<const ClassId> labels, std::size_t classes)
    : by_class_(classes) {
    if (classes == 0) throw_argument("balanced sampler needs at least one class");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw_argument("balanced sampler: label out of range");
        by_class_[labels[i]].push_back(i);
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (by_class_[c].empty()) {
            throw_argument("balanced sampler: class " + std::to_string(c) + " has no examples");
        }
    }
}

std::size_t BalancedSampler::next(Rng& rng) const {
    const auto& members = by_class_[rng.index(by_class_.size())];
    return members[rng.index(members.size())];
}

PrototypeMatrix bundle_prototypes(const DatasetBundle& bundle, bool normalize) {
    if (!bundle.embeddings) throw_argument("bundle has no embeddings to build prototypes from");
    const FeatureMatrix& emb = *bundle.embeddings;
    std::vector<std::size_t> rows;
    std::vector<ClassId> labels;
    for (const auto& row : bundle.observations.rows) {
        if (!row.class_id) continue;
        if (row.image_index >= emb.rows()) {
            throw Error(ErrorCode::Validation, "observation " + row.observation_id +
                                                   " references missing embedding row " +
                                                   std::to_string(row.image_index));
        }
        rows.push_back(row.image_index);
        labels.push_back(*row.class_id);
    }
    if (rows.empty()) throw Error(ErrorCode::Validation, "no labeled rows to build prototypes from");
    FeatureMatrix features(rows.size(), emb.dims());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = emb.row(rows[i]);
        std::copy(src.begin(), src.end(), features.row(i).begin());
    }
    return compute_prototypes(features, labels, bundle.classes.size(), normalize);
}

PriorTrainingSet build_prior_training_set(const DatasetBundle& bundle, const PcaModel* pca) {
    const FeatureMatrix meta = pca ? pca_transform(*pca, bundle.metadata) : bundle.metadata;
    std::vector<std::size_t> meta_rows;
    PriorTrainingSet out;
    for (const auto& group : bundle.observations.groups()) {
        std::set<std::pair<ClassId, std::string>> seen;
        for (std::size_t idx : group.rows) {
            const auto& row = bundle.observations.rows[idx];
            if (!row.class_id) {
                throw Error(ErrorCode::Validation,
                            "observation " + row.observation_id + " is unlabeled; prior training "
                            "needs labels");
            }
            if (!seen.emplace(*row.class_id, row.location_code).second) continue;
            const auto meta_row = bundle.locations.find(row.location_code);
            if (!meta_row || *meta_row >= meta.rows()) {
                throw Error(ErrorCode::Validation,
                            "observation " + row.observation_id + " has unresolved location `" +
                                row.location_code + "`");
            }
            meta_rows.push_back(*meta_row);
            out.labels.push_back(*row.class_id);
        }
    }
    out.inputs = FeatureMatrix(meta_rows.size(), meta.dims());
    for (std::size_t i = 0; i < meta_rows.size(); ++i) {
        const auto src = meta.row(meta_rows[i]);
        std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
    }
    return out;
}

PriorTrainResult train_prior(const PriorTrainingSet& data, const PrototypeMatrix& prototypes,
                             const PriorTrainConfig& cfg) {
    const std::size_t n = data.inputs.rows();
    if (n == 0 || data.labels.size() != n) {
        throw_argument("train_prior: need one label per training input and at least one input");
    }
    if (!(cfg.lambda >= 0.0)) throw_argument("train_prior: lambda must be >= 0");
    if (cfg.batch_size == 0) throw_argument("train_prior: batch_size must be positive");

    const PriorMlpShape shape{data.inputs.dims(), cfg.hidden, prototypes.dims()};
    PriorTrainResult result{PriorMlp::initialized(shape, cfg.dropout_rate, cfg.seed), {}};
    if (cfg.epochs == 0) return result;

    const FeatureBounds bounds =
        cfg.feature_bounds.lo.empty() ? FeatureBounds::of(data.inputs) : cfg.feature_bounds;
    if (bounds.lo.size() != shape.input_dims || bounds.hi.size() != shape.input_dims) {
        throw_argument("train_prior: feature bounds have the wrong dimension");
    }
    for (std::size_t j = 0; j < bounds.lo.size(); ++j) {
        if (!std::isfinite(bounds.lo[j]) || !std::isfinite(bounds.hi[j]) ||
            bounds.lo[j] > bounds.hi[j]) {
            throw_argument("train_prior: feature bounds must be finite with lo <= hi");
        }
    }

    const BalancedSampler sampler(data.labels, prototypes.classes());
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, n / cfg.batch_size);
    CosineSchedule schedule;
    schedule.total_steps = cfg.epochs * steps_per_epoch;
    schedule.warmup_steps =
        std::min(cfg.warmup_epochs * steps_per_epoch, schedule.total_steps - 1);
    schedule.warmup_lr = cfg.warmup_lr;
    schedule.base_lr = cfg.base_lr;
    schedule.final_lr = cfg.final_lr;
    validate(schedule);

    // The init stream is seeded with cfg.seed; batches use a derived stream.
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    AdamWState optimizer(shape.parameter_count(), cfg.optimizer);
    const bool dropout = cfg.dropout_rate > 0.0;

    FeatureMatrix xs(cfg.batch_size, shape.input_dims);
    FeatureMatrix rs(cfg.batch_size, shape.input_dims);
    std::vector<ClassId> labels(cfg.batch_size);
    std::vector<DropoutMasks> x_masks(dropout ? cfg.batch_size : 0);
    std::vector<DropoutMasks> r_masks(dropout ? cfg.batch_size : 0);

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_total = 0.0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
            for (std::size_t b = 0; b < cfg.batch_size; ++b) {
                const std::size_t idx = sampler.next(rng);
                const auto src = data.inputs.row(idx);
                std::copy(src.begin(), src.end(), xs.row(b).begin());
                labels[b] = data.labels[idx];
                const auto r = sample_random_location(bounds, rng);
                std::copy(r.begin(), r.end(), rs.row(b).begin());
                if (dropout) {
                    x_masks[b] = sample_dropout_masks(result.model, rng);
                    r_masks[b] = sample_dropout_masks(result.model, rng);
                }
            }
            LocBatch batch{&xs, &rs, labels, x_masks, r_masks};
            const LossResult loss = loc_loss_batch(result.model, batch, prototypes, cfg.lambda);
            adamw_step(result.model.parameters(), loss.grad, optimizer, lr_at(schedule, step));
            epoch_total += loss.value;
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(steps_per_epoch));
    }
    return result;
}

void save_prior(const PriorMlp& model, const PrototypeMatrix& prototypes,
                const std::filesystem::path& path) {
    std::vector<FeatureMatrix> parts;
    const auto params = model.parameters();
    for (std::size_t l = 0; l < 3; ++l) {
        const auto v = model.layer(l);
        FeatureMatrix m(v.rows, v.cols + 1);
        for (std::size_t r = 0; r < v.rows; ++r) {
            for (std::size_t c = 0; c < v.cols; ++c) m.at(r, c) = params[v.offset + c * v.rows + r];
            m.at(r, v.cols) = params[v.bias_offset + r];
        }
        parts.push_back(std::move(m));
    }
    FeatureMatrix o(prototypes.dims(), prototypes.classes());
    for (std::size_t c = 0; c < prototypes.classes(); ++c) {
        for (std::size_t j = 0; j < prototypes.dims(); ++j) o.at(j, c) = prototypes.prototypes.at(c, j);
    }
    parts.push_back(std::move(o));
    write_matrix_set(parts, path);

    std::FILE* f = std::fopen(meta_path(path).c_str(), "wb");
    if (!f) throw Error(ErrorCode::Io, "cannot write " + meta_path(path).string());
    const auto& s = model.shape();
    std::fprintf(f, "d_in=%zu hidden=%zu d_out=%zu classes=%zu dropout=%.17g seed=%llu normalized=%d\n",
                 s.input_dims, s.hidden, s.output_dims, prototypes.classes(), model.dropout_rate(),
                 static_cast<unsigned long long>(model.seed()), prototypes.normalized ? 1 : 0);
    std::fclose(f);
}

LoadedPrior load_prior(const std::filesystem::path& path) {
    auto parts = read_matrix_set(path);
    std::ifstream meta(meta_path(path));
    if (!meta) throw Error(ErrorCode::Io, "cannot open " + meta_path(path).string());
    std::string line;
    std::getline(meta, line);
    PriorMlpShape shape;
    std::size_t classes = 0;
    double dropout = 0.0;
    unsigned long long seed = 0;
    int normalized = 1;
    if (std::sscanf(line.c_str(), "d_in=%zu hidden=%zu d_out=%zu classes=%zu dropout=%lg seed=%llu normalized=%d",
                    &shape.input_dims, &shape.hidden, &shape.output_dims, &classes, &dropout,
                    &seed, &normalized) != 7) {
        throw Error(ErrorCode::Parse, meta_path(path).string() + ": malformed prior sidecar", 1);
    }
    if (parts.size() != 4) {
        throw Error(ErrorCode::Parse, path.string() + ": expected 4 matrices in prior model, found " +
                                          std::to_string(parts.size()));
    }
    LoadedPrior out{PriorMlp(shape, dropout, seed), {}};
    auto params = out.model.parameters();
    for (std::size_t l = 0; l < 3; ++l) {
        const auto v = out.model.layer(l);
        const auto& m = parts[l];
        if (m.rows() != v.rows || m.dims() != v.cols + 1) {
            throw Error(ErrorCode::Parse, path.string() + ": layer " + std::to_string(l) +
                                              " shape disagrees with sidecar");
        }
        for (std::size_t r = 0; r < v.rows; ++r) {
            for (std::size_t c = 0; c < v.cols; ++c) params[v.offset + c * v.rows + r] = m.at(r, c);
            params[v.bias_offset + r] = m.at(r, v.cols);
        }
    }
    const auto& o = parts[3];
    if (o.rows() != shape.output_dims || o.dims() != classes) {
        throw Error(ErrorCode::Parse, path.string() + ": prototype shape disagrees with sidecar");
    }
    out.prototypes = PrototypeMatrix{FeatureMatrix(classes, shape.output_dims), normalized != 0};
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t j = 0; j < shape.output_dims; ++j) out.prototypes.prototypes.at(c, j) = o.at(j, c);
    }
    return out;
}

}  // namespace venomguard
