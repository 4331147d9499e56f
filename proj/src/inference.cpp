#include "venomguard/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <numeric>

#include "venomguard/csv.hpp"
#include "venomguard/diagnostics.hpp"
#include "venomguard/error.hpp"
#include "venomguard/losses.hpp"
#include "venomguard/parallel.hpp"

namespace venomguard {

ClassId argmax(std::span<const double> row) {
    if (row.empty()) throw_argument("argmax of an empty row");
    ClassId best = 0;
    for (ClassId c = 1; c < row.size(); ++c) {
        if (row[c] > row[best]) best = c;
    }
    return best;
}

namespace {

std::vector<double> normalized(std::span<const double> row) {
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    std::vector<double> out(row.begin(), row.end());
    if (total > 0.0) {
        for (double& v : out) v /= total;
    }
    return out;
}

}  // namespace

std::vector<double> joint_scores(std::span<const double> scores, std::span<const double> prior) {
    if (scores.size() != prior.size()) {
        throw_argument("joint_scores: score row has " + std::to_string(scores.size()) +
                       " entries, prior has " + std::to_string(prior.size()));
    }
    for (double s : scores) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw_argument("joint_scores: scores must be finite and >= 0");
    }
    const auto weights = softmax(prior);
    std::vector<double> out(scores.size());
    double total = 0.0;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        out[c] = weights[c] * scores[c];
        total += out[c];
    }
    if (!(total > 0.0)) {
        warn("joint_scores: prior-weighted scores vanish; keeping the image scores");
        return normalized(scores);
    }
    for (double& v : out) v /= total;
    return out;
}

std::vector<double> aggregate_observation(std::span<const std::vector<double>> rows) {
    if (rows.empty()) throw_argument("aggregate_observation: no rows");
    const std::size_t width = rows.front().size();
    std::vector<double> out(width, 0.0);
    for (const auto& r : rows) {
        if (r.size() != width) throw_argument("aggregate_observation: rows differ in length");
        for (std::size_t c = 0; c < width; ++c) out[c] += r[c];
    }
    for (double& v : out) v /= static_cast<double>(rows.size());
    return out;
}

ClassId escalate_venomous(std::span<const double> row, const ClassTable& classes,
                          const EscalationPolicy& policy) {
    if (row.size() != classes.size()) throw_argument("escalate_venomous: row/class table mismatch");
    const ClassId top = argmax(row);
    if (row[top] >= policy.tau) return top;

    std::vector<ClassId> order(row.size());
    std::iota(order.begin(), order.end(), ClassId{0});
    const std::size_t k = std::min(policy.top_k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](ClassId a, ClassId b) {
                          return row[a] != row[b] ? row[a] > row[b] : a < b;
                      });
    for (std::size_t i = 0; i < k; ++i) {
        if (classes.venomous(order[i])) return order[i];
    }
    return top;
}

PredictionResult predict_dataset(const DatasetBundle& bundle, const std::optional<PriorContext>& prior,
                                 const PredictOptions& options) {
    const std::size_t classes = bundle.classes.size();
    if (bundle.scores.dims() != classes) throw_argument("predict_dataset: score/class mismatch");
    if (!(options.policy.tau >= 0.0 && options.policy.tau <= 1.0) || options.policy.top_k == 0) {
        throw_argument("escalation policy needs 0 <= tau <= 1 and k >= 1");
    }
    if (prior && (!prior->model || !prior->prototypes)) {
        throw_argument("predict_dataset: prior context is missing the model or prototypes");
    }
    if (prior && prior->prototypes->classes() != classes) {
        throw_argument("predict_dataset: prior prototypes cover " +
                       std::to_string(prior->prototypes->classes()) + " classes, bundle has " +
                       std::to_string(classes));
    }

    const auto& rows = bundle.observations.rows;
    PredictionResult result;
    result.raw = {FeatureMatrix(rows.size(), classes), ScoreStage::Raw};
    result.combined = {FeatureMatrix(rows.size(), classes), ScoreStage::Combined};

    // Prior scores per metadata row, computed once.
    std::map<std::size_t, std::vector<double>> prior_by_location;
    if (prior) {
        const FeatureMatrix meta =
            prior->pca ? pca_transform(*prior->pca, bundle.metadata) : bundle.metadata;
        for (const auto& [code, meta_row] : bundle.locations.entries) {
            if (meta_row >= meta.rows() || prior_by_location.count(meta_row)) continue;
            prior_by_location.emplace(meta_row,
                                      prior_scores(*prior->model, meta.row(meta_row), *prior->prototypes));
        }
        result.prior = ScoreMatrix{FeatureMatrix(rows.size(), classes), ScoreStage::Prior};
    }

    const std::size_t threads = std::max<std::size_t>(1, options.threads);
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        const auto& row = rows[i];
        if (row.image_index >= bundle.scores.rows()) {
            throw Error(ErrorCode::Validation,
                        "observation " + row.observation_id + " references missing image row " +
                            std::to_string(row.image_index));
        }
        const auto input = bundle.scores.row(row.image_index);
        std::copy(input.begin(), input.end(), result.raw.scores.row(i).begin());
        std::vector<double> probs;
        if (bundle.score_kind == ScoreKind::Logits) {
            probs = softmax(input);
        } else {
            for (double v : input) {
                if (v < 0.0) throw_argument("probability input has negative entries");
            }
            probs = normalized(input);
        }
        if (prior) {
            const auto meta_row = bundle.locations.find(row.location_code);
            if (!meta_row || !prior_by_location.count(*meta_row)) {
                throw Error(ErrorCode::Validation, "observation " + row.observation_id +
                                                       " has unresolved location `" +
                                                       row.location_code + "`");
            }
            const auto& p = prior_by_location.at(*meta_row);
            std::copy(p.begin(), p.end(), result.prior->scores.row(i).begin());
            probs = joint_scores(probs, p);
        }
        std::copy(probs.begin(), probs.end(), result.combined.scores.row(i).begin());
    });

    const auto groups = bundle.observations.groups();
    result.predictions.resize(groups.size());
    result.aggregated = {FeatureMatrix(groups.size(), classes), ScoreStage::Aggregated};
    parallel_for(groups.size(), threads, [&](std::size_t g) {
        std::vector<std::vector<double>> members;
        members.reserve(groups[g].rows.size());
        for (std::size_t idx : groups[g].rows) {
            const auto r = result.combined.scores.row(idx);
            members.emplace_back(r.begin(), r.end());
        }
        const auto mean = aggregate_observation(members);
        std::copy(mean.begin(), mean.end(), result.aggregated.scores.row(g).begin());
        auto& pred = result.predictions[g];
        pred.observation_id = groups[g].observation_id;
        pred.pre_escalation = argmax(mean);
        pred.max_confidence = mean[pred.pre_escalation];
        pred.class_id = options.escalate ? escalate_venomous(mean, bundle.classes, options.policy)
                                         : pred.pre_escalation;
    });
    return result;
}

void write_predictions_csv(const std::vector<ObservationPrediction>& predictions,
                           const std::filesystem::path& path, bool explain) {
    std::string text = explain ? "observation_id,class_id,pre_escalation_class_id,max_confidence\n"
                               : "observation_id,class_id\n";
    for (const auto& p : predictions) {
        text += csv::quote_if_needed(p.observation_id);
        text += fmt::format(",{}", p.class_id);
        if (explain) text += fmt::format(",{},{:.17g}", p.pre_escalation, p.max_confidence);
        text += '\n';
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace venomguard
