#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "venomguard/dataset.hpp"
#include "venomguard/feature_matrix.hpp"
#include "venomguard/pca.hpp"
#include "venomguard/prior.hpp"

namespace venomguard {

enum class ScoreStage { Raw, Prior, Combined, Aggregated };

struct ScoreMatrix {
    FeatureMatrix scores;
    ScoreStage stage = ScoreStage::Raw;
};

struct EscalationPolicy {
    double tau = 0.5;
    std::size_t top_k = 5;
};

// Index of the largest entry, lowest index on ties.
ClassId argmax(std::span<const double> row);

// softmax(P) * S, renormalized to sum 1. Falls back to S (renormalized) with a
// warning when the product vanishes everywhere.
std::vector<double> joint_scores(std::span<const double> scores, std::span<const double> prior);

// Elementwise mean of equal-length rows.
std::vector<double> aggregate_observation(std::span<const std::vector<double>> rows);

// Confident rows (max >= tau) keep their argmax. Otherwise the highest-scoring
// venomous class among the top-k (by score, then lower id) wins, if any.
ClassId escalate_venomous(std::span<const double> row, const ClassTable& classes,
                          const EscalationPolicy& policy);

struct PriorContext {
    const PriorMlp* model = nullptr;
    const PrototypeMatrix* prototypes = nullptr;
    const PcaModel* pca = nullptr;  // applied to metadata rows when set
};

struct ObservationPrediction {
    std::string observation_id;
    ClassId class_id = 0;           // final decision
    ClassId pre_escalation = 0;     // argmax of the aggregated row
    double max_confidence = 0.0;    // max of the aggregated row
};

struct PredictOptions {
    EscalationPolicy policy{};
    bool escalate = true;
    std::size_t threads = 1;
};

struct PredictionResult {
    std::vector<ObservationPrediction> predictions;  // sorted by observation_id
    ScoreMatrix raw;         // input rows, one per observation table row
    std::optional<ScoreMatrix> prior;  // prior scores P per row
    ScoreMatrix combined;    // per row, after softmax and the joint product
    ScoreMatrix aggregated;  // per observation, aligned with `predictions`
};

// Per image: softmax (for logits) -> joint_scores (with a prior) ; per
// observation: average -> escalate. The bundle must be validated.
PredictionResult predict_dataset(const DatasetBundle& bundle, const std::optional<PriorContext>& prior,
                                 const PredictOptions& options = {});

// `observation_id,class_id`, plus `pre_escalation_class_id,max_confidence`
// when `explain` is set.
void write_predictions_csv(const std::vector<ObservationPrediction>& predictions,
                           const std::filesystem::path& path, bool explain);

}  // namespace venomguard
