#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "venomguard/dataset.hpp"

namespace venomguard {

// w1 (macro F1) and w2..w5 (complements of P1..P4).
struct MetricWeights {
    std::array<double, 5> w{1.0, 1.0, 2.0, 5.0, 2.0};
};

// Which count divides each confusion percentage:
//   Status - ground-truth count of the row's venom status (harmless for P1/P2,
//            venomous for P3/P4)
//   All    - number of scored observations
//   Errors - number of misclassified observations
enum class PercentDenominator { Status, All, Errors };

struct MetricOptions {
    MetricWeights weights{};
    PercentDenominator denominator = PercentDenominator::Status;
    bool f1_all_classes = false;  // include zero-support classes in the F1 mean
};

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = 0)
        : classes_(classes), counts_(classes * classes, 0) {}

    std::size_t classes() const noexcept { return classes_; }
    std::uint64_t at(ClassId truth, ClassId predicted) const {
        return counts_[truth * classes_ + predicted];
    }
    void add(ClassId truth, ClassId predicted) { ++counts_[truth * classes_ + predicted]; }
    std::uint64_t total() const noexcept;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t classes_;
    std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const ClassId> truth, std::span<const ClassId> predicted,
                                 std::size_t classes);

// Percentage in [0, 100].
double macro_f1(const ConfusionMatrix& confusion, bool all_classes = false);

struct VenomConfusions {
    double p1 = 0.0;  // harmless -> other harmless
    double p2 = 0.0;  // harmless -> venomous
    double p3 = 0.0;  // venomous -> harmless
    double p4 = 0.0;  // venomous -> other venomous
};

VenomConfusions venom_confusions(const ConfusionMatrix& confusion, const ClassTable& classes,
                                 PercentDenominator denominator = PercentDenominator::Status);

// Weighted mean of F1 and (100 - P_i).
double track1_metric(double f1, const VenomConfusions& p, const MetricWeights& weights = {});

struct MetricReport {
    double macro_f1 = 0.0;
    double p1 = 0.0, p2 = 0.0, p3 = 0.0, p4 = 0.0;
    double accuracy = 0.0;
    double composite = 0.0;
    std::size_t n_observations = 0;
    ConfusionMatrix confusion;
};

MetricReport compute_report(std::span<const ClassId> truth, std::span<const ClassId> predicted,
                            const ClassTable& classes, const MetricOptions& options = {});

struct LabeledObservation {
    std::string observation_id;
    ClassId class_id = 0;
};

// Reads `observation_id` and `class_id` columns by header name; other columns
// are ignored. Duplicate ids and ids outside the class table are errors.
std::vector<LabeledObservation> read_label_csv(const std::filesystem::path& path,
                                               const ClassTable& classes);

// Joins on observation_id (order-insensitive); missing or extra ids are a
// Validation error listing the first 10.
MetricReport score_labels(const std::vector<LabeledObservation>& truth,
                          const std::vector<LabeledObservation>& predicted,
                          const ClassTable& classes, const MetricOptions& options = {});

MetricReport score_predictions(const std::filesystem::path& truth_csv,
                               const std::filesystem::path& prediction_csv,
                               const ClassTable& classes, const MetricOptions& options = {});

// Fixed four-decimal text block.
std::string format_report_text(const MetricReport& report);
// JSON object with macro_f1, p1..p4, accuracy, composite, n_observations.
std::string format_report_json(const MetricReport& report);

}  // namespace venomguard
