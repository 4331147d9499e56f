#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "venomguard/dataset.hpp"
#include "venomguard/feature_matrix.hpp"

namespace venomguard {

// Probabilities are clamped to [eps, 1 - eps] before taking logs.
inline constexpr double kProbabilityClamp = 1e-12;

struct LossResult {
    double value = 0.0;
    std::vector<double> grad;  // d value / d logits
};

// Max-subtracted softmax. Throws Argument on non-finite input.
std::vector<double> softmax(std::span<const double> logits);

LossResult cross_entropy(std::span<const double> logits, ClassId label);

enum class CountMode { Static, Online };

// Per-class positive counts N_i plus the mitigation (p) and compensation (q)
// exponents. Static counts never change; online counts grow by one for the
// label of every seesaw_loss call.
class SeesawState {
public:
    SeesawState(std::vector<std::uint64_t> class_counts, double p = 0.8, double q = 2.0,
                CountMode mode = CountMode::Static);

    static SeesawState from_labels(std::span<const ClassId> labels, std::size_t classes,
                                   double p = 0.8, double q = 2.0,
                                   CountMode mode = CountMode::Static);

    std::size_t classes() const noexcept { return counts_.size(); }
    const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }
    double p() const noexcept { return p_; }
    double q() const noexcept { return q_; }
    CountMode mode() const noexcept { return mode_; }

    void record(ClassId label);

private:
    std::vector<std::uint64_t> counts_;
    double p_;
    double q_;
    CountMode mode_;
};

// Row S_{label,j} = mitigation * compensation for every j (entry `label` is 1
// and unused). Falls back to all ones, with a warning, when every count is
// zero and p > 0.
std::vector<double> seesaw_factors(std::span<const double> logits, ClassId label,
                                   const SeesawState& state);

// -log sigma_hat_label for a fixed factor row; the gradient treats the
// factors as constants.
LossResult seesaw_loss_with_factors(std::span<const double> logits, ClassId label,
                                    std::span<const double> factors);

LossResult seesaw_loss(std::span<const double> logits, ClassId label, SeesawState& state);

// sigma_hat_i for every class i, each with its own factor row.
std::vector<double> seesaw_sigma_hat(std::span<const double> logits, const SeesawState& state);

struct VenomCostWeights {
    double harmless_to_harmless = 1.0;
    double harmless_to_venomous = 2.0;
    double venomous_to_harmless = 5.0;
    double venomous_to_venomous = 2.0;
};

class CostMatrix {
public:
    explicit CostMatrix(FeatureMatrix cost);

    std::size_t classes() const noexcept { return cost_.rows(); }
    double operator()(ClassId truth, ClassId predicted) const { return cost_.at(truth, predicted); }
    const FeatureMatrix& matrix() const noexcept { return cost_; }

private:
    FeatureMatrix cost_;
};

// cost[y][j] = weight of the (venomous(y), venomous(j)) confusion type, zero
// on the diagonal.
CostMatrix build_cost_matrix(const ClassTable& classes, const VenomCostWeights& weights = {});

// -fn_weight[y] log sigma_y - sum_{j != y} cost[y][j] log(1 - sigma_j).
LossResult rwwce_loss(std::span<const double> logits, ClassId label, const CostMatrix& cost,
                      std::span<const double> fn_weight, double clamp = kProbabilityClamp);

}  // namespace venomguard
