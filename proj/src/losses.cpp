#include "venomguard/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "venomguard/diagnostics.hpp"
#include "venomguard/error.hpp"

namespace venomguard {

namespace {

void check_logits(std::span<const double> logits, const char* where) {
    if (logits.empty()) throw_argument(std::string(where) + ": empty logit vector");
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i])) {
            throw_argument(std::string(where) + ": non-finite logit at index " + std::to_string(i));
        }
    }
}

void check_label(ClassId label, std::size_t classes, const char* where) {
    if (label >= classes) {
        throw_argument(std::string(where) + ": label " + std::to_string(label) +
                       " out of range for " + std::to_string(classes) + " classes");
    }
}

double max_of(std::span<const double> v) { return *std::max_element(v.begin(), v.end()); }

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
    check_logits(logits, "softmax");
    const double top = max_of(logits);
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

LossResult cross_entropy(std::span<const double> logits, ClassId label) {
    check_logits(logits, "cross_entropy");
    check_label(label, logits.size(), "cross_entropy");
    const double top = max_of(logits);
    double total = 0.0;
    for (double z : logits) total += std::exp(z - top);
    LossResult out;
    out.value = std::log(total) + top - logits[label];
    out.grad.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logits[i] - top) / total;
    out.grad[label] -= 1.0;
    return out;
}

SeesawState::SeesawState(std::vector<std::uint64_t> class_counts, double p, double q,
                         CountMode mode)
    : counts_(std::move(class_counts)), p_(p), q_(q), mode_(mode) {
    if (counts_.empty()) throw_argument("seesaw state needs at least one class");
    if (!(p_ >= 0.0) || !(q_ >= 0.0)) throw_argument("seesaw exponents must be non-negative");
}

SeesawState SeesawState::from_labels(std::span<const ClassId> labels, std::size_t classes,
                                     double p, double q, CountMode mode) {
    std::vector<std::uint64_t> counts(classes, 0);
    for (ClassId y : labels) {
        check_label(y, classes, "SeesawState::from_labels");
        ++counts[y];
    }
    return SeesawState(std::move(counts), p, q, mode);
}

void SeesawState::record(ClassId label) {
    check_label(label, counts_.size(), "SeesawState::record");
    if (mode_ == CountMode::Online) ++counts_[label];
}

std::vector<double> seesaw_factors(std::span<const double> logits, ClassId label,
                                   const SeesawState& state) {
    const std::size_t classes = logits.size();
    if (state.classes() != classes) {
        throw_argument("seesaw state has " + std::to_string(state.classes()) +
                       " classes, logits have " + std::to_string(classes));
    }
    check_label(label, classes, "seesaw_factors");
    std::vector<double> factors(classes, 1.0);

    const auto& counts = state.counts();
    const bool all_zero =
        std::all_of(counts.begin(), counts.end(), [](std::uint64_t c) { return c == 0; });
    if (all_zero && state.p() > 0.0) {
        warn("seesaw: all class counts are zero; using S_ij = 1");
        return factors;
    }

    const double n_label = static_cast<double>(counts[label]);
    for (std::size_t j = 0; j < classes; ++j) {
        if (j == label) continue;
        double mitigation = 1.0;
        if (n_label > 0.0) {
            mitigation = std::min(1.0, std::pow(static_cast<double>(counts[j]) / n_label, state.p()));
        }
        // sigma_j / sigma_label == exp(z_j - z_label); only classes that
        // out-score the label get a compensation factor above one.
        const double gap = logits[j] - logits[label];
        const double compensation = gap > 0.0 ? std::exp(state.q() * gap) : 1.0;
        factors[j] = mitigation * compensation;
    }
    return factors;
}

LossResult seesaw_loss_with_factors(std::span<const double> logits, ClassId label,
                                    std::span<const double> factors) {
    check_logits(logits, "seesaw_loss");
    check_label(label, logits.size(), "seesaw_loss");
    if (factors.size() != logits.size()) throw_argument("seesaw factor row has wrong length");

    const double top = max_of(logits);
    std::vector<double> terms(logits.size());
    double denom = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        const double weight = j == label ? 1.0 : factors[j];
        terms[j] = weight * std::exp(logits[j] - top);
        denom += terms[j];
    }
    LossResult out;
    out.value = std::log(denom) + top - logits[label];
    out.grad.resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) out.grad[j] = terms[j] / denom;
    out.grad[label] -= 1.0;
    return out;
}

LossResult seesaw_loss(std::span<const double> logits, ClassId label, SeesawState& state) {
    check_logits(logits, "seesaw_loss");
    const auto factors = seesaw_factors(logits, label, state);
    auto out = seesaw_loss_with_factors(logits, label, factors);
    state.record(label);
    return out;
}

std::vector<double> seesaw_sigma_hat(std::span<const double> logits, const SeesawState& state) {
    check_logits(logits, "seesaw_sigma_hat");
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto factors = seesaw_factors(logits, i, state);
        out[i] = std::exp(-seesaw_loss_with_factors(logits, i, factors).value);
    }
    return out;
}

CostMatrix::CostMatrix(FeatureMatrix cost) : cost_(std::move(cost)) {
    if (cost_.rows() != cost_.dims()) throw_argument("cost matrix must be square");
    for (std::size_t y = 0; y < cost_.rows(); ++y) {
        for (std::size_t j = 0; j < cost_.dims(); ++j) {
            const double c = cost_.at(y, j);
            if (!std::isfinite(c) || c < 0.0) {
                throw_argument("cost matrix entries must be finite and non-negative");
            }
            if (y == j && c != 0.0) throw_argument("cost matrix diagonal must be zero");
        }
    }
}

CostMatrix build_cost_matrix(const ClassTable& classes, const VenomCostWeights& w) {
    for (double v : {w.harmless_to_harmless, w.harmless_to_venomous, w.venomous_to_harmless,
                     w.venomous_to_venomous}) {
        if (!std::isfinite(v) || v < 0.0) throw_argument("cost weights must be finite and >= 0");
    }
    classes.require_both_statuses("build_cost_matrix");
    const std::size_t n = classes.size();
    FeatureMatrix cost(n, n);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t j = 0; j < n; ++j) {
            if (y == j) continue;
            const bool vy = classes.venomous(y);
            const bool vj = classes.venomous(j);
            cost.at(y, j) = vy ? (vj ? w.venomous_to_venomous : w.venomous_to_harmless)
                               : (vj ? w.harmless_to_venomous : w.harmless_to_harmless);
        }
    }
    return CostMatrix(std::move(cost));
}

LossResult rwwce_loss(std::span<const double> logits, ClassId label, const CostMatrix& cost,
                      std::span<const double> fn_weight, double clamp) {
    check_logits(logits, "rwwce_loss");
    const std::size_t classes = logits.size();
    check_label(label, classes, "rwwce_loss");
    if (cost.classes() != classes || fn_weight.size() != classes) {
        throw_argument("rwwce_loss: cost matrix / weight vector size mismatch");
    }
    for (double w : fn_weight) {
        if (!std::isfinite(w) || w < 0.0) throw_argument("rwwce_loss: fn_weight must be >= 0");
    }

    const auto prob = softmax(logits);
    LossResult out;
    out.grad.assign(classes, 0.0);

    // False-negative term on the true class.
    const double p_label = prob[label];
    out.value = -fn_weight[label] * std::log(std::clamp(p_label, clamp, 1.0 - clamp));
    if (p_label > clamp && p_label < 1.0 - clamp) {
        for (std::size_t k = 0; k < classes; ++k) {
            out.grad[k] += fn_weight[label] * (prob[k] - (k == label ? 1.0 : 0.0));
        }
    }

    // False-positive terms. 1 - sigma_j is summed from the other classes so it
    // keeps full relative precision when sigma_j is close to 1.
    for (std::size_t j = 0; j < classes; ++j) {
        const double c = cost(label, j);
        if (j == label || c == 0.0) continue;
        double rest = 0.0;
        for (std::size_t i = 0; i < classes; ++i) {
            if (i != j) rest += prob[i];
        }
        out.value -= c * std::log(std::clamp(rest, clamp, 1.0 - clamp));
        if (rest > clamp && rest < 1.0 - clamp) {
            const double odds = prob[j] / rest;
            for (std::size_t k = 0; k < classes; ++k) {
                out.grad[k] += c * odds * ((k == j ? 1.0 : 0.0) - prob[k]);
            }
        }
    }
    return out;
}

}  // namespace venomguard
