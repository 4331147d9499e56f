#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "venomguard/losses.hpp"

namespace venomguard {

enum class GradLoss { CrossEntropy, Seesaw, Rwwce, Loc };

GradLoss parse_grad_loss(std::string_view name);  // ce, seesaw, rwwce, loc
std::string to_string(GradLoss loss);

// ||a - n|| / max(||a||, ||n||, 1e-8)
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step);

struct GradCheckOptions {
    std::size_t trials = 20;
    std::uint64_t seed = 0;
    double step = 1e-6;
    double tolerance = 1e-4;
    double seesaw_p = 0.8;
    double seesaw_q = 2.0;
    VenomCostWeights cost{};
    double clamp = kProbabilityClamp;
};

struct GradCheckResult {
    GradLoss loss = GradLoss::CrossEntropy;
    std::size_t trials = 0;
    double max_rel_error = 0.0;  // over trials and, for loc, every parameter tensor
    bool passed = false;
};

// Random small instances (C in 2..7; for loc also d_in <= 5, hidden <= 6).
// Seesaw freezes the compensation factors at the evaluation point; loc uses
// fixed dropout masks.
GradCheckResult run_gradcheck(GradLoss loss, const GradCheckOptions& options = {});

}  // namespace venomguard
