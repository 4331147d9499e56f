#include "venomguard/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "venomguard/error.hpp"

namespace venomguard {

AdamWState::AdamWState(std::size_t parameters, AdamWConfig cfg)
    : config(cfg), m(parameters, 0.0), v(parameters, 0.0) {
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
        throw_argument("AdamW betas must lie in [0, 1)");
    }
    if (!(cfg.eps > 0.0) || !(cfg.weight_decay >= 0.0)) {
        throw_argument("AdamW eps must be > 0 and weight_decay >= 0");
    }
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                double lr) {
    const std::size_t n = params.size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
        throw_argument("adamw_step: parameter, gradient and state sizes differ");
    }
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw_argument("adamw_step: learning rate must be >= 0");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(grads[i])) {
            throw_argument("adamw_step: non-finite gradient at index " + std::to_string(i));
        }
    }

    const auto& cfg = state.config;
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    const double decay = 1.0 - lr * cfg.weight_decay;

    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / correction1;
        const double v_hat = state.v[i] / correction2;
        params[i] *= decay;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

void validate(const CosineSchedule& s) {
    if (s.warmup_steps >= s.total_steps) {
        throw_argument("schedule needs warmup_steps < total_steps (" +
                       std::to_string(s.warmup_steps) + " >= " + std::to_string(s.total_steps) +
                       ")");
    }
    for (double r : {s.warmup_lr, s.base_lr, s.final_lr}) {
        if (!(r >= 0.0) || !std::isfinite(r)) throw_argument("schedule rates must be >= 0");
    }
}

double lr_at(const CosineSchedule& s, std::size_t step) {
    validate(s);
    if (step >= s.total_steps) {
        throw_argument("lr_at: step " + std::to_string(step) + " outside [0, " +
                       std::to_string(s.total_steps) + ")");
    }
    if (step < s.warmup_steps) {
        const double frac = static_cast<double>(step) / static_cast<double>(s.warmup_steps);
        return s.warmup_lr + (s.base_lr - s.warmup_lr) * frac;
    }
    const std::size_t span = s.total_steps - s.warmup_steps - 1;
    // A single post-warmup step is both the cosine start and its endpoint; the
    // endpoint wins so the last step always runs at final_lr.
    const double progress =
        span == 0 ? 1.0
                  : static_cast<double>(step - s.warmup_steps) / static_cast<double>(span);
    return s.final_lr +
           0.5 * (s.base_lr - s.final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace venomguard
