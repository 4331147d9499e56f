#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace venomguard {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 2e-5;
};

struct AdamWState {
    explicit AdamWState(std::size_t parameters, AdamWConfig config = {});

    AdamWConfig config;
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
};

// One AdamW step: params *= (1 - lr * wd), then the bias-corrected Adam delta.
// Throws Argument on shape mismatch or a non-finite gradient (naming its index).
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                double lr);

// Linear warmup from warmup_lr to base_lr over warmup_steps, then cosine decay
// to final_lr at step total_steps - 1.
struct CosineSchedule {
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 1;
    double warmup_lr = 2e-7;
    double base_lr = 2e-5;
    double final_lr = 0.0;
};

void validate(const CosineSchedule& schedule);

double lr_at(const CosineSchedule& schedule, std::size_t step);

}  // namespace venomguard
