#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "onli/field/volume.hpp"

namespace onli {

// Mean over the batch of ||pred_i - target_i|| / ||target_i||.
double relative_l2_loss(std::span<const RealVolume> pred, std::span<const RealVolume> target);
double relative_l2_loss(const RealVolume& pred, const RealVolume& target);

struct AdamState {
    std::uint64_t step = 0;
    std::vector<double> m, v;
    double lr0 = 1e-3;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// Decoupled weight decay, p -= lr * wd * p, then the bias-corrected Adam
// delta. Refuses the step (state untouched) if any gradient is not finite.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr);

struct CosineSchedule {
    double lr0 = 1e-3;
    double lr_min = 0.0;
    std::uint64_t t_max = 1;
};

// lr_min + (lr0 - lr_min) (1 + cos(pi t / t_max)) / 2; t outside [0, t_max]
// is clamped with a warning.
double cosine_lr(const CosineSchedule& s, double t);

struct FoldSplit {
    int fold = 0;
    std::vector<std::string> train, validation;
};

// Shuffles the subjects under the seed and deals them into k contiguous
// folds whose sizes differ by at most one (the larger folds come first).
// Training sides keep the input order.
std::vector<FoldSplit> kfold_split(const std::vector<std::string>& subjects, int k, std::uint64_t seed);

} // namespace onli
