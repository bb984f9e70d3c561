#include "onli/train/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "onli/log.hpp"
#include "onli/random.hpp"

namespace onli {

double relative_l2_loss(const RealVolume& pred, const RealVolume& target) {
    if (pred.channels != target.channels || !pred.grid.same_shape(target.grid))
        throw SizingError("relative_l2_loss: prediction and target shapes differ");
    double dd = 0.0, tt = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        dd += d * d;
        tt += target.data[i] * target.data[i];
    }
    if (!(tt > 0.0)) throw NumericalError("relative_l2_loss: target has zero norm");
    return std::sqrt(dd) / std::sqrt(tt);
}

double relative_l2_loss(std::span<const RealVolume> pred, std::span<const RealVolume> target) {
    if (pred.size() != target.size() || pred.empty())
        throw SizingError("relative_l2_loss: batch sizes differ or are empty");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += relative_l2_loss(pred[i], target[i]);
    return s / static_cast<double>(pred.size());
}

void adam_step(AdamState& st, std::span<double> params, std::span<const double> grads, double lr) {
    if (params.size() != grads.size() || st.m.size() != params.size() || st.v.size() != params.size())
        throw SizingError("adam_step: parameter, gradient and moment lengths differ");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw NumericalError("adam_step: non-finite gradient at index " + std::to_string(i) + "; step refused");
    ++st.step;
    const double t = static_cast<double>(st.step);
    const double c1 = 1.0 - std::pow(st.beta1, t), c2 = 1.0 - std::pow(st.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        params[i] -= lr * st.weight_decay * params[i];
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        const double mhat = st.m[i] / c1, vhat = st.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

double cosine_lr(const CosineSchedule& s, double t) {
    const double tmax = static_cast<double>(s.t_max);
    if (t < 0.0 || t > tmax) {
        warn("cosine_lr: step " + std::to_string(t) + " outside [0, " + std::to_string(s.t_max) + "], clamped");
        t = std::clamp(t, 0.0, tmax);
    }
    return s.lr_min + 0.5 * (s.lr0 - s.lr_min) * (1.0 + std::cos(std::numbers::pi * t / tmax));
}

std::vector<FoldSplit> kfold_split(const std::vector<std::string>& subjects, int k, std::uint64_t seed) {
    if (k < 2) throw SizingError("kfold_split needs k >= 2");
    const std::set<std::string> unique(subjects.begin(), subjects.end());
    if (unique.size() != subjects.size()) throw ContractError("kfold_split: duplicate subject ids");
    if (static_cast<std::size_t>(k) > subjects.size())
        throw SizingError("kfold_split: k = " + std::to_string(k) + " exceeds the " +
                          std::to_string(subjects.size()) + " subjects");
    std::vector<std::size_t> order(subjects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());

    const std::size_t n = subjects.size(), base = n / k, extra = n % k;
    std::vector<FoldSplit> folds;
    std::size_t at = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        std::vector<bool> held(n, false);
        for (std::size_t i = at; i < at + size; ++i) held[order[i]] = true;
        FoldSplit s;
        s.fold = f;
        for (std::size_t i = at; i < at + size; ++i) s.validation.push_back(subjects[order[i]]);
        for (std::size_t i = 0; i < n; ++i)
            if (!held[i]) s.train.push_back(subjects[i]);
        folds.push_back(std::move(s));
        at += size;
    }
    return folds;
}

} // namespace onli
