#include "onli/train/train.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "onli/random.hpp"
#include "onli/train/tape.hpp"

namespace onli {

namespace {

struct Prepared {
    const Sample* sample;
    RealVolume input, target;  // normalized
};

} // namespace

RealVolume predict(const Model& model, const NormalizerStats& stats, const Sample& sample) {
    const auto x = normalize(sample.input, stats, Role::input);
    return denormalize(model_forward(model, x, sample.mask.get()), stats, Role::target);
}

TrainResult train_loop(const std::vector<Sample>& samples, const TrainConfig& cfg, const FoldSplit& fold,
                       const EpochCallback& on_epoch) {
    if (cfg.epochs < 1) throw ConfigError("train.epochs must be positive");
    if (cfg.batch_size < 1) throw ConfigError("train.batch_size must be positive");
    if (!(cfg.lr >= 0.0) || !(cfg.lr_min >= 0.0) || cfg.lr_min > cfg.lr)
        throw ConfigError("train.lr and train.lr_min must satisfy 0 <= lr_min <= lr");
    cfg.model.validate();

    const std::set<std::string> train_ids(fold.train.begin(), fold.train.end());
    const std::set<std::string> val_ids(fold.validation.begin(), fold.validation.end());
    for (const auto& id : val_ids)
        if (train_ids.count(id)) throw ContractError("fold " + std::to_string(fold.fold) + ": subject " + id +
                                                     " is on both sides of the split");
    std::vector<const Sample*> train_set, val_set;
    for (const auto& s : samples) {
        if (cfg.model.spade && !s.mask)
            throw ConfigError("SPADE training needs a segmentation mask for subject " + s.subject);
        if (train_ids.count(s.subject)) train_set.push_back(&s);
        else if (val_ids.count(s.subject)) val_set.push_back(&s);
    }
    if (train_set.size() < 2) throw SizingError("train_loop: fewer than two training samples in the fold");
    if (val_set.empty()) throw SizingError("train_loop: no validation samples in the fold");

    TrainResult result;
    {
        std::vector<RealVolume> xs, ys;
        std::set<std::string> seen;
        for (const Sample* s : train_set) {
            xs.push_back(s->input);
            ys.push_back(s->target);
            seen.insert(s->subject);
        }
        result.normalizer = fit_normalizer(xs, ys);
        result.normalizer_subjects.assign(seen.begin(), seen.end());
    }
    const NormalizerStats& stats = result.normalizer;
    std::vector<Prepared> prepared;
    for (const Sample* s : train_set)
        prepared.push_back({s, normalize(s->input, stats, Role::input), normalize(s->target, stats, Role::target)});

    Model model = init_model(cfg.model, mix_seed(cfg.seed, 1));
    AdamState adam(model.params.size());
    adam.lr0 = cfg.lr;
    adam.weight_decay = cfg.weight_decay;
    const std::size_t steps_per_epoch = prepared.size() / static_cast<std::size_t>(cfg.batch_size);
    if (steps_per_epoch == 0) throw SizingError("train_loop: batch size exceeds the training set");
    const CosineSchedule schedule{cfg.lr, cfg.lr_min, static_cast<std::uint64_t>(cfg.epochs) * steps_per_epoch};

    std::set<std::string> grad_subjects;
    std::shared_ptr<TrainResult> last_good;
    std::uint64_t t = 0;
    std::vector<std::size_t> order(prepared.size());
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order.begin(), order.end());

        double train_sum = 0.0, lr = cfg.lr;
        std::size_t train_n = 0;
        try {
            for (std::size_t step = 0; step < steps_per_epoch; ++step) {
                Tape tape(model.params);
                std::vector<Tape::Id> losses;
                for (int b = 0; b < cfg.batch_size; ++b) {
                    const Prepared& p = prepared[order[step * cfg.batch_size + b]];
                    const Tape::Id pred = record_forward(tape, model, p.input, p.sample->mask);
                    losses.push_back(tape.relative_l2(pred, p.target));
                    grad_subjects.insert(p.sample->subject);
                    const auto phys = denormalize(tape.value(pred), stats, Role::target);
                    train_sum += relative_l2_loss(phys, p.sample->target);
                    ++train_n;
                }
                const Tape::Id loss = tape.mean(losses);
                if (!std::isfinite(tape.value(loss).data[0]))
                    throw NumericalError("training loss is not finite at epoch " + std::to_string(epoch));
                const auto grads = tape.backward(loss);
                lr = cosine_lr(schedule, static_cast<double>(t));
                adam_step(adam, model.params, grads, lr);
                ++t;
            }
        } catch (const NumericalError& e) {
            throw DivergenceError(std::string("training diverged: ") + e.what(), last_good);
        }

        double val_sum = 0.0;
        try {
            for (const Sample* s : val_set) val_sum += relative_l2_loss(predict(model, stats, *s), s->target);
        } catch (const NumericalError& e) {
            throw DivergenceError(std::string("validation diverged: ") + e.what(), last_good);
        }
        EpochRecord rec{epoch, train_sum / static_cast<double>(train_n), val_sum / static_cast<double>(val_set.size()),
                        lr};
        if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
            throw DivergenceError("loss is not finite at epoch " + std::to_string(epoch), last_good);
        const bool improved = result.history.empty() || rec.val_loss < result.best_val;
        if (improved) {
            result.best = model;
            result.best_val = rec.val_loss;
            result.best_epoch = epoch;
        }
        result.history.push_back(rec);
        result.last = model;
        result.gradient_subjects.assign(grad_subjects.begin(), grad_subjects.end());
        if (on_epoch) on_epoch(rec, model, improved);
        last_good = std::make_shared<TrainResult>(result);
    }
    return result;
}

std::string format_loss_log(const std::vector<EpochRecord>& history) {
    std::ostringstream out;
    out.precision(6);
    out << "epoch,train_loss,val_loss,lr\n";
    for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.lr << '\n';
    return out.str();
}

} // namespace onli
