#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "onli/neuralop/model.hpp"
#include "onli/preprocess/preprocess.hpp"
#include "onli/train/optim.hpp"

namespace onli {

// One (subject, frequency) pair in physical units: the 7-channel input and
// the storage/loss modulus target in Pa.
struct Sample {
    std::string subject;
    double frequency_hz = 0.0;
    RealVolume input;
    RealVolume target;
    std::shared_ptr<const SegmentationMask> mask;
};

struct TrainConfig {
    ModelConfig model;
    int epochs = 50;
    int batch_size = 1;
    double lr = 1e-3;
    double lr_min = 0.0;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;  // mean relative L2 in physical units over the epoch's steps
    double val_loss = 0.0;    // mean relative L2 in physical units after the epoch
    double lr = 0.0;          // rate used by the epoch's last step
};

struct TrainResult {
    Model best;
    Model last;
    int best_epoch = 0;
    double best_val = 0.0;
    std::vector<EpochRecord> history;
    NormalizerStats normalizer;
    // Subjects whose samples fed the normalizer fit and the gradient steps.
    std::vector<std::string> normalizer_subjects, gradient_subjects;
};

class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& what, std::shared_ptr<const TrainResult> last_good)
        : NumericalError(what), last_good_(std::move(last_good)) {}
    // State at the end of the last finished epoch; null if none finished.
    const std::shared_ptr<const TrainResult>& last_good() const { return last_good_; }

private:
    std::shared_ptr<const TrainResult> last_good_;
};

using EpochCallback = std::function<void(const EpochRecord&, const Model& current, bool improved)>;

// Fits the normalizer on the fold's training subjects, trains with relative L2
// in normalized space, and keeps the parameters with the lowest validation loss.
TrainResult train_loop(const std::vector<Sample>& samples, const TrainConfig& cfg, const FoldSplit& fold,
                       const EpochCallback& on_epoch = {});

// Prediction in physical units.
RealVolume predict(const Model& model, const NormalizerStats& stats, const Sample& sample);

// CSV with header epoch,train_loss,val_loss,lr; 6 significant digits.
std::string format_loss_log(const std::vector<EpochRecord>& history);

} // namespace onli
