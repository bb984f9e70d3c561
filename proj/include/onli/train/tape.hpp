#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "onli/field/volume.hpp"
#include "onli/neuralop/kernels.hpp"
#include "onli/neuralop/model.hpp"

namespace onli {

// Reverse-mode recorder over a flat parameter vector. Nodes are appended in
// evaluation order, so reverse index order is a reverse topological order.
// Parameter gradients accumulate into a vector aligned with the parameters.
class Tape {
public:
    using Id = std::size_t;
    static constexpr std::size_t no_param = static_cast<std::size_t>(-1);

    explicit Tape(std::span<const double> params);

    Id constant(RealVolume v);
    // out = W x + b, W at params[w_off] (cout x cin), b at params[b_off] or none.
    Id linear(Id x, std::size_t w_off, std::size_t b_off, int cout);
    Id spectral(Id x, std::shared_ptr<const SpectralConv> conv, std::size_t r_off);
    Id add(Id a, Id b);
    Id activation(Id x, Activation a);
    Id instance_norm(Id x);
    Id spade(Id normalized, std::shared_ptr<const SegmentationMask> mask, const LayerOffsets& offsets,
             int classes, int hidden, Activation a);
    // Per-sample ||pred - target|| / ||target||, a scalar node.
    Id relative_l2(Id pred, const RealVolume& target);
    // Mean of scalar nodes.
    Id mean(const std::vector<Id>& scalars);

    const RealVolume& value(Id id) const { return nodes_.at(id).value; }
    std::size_t size() const { return nodes_.size(); }

    // Gradient of a scalar root with respect to every parameter. Throws
    // ContractError for a non-scalar root.
    std::vector<double> backward(Id root);

    // Times each node was visited by the last backward() call.
    const std::vector<int>& visits() const { return visits_; }

private:
    struct Node {
        RealVolume value;
        std::vector<double> grad;
        bool needs_grad = false;
        std::function<void(Tape&, Node&)> back;
    };

    Id push(RealVolume v, bool needs_grad, std::function<void(Tape&, Node&)> back);
    std::span<double> grad_of(Id id);
    bool needs_grad(Id id) const { return nodes_[id].needs_grad; }
    const double* param(std::size_t off) const { return params_.data() + off; }

    std::span<const double> params_;
    std::vector<Node> nodes_;
    std::vector<double> pgrad_;
    std::vector<int> visits_;
};

// Records the same computation as model_forward and returns the prediction.
Tape::Id record_forward(Tape& tape, const Model& model, const RealVolume& x,
                        std::shared_ptr<const SegmentationMask> mask);

} // namespace onli
