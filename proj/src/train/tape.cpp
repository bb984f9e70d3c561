#include "onli/train/tape.hpp"

#include <cmath>

namespace onli {

Tape::Tape(std::span<const double> params) : params_(params), pgrad_(params.size(), 0.0) {}

Tape::Id Tape::push(RealVolume v, bool needs_grad, std::function<void(Tape&, Node&)> back) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

std::span<double> Tape::grad_of(Id id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.data.size(), 0.0);
    return n.grad;
}

Tape::Id Tape::constant(RealVolume v) { return push(std::move(v), false, nullptr); }

Tape::Id Tape::linear(Id x, std::size_t w_off, std::size_t b_off, int cout) {
    const RealVolume& in = value(x);
    const int cin = in.channels;
    const double* b = b_off == no_param ? nullptr : param(b_off);
    RealVolume out(in.grid, cout);
    pointwise_linear(in.data, cin, param(w_off), b, cout, out.data);
    return push(std::move(out), true, [x, w_off, b_off, cin, cout](Tape& t, Node& self) {
        std::span<double> gin;
        if (t.needs_grad(x)) gin = t.grad_of(x);
        pointwise_linear_backward(t.value(x).data, cin, t.param(w_off), cout, self.grad, gin,
                                  t.pgrad_.data() + w_off, b_off == no_param ? nullptr : t.pgrad_.data() + b_off);
    });
}

Tape::Id Tape::spectral(Id x, std::shared_ptr<const SpectralConv> conv, std::size_t r_off) {
    const RealVolume& in = value(x);
    RealVolume out(in.grid, in.channels);
    auto saved = std::make_shared<std::vector<std::complex<double>>>();
    const auto* R = reinterpret_cast<const std::complex<double>*>(param(r_off));
    conv->forward(in.data, R, out.data, saved.get());
    return push(std::move(out), true, [x, conv, r_off, saved](Tape& t, Node& self) {
        std::span<double> gin;
        if (t.needs_grad(x)) gin = t.grad_of(x);
        conv->backward(self.grad, *saved, reinterpret_cast<const std::complex<double>*>(t.param(r_off)), gin,
                       reinterpret_cast<std::complex<double>*>(t.pgrad_.data() + r_off));
    });
}

Tape::Id Tape::add(Id a, Id b) {
    const RealVolume& va = value(a);
    const RealVolume& vb = value(b);
    if (va.data.size() != vb.data.size()) throw SizingError("tape add: shape mismatch");
    RealVolume out(va.grid, va.channels);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = va.data[i] + vb.data[i];
    return push(std::move(out), true, [a, b](Tape& t, Node& self) {
        for (Id id : {a, b}) {
            if (!t.needs_grad(id)) continue;
            auto g = t.grad_of(id);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tape::Id Tape::activation(Id x, Activation a) {
    const RealVolume& in = value(x);
    RealVolume out(in.grid, in.channels);
    activation_forward(a, in.data, out.data);
    return push(std::move(out), true, [x, a](Tape& t, Node& self) {
        if (t.needs_grad(x)) activation_backward(a, t.value(x).data, self.grad, t.grad_of(x));
    });
}

Tape::Id Tape::instance_norm(Id x) {
    const RealVolume& in = value(x);
    RealVolume out(in.grid, in.channels);
    instance_norm_forward(in.data, in.channels, out.data);
    return push(std::move(out), true, [x](Tape& t, Node& self) {
        if (t.needs_grad(x)) instance_norm_backward(t.value(x).data, t.value(x).channels, self.grad, t.grad_of(x));
    });
}

Tape::Id Tape::spade(Id normalized, std::shared_ptr<const SegmentationMask> mask, const LayerOffsets& o,
                     int classes, int hidden, Activation a) {
    const RealVolume& in = value(normalized);
    const int width = in.channels;
    const SpadeWeights w{classes,        hidden,         width,         param(o.conv1_w), param(o.conv1_b),
                         param(o.gamma_w), param(o.gamma_b), param(o.beta_w), param(o.beta_b)};
    auto tables = std::make_shared<SpadeTables>(spade_tables(w, a));
    RealVolume out(in.grid, width);
    spade_apply(*tables, width, mask->labels, in.data, out.data);
    return push(std::move(out), true, [normalized, mask, o, w, tables, a](Tape& t, Node& self) {
        double* g = t.pgrad_.data();
        const SpadeGrads grads{g + o.conv1_w, g + o.conv1_b, g + o.gamma_w,
                               g + o.gamma_b, g + o.beta_w,  g + o.beta_b};
        std::vector<double> gn(self.grad.size());
        spade_backward(w, *tables, a, mask->labels, t.value(normalized).data, self.grad, grads, gn);
        if (t.needs_grad(normalized)) {
            auto gin = t.grad_of(normalized);
            for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gn[i];
        }
    });
}

Tape::Id Tape::relative_l2(Id pred, const RealVolume& target) {
    const RealVolume& p = value(pred);
    if (p.data.size() != target.data.size() || p.channels != target.channels)
        throw SizingError("relative_l2: prediction and target shapes differ");
    double dd = 0.0, tt = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double d = p.data[i] - target.data[i];
        dd += d * d;
        tt += target.data[i] * target.data[i];
    }
    if (!(tt > 0.0)) throw NumericalError("relative_l2: target has zero norm");
    const double dn = std::sqrt(dd), tn = std::sqrt(tt);
    auto residual = std::make_shared<std::vector<double>>(p.data.size());
    for (std::size_t i = 0; i < p.data.size(); ++i) (*residual)[i] = p.data[i] - target.data[i];
    RealVolume out(Grid3::cube(1), 1, {dn / tn});
    return push(std::move(out), true, [pred, residual, dn, tn](Tape& t, Node& self) {
        // At the minimum the ratio has no gradient direction; the zero vector is returned.
        if (!t.needs_grad(pred) || dn == 0.0) return;
        const double s = self.grad[0] / (dn * tn);
        auto g = t.grad_of(pred);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * (*residual)[i];
    });
}

Tape::Id Tape::mean(const std::vector<Id>& scalars) {
    if (scalars.empty()) throw ContractError("tape mean of an empty list");
    double s = 0.0;
    for (Id id : scalars) {
        if (value(id).data.size() != 1) throw ContractError("tape mean expects scalar nodes");
        s += value(id).data[0];
    }
    const double n = static_cast<double>(scalars.size());
    return push(RealVolume(Grid3::cube(1), 1, {s / n}), true, [scalars, n](Tape& t, Node& self) {
        for (Id id : scalars)
            if (t.needs_grad(id)) t.grad_of(id)[0] += self.grad[0] / n;
    });
}

std::vector<double> Tape::backward(Id root) {
    if (root >= nodes_.size()) throw ContractError("backward: unknown root node");
    if (nodes_[root].value.data.size() != 1) throw ContractError("backward: root is not a scalar");
    std::fill(pgrad_.begin(), pgrad_.end(), 0.0);
    for (auto& n : nodes_) n.grad.clear();
    visits_.assign(nodes_.size(), 0);
    grad_of(root)[0] = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
        Node& n = nodes_[i];
        ++visits_[i];
        if (n.back && !n.grad.empty()) n.back(*this, n);
        if (i != root) n.grad = {};
    }
    return pgrad_;
}

Tape::Id record_forward(Tape& tape, const Model& model, const RealVolume& x,
                        std::shared_ptr<const SegmentationMask> mask) {
    check_forward_inputs(model, x, mask.get());
    const ModelConfig& c = model.config;
    const ParamLayout& L = model.layout;
    const int w = c.width;
    auto conv = std::make_shared<const SpectralConv>(x.grid, c.modes, w, w);
    Tape::Id v = tape.linear(tape.constant(x), L.lift_w, L.lift_b, w);
    for (int l = 0; l < c.layers; ++l) {
        const auto& o = L.layers[l];
        Tape::Id z = tape.add(tape.spectral(v, conv, o.spectral), tape.linear(v, o.local_w, o.local_b, w));
        if (c.spade) z = tape.spade(tape.instance_norm(z), mask, o, c.spade_classes, c.spade_hidden, c.activation);
        v = l + 1 < c.layers ? tape.activation(z, c.activation) : z;
    }
    Tape::Id h = tape.activation(tape.linear(v, L.proj1_w, L.proj1_b, w), c.activation);
    return tape.linear(h, L.proj2_w, L.proj2_b, c.out_channels);
}

} // namespace onli
