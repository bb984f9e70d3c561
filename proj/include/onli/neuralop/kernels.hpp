#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "onli/field/fft.hpp"
#include "onli/field/volume.hpp"

namespace onli {

// Building blocks shared by inference and the training tape, so both paths
// produce bitwise-identical values. Feature maps are channel-major spans of
// channels x voxels.

enum class Activation { gelu, relu };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

double activate(Activation a, double x);
double activate_derivative(Activation a, double x);

void activation_forward(Activation a, std::span<const double> in, std::span<double> out);
// gin += gout * act'(in)
void activation_backward(Activation a, std::span<const double> in, std::span<const double> gout,
                         std::span<double> gin);

// out[o] = b[o] + sum_i W[o * cin + i] in[i]; with accumulate the result is
// added to out instead of overwriting it.
void pointwise_linear(std::span<const double> in, int cin, const double* W, const double* b, int cout,
                      std::span<double> out, bool accumulate = false);

// gin += W^T gout (skipped when gin is empty), gW += gout in^T, gb += sum gout.
void pointwise_linear_backward(std::span<const double> in, int cin, const double* W, int cout,
                               std::span<const double> gout, std::span<double> gin, double* gW, double* gb);

// Fourier-kernel layer on a fixed grid. Retains the modes
// kx, ky in [0, m) u [n - m, n) and kz in [0, m) of the real-to-complex
// spectrum (four corner blocks of m^3 modes each) and mixes channels there:
//   Y[o](k) = sum_i X[i](k) R(k)[i][o]
// R is laid out [block][mx][my][mz][cin][cout], block = 2 * bx + by.
class SpectralConv {
public:
    SpectralConv(const Grid3& grid, int modes, int cin, int cout);

    // Throws CapacityError naming the axis when the modes do not fit.
    static void check_capacity(const Grid3& grid, int modes);

    static std::size_t weight_count(int modes, int cin, int cout) {
        return 4 * static_cast<std::size_t>(modes) * modes * modes * cin * cout;
    }

    std::size_t retained() const { return index_.size(); }
    // Half-spectrum flat index of each retained mode.
    const std::vector<std::size_t>& mode_index() const { return index_; }
    const RealFft3& fft() const { return fft_; }

    // out is overwritten. When saved is non-null it receives the retained
    // input spectrum, cin x retained, for backward().
    void forward(std::span<const double> in, const std::complex<double>* R, std::span<double> out,
                 std::vector<std::complex<double>>* saved = nullptr) const;

    // gin += d/d in, gR += d/d R (both accumulate; gin may be empty).
    void backward(std::span<const double> gout, const std::vector<std::complex<double>>& saved,
                  const std::complex<double>* R, std::span<double> gin, std::complex<double>* gR) const;

private:
    Grid3 grid_;
    int modes_, cin_, cout_;
    RealFft3 fft_;
    std::vector<std::size_t> index_;
    std::vector<double> weight_;  // c_kz / N per retained mode
};

inline constexpr double instance_norm_eps = 1e-5;

// Per-channel standardization over all voxels: (x - mean) / sqrt(var + eps),
// population variance.
void instance_norm_forward(std::span<const double> in, int channels, std::span<double> out);
// gin += adjoint at input in.
void instance_norm_backward(std::span<const double> in, int channels, std::span<const double> gout,
                            std::span<double> gin);

// Spatially adaptive modulation. Because the conditioning input is a one-hot
// mask and every map is 1x1x1, gamma and beta depend only on the class label,
// so they are evaluated once per class.
struct SpadeWeights {
    int classes, hidden, width;
    const double* conv1_w;  // hidden x classes
    const double* conv1_b;
    const double* gamma_w;  // width x hidden
    const double* gamma_b;
    const double* beta_w;   // width x hidden
    const double* beta_b;
};

struct SpadeTables {
    std::vector<double> pre;    // classes x hidden, before activation
    std::vector<double> act;    // classes x hidden
    std::vector<double> gamma;  // classes x width
    std::vector<double> beta;   // classes x width
};

SpadeTables spade_tables(const SpadeWeights& w, Activation a);

// out[o][v] = gamma[label v][o] * normalized[o][v] + beta[label v][o]
void spade_apply(const SpadeTables& t, int width, std::span<const std::uint16_t> labels,
                 std::span<const double> normalized, std::span<double> out);

struct SpadeGrads {
    double* conv1_w;
    double* conv1_b;
    double* gamma_w;
    double* gamma_b;
    double* beta_w;
    double* beta_b;
};

// Accumulates parameter gradients into g and writes d/d normalized into
// gnormalized (overwritten).
void spade_backward(const SpadeWeights& w, const SpadeTables& t, Activation a,
                    std::span<const std::uint16_t> labels, std::span<const double> normalized,
                    std::span<const double> gout, const SpadeGrads& g, std::span<double> gnormalized);

} // namespace onli
