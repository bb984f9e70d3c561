#pragma once

#include <complex>
#include <span>

#include "onli/field/volume.hpp"

namespace onli {

// Per-channel 3D DFT. Forward is unnormalized; the inverse carries 1/N, so
// fftn(fftn(v), true) reproduces v.
ComplexVolume fftn(const ComplexVolume& v, bool inverse = false);

// Direct triple-sum DFT with the same conventions as fftn. Refuses volumes
// above naive_dft_max_voxels; this is a reference, not a workhorse.
inline constexpr std::size_t naive_dft_max_voxels = 4096;
ComplexVolume naive_dftn(const ComplexVolume& v, bool inverse = false);

// Real-to-complex transform of one real channel onto the half spectrum
// nx x ny x (nz/2 + 1). Plans are cached per shape and shared between threads.
class RealFft3 {
public:
    explicit RealFft3(const Grid3& grid);

    std::size_t real_size() const { return real_size_; }
    std::size_t half_size() const { return half_size_; }
    int half_nz() const { return half_nz_; }

    // Unnormalized forward transform.
    void forward(std::span<const double> in, std::span<std::complex<double>> out) const;
    // Unnormalized inverse. The kz = 0 and Nyquist planes are first projected
    // onto their Hermitian-symmetric part, so the result is
    // Re(sum_k c_kz H_k e^{+i k.x}) with c = 1 on those planes and 2 elsewhere.
    // `in` is used as scratch and clobbered.
    void inverse(std::span<std::complex<double>> in, std::span<double> out) const;

private:
    void symmetrize_plane(std::span<std::complex<double>> spec, int kz) const;

    Grid3 grid_;
    std::size_t real_size_;
    std::size_t half_size_;
    int half_nz_;
    void* forward_plan_;
    void* inverse_plan_;
};

} // namespace onli
