#pragma once

#include "onli/field/volume.hpp"

namespace onli {

// Throws GeometryError unless both grids span the same physical extent per
// axis (n * h equal within 1e-9).
void require_same_extent(const Grid3& source, const Grid3& target);

// Trilinear interpolation at target voxel centers. Samples beyond the outermost
// source centers clamp to the edge. An identical target grid returns a copy.
ComplexVolume resample_trilinear(const ComplexVolume& v, const Grid3& target);
RealVolume resample_trilinear(const RealVolume& v, const Grid3& target);

// Nearest-neighbor label resampling; keeps labels pure.
SegmentationMask resample_nearest(const SegmentationMask& mask, const Grid3& target);

// Fourier interpolation of a periodic, band-limited field sampled at voxel
// centers. Modes at or above either grid's Nyquist index are dropped, so the
// map is exact for fields whose spectrum lies strictly below both.
RealVolume resample_spectral(const RealVolume& v, const Grid3& target);

} // namespace onli
