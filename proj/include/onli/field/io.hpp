#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "onli/field/volume.hpp"

namespace onli {

// Little-endian field file:
//   "ONLIFLD1" | u8 kind | u8 dtype | u32 C | u32 nx, ny, nz | f64 dx, dy, dz
//   | payload (channel-major, then x, y, z; complex interleaved re, im)
//   | u32 K (label files only)
enum class FieldKind : std::uint8_t { real = 0, complex = 1, labels = 2 };
enum class FieldDtype : std::uint8_t { f32 = 0, f64 = 1, u16 = 2 };

inline constexpr std::size_t field_header_bytes = 50;

struct FieldHeader {
    FieldKind kind;
    FieldDtype dtype;
    std::uint32_t channels;
    Grid3 grid;
};

std::vector<std::uint8_t> encode_field(const RealVolume& v, FieldDtype dtype = FieldDtype::f64);
std::vector<std::uint8_t> encode_field(const ComplexVolume& v, FieldDtype dtype = FieldDtype::f64);
std::vector<std::uint8_t> encode_field(const SegmentationMask& m);

FieldHeader decode_field_header(std::span<const std::uint8_t> bytes);
RealVolume decode_real_field(std::span<const std::uint8_t> bytes);
ComplexVolume decode_complex_field(std::span<const std::uint8_t> bytes);
SegmentationMask decode_mask(std::span<const std::uint8_t> bytes);

void write_field(const std::filesystem::path& path, const RealVolume& v, FieldDtype dtype = FieldDtype::f64);
void write_field(const std::filesystem::path& path, const ComplexVolume& v, FieldDtype dtype = FieldDtype::f64);
void write_field(const std::filesystem::path& path, const SegmentationMask& m);

FieldHeader read_field_header(const std::filesystem::path& path);
RealVolume read_real_field(const std::filesystem::path& path);
ComplexVolume read_complex_field(const std::filesystem::path& path);
SegmentationMask read_mask(const std::filesystem::path& path);

// Whole-file helpers shared with the checkpoint and dataset writers.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace onli
