#include "onli/field/io.hpp"

#include <algorithm>
#include <fstream>

#include "onli/bytes.hpp"

namespace onli {

namespace {

constexpr std::string_view magic = "ONLIFLD1";

void put_header(ByteWriter& w, FieldKind kind, FieldDtype dtype, std::uint32_t channels, const Grid3& g) {
    w.raw(magic);
    w.put(static_cast<std::uint8_t>(kind));
    w.put(static_cast<std::uint8_t>(dtype));
    w.put(channels);
    w.put(static_cast<std::uint32_t>(g.nx));
    w.put(static_cast<std::uint32_t>(g.ny));
    w.put(static_cast<std::uint32_t>(g.nz));
    w.put(g.dx);
    w.put(g.dy);
    w.put(g.dz);
}

void put_scalar(ByteWriter& w, double x, FieldDtype dtype) {
    if (dtype == FieldDtype::f32) w.put(static_cast<float>(x));
    else w.put(x);
}

double get_scalar(ByteReader& r, FieldDtype dtype) {
    if (dtype == FieldDtype::f32) return r.get<float>("payload");
    return r.get<double>("payload");
}

void require_float_dtype(FieldDtype dtype) {
    if (dtype != FieldDtype::f32 && dtype != FieldDtype::f64)
        throw ContractError("real and complex fields are stored as f32 or f64");
}

FieldHeader parse_header(ByteReader& r) {
    const auto m = r.raw(magic.size(), "magic");
    if (m != magic) throw FormatError("bad magic bytes, not an ONLIFLD1 field file", 0);

    const auto kind_offset = r.offset();
    const auto kind = r.get<std::uint8_t>("kind");
    if (kind > 2) throw FormatError("unknown field kind " + std::to_string(kind), kind_offset);
    const auto dtype_offset = r.offset();
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype > 2) throw FormatError("unknown dtype " + std::to_string(dtype), dtype_offset);

    const bool labels = kind == static_cast<std::uint8_t>(FieldKind::labels);
    if (labels != (dtype == static_cast<std::uint8_t>(FieldDtype::u16)))
        throw FormatError("dtype does not match field kind", dtype_offset);

    const auto channels_offset = r.offset();
    const auto channels = r.get<std::uint32_t>("channel count");
    if (channels == 0 || (labels && channels != 1))
        throw FormatError("invalid channel count " + std::to_string(channels), channels_offset);

    const auto grid_offset = r.offset();
    const auto nx = r.get<std::uint32_t>("nx");
    const auto ny = r.get<std::uint32_t>("ny");
    const auto nz = r.get<std::uint32_t>("nz");
    const auto dx = r.get<double>("dx");
    const auto dy = r.get<double>("dy");
    const auto dz = r.get<double>("dz");
    constexpr std::uint32_t max_axis = 1u << 20;
    if (nx == 0 || ny == 0 || nz == 0 || nx > max_axis || ny > max_axis || nz > max_axis)
        throw FormatError("invalid grid dimensions", grid_offset);
    FieldHeader h{static_cast<FieldKind>(kind), static_cast<FieldDtype>(dtype), channels, {}};
    try {
        h.grid = Grid3(static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz), dx, dy, dz);
    } catch (const Error& e) {
        throw FormatError(std::string("invalid grid: ") + e.what(), grid_offset);
    }
    return h;
}

void expect_kind(const FieldHeader& h, FieldKind kind) {
    if (h.kind != kind) throw FormatError("field kind mismatch for requested type", 8);
}

void expect_end(const ByteReader& r) {
    if (r.remaining() != 0) throw FormatError("trailing bytes after payload", r.offset());
}

std::size_t payload_bytes(const FieldHeader& h) {
    const std::size_t scalar = h.dtype == FieldDtype::f32 ? 4 : (h.dtype == FieldDtype::f64 ? 8 : 2);
    const std::size_t per_voxel = h.kind == FieldKind::complex ? 2 * scalar : scalar;
    return per_voxel * h.channels * h.grid.voxels();
}

} // namespace

std::vector<std::uint8_t> encode_field(const RealVolume& v, FieldDtype dtype) {
    require_float_dtype(dtype);
    ByteWriter w;
    put_header(w, FieldKind::real, dtype, static_cast<std::uint32_t>(v.channels), v.grid);
    for (double x : v.data) put_scalar(w, x, dtype);
    return std::move(w.bytes());
}

std::vector<std::uint8_t> encode_field(const ComplexVolume& v, FieldDtype dtype) {
    require_float_dtype(dtype);
    ByteWriter w;
    put_header(w, FieldKind::complex, dtype, static_cast<std::uint32_t>(v.channels), v.grid);
    for (const auto& z : v.data) {
        put_scalar(w, z.real(), dtype);
        put_scalar(w, z.imag(), dtype);
    }
    return std::move(w.bytes());
}

std::vector<std::uint8_t> encode_field(const SegmentationMask& m) {
    m.validate();
    ByteWriter w;
    put_header(w, FieldKind::labels, FieldDtype::u16, 1, m.grid);
    for (auto l : m.labels) w.put(l);
    w.put(static_cast<std::uint32_t>(m.classes));
    return std::move(w.bytes());
}

FieldHeader decode_field_header(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    return parse_header(r);
}

RealVolume decode_real_field(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const auto h = parse_header(r);
    expect_kind(h, FieldKind::real);
    r.need(payload_bytes(h), "payload");
    RealVolume v(h.grid, static_cast<int>(h.channels));
    for (auto& x : v.data) x = get_scalar(r, h.dtype);
    expect_end(r);
    return v;
}

ComplexVolume decode_complex_field(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const auto h = parse_header(r);
    expect_kind(h, FieldKind::complex);
    r.need(payload_bytes(h), "payload");
    ComplexVolume v(h.grid, static_cast<int>(h.channels));
    for (auto& z : v.data) {
        const double re = get_scalar(r, h.dtype);
        const double im = get_scalar(r, h.dtype);
        z = {re, im};
    }
    expect_end(r);
    return v;
}

SegmentationMask decode_mask(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const auto h = parse_header(r);
    expect_kind(h, FieldKind::labels);
    r.need(payload_bytes(h), "payload");
    const auto payload_offset = r.offset();
    std::vector<std::uint16_t> labels(h.grid.voxels());
    for (auto& l : labels) l = r.get<std::uint16_t>("labels");
    const auto k_offset = r.offset();
    const auto classes = r.get<std::uint32_t>("class count");
    if (classes < 2 || classes > 65536) throw FormatError("invalid class count", k_offset);
    expect_end(r);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= classes)
            throw FormatError("label exceeds class count", payload_offset + 2 * i);
    SegmentationMask m(h.grid, static_cast<int>(classes));
    m.labels = std::move(labels);
    return m;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

void write_field(const std::filesystem::path& path, const RealVolume& v, FieldDtype dtype) {
    write_file_bytes(path, encode_field(v, dtype));
}
void write_field(const std::filesystem::path& path, const ComplexVolume& v, FieldDtype dtype) {
    write_file_bytes(path, encode_field(v, dtype));
}
void write_field(const std::filesystem::path& path, const SegmentationMask& m) {
    write_file_bytes(path, encode_field(m));
}

FieldHeader read_field_header(const std::filesystem::path& path) { return decode_field_header(read_file_bytes(path)); }
RealVolume read_real_field(const std::filesystem::path& path) { return decode_real_field(read_file_bytes(path)); }
ComplexVolume read_complex_field(const std::filesystem::path& path) {
    return decode_complex_field(read_file_bytes(path));
}
SegmentationMask read_mask(const std::filesystem::path& path) { return decode_mask(read_file_bytes(path)); }

} // namespace onli
