#include "onli/neuralop/checkpoint.hpp"

#include <zlib.h>

#include <cmath>

#include "onli/bytes.hpp"
#include "onli/field/io.hpp"

namespace onli {

namespace {

constexpr char magic[] = "ONLICKPT";
constexpr std::size_t magic_len = 8;

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
    if (model.params.size() != param_count(model.config))
        throw SizingError("checkpoint: parameter vector does not match the model config");
    const std::string cfg = format_model_config(model.config);
    ByteWriter w;
    w.raw(std::string_view(magic, magic_len));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
    w.raw(cfg);
    w.put<std::uint64_t>(model.params.size());
    auto& out = w.bytes();
    out.reserve(out.size() + 4 * model.params.size() + 4);
    for (double p : model.params) {
        if (!std::isfinite(p)) throw NumericalError("checkpoint: refusing to save a non-finite parameter");
        w.put<float>(static_cast<float>(p));
    }
    w.put<std::uint32_t>(crc_of(out.data(), out.size()));
    return std::move(out);
}

Model decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    if (r.raw(magic_len, "checkpoint magic") != std::string_view(magic, magic_len))
        throw FormatError("not a model checkpoint (bad magic)", 0);
    const auto cfg_len = r.get<std::uint32_t>("config length");
    const std::size_t cfg_at = r.offset();
    const std::string cfg(r.raw(cfg_len, "model config"));
    ModelConfig config;
    try {
        config = parse_model_config(cfg);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint config block: ") + e.what(), cfg_at);
    }
    const std::size_t count_at = r.offset();
    const auto count = r.get<std::uint64_t>("parameter count");
    if (count != param_count(config))
        throw FormatError("checkpoint parameter count " + std::to_string(count) + " does not match its config (" +
                              std::to_string(param_count(config)) + ")",
                          count_at);
    r.need(4 * count + 4, "parameters");
    Model model(config);
    for (std::size_t i = 0; i < count; ++i) model.params[i] = r.get<float>("parameters");
    const std::size_t crc_at = r.offset();
    const auto stored = r.get<std::uint32_t>("checksum");
    if (stored != crc_of(bytes.data(), crc_at)) throw FormatError("checkpoint checksum mismatch", crc_at);
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
    return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    const auto bytes = encode_checkpoint(model);
    auto tmp = path;
    tmp += ".tmp";
    write_file_bytes(tmp, bytes);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Model load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

} // namespace onli
