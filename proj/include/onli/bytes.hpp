#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onli/error.hpp"

namespace onli {

// Little-endian append/consume helpers for the binary formats.
class ByteWriter {
public:
    std::vector<std::uint8_t>& bytes() { return out_; }

    void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

    template <class T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        std::uint8_t buf[sizeof(T)];
        std::memcpy(buf, &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
        out_.insert(out_.end(), buf, buf + sizeof(T));
    }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::string_view raw(std::size_t n, const char* what) {
        need(n, what);
        std::string_view s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        std::uint8_t buf[sizeof(T)];
        std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
        T value;
        std::memcpy(&value, buf, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n)
            throw FormatError(std::string("truncated data while reading ") + what, bytes_.size());
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace onli
