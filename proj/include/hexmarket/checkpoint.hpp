#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "hexmarket/common.hpp"
#include "hexmarket/tensor.hpp"

namespace hexmarket::checkpoint {

// Self-describing binary container of named tensors. Values are raw IEEE-754
// doubles, so save/load round-trips bit-exactly.
inline constexpr char kMagic[8] = {'H', 'X', 'M', 'K', 'T', 'S', '0', '1'};

namespace detail {
template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T read_pod(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ConfigError("checkpoint: truncated file");
    return v;
}
}  // namespace detail

inline void save(const std::string& path, const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, sizeof(kMagic));
    detail::write_pod(os, static_cast<std::uint64_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        detail::write_pod(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod(os, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) detail::write_pod(os, static_cast<std::uint64_t>(d));
        os.write(reinterpret_cast<const char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    }
    if (!os) throw ConfigError("checkpoint: write failed for " + path);
}

inline std::vector<std::pair<std::string, Tensor>> load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ConfigError("checkpoint: bad magic in " + path);
    const auto count = detail::read_pod<std::uint64_t>(is);
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_pod<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto ndim = detail::read_pod<std::uint32_t>(is);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        if (!is) throw ConfigError("checkpoint: truncated tensor data in " + path);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace hexmarket::checkpoint
