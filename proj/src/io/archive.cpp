#include "derainsplat/io/archive.hpp"

#include "derainsplat/common/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace drs::io {

namespace {

constexpr char kMagic[8] = {'D', 'R', 'S', 'A', 'R', 'C', 'H', '\0'};

template <class T>
T to_le(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <class T>
void put(std::ostream& os, T v) {
    v = to_le(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
    T v;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ValidationError("archive '" + path + "' is truncated");
    return to_le(v);
}

}  // namespace

const ad::Tensor& Archive::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ValidationError("archive has no tensor '" + name + "'");
    return it->second;
}

void save_archive(const std::string& path, const Archive& archive) {
    nlohmann::json header;
    header["meta"] = archive.meta;
    header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : archive.tensors) {
        header["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.numel();
    }
    const std::string text = header.dump();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kArchiveVersion);
    put<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : archive.tensors)
        for (double v : t.values()) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    if (!os) throw ValidationError("failed writing '" + path + "'");
}

Archive load_archive(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open archive '" + path + "'");
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw ValidationError("'" + path + "' is not a derainsplat archive");
    const auto version = get<std::uint32_t>(is, path);
    if (version != kArchiveVersion)
        throw ValidationError("archive '" + path + "' has unsupported version " + std::to_string(version));
    const auto len = get<std::uint64_t>(is, path);
    if (len > (std::uint64_t{1} << 32)) throw ValidationError("archive '" + path + "' has an implausible header");
    std::string text(len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(len)))
        throw ValidationError("archive '" + path + "' is truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("archive '" + path + "' header: " + e.what());
    }
    Archive a;
    a.meta = header.value("meta", nlohmann::json::object());
    std::uint64_t expected = 0;
    try {
        for (const auto& entry : header.at("tensors")) {
            const std::string name = entry.at("name");
            const ad::Shape shape = entry.at("shape").get<ad::Shape>();
            if (entry.at("offset").get<std::uint64_t>() != expected)
                throw ValidationError("archive '" + path + "': tensor '" + name + "' has an unexpected offset");
            std::size_t n = 1;
            for (std::size_t d : shape) n *= d;
            std::vector<double> v(n);
            for (double& x : v) x = std::bit_cast<double>(get<std::uint64_t>(is, path));
            expected += n;
            if (!a.tensors.emplace(name, ad::Tensor(shape, std::move(v))).second)
                throw ValidationError("archive '" + path + "': duplicate tensor '" + name + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("archive '" + path + "' index: " + e.what());
    }
    if (is.peek() != std::char_traits<char>::eof()) throw ValidationError("archive '" + path + "' has trailing data");
    return a;
}

}  // namespace drs::io
