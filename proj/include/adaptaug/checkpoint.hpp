#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptaug/tensor.hpp"

namespace adaptaug {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

/// Named-tensor container with a string metadata section. Binary layout
/// (all integers little-endian):
///   magic "ADAPCKPT" | u32 version | u32 n_meta | n_meta x (str key, str val)
///   | u32 n_tensors | each: str name, u32 ndim, ndim x u64 dims, f64 data
/// where str = u32 length + bytes.
struct Checkpoint {
    static constexpr char kMagic[8] = {'A', 'D', 'A', 'P', 'C', 'K', 'P', 'T'};
    static constexpr std::uint32_t kVersion = 1;

    std::map<std::string, std::string> meta;
    std::map<std::string, Tensor> tensors;

    void put(const Tensor& t) {
        if (t.name.empty()) throw std::invalid_argument("checkpoint: unnamed tensor");
        Tensor copy;
        copy.name = t.name;
        copy.shape = t.shape;
        copy.data = t.data;
        tensors[t.name] = std::move(copy);
    }

    const Tensor& get(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
        return it->second;
    }

    std::string meta_at(const std::string& key) const {
        auto it = meta.find(key);
        if (it == meta.end()) throw std::runtime_error("checkpoint: missing meta key '" + key + "'");
        return it->second;
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
        os.write(kMagic, sizeof(kMagic));
        write_u32(os, kVersion);
        write_u32(os, static_cast<std::uint32_t>(meta.size()));
        for (const auto& [k, v] : meta) {
            write_str(os, k);
            write_str(os, v);
        }
        write_u32(os, static_cast<std::uint32_t>(tensors.size()));
        for (const auto& [name, t] : tensors) {
            write_str(os, name);
            write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
            for (int d : t.shape) write_u64(os, static_cast<std::uint64_t>(d));
            os.write(reinterpret_cast<const char*>(t.data.data()),
                     static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        }
        if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
        char magic[8];
        is.read(magic, sizeof(magic));
        if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
            throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
        const std::uint32_t version = read_u32(is);
        if (version != kVersion)
            throw std::runtime_error("checkpoint: unsupported version " +
                                     std::to_string(version) + " in '" + path + "'");
        Checkpoint ck;
        const std::uint32_t n_meta = read_u32(is);
        for (std::uint32_t i = 0; i < n_meta; ++i) {
            std::string k = read_str(is);
            ck.meta[k] = read_str(is);
        }
        const std::uint32_t n_tensors = read_u32(is);
        for (std::uint32_t i = 0; i < n_tensors; ++i) {
            Tensor t;
            t.name = read_str(is);
            const std::uint32_t ndim = read_u32(is);
            t.shape.resize(ndim);
            for (std::uint32_t d = 0; d < ndim; ++d)
                t.shape[d] = static_cast<int>(read_u64(is));
            t.data.resize(shape_numel(t.shape));
            is.read(reinterpret_cast<char*>(t.data.data()),
                    static_cast<std::streamsize>(t.data.size() * sizeof(double)));
            if (!is) throw std::runtime_error("checkpoint: truncated tensor '" + t.name + "'");
            ck.tensors[t.name] = std::move(t);
        }
        return ck;
    }

private:
    static void write_u32(std::ostream& os, std::uint32_t v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static void write_u64(std::ostream& os, std::uint64_t v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static void write_str(std::ostream& os, const std::string& s) {
        write_u32(os, static_cast<std::uint32_t>(s.size()));
        os.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    static std::uint32_t read_u32(std::istream& is) {
        std::uint32_t v = 0;
        is.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!is) throw std::runtime_error("checkpoint: truncated file");
        return v;
    }
    static std::uint64_t read_u64(std::istream& is) {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!is) throw std::runtime_error("checkpoint: truncated file");
        return v;
    }
    static std::string read_str(std::istream& is) {
        const std::uint32_t n = read_u32(is);
        std::string s(n, '\0');
        is.read(s.data(), n);
        if (!is) throw std::runtime_error("checkpoint: truncated string");
        return s;
    }
};

}  // namespace adaptaug
