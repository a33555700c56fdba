#ifndef PREP_CHECKPOINT_HPP
#define PREP_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "prep/io.hpp"

namespace prep {

// Model checkpoint container. Binary layout, all integers little endian:
//   "PREP" | u32 version | u32 kind | u64 vocab_hash
//   u32 meta_count   { u32 klen, key bytes, u32 vlen, value bytes } ...
//   u32 array_count  { u32 nlen, name bytes, u32 ndim, u64 dims..., f64 values... } ...
// Maps iterate in key order, so save(load(f)) reproduces f byte for byte.
class Checkpoint {
public:
    enum class Kind : uint32_t { cbow = 1, dan = 2, svd = 3, svm = 4 };

    struct Array {
        std::vector<uint64_t> shape;
        std::vector<double> values;

        uint64_t element_count() const {
            return std::accumulate(shape.begin(), shape.end(), uint64_t{1}, std::multiplies<>());
        }
    };

    Kind kind = Kind::cbow;
    uint64_t vocab_hash = 0;
    std::map<std::string, std::string> meta;
    std::map<std::string, Array> arrays;

    static const char* kind_name(Kind k) {
        switch (k) {
            case Kind::cbow: return "cbow";
            case Kind::dan: return "dan";
            case Kind::svd: return "svd";
            case Kind::svm: return "svm";
        }
        return "?";
    }

    const Array& array(const std::string& name) const {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw std::runtime_error("checkpoint: missing array \"" + name + "\"");
        return it->second;
    }

    void set_array(const std::string& name, std::vector<uint64_t> shape, std::vector<double> values) {
        Array arr{std::move(shape), std::move(values)};
        if (arr.element_count() != arr.values.size())
            throw std::logic_error("checkpoint: shape/value mismatch for array \"" + name + "\"");
        arrays[name] = std::move(arr);
    }

    void require_kind(Kind expected) const {
        if (kind != expected)
            throw std::runtime_error(std::string("checkpoint kind mismatch: expected ") + kind_name(expected) +
                                     ", file contains " + kind_name(kind));
    }

    void save(const std::string& path) const {
        std::string buf;
        buf.reserve(1 << 16);
        buf.append("PREP", 4);
        put_u32(buf, 1);
        put_u32(buf, static_cast<uint32_t>(kind));
        put_u64(buf, vocab_hash);
        put_u32(buf, static_cast<uint32_t>(meta.size()));
        for (const auto& [k, v] : meta) {
            put_str(buf, k);
            put_str(buf, v);
        }
        put_u32(buf, static_cast<uint32_t>(arrays.size()));
        for (const auto& [name, arr] : arrays) {
            put_str(buf, name);
            put_u32(buf, static_cast<uint32_t>(arr.shape.size()));
            for (uint64_t d : arr.shape) put_u64(buf, d);
            for (double x : arr.values) put_u64(buf, std::bit_cast<uint64_t>(x));
        }
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + path);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw std::runtime_error("write failed: " + path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open: " + path);
        std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

        Reader r{buf, 0, path};
        char magic[4];
        r.bytes(magic, 4);
        if (std::string_view(magic, 4) != "PREP")
            throw std::runtime_error(path + ": not a checkpoint file (bad magic)");
        const uint32_t version = r.u32();
        if (version != 1)
            throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
        Checkpoint ckpt;
        const uint32_t kind_raw = r.u32();
        if (kind_raw < 1 || kind_raw > 4)
            throw std::runtime_error(path + ": unknown checkpoint kind " + std::to_string(kind_raw));
        ckpt.kind = static_cast<Kind>(kind_raw);
        ckpt.vocab_hash = r.u64();
        const uint32_t meta_count = r.u32();
        for (uint32_t i = 0; i < meta_count; ++i) {
            std::string k = r.str();
            std::string v = r.str();
            ckpt.meta.emplace(std::move(k), std::move(v));
        }
        const uint32_t array_count = r.u32();
        for (uint32_t i = 0; i < array_count; ++i) {
            std::string name = r.str();
            Array arr;
            const uint32_t ndim = r.u32();
            arr.shape.resize(ndim);
            for (uint32_t d = 0; d < ndim; ++d) arr.shape[d] = r.u64();
            const uint64_t n = arr.element_count();
            arr.values.resize(n);
            for (uint64_t j = 0; j < n; ++j) arr.values[j] = std::bit_cast<double>(r.u64());
            ckpt.arrays.emplace(std::move(name), std::move(arr));
        }
        if (r.pos != buf.size())
            throw std::runtime_error(path + ": trailing bytes after checkpoint payload");
        return ckpt;
    }

private:
    static void put_u32(std::string& buf, uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    static void put_u64(std::string& buf, uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    static void put_str(std::string& buf, const std::string& s) {
        put_u32(buf, static_cast<uint32_t>(s.size()));
        buf.append(s);
    }

    struct Reader {
        const std::string& buf;
        size_t pos;
        const std::string& path;

        void bytes(char* dst, size_t n) {
            if (pos + n > buf.size())
                throw std::runtime_error(path + ": truncated checkpoint at byte " + std::to_string(pos));
            std::copy(buf.data() + pos, buf.data() + pos + n, dst);
            pos += n;
        }
        uint32_t u32() {
            unsigned char b[4];
            bytes(reinterpret_cast<char*>(b), 4);
            return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
        }
        uint64_t u64() {
            unsigned char b[8];
            bytes(reinterpret_cast<char*>(b), 8);
            uint64_t v = 0;
            for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
            return v;
        }
        std::string str() {
            const uint32_t n = u32();
            std::string s(n, '\0');
            bytes(s.data(), n);
            return s;
        }
    };
};

} // namespace prep

#endif
