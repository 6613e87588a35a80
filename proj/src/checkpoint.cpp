#include "uwdiff/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "uwdiff/error.hpp"
#include "uwdiff/png_io.hpp"  // read_file / write_file

namespace uwdiff {

namespace {

constexpr char kMagic[4] = {'U', 'W', 'D', 'F'};
constexpr uint32_t kVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Cursor {
    const uint8_t* p;
    size_t n;
    size_t pos = 0;

    void need(size_t k) const {
        if (pos + k > n) throw DecodeError("checkpoint: truncated file");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string bytes(size_t k) {
        need(k);
        std::string s(reinterpret_cast<const char*>(p + pos), k);
        pos += k;
        return s;
    }
};

}  // namespace

const Tensor<float>* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32(buf, kVersion);
    const std::string meta = ck.meta.dump();
    put_u64(buf, meta.size());
    buf.insert(buf.end(), meta.begin(), meta.end());
    put_u64(buf, ck.tensors.size());
    for (const auto& [name, t] : ck.tensors) {
        put_u32(buf, static_cast<uint32_t>(name.size()));
        buf.insert(buf.end(), name.begin(), name.end());
        put_u32(buf, static_cast<uint32_t>(t.rank()));
        for (int d : t.shape()) put_u32(buf, static_cast<uint32_t>(d));
        const size_t bytes = t.numel() * sizeof(float);
        const size_t off = buf.size();
        buf.resize(off + bytes);
        std::memcpy(buf.data() + off, t.data(), bytes);
    }
    // Write to a sibling temp file first so a crash never leaves a torn checkpoint.
    const std::string tmp = path + ".tmp";
    write_file(tmp, buf);
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::vector<uint8_t> buf = read_file(path);
    Cursor c{buf.data(), buf.size()};
    if (c.bytes(4) != std::string(kMagic, 4))
        throw DecodeError("checkpoint: bad magic in " + path);
    const uint32_t version = c.u32();
    if (version != kVersion)
        throw DecodeError("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ck;
    const uint64_t meta_len = c.u64();
    const std::string meta = c.bytes(meta_len);
    try {
        ck.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("checkpoint: bad meta json: ") + e.what());
    }
    const uint64_t n_tensors = c.u64();
    ck.tensors.reserve(n_tensors);
    for (uint64_t i = 0; i < n_tensors; ++i) {
        const uint32_t name_len = c.u32();
        std::string name = c.bytes(name_len);
        const uint32_t rank = c.u32();
        if (rank > 8) throw DecodeError("checkpoint: implausible tensor rank");
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(c.u32());
        Tensor<float> t(shape);
        const size_t bytes = t.numel() * sizeof(float);
        c.need(bytes);
        std::memcpy(t.data(), c.p + c.pos, bytes);
        c.pos += bytes;
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    if (c.pos != c.n) throw DecodeError("checkpoint: trailing bytes");
    return ck;
}

}  // namespace uwdiff
