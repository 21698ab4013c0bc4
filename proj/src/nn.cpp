#include "evf/nn.hpp"

#include <bit>
#include <cstring>

namespace evf::nn {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'F', 'C'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<uint64_t>(v));
}

struct Reader {
    std::span<const uint8_t> bytes;
    size_t pos = 0;

    void need(size_t n, const char* what) {
        if (bytes.size() - pos < n)
            throw Error(Errc::checkpoint_mismatch,
                        std::string("checkpoint truncated reading ") + what);
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::string str(size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

} // namespace

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, ckpt.version);
    put_u64(out, ckpt.meta_json.size());
    out.insert(out.end(), ckpt.meta_json.begin(), ckpt.meta_json.end());
    put_u64(out, ckpt.tensors.size());
    for (const auto& t : ckpt.tensors) {
        put_u64(out, t.name.size());
        out.insert(out.end(), t.name.begin(), t.name.end());
        put_u64(out, t.dims.size());
        size_t count = 1;
        for (size_t d : t.dims) {
            put_u64(out, d);
            count *= d;
        }
        if (count != t.values.size())
            throw Error(Errc::checkpoint_mismatch,
                        "tensor '" + t.name + "' value count does not match its dims");
        for (double v : t.values) put_f64(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const uint8_t> bytes) {
    Reader r{bytes};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw Error(Errc::checkpoint_mismatch, "not a checkpoint file (bad magic)");
    r.pos = 4;
    Checkpoint ckpt;
    ckpt.version = r.u32("version");
    if (ckpt.version != 1)
        throw Error(Errc::checkpoint_mismatch,
                    "unsupported checkpoint version " + std::to_string(ckpt.version));
    const uint64_t meta_len = r.u64("meta length");
    ckpt.meta_json = r.str(meta_len, "meta");
    const uint64_t count = r.u64("tensor count");
    for (uint64_t i = 0; i < count; ++i) {
        NamedTensor t;
        const uint64_t name_len = r.u64("name length");
        t.name = r.str(name_len, "name");
        const uint64_t rank = r.u64("rank");
        if (rank > 8)
            throw Error(Errc::checkpoint_mismatch, "tensor '" + t.name + "' has rank > 8");
        uint64_t n = 1;
        for (uint64_t d = 0; d < rank; ++d) {
            const uint64_t dim = r.u64("dim");
            if (dim != 0 && n > UINT64_MAX / dim)
                throw Error(Errc::checkpoint_mismatch, "tensor '" + t.name + "' dims overflow");
            t.dims.push_back(dim);
            n *= dim;
        }
        if (n > (bytes.size() - r.pos) / 8)
            throw Error(Errc::checkpoint_mismatch, "tensor '" + t.name + "' values truncated");
        t.values.reserve(n);
        for (uint64_t k = 0; k < n; ++k) t.values.push_back(r.f64("value"));
        ckpt.tensors.push_back(std::move(t));
    }
    if (r.pos != bytes.size())
        throw Error(Errc::checkpoint_mismatch, "trailing bytes after the last tensor");
    return ckpt;
}

} // namespace evf::nn
