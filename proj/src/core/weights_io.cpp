#include "weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace ltew {

namespace {

constexpr char kMagic[8] = {'L', 'T', 'E', 'W', '0', '0', '0', '1'};
constexpr uint32_t kMaxName = 4096;
constexpr uint32_t kMaxDims = 4;
constexpr uint64_t kMaxElems = 1ULL << 31;

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<uint32_t>(f)); }

class Reader {
public:
    Reader(const std::string& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open weight file '" + path + "'");
        buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    bool eof() const { return pos_ == buf_.size(); }
    void raw(void* dst, size_t n, const char* what) {
        if (buf_.size() - pos_ < n)
            throw TruncatedError("weight file '" + path_ + "': truncated while reading " + what);
        std::memcpy(dst, buf_.data() + pos_, n);
        pos_ += n;
    }
    uint32_t u32(const char* what) {
        unsigned char b[4];
        raw(b, 4, what);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

private:
    std::string path_;
    std::vector<char> buf_;
    size_t pos_ = 0;
};

}  // namespace

void save_weights(const WeightMap& weights, const std::string& path) {
    std::string out(kMagic, sizeof kMagic);
    for (const auto& [name, t] : weights) {
        if (name.empty() || name.size() > kMaxName)
            throw std::invalid_argument("weight name length out of range: '" + name + "'");
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.append(name);
        put_u32(out, static_cast<uint32_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) put_u32(out, static_cast<uint32_t>(t.dim(i)));
        for (size_t i = 0; i < t.size(); ++i) put_f32(out, t[i]);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open weight file '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to weight file '" + path + "'");
}

WeightMap load_weights(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.raw(magic, 8, "magic");
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw BadMagicError("weight file '" + path + "': bad magic (not an LTEW0001 file)");
    WeightMap weights;
    while (!r.eof()) {
        const uint32_t name_len = r.u32("name length");
        if (name_len == 0 || name_len > kMaxName)
            throw FormatError("weight file '" + path + "': unreasonable name length");
        std::string name(name_len, '\0');
        r.raw(name.data(), name_len, "name");
        const uint32_t nd = r.u32("dim count");
        if (nd == 0 || nd > kMaxDims)
            throw FormatError("weight file '" + path + "': tensor '" + name + "' has bad rank " +
                              std::to_string(nd));
        std::vector<int> dims(nd);
        uint64_t total = 1;
        for (uint32_t i = 0; i < nd; ++i) {
            const uint32_t d = r.u32("dim");
            if (d == 0) throw FormatError("weight file '" + path + "': zero dim in '" + name + "'");
            dims[i] = static_cast<int>(d);
            total *= d;
            if (total > kMaxElems)
                throw FormatError("weight file '" + path + "': tensor '" + name + "' too large");
        }
        Tensor<float> t(dims);
        for (size_t i = 0; i < t.size(); ++i) t[i] = r.f32("payload");
        if (!weights.emplace(name, std::move(t)).second)
            throw DuplicateNameError("weight file '" + path + "': duplicate tensor '" + name + "'");
    }
    return weights;
}

}  // namespace ltew
