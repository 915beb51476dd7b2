#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "error.hpp"
#include "random.hpp"

namespace nearmiss {

namespace {

constexpr char kMagic[8] = {'N', 'M', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
    char b[8];
    std::memcpy(b, &v, 8);
    out.append(b, 8);
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
    if (pos + 8 > in.size()) fail(ErrorKind::Load, "checkpoint truncated");
    std::uint64_t v;
    std::memcpy(&v, in.data() + pos, 8);
    pos += 8;
    return v;
}

}  // namespace

const nn::Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    auto header = ckpt.header;
    auto& index = header["tensors"] = nlohmann::ordered_json::array();
    for (const auto& [name, t] : ckpt.tensors) index.push_back({{"name", name}, {"shape", t.shape}});
    const std::string hdr = header.dump();

    std::string payload;
    for (const auto& [name, t] : ckpt.tensors)
        payload.append(reinterpret_cast<const char*>(t.ptr()), t.numel() * sizeof(double));

    std::string out(kMagic, 8);
    put_u64(out, hdr.size());
    out += hdr;
    out += payload;
    put_u64(out, fnv1a(payload));

    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::Io, "cannot write checkpoint " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) fail(ErrorKind::Io, "failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::Io, "cannot open checkpoint " + path);
    std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (in.size() < 16 || std::memcmp(in.data(), kMagic, 8) != 0) fail(ErrorKind::Load, path + ": not a checkpoint");
    std::size_t pos = 8;
    const auto hlen = get_u64(in, pos);
    if (pos + hlen > in.size()) fail(ErrorKind::Load, path + ": header truncated");
    Checkpoint ck;
    try {
        ck.header = nlohmann::ordered_json::parse(in.substr(pos, hlen));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Load, path + ": corrupt header (" + e.what() + ")");
    }
    pos += hlen;
    const std::size_t payload_start = pos;
    try {
        for (const auto& entry : ck.header.at("tensors")) {
            nn::Tensor t(entry.at("shape").get<nn::Shape>());
            const std::size_t bytes = t.numel() * sizeof(double);
            if (pos + bytes > in.size()) fail(ErrorKind::Load, path + ": payload truncated");
            std::memcpy(t.ptr(), in.data() + pos, bytes);
            pos += bytes;
            ck.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Load, path + ": corrupt tensor index (" + e.what() + ")");
    }
    const std::string payload = in.substr(payload_start, pos - payload_start);
    const auto checksum = get_u64(in, pos);
    if (checksum != fnv1a(payload)) fail(ErrorKind::Load, path + ": checksum mismatch");
    if (pos != in.size()) fail(ErrorKind::Load, path + ": trailing bytes");
    ck.header.erase("tensors");
    return ck;
}

}  // namespace nearmiss
