#include "tdgem/serialize.hpp"

#include <cstring>
#include <fstream>

namespace tdgem::serialize {

void append_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f32_le(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    append_u32_le(out, bits);
}

void append_f64_le(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t read_u32_le(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

float read_f32_le(const unsigned char* p) {
    const std::uint32_t bits = read_u32_le(p);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

double read_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw TdgemError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw TdgemError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw TdgemError("short write to " + path.string());
}

void write_blob(const std::filesystem::path& path, const std::string& magic8,
                const std::string& header_json, const std::vector<const Tensor*>& tensors) {
    if (magic8.size() != 8) throw TdgemError("write_blob: magic must be 8 bytes");
    std::string out = magic8;
    append_u32_le(out, static_cast<std::uint32_t>(header_json.size()));
    out += header_json;
    for (const Tensor* t : tensors)
        for (std::size_t i = 0; i < t->size(); ++i) append_f64_le(out, (*t)[i]);
    write_file_bytes(path, out);
}

Blob read_blob(const std::filesystem::path& path, const std::string& magic8) {
    const std::string bytes = read_file_bytes(path);
    if (bytes.size() < 12 || bytes.compare(0, 8, magic8) != 0)
        throw TdgemError(path.string() + ": not a " + magic8 + " file");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t hlen = read_u32_le(p + 8);
    if (12 + static_cast<std::size_t>(hlen) > bytes.size())
        throw TdgemError(path.string() + ": truncated header");
    Blob blob;
    blob.header_json = bytes.substr(12, hlen);
    const std::size_t payload_off = 12 + hlen;
    const std::size_t payload_bytes = bytes.size() - payload_off;
    if (payload_bytes % 8 != 0) throw TdgemError(path.string() + ": truncated payload");
    blob.payload.resize(payload_bytes / 8);
    for (std::size_t i = 0; i < blob.payload.size(); ++i)
        blob.payload[i] = read_f64_le(p + payload_off + 8 * i);
    return blob;
}

}  // namespace tdgem::serialize
