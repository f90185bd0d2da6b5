#include "tdgem/io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tdgem/serialize.hpp"

namespace tdgem::io {

using nlohmann::json;

namespace {

const unsigned char kPngSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void append_u32_be(std::string& out, std::uint32_t v) {
    out.push_back((char)((v >> 24) & 0xff));
    out.push_back((char)((v >> 16) & 0xff));
    out.push_back((char)((v >> 8) & 0xff));
    out.push_back((char)(v & 0xff));
}

std::uint32_t read_u32_be(const unsigned char* p) {
    return ((std::uint32_t)p[0] << 24) | ((std::uint32_t)p[1] << 16) |
           ((std::uint32_t)p[2] << 8) | (std::uint32_t)p[3];
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
    append_u32_be(out, (std::uint32_t)data.size());
    std::string body(type, 4);
    body += data;
    out += body;
    const auto crc =
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), (uInt)body.size());
    append_u32_be(out, (std::uint32_t)crc);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
    const ImageBuffer unit = to_unit_range(img);
    const std::size_t h = unit.height(), w = unit.width();
    if (h == 0 || w == 0) throw TdgemError("write_png: empty image");

    std::string raw;
    raw.reserve(h * (1 + w * 3));
    for (std::size_t r = 0; r < h; ++r) {
        raw.push_back('\0');  // filter: none
        for (std::size_t c = 0; c < w; ++c)
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double v = unit.pixels[(r * w + c) * 3 + ch];
                raw.push_back((char)(unsigned char)std::lround(v * 255.0));
            }
    }

    uLongf bound = compressBound((uLong)raw.size());
    std::string compressed(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                  reinterpret_cast<const Bytef*>(raw.data()), (uLong)raw.size(),
                  Z_BEST_SPEED) != Z_OK)
        throw TdgemError("write_png: deflate failed");
    compressed.resize(bound);

    std::string out(reinterpret_cast<const char*>(kPngSignature), 8);
    std::string ihdr;
    append_u32_be(ihdr, (std::uint32_t)w);
    append_u32_be(ihdr, (std::uint32_t)h);
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type: truecolor
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", "");
    serialize::write_file_bytes(path, out);
}

ImageBuffer read_png(const std::filesystem::path& path) {
    const std::string bytes = serialize::read_file_bytes(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSignature, 8) != 0)
        throw TdgemError(path.string() + ": not a PNG file");

    std::size_t pos = 8;
    std::size_t width = 0, height = 0;
    int bit_depth = 0, color_type = 0, interlace = 0;
    std::string idat;
    bool saw_ihdr = false;

    while (pos + 8 <= bytes.size()) {
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
        const std::uint32_t len = read_u32_be(p);
        const std::string type = bytes.substr(pos + 4, 4);
        if (pos + 12 + len > bytes.size())
            throw TdgemError(path.string() + ": truncated PNG chunk");
        const char* data = bytes.data() + pos + 8;
        if (type == "IHDR") {
            if (len != 13) throw TdgemError(path.string() + ": bad IHDR");
            const auto* d = reinterpret_cast<const unsigned char*>(data);
            width = read_u32_be(d);
            height = read_u32_be(d + 4);
            bit_depth = d[8];
            color_type = d[9];
            interlace = d[12];
            saw_ihdr = true;
        } else if (type == "IDAT") {
            idat.append(data, len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || width == 0 || height == 0)
        throw TdgemError(path.string() + ": missing image header");
    if (bit_depth != 8)
        throw TdgemError(path.string() + ": only 8-bit PNGs are supported");
    if (interlace != 0)
        throw TdgemError(path.string() + ": interlaced PNGs are not supported");
    int channels;
    switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 6: channels = 4; break;
        default:
            throw TdgemError(path.string() + ": unsupported PNG color type " +
                             std::to_string(color_type));
    }

    const std::size_t stride = width * (std::size_t)channels;
    std::vector<unsigned char> raw(height * (stride + 1));
    uLongf raw_len = (uLongf)raw.size();
    if (uncompress(raw.data(), &raw_len,
                   reinterpret_cast<const Bytef*>(idat.data()),
                   (uLong)idat.size()) != Z_OK ||
        raw_len != raw.size())
        throw TdgemError(path.string() + ": PNG inflate failed");

    // undo per-row filters in place
    std::vector<unsigned char> prev(stride, 0);
    std::vector<unsigned char> row(stride, 0);
    ImageBuffer out = make_image(height, width, RangeTag::Unit);
    for (std::size_t r = 0; r < height; ++r) {
        const unsigned char filter = raw[r * (stride + 1)];
        const unsigned char* src = raw.data() + r * (stride + 1) + 1;
        for (std::size_t i = 0; i < stride; ++i) {
            const int x = src[i];
            const int a = i >= (std::size_t)channels ? row[i - channels] : 0;
            const int b = prev[i];
            const int c = i >= (std::size_t)channels ? prev[i - channels] : 0;
            int v;
            switch (filter) {
                case 0: v = x; break;
                case 1: v = x + a; break;
                case 2: v = x + b; break;
                case 3: v = x + (a + b) / 2; break;
                case 4: v = x + paeth(a, b, c); break;
                default:
                    throw TdgemError(path.string() + ": bad PNG filter type " +
                                     std::to_string(filter));
            }
            row[i] = (unsigned char)(v & 0xff);
        }
        for (std::size_t cpos = 0; cpos < width; ++cpos) {
            double rgb[3];
            if (channels == 1) {
                rgb[0] = rgb[1] = rgb[2] = row[cpos] / 255.0;
            } else {
                rgb[0] = row[cpos * channels] / 255.0;
                rgb[1] = row[cpos * channels + 1] / 255.0;
                rgb[2] = row[cpos * channels + 2] / 255.0;
            }
            for (std::size_t ch = 0; ch < 3; ++ch)
                out.pixels[(r * width + cpos) * 3 + ch] = rgb[ch];
        }
        prev = row;
    }
    return out;
}

// ---------------------------------------------------------------------------
// latent files

void write_latent(const std::filesystem::path& path, const LatentCode& code,
                  std::uint64_t seed) {
    code.validate();
    std::string bytes;
    bytes.reserve(code.values.size() * 4);
    for (std::size_t i = 0; i < code.values.size(); ++i)
        serialize::append_f32_le(bytes, (float)code.values[i]);
    serialize::write_file_bytes(path, bytes);

    json sidecar;
    sidecar["L"] = code.layers();
    sidecar["D"] = code.dim();
    sidecar["space_tag"] = to_string(code.space_tag);
    sidecar["seed"] = seed;
    serialize::write_file_bytes(path.string() + ".json", sidecar.dump(2) + "\n");
}

LatentFile read_latent(const std::filesystem::path& path) {
    const std::filesystem::path sidecar_path = path.string() + ".json";
    if (!std::filesystem::exists(sidecar_path))
        throw TdgemError("read_latent: missing sidecar " + sidecar_path.string());
    json sidecar = json::parse(serialize::read_file_bytes(sidecar_path));
    const auto layers = sidecar.at("L").get<std::size_t>();
    const auto dim = sidecar.at("D").get<std::size_t>();

    const std::string bytes = serialize::read_file_bytes(path);
    if (bytes.size() != layers * dim * 4)
        throw TdgemError("read_latent: " + path.string() + " has " +
                         std::to_string(bytes.size()) + " bytes, expected " +
                         std::to_string(layers * dim * 4));
    Tensor values({layers, dim});
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = (double)serialize::read_f32_le(p + 4 * i);

    LatentFile out;
    out.code = LatentCode{std::move(values),
                          space_tag_from_string(sidecar.at("space_tag").get<std::string>())};
    out.code.validate();
    out.seed = sidecar.value("seed", 0ull);
    return out;
}

void write_scalar_log(const std::filesystem::path& path,
                      const std::vector<ScalarLogRow>& rows) {
    std::ofstream f(path);
    if (!f) throw TdgemError("write_scalar_log: cannot write " + path.string());
    f << "step,term,value\n";
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.value);
        f << row.step << "," << row.term << "," << buf << "\n";
    }
}

std::string file_digest(const std::filesystem::path& path) {
    // FNV-1a over the file bytes; equality checking only, not cryptographic
    const std::string bytes = serialize::read_file_bytes(path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace tdgem::io
