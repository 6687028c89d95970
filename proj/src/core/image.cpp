#include "image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "serialize.hpp"

namespace a2v {

namespace {

void put_u32be(std::vector<unsigned char>& v, uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

uint32_t get_u32be(const unsigned char* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void write_chunk(std::ofstream& os, const char type[4], const std::vector<unsigned char>& payload) {
    std::vector<unsigned char> head;
    put_u32be(head, static_cast<uint32_t>(payload.size()));
    os.write(reinterpret_cast<const char*>(head.data()), 4);
    std::vector<unsigned char> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    os.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
    std::vector<unsigned char> tail;
    put_u32be(tail, crc32(body.data(), body.size()));
    os.write(reinterpret_cast<const char*>(tail.data()), 4);
}

unsigned char paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<unsigned char>(a);
    if (pb <= pc) return static_cast<unsigned char>(b);
    return static_cast<unsigned char>(c);
}

}  // namespace

void write_png(const std::string& path, const Tensor& hwc) {
    if (hwc.ndim() != 3 || hwc.shape[2] != 3)
        throw std::invalid_argument("write_png: expected (H, W, 3), got " + hwc.shape_str());
    int64_t H = hwc.shape[0], W = hwc.shape[1];

    // filter 0 per scanline
    std::vector<unsigned char> raw(static_cast<size_t>(H * (1 + W * 3)));
    size_t pos = 0;
    for (int64_t y = 0; y < H; ++y) {
        raw[pos++] = 0;
        for (int64_t x = 0; x < W; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                double v = hwc.at3(y, x, c);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                raw[pos++] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
    }

    uLongf zcap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> zdata(zcap);
    if (compress2(zdata.data(), &zcap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png: deflate failed");
    zdata.resize(zcap);

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_png: cannot open " + path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    os.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<unsigned char> ihdr;
    put_u32be(ihdr, static_cast<uint32_t>(W));
    put_u32be(ihdr, static_cast<uint32_t>(H));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // no interlace
    write_chunk(os, "IHDR", ihdr);
    write_chunk(os, "IDAT", zdata);
    write_chunk(os, "IEND", {});
    if (!os) throw std::runtime_error("write_png: write failed: " + path);
}

Tensor read_png(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_png: cannot open " + path);
    std::vector<unsigned char> file((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
        throw std::runtime_error("read_png: not a PNG: " + path);

    uint32_t W = 0, H = 0;
    int bit_depth = 0, color_type = -1;
    std::vector<unsigned char> zdata;
    size_t p = 8;
    while (p + 8 <= file.size()) {
        uint32_t len = get_u32be(&file[p]);
        if (p + 12 + len > file.size()) throw std::runtime_error("read_png: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(&file[p + 4]);
        const unsigned char* payload = &file[p + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            W = get_u32be(payload);
            H = get_u32be(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw std::runtime_error("read_png: interlaced PNG unsupported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            zdata.insert(zdata.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        p += 12 + len;
    }
    if (bit_depth != 8) throw std::runtime_error("read_png: only 8-bit PNGs supported");
    int ch;
    switch (color_type) {
        case 0: ch = 1; break;
        case 2: ch = 3; break;
        case 6: ch = 4; break;
        default: throw std::runtime_error("read_png: unsupported color type " + std::to_string(color_type));
    }

    size_t stride = static_cast<size_t>(W) * static_cast<size_t>(ch);
    std::vector<unsigned char> raw(static_cast<size_t>(H) * (stride + 1));
    uLongf rawlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rawlen, zdata.data(), static_cast<uLong>(zdata.size())) != Z_OK ||
        rawlen != raw.size())
        throw std::runtime_error("read_png: inflate failed for " + path);

    std::vector<unsigned char> img(static_cast<size_t>(H) * stride);
    for (uint32_t y = 0; y < H; ++y) {
        unsigned char filter = raw[y * (stride + 1)];
        const unsigned char* src = &raw[y * (stride + 1) + 1];
        unsigned char* dst = &img[y * stride];
        const unsigned char* up = y > 0 ? &img[(y - 1) * stride] : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= static_cast<size_t>(ch) ? dst[x - ch] : 0;
            int b = up ? up[x] : 0;
            int c = (up && x >= static_cast<size_t>(ch)) ? up[x - ch] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw std::runtime_error("read_png: bad filter byte");
            }
            dst[x] = static_cast<unsigned char>(v & 0xff);
        }
    }

    Tensor out({static_cast<int64_t>(H), static_cast<int64_t>(W), 3});
    for (uint32_t y = 0; y < H; ++y)
        for (uint32_t x = 0; x < W; ++x) {
            const unsigned char* px = &img[y * stride + x * static_cast<size_t>(ch)];
            double r, g, b;
            if (ch == 1) {
                r = g = b = px[0] / 255.0;
            } else {
                r = px[0] / 255.0;
                g = px[1] / 255.0;
                b = px[2] / 255.0;
            }
            out.at3(y, x, 0) = r;
            out.at3(y, x, 1) = g;
            out.at3(y, x, 2) = b;
        }
    return out;
}

}  // namespace a2v
