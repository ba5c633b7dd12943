#include "diformer/viz.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "diformer/common.hpp"

namespace diformer {

namespace {

uint32_t crc32_table_entry(uint32_t n) {
    uint32_t c = n;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    return c;
}

uint32_t crc32(const unsigned char *data, size_t len, uint32_t crc = 0) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t n = 0; n < 256; ++n) table[n] = crc32_table_entry(n);
        init = true;
    }
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

uint32_t adler32(const unsigned char *data, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521;
        b = (b + a) % 65521;
    }
    return (b << 16) | a;
}

void push_u32(std::vector<unsigned char> &v, uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

void push_chunk(std::vector<unsigned char> &out, const char type[4],
                const std::vector<unsigned char> &payload) {
    push_u32(out, static_cast<uint32_t>(payload.size()));
    std::vector<unsigned char> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    push_u32(out, crc32(body.data(), body.size()));
}

// zlib stream with stored (uncompressed) deflate blocks
std::vector<unsigned char> zlib_store(const std::vector<unsigned char> &raw) {
    std::vector<unsigned char> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t pos = 0;
    while (pos < raw.size() || raw.empty()) {
        const size_t n = std::min<size_t>(65535, raw.size() - pos);
        const bool last = pos + n >= raw.size();
        z.push_back(last ? 1 : 0);
        z.push_back(static_cast<unsigned char>(n & 0xff));
        z.push_back(static_cast<unsigned char>(n >> 8));
        z.push_back(static_cast<unsigned char>(~n & 0xff));
        z.push_back(static_cast<unsigned char>((~n >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + pos, raw.begin() + pos + n);
        pos += n;
        if (raw.empty()) break;
    }
    push_u32(z, adler32(raw.data(), raw.size()));
    return z;
}

} // namespace

void write_png(const std::string &path, int width, int height,
               const std::vector<unsigned char> &rgb) {
    if (static_cast<int64_t>(rgb.size()) != static_cast<int64_t>(width) * height * 3)
        throw Error("write_png: buffer size does not match dimensions");
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(height) * (1 + static_cast<size_t>(width) * 3));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0); // filter: none
        raw.insert(raw.end(), rgb.begin() + static_cast<int64_t>(y) * width * 3,
                   rgb.begin() + static_cast<int64_t>(y + 1) * width * 3);
    }
    std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<unsigned char> ihdr;
    push_u32(ihdr, static_cast<uint32_t>(width));
    push_u32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(2); // color type RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    push_chunk(png, "IHDR", ihdr);
    push_chunk(png, "IDAT", zlib_store(raw));
    push_chunk(png, "IEND", {});
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_png: cannot open " + path);
    os.write(reinterpret_cast<const char *>(png.data()), static_cast<std::streamsize>(png.size()));
}

void plot_mask_heatmap(const std::string &path, const std::vector<double> &masks, int n, int t_m,
                       int cell) {
    const int width = std::max(1, t_m * cell);
    const int band = std::max(4, cell * 4);
    const int height = std::max(1, n * band + (n > 0 ? n - 1 : 0));
    std::vector<unsigned char> rgb(static_cast<size_t>(width) * height * 3, 20);
    for (int i = 0; i < n; ++i) {
        for (int f = 0; f < t_m; ++f) {
            const double v = std::clamp(masks[static_cast<size_t>(i) * t_m + f], 0.0, 1.0);
            const unsigned char r = static_cast<unsigned char>(30 + 200 * v);
            const unsigned char g = static_cast<unsigned char>(30 + 140 * v);
            const unsigned char b = static_cast<unsigned char>(60 + 60 * (1.0 - v));
            for (int y = 0; y < band; ++y) {
                const int yy = i * (band + 1) + y;
                for (int x = f * cell; x < (f + 1) * cell && x < width; ++x) {
                    const size_t o = (static_cast<size_t>(yy) * width + x) * 3;
                    rgb[o] = r;
                    rgb[o + 1] = g;
                    rgb[o + 2] = b;
                }
            }
        }
    }
    write_png(path, width, height, rgb);
}

namespace {

void draw_strips(std::vector<unsigned char> &rgb, int width, int height, int y0, int band,
                 const std::vector<SpeechSegment> &segments, double total_duration,
                 const std::map<std::string, int> &lanes) {
    static const unsigned char palette[8][3] = {{230, 90, 70},  {70, 160, 230}, {90, 200, 120},
                                                {230, 200, 70}, {180, 110, 220}, {90, 210, 210},
                                                {230, 140, 190}, {160, 160, 160}};
    for (const auto &seg : segments) {
        const int lane = lanes.at(seg.speaker_id);
        const unsigned char *col = palette[lane % 8];
        const int x0 = static_cast<int>(seg.onset / total_duration * width);
        const int x1 = std::min(width, static_cast<int>(seg.offset() / total_duration * width));
        for (int y = y0 + lane * (band + 1); y < y0 + lane * (band + 1) + band && y < height; ++y) {
            for (int x = std::max(0, x0); x < x1; ++x) {
                const size_t o = (static_cast<size_t>(y) * width + x) * 3;
                rgb[o] = col[0];
                rgb[o + 1] = col[1];
                rgb[o + 2] = col[2];
            }
        }
    }
}

} // namespace

void plot_timeline(const std::string &path, const std::vector<SpeechSegment> &segments,
                   double total_duration, const std::vector<SpeechSegment> &reference, int width) {
    if (total_duration <= 0) throw Error("plot_timeline: non-positive duration");
    std::map<std::string, int> lanes, ref_lanes;
    for (const auto &s : segments)
        lanes.emplace(s.speaker_id, static_cast<int>(lanes.size()));
    for (const auto &s : reference)
        ref_lanes.emplace(s.speaker_id, static_cast<int>(ref_lanes.size()));
    const int band = 12;
    const int h_main = std::max(1, static_cast<int>(lanes.size())) * (band + 1);
    const int h_ref = reference.empty() ? 0 : static_cast<int>(ref_lanes.size()) * (band + 1) + 6;
    const int height = std::max(band + 1, h_main + h_ref);
    std::vector<unsigned char> rgb(static_cast<size_t>(width) * height * 3, 15);
    if (!reference.empty()) {
        draw_strips(rgb, width, height, 0, band, reference, total_duration, ref_lanes);
        draw_strips(rgb, width, height, h_ref, band, segments, total_duration, lanes);
    } else {
        draw_strips(rgb, width, height, 0, band, segments, total_duration, lanes);
    }
    write_png(path, width, height, rgb);
}

} // namespace diformer
