#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "specadv/stft.hpp"

namespace specadv {

namespace {

uint32_t read_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t read_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::string& s, uint32_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 24) & 0xff));
}
void put_u16(std::string& s, uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

Waveform read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    const size_t n = data.size();
    if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw IoError("not a RIFF/WAVE file: " + path);

    bool have_fmt = false;
    uint16_t channels = 0, bits = 0, format = 0;
    uint32_t rate = 0;
    const unsigned char* pcm = nullptr;
    uint32_t pcm_bytes = 0;

    size_t pos = 12;
    while (pos + 8 <= n) {
        const uint32_t chunk_size = read_u32(p + pos + 4);
        if (pos + 8 + chunk_size > n) throw IoError("truncated chunk in " + path);
        if (std::memcmp(p + pos, "fmt ", 4) == 0) {
            if (chunk_size < 16) throw IoError("short fmt chunk in " + path);
            format = read_u16(p + pos + 8);
            channels = read_u16(p + pos + 10);
            rate = read_u32(p + pos + 12);
            bits = read_u16(p + pos + 22);
            have_fmt = true;
        } else if (std::memcmp(p + pos, "data", 4) == 0) {
            pcm = p + pos + 8;
            pcm_bytes = chunk_size;
        }
        pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
    }
    if (!have_fmt || pcm == nullptr) throw IoError("missing fmt/data chunk in " + path);
    if (format != 1) throw IoError("unsupported encoding (PCM only): " + path);
    if (channels != 1) throw IoError("mono input required: " + path);
    if (bits != 16) throw IoError("16-bit input required: " + path);

    Waveform wav;
    wav.sample_rate = static_cast<int>(rate);
    wav.samples.resize(pcm_bytes / 2);
    for (size_t i = 0; i < wav.samples.size(); ++i) {
        const int16_t v = static_cast<int16_t>(pcm[2 * i] | (pcm[2 * i + 1] << 8));
        wav.samples[i] = v / 32768.0;
    }
    return wav;
}

void write_wav(const std::string& path, const Waveform& wav) {
    const uint32_t pcm_bytes = static_cast<uint32_t>(wav.samples.size() * 2);
    std::string out;
    out.reserve(44 + pcm_bytes);
    out += "RIFF";
    put_u32(out, 36 + pcm_bytes);
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<uint32_t>(wav.sample_rate));
    put_u32(out, static_cast<uint32_t>(wav.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out += "data";
    put_u32(out, pcm_bytes);
    for (double x : wav.samples) {
        long v = std::lround(x * 32768.0);
        v = std::clamp(v, -32768L, 32767L);
        put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace specadv
