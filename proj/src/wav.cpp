#include "its/wav.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "its/error.hpp"

namespace its {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes little-endian");

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_u16(std::string& out, std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); }

std::uint32_t get_u32(const std::string& s, std::size_t at) {
    std::uint32_t v;
    std::memcpy(&v, s.data() + at, 4);
    return v;
}

std::uint16_t get_u16(const std::string& s, std::size_t at) {
    std::uint16_t v;
    std::memcpy(&v, s.data() + at, 2);
    return v;
}

}  // namespace

void write_wav_float32(const std::filesystem::path& path, std::span<const double> samples,
                       int sample_rate) {
    const auto n = static_cast<std::uint32_t>(samples.size());
    const std::uint32_t data_bytes = n * 4;
    std::string out;
    out += "RIFF";
    put_u32(out, 4 + (8 + 18) + (8 + 4) + (8 + data_bytes));
    out += "WAVE";
    out += "fmt ";
    put_u32(out, 18);
    put_u16(out, 3);  // IEEE float
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(sample_rate));
    put_u32(out, static_cast<std::uint32_t>(sample_rate) * 4);
    put_u16(out, 4);
    put_u16(out, 32);
    put_u16(out, 0);
    out += "fact";
    put_u32(out, 4);
    put_u32(out, n);
    out += "data";
    put_u32(out, data_bytes);
    for (double s : samples) {
        const float f = static_cast<float>(s);
        out.append(reinterpret_cast<const char*>(&f), 4);
    }
    std::ofstream file(path, std::ios::binary);
    if (!file.write(out.data(), static_cast<std::streamsize>(out.size()))) {
        throw Error("cannot write " + path.string());
    }
}

WavData read_wav_float32(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw Error("cannot read " + path.string());
    }
    const std::string s((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    if (s.size() < 12 || s.compare(0, 4, "RIFF") != 0 || s.compare(8, 4, "WAVE") != 0) {
        throw ConfigError(path.string() + ": not a RIFF/WAVE file");
    }
    WavData wav;
    bool have_fmt = false;
    for (std::size_t at = 12; at + 8 <= s.size();) {
        const std::string id = s.substr(at, 4);
        const std::uint32_t len = get_u32(s, at + 4);
        const std::size_t body = at + 8;
        if (body + len > s.size()) {
            throw ConfigError(path.string() + ": truncated chunk " + id);
        }
        if (id == "fmt ") {
            if (get_u16(s, body) != 3 || get_u16(s, body + 2) != 1 || get_u16(s, body + 14) != 32) {
                throw ConfigError(path.string() + ": expected mono 32-bit float");
            }
            wav.sample_rate = static_cast<int>(get_u32(s, body + 4));
            have_fmt = true;
        } else if (id == "data") {
            wav.samples.resize(len / 4);
            std::memcpy(wav.samples.data(), s.data() + body, wav.samples.size() * 4);
        }
        at = body + len + (len & 1);
    }
    if (!have_fmt) {
        throw ConfigError(path.string() + ": missing fmt chunk");
    }
    return wav;
}

}  // namespace its
