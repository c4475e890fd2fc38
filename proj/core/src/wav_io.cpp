// Copyright 2026 The careaqa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cstring>
#include <fstream>

#include "careaqa/audio.hpp"

namespace careaqa::audio {

namespace {

uint32_t read_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0]) | (static_cast<uint16_t>(p[1]) << 8);
}

void write_u32(std::ofstream& out, uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                          static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ofstream& out, uint16_t v) {
    const uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Waveform load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AudioError(AudioError::Kind::missing_file, "cannot open WAV file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw AudioError(AudioError::Kind::malformed_file, "not a RIFF/WAVE file: " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    size_t data_off = 0, data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const uint32_t len = read_u32(bytes.data() + pos + 4);
        if (std::memcmp(id, "fmt ", 4) == 0 && pos + 8 + 16 <= bytes.size()) {
            const uint8_t* f = bytes.data() + pos + 8;
            format = read_u16(f);
            channels = read_u16(f + 2);
            rate = read_u32(f + 4);
            bits = read_u16(f + 14);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = pos + 8;
            data_len = std::min<size_t>(len, bytes.size() - data_off);
        }
        pos += 8 + len + (len & 1);
    }
    if (rate == 0 || data_off == 0)
        throw AudioError(AudioError::Kind::malformed_file, "missing fmt/data chunk: " + path);
    if (channels == 0) channels = 1;

    Waveform w;
    w.sample_rate_hz = static_cast<int>(rate);
    const uint8_t* d = bytes.data() + data_off;
    if (format == 1 && bits == 16) {
        const size_t n = data_len / 2 / channels;
        w.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            // Mix down to mono with a plain average.
            double acc = 0.0;
            for (uint16_t c = 0; c < channels; ++c) {
                const int16_t s = static_cast<int16_t>(read_u16(d + (i * channels + c) * 2));
                acc += s / 32768.0;
            }
            w.samples[i] = acc / channels;
        }
    } else if (format == 3 && bits == 32) {
        const size_t n = data_len / 4 / channels;
        w.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (uint16_t c = 0; c < channels; ++c) {
                uint32_t u = read_u32(d + (i * channels + c) * 4);
                float f;
                std::memcpy(&f, &u, 4);
                acc += f;
            }
            w.samples[i] = acc / channels;
        }
    } else {
        throw AudioError(AudioError::Kind::unsupported_format,
                         "only PCM16 and float32 WAV supported: " + path);
    }
    if (w.samples.empty())
        throw AudioError(AudioError::Kind::malformed_file, "empty data chunk: " + path);
    return w;
}

void save_wav(const std::string& path, const Waveform& w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AudioError(AudioError::Kind::missing_file, "cannot write WAV file: " + path);
    const uint32_t n = static_cast<uint32_t>(w.samples.size());
    const uint32_t data_len = n * 2;
    out.write("RIFF", 4);
    write_u32(out, 36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1);  // PCM
    write_u16(out, 1);  // mono
    write_u32(out, static_cast<uint32_t>(w.sample_rate_hz));
    write_u32(out, static_cast<uint32_t>(w.sample_rate_hz) * 2);
    write_u16(out, 2);
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, data_len);
    for (double s : w.samples) {
        const double clipped = std::clamp(s, -1.0, 1.0);
        const int16_t q = static_cast<int16_t>(std::lround(clipped * 32767.0));
        write_u16(out, static_cast<uint16_t>(q));
    }
}

}  // namespace careaqa::audio
