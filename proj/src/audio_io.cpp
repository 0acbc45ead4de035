#include "soundcollage/audio_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace soundcollage {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;

uint16_t rd_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t rd_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void wr_u16(std::ofstream& f, uint16_t v) {
    uint8_t b[2] = {static_cast<uint8_t>(v & 0xff), static_cast<uint8_t>(v >> 8)};
    f.write(reinterpret_cast<const char*>(b), 2);
}

void wr_u32(std::ofstream& f, uint32_t v) {
    uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>((v >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

AudioClip read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw WavError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), {});

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw WavFormatError(path + ": not a RIFF/WAVE file");
    }

    bool have_fmt = false;
    uint16_t fmt_tag = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const uint8_t* data = nullptr;
    uint32_t data_size = 0;

    // Chunk walk. Sizes are trusted only as far as the buffer actually
    // extends; the data chunk gets the precise truncation check.
    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const uint8_t* hdr = bytes.data() + pos;
        uint32_t size = rd_u32(hdr + 4);
        size_t body = pos + 8;
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            if (size < 16 || body + 16 > bytes.size()) {
                throw WavFormatError(path + ": fmt chunk too small");
            }
            const uint8_t* p = bytes.data() + body;
            fmt_tag = rd_u16(p);
            channels = rd_u16(p + 2);
            rate = rd_u32(p + 4);
            bits = rd_u16(p + 14);
            have_fmt = true;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            if (body + size > bytes.size()) {
                throw TruncatedDataError(path + ": data chunk declares " +
                                         std::to_string(size) + " bytes, file holds " +
                                         std::to_string(bytes.size() - body));
            }
            data = bytes.data() + body;
            data_size = size;
            break;
        }
        pos = body + size + (size & 1);  // chunks are word-aligned
    }

    if (!have_fmt) throw WavFormatError(path + ": missing fmt chunk");
    if (!data) throw WavFormatError(path + ": missing data chunk");
    if (channels == 0 || rate == 0) throw WavFormatError(path + ": zero channels or rate");

    if (fmt_tag == kFormatPcm) {
        if (bits != 16) {
            throw UnsupportedCodecError(path + ": PCM with " + std::to_string(bits) +
                                        " bits per sample (only 16 supported)");
        }
    } else if (fmt_tag == kFormatFloat) {
        if (bits != 32) {
            throw UnsupportedCodecError(path + ": float with " + std::to_string(bits) +
                                        " bits per sample (only 32 supported)");
        }
    } else {
        throw UnsupportedCodecError(path + ": format tag " + std::to_string(fmt_tag));
    }

    const size_t bytes_per_sample = bits / 8;
    const size_t frame_size = bytes_per_sample * channels;
    const size_t n_frames = data_size / frame_size;

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.id = std::filesystem::path(path).stem().string();
    clip.samples.resize(n_frames);

    for (size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (size_t ch = 0; ch < channels; ++ch) {
            const uint8_t* p = data + i * frame_size + ch * bytes_per_sample;
            if (fmt_tag == kFormatPcm) {
                int16_t v = static_cast<int16_t>(rd_u16(p));
                acc += static_cast<double>(v) / 32768.0;
            } else {
                float v;
                uint32_t u = rd_u32(p);
                std::memcpy(&v, &u, 4);
                if (!std::isfinite(v)) {
                    throw WavFormatError(path + ": non-finite float sample");
                }
                acc += static_cast<double>(v);
            }
        }
        clip.samples[i] = acc / channels;
    }
    return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
    if (clip.sample_rate <= 0) throw std::invalid_argument("write_wav: sample rate must be positive");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw WavError("cannot open " + path + " for writing");

    const uint32_t n = static_cast<uint32_t>(clip.samples.size());
    const uint32_t data_bytes = n * 2;
    const uint32_t rate = static_cast<uint32_t>(clip.sample_rate);

    f.write("RIFF", 4);
    wr_u32(f, 36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    wr_u32(f, 16);
    wr_u16(f, kFormatPcm);
    wr_u16(f, 1);
    wr_u32(f, rate);
    wr_u32(f, rate * 2);
    wr_u16(f, 2);
    wr_u16(f, 16);
    f.write("data", 4);
    wr_u32(f, data_bytes);

    for (double s : clip.samples) {
        double x = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
        long q = std::lround(x * 32768.0);
        if (q > 32767) q = 32767;
        if (q < -32768) q = -32768;
        wr_u16(f, static_cast<uint16_t>(static_cast<int16_t>(q)));
    }
    if (!f) throw WavError("short write to " + path);
}

AudioClip resample(const AudioClip& clip, int target_rate) {
    if (target_rate <= 0) throw std::invalid_argument("resample: target rate must be positive");
    if (clip.sample_rate <= 0) throw std::invalid_argument("resample: source rate must be positive");

    AudioClip out;
    out.id = clip.id;
    out.sample_rate = target_rate;
    if (clip.samples.empty()) return out;
    if (target_rate == clip.sample_rate) {
        out.samples = clip.samples;
        return out;
    }

    const uint64_t n_in = clip.samples.size();
    const uint64_t src = static_cast<uint64_t>(clip.sample_rate);
    const uint64_t tgt = static_cast<uint64_t>(target_rate);
    const uint64_t n_out = (n_in * tgt + src / 2) / src;

    out.samples.resize(n_out);
    const double step = static_cast<double>(clip.sample_rate) / target_rate;
    for (uint64_t i = 0; i < n_out; ++i) {
        double p = static_cast<double>(i) * step;
        auto lo = static_cast<size_t>(p);
        if (lo >= n_in - 1) {
            out.samples[i] = clip.samples[n_in - 1];
        } else {
            double w = p - static_cast<double>(lo);
            out.samples[i] = clip.samples[lo] * (1.0 - w) + clip.samples[lo + 1] * w;
        }
    }
    return out;
}

}  // namespace soundcollage
