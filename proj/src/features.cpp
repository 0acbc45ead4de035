#include "soundcollage/features.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "soundcollage/fft.hpp"

namespace soundcollage {

namespace {

constexpr double kLogFloor = 1e-10;
constexpr double kOlaFloor = 1e-8;

double mel_of_hz(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double hz_of_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

size_t ms_to_samples(double ms, int rate) {
    return static_cast<size_t>(std::lround(ms * 1e-3 * rate));
}

}  // namespace

AudioClip pad_to_duration(const AudioClip& clip, double seconds) {
    if (clip.sample_rate <= 0) throw std::invalid_argument("pad_to_duration: rate must be positive");
    if (seconds <= 0.0) throw std::invalid_argument("pad_to_duration: duration must be positive");
    AudioClip out;
    out.id = clip.id;
    out.sample_rate = clip.sample_rate;
    size_t target = static_cast<size_t>(std::llround(seconds * clip.sample_rate));
    out.samples = clip.samples;
    out.samples.resize(target, 0.0);
    return out;
}

std::vector<double> hann_window(size_t len) {
    std::vector<double> w(len);
    for (size_t n = 0; n < len; ++n) {
        w[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(len));
    }
    return w;
}

Spectrogram stft(const AudioClip& clip, double window_ms, double hop_ms) {
    if (clip.sample_rate <= 0) throw std::invalid_argument("stft: rate must be positive");
    Spectrogram s;
    s.sample_rate = clip.sample_rate;
    s.window_len = ms_to_samples(window_ms, clip.sample_rate);
    s.hop = ms_to_samples(hop_ms, clip.sample_rate);
    if (s.window_len == 0 || s.hop == 0) {
        throw std::invalid_argument("stft: window and hop must be at least one sample");
    }
    if (clip.samples.size() < s.window_len) {
        throw std::invalid_argument("stft: clip shorter than one analysis window");
    }
    s.n_fft = next_pow2(s.window_len);
    s.n_bins = s.n_fft / 2 + 1;
    s.n_frames = (clip.samples.size() - s.window_len) / s.hop + 1;
    s.data.resize(s.n_frames * s.n_bins);

    const auto w = hann_window(s.window_len);
    std::vector<std::complex<double>> buf(s.n_fft);
    for (size_t f = 0; f < s.n_frames; ++f) {
        const double* x = clip.samples.data() + f * s.hop;
        for (size_t n = 0; n < s.window_len; ++n) buf[n] = x[n] * w[n];
        for (size_t n = s.window_len; n < s.n_fft; ++n) buf[n] = 0.0;
        fft(buf, false);
        for (size_t b = 0; b < s.n_bins; ++b) s.at(f, b) = buf[b];
    }
    return s;
}

AudioClip istft(const Spectrogram& spec, size_t n_samples) {
    AudioClip out;
    out.sample_rate = spec.sample_rate;
    out.samples.assign(n_samples, 0.0);
    if (spec.n_frames == 0 || n_samples == 0) return out;
    if (spec.n_bins != spec.n_fft / 2 + 1) {
        throw std::invalid_argument("istft: inconsistent spectrogram geometry");
    }

    const auto w = hann_window(spec.window_len);
    std::vector<double> wsum(n_samples, 0.0);
    std::vector<std::complex<double>> buf(spec.n_fft);

    for (size_t f = 0; f < spec.n_frames; ++f) {
        buf[0] = spec.at(f, 0);
        buf[spec.n_fft / 2] = spec.at(f, spec.n_bins - 1);
        for (size_t b = 1; b < spec.n_fft / 2; ++b) {
            buf[b] = spec.at(f, b);
            buf[spec.n_fft - b] = std::conj(spec.at(f, b));
        }
        fft(buf, true);
        const size_t base = f * spec.hop;
        for (size_t n = 0; n < spec.window_len; ++n) {
            size_t i = base + n;
            if (i >= n_samples) break;
            out.samples[i] += buf[n].real() * w[n];
            wsum[i] += w[n] * w[n];
        }
    }
    for (size_t i = 0; i < n_samples; ++i) {
        out.samples[i] /= std::max(wsum[i], kOlaFloor);
    }
    return out;
}

Matrix magnitude(const Spectrogram& spec) {
    Matrix m(spec.n_frames, spec.n_bins);
    for (size_t i = 0; i < spec.data.size(); ++i) m.data[i] = std::abs(spec.data[i]);
    return m;
}

Matrix mel_filterbank(size_t n_mels, size_t n_fft, int sample_rate) {
    if (n_mels == 0 || n_fft == 0 || sample_rate <= 0) {
        throw std::invalid_argument("mel_filterbank: invalid geometry");
    }
    const size_t n_bins = n_fft / 2 + 1;
    Matrix fb(n_mels, n_bins);

    std::vector<double> hz(n_mels + 2);
    const double mel_top = mel_of_hz(sample_rate / 2.0);
    for (size_t i = 0; i < hz.size(); ++i) {
        hz[i] = hz_of_mel(mel_top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
    }

    for (size_t m = 0; m < n_mels; ++m) {
        const double l = hz[m], c = hz[m + 1], r = hz[m + 2];
        for (size_t b = 0; b < n_bins; ++b) {
            double f = static_cast<double>(b) * sample_rate / static_cast<double>(n_fft);
            double v = 0.0;
            if (f > l && f < c) v = (f - l) / (c - l);
            else if (f == c) v = 1.0;
            else if (f > c && f < r) v = (r - f) / (r - c);
            fb.at(m, b) = v;
        }
    }
    return fb;
}

FeatureGrid log_mel(const AudioClip& clip, size_t n_mels, double window_ms, double hop_ms) {
    Spectrogram s = stft(clip, window_ms, hop_ms);
    Matrix fb = mel_filterbank(n_mels, s.n_fft, s.sample_rate);

    FeatureGrid out(s.n_frames, n_mels);
    std::vector<double> power(s.n_bins);
    for (size_t f = 0; f < s.n_frames; ++f) {
        for (size_t b = 0; b < s.n_bins; ++b) power[b] = std::norm(s.at(f, b));
        for (size_t m = 0; m < n_mels; ++m) {
            const double* row = fb.row(m);
            double e = 0.0;
            for (size_t b = 0; b < s.n_bins; ++b) e += row[b] * power[b];
            out.at(f, m) = std::log(kLogFloor + e);
        }
    }
    return out;
}

FeatureGrid extract_mfcc(const AudioClip& clip, size_t n_mels, double window_ms, double hop_ms) {
    FeatureGrid lm = log_mel(clip, n_mels, window_ms, hop_ms);

    // orthonormal DCT-II matrix over the band axis, all coefficients kept
    Matrix dct(n_mels, n_mels);
    const double n = static_cast<double>(n_mels);
    for (size_t k = 0; k < n_mels; ++k) {
        double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        for (size_t i = 0; i < n_mels; ++i) {
            dct.at(k, i) = scale * std::cos(M_PI * (2.0 * i + 1.0) * k / (2.0 * n));
        }
    }

    FeatureGrid out(lm.time_steps, n_mels);
    for (size_t t = 0; t < lm.time_steps; ++t) {
        const double* row = lm.values.data() + t * n_mels;
        for (size_t k = 0; k < n_mels; ++k) {
            const double* dk = dct.row(k);
            double acc = 0.0;
            for (size_t i = 0; i < n_mels; ++i) acc += dk[i] * row[i];
            out.at(t, k) = acc;
        }
    }
    return out;
}

FeatureGrid resample_time(const FeatureGrid& grid, size_t target_steps) {
    if (grid.time_steps == 0 || grid.n_coeffs == 0) {
        throw std::invalid_argument("resample_time: grid must be non-empty");
    }
    if (target_steps == 0) throw std::invalid_argument("resample_time: target must be at least 1");

    FeatureGrid out(target_steps, grid.n_coeffs);
    const double span = static_cast<double>(grid.time_steps - 1);
    for (size_t t = 0; t < target_steps; ++t) {
        double p = target_steps == 1 ? 0.0
                                     : span * static_cast<double>(t) / static_cast<double>(target_steps - 1);
        size_t lo = static_cast<size_t>(p);
        if (lo >= grid.time_steps - 1) {
            for (size_t k = 0; k < grid.n_coeffs; ++k) out.at(t, k) = grid.at(grid.time_steps - 1, k);
        } else {
            double w = p - static_cast<double>(lo);
            for (size_t k = 0; k < grid.n_coeffs; ++k) {
                out.at(t, k) = grid.at(lo, k) * (1.0 - w) + grid.at(lo + 1, k) * w;
            }
        }
    }
    return out;
}

void save_grid(const std::string& path, const FeatureGrid& grid) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw GridFormatError("cannot open " + path + " for writing");
    uint32_t dims[2] = {static_cast<uint32_t>(grid.time_steps), static_cast<uint32_t>(grid.n_coeffs)};
    f.write(reinterpret_cast<const char*>(dims), 8);
    for (double v : grid.values) {
        float x = static_cast<float>(v);
        f.write(reinterpret_cast<const char*>(&x), 4);
    }
    if (!f) throw GridFormatError("short write to " + path);
}

FeatureGrid load_grid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw GridFormatError("cannot open " + path);
    uint32_t dims[2];
    f.read(reinterpret_cast<char*>(dims), 8);
    if (!f) throw GridFormatError(path + ": missing grid header");
    FeatureGrid g(dims[0], dims[1]);
    std::vector<float> buf(g.values.size());
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (static_cast<size_t>(f.gcount()) != buf.size() * 4) {
        throw GridFormatError(path + ": grid payload shorter than header dims");
    }
    for (size_t i = 0; i < buf.size(); ++i) g.values[i] = static_cast<double>(buf[i]);
    return g;
}

}  // namespace soundcollage
