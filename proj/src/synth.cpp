#include "soundcollage/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "soundcollage/fft.hpp"
#include "soundcollage/rng.hpp"

namespace soundcollage {

namespace {

constexpr uint64_t kSaltNoise = 0x5EED;
constexpr uint64_t kSaltLoop = 0x100F;
constexpr uint64_t kSaltEvents = 0xE4E7;
constexpr uint64_t kSaltClass = 0xC1A5;

void require(bool ok, const std::string& field, const std::string& why) {
    if (!ok) throw std::invalid_argument("gen_clip: " + field + " " + why);
}

void check_freq(double f, double nyquist, const std::string& field) {
    require(f > 0.0 && f < nyquist, field, "must lie in (0, Nyquist)");
}

std::vector<double> loop_samples(const ClipSpec& spec, size_t n) {
    const size_t period = static_cast<size_t>(std::llround(spec.period_s * spec.sample_rate));
    require(period >= 1 && spec.period_s <= spec.duration_s, "period_s",
            "must lie in (0, duration_s]");
    require(spec.burst_frac > 0.0 && spec.burst_frac <= 1.0, "burst_frac", "must lie in (0, 1]");

    const size_t burst = std::max<size_t>(1, std::llround(spec.burst_frac * period));
    Rng rng(mix_seed(spec.seed, kSaltLoop));
    std::vector<double> pattern(period, 0.0);
    for (size_t i = 0; i < burst && i < period; ++i) {
        pattern[i] = spec.amplitude * (2.0 * rng.uniform() - 1.0);
    }
    std::vector<double> out(n);
    for (size_t t = 0; t < n; ++t) out[t] = pattern[t % period];
    return out;
}

}  // namespace

AudioClip gen_clip(const ClipSpec& spec, MixtureStems* stems) {
    require(spec.sample_rate > 0, "sample_rate", "must be positive");
    require(spec.duration_s > 0.0, "duration_s", "must be positive");
    require(spec.amplitude > 0.0 && spec.amplitude <= 1.0, "amplitude", "must lie in (0, 1]");

    const double sr = spec.sample_rate;
    const double nyquist = sr / 2.0;
    const size_t n = static_cast<size_t>(std::llround(spec.duration_s * sr));

    AudioClip clip;
    clip.sample_rate = spec.sample_rate;
    clip.samples.resize(n, 0.0);

    switch (spec.kind) {
        case ClipKind::kTone: {
            check_freq(spec.freq_hz, nyquist, "freq_hz");
            for (size_t t = 0; t < n; ++t) {
                clip.samples[t] =
                    spec.amplitude * std::sin(2.0 * M_PI * spec.freq_hz * t / sr + spec.phase);
            }
            break;
        }
        case ClipKind::kChirp: {
            check_freq(spec.freq_hz, nyquist, "freq_hz");
            check_freq(spec.freq_end_hz, nyquist, "freq_end_hz");
            const double slope = (spec.freq_end_hz - spec.freq_hz) / spec.duration_s;
            for (size_t t = 0; t < n; ++t) {
                double tt = t / sr;
                double ph = 2.0 * M_PI * (spec.freq_hz * tt + 0.5 * slope * tt * tt) + spec.phase;
                clip.samples[t] = spec.amplitude * std::sin(ph);
            }
            break;
        }
        case ClipKind::kNoise: {
            Rng rng(mix_seed(spec.seed, kSaltNoise));
            for (size_t t = 0; t < n; ++t) {
                clip.samples[t] = spec.amplitude * (2.0 * rng.uniform() - 1.0);
            }
            break;
        }
        case ClipKind::kLoop: {
            clip.samples = loop_samples(spec, n);
            break;
        }
        case ClipKind::kMixture: {
            check_freq(spec.event_freq_hz, nyquist, "event_freq_hz");
            require(spec.n_events >= 1, "n_events", "must be positive");
            require(spec.event_dur_s > 0.0, "event_dur_s", "must be positive");
            const size_t slot = n / spec.n_events;
            const size_t dur = static_cast<size_t>(std::llround(spec.event_dur_s * sr));
            require(dur + 2 <= slot, "event_dur_s",
                    "must leave room in each of the n_events slots");

            std::vector<double> bg = loop_samples(spec, n);
            std::vector<double> fg(n, 0.0);
            Rng rng(mix_seed(spec.seed, kSaltEvents));
            const size_t jitter = slot - dur - 2;
            for (size_t k = 0; k < spec.n_events; ++k) {
                size_t start =
                    k * slot + 1 + static_cast<size_t>(rng.uniform() * static_cast<double>(jitter));
                for (size_t i = 0; i < dur; ++i) {
                    double fade = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / (dur - 1)));
                    fg[start + i] =
                        spec.amplitude * fade * std::sin(2.0 * M_PI * spec.event_freq_hz * i / sr);
                }
            }
            for (size_t t = 0; t < n; ++t) clip.samples[t] = bg[t] + fg[t];
            if (stems) {
                stems->background = std::move(bg);
                stems->foreground = std::move(fg);
            }
            return clip;
        }
    }
    if (stems) {
        stems->background.assign(n, 0.0);
        stems->foreground = clip.samples;
    }
    return clip;
}

PlantedDataset gen_planted_dataset(size_t n_per_class,
                                   const std::vector<PlantedClassSpec>& classes, uint64_t seed) {
    if (classes.size() < 2) {
        throw std::invalid_argument("gen_planted_dataset: need at least 2 class templates");
    }
    if (n_per_class == 0) {
        throw std::invalid_argument("gen_planted_dataset: n_per_class must be positive");
    }
    for (size_t c = 0; c < classes.size(); ++c) {
        if (classes[c].name.empty()) {
            throw std::invalid_argument("gen_planted_dataset: class names must be non-empty");
        }
        for (size_t d = c + 1; d < classes.size(); ++d) {
            if (classes[c].name == classes[d].name) {
                throw std::invalid_argument("gen_planted_dataset: duplicate class name: " +
                                            classes[c].name);
            }
        }
    }

    PlantedDataset ds;
    ds.task.task_id = "planted";
    for (size_t c = 0; c < classes.size(); ++c) {
        for (size_t i = 0; i < n_per_class; ++i) {
            Rng rng(mix_seed(mix_seed(seed, kSaltClass + c), i));
            ClipSpec inst = classes[c].base;
            inst.phase = rng.uniform(0.0, 2.0 * M_PI);
            inst.amplitude = std::min(1.0, inst.amplitude * rng.uniform(0.9, 1.1));
            inst.seed = rng.next_u64();

            std::ostringstream id;
            id << classes[c].name << "-" << std::setw(4) << std::setfill('0') << i;
            AudioClip clip = gen_clip(inst);
            clip.id = id.str();
            ds.ids.push_back(clip.id);
            ds.clips.push_back(std::move(clip));
            ds.task.assignment[ds.ids.back()] = c == 0 ? 0 : 1;
            ds.labels[ds.ids.back()] = classes[c].name;
        }
    }
    return ds;
}

namespace {

struct Detection {
    std::string label;
    double score;
};

// RMS per 10 ms frame; the time resolution every envelope statistic uses.
std::vector<double> envelope(const std::vector<double>& x, int sr) {
    const size_t frame = std::max<size_t>(1, sr / 100);
    std::vector<double> env;
    for (size_t start = 0; start + frame <= x.size(); start += frame) {
        double s = 0.0;
        for (size_t i = 0; i < frame; ++i) s += x[start + i] * x[start + i];
        env.push_back(std::sqrt(s / frame));
    }
    return env;
}

// Dominant-bin tone detection on one Hann-windowed long FFT. Returns the
// peak frequency refined by parabolic interpolation plus the fraction of
// spectral energy concentrated around the peak.
void detect_tone(const std::vector<double>& x, int sr, std::vector<Detection>& out) {
    const size_t n = std::min<size_t>(x.size(), size_t{1} << 17);
    if (n < 64) return;
    const size_t nfft = next_pow2(n);
    std::vector<std::complex<double>> buf(nfft, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
        buf[i] = x[i] * w;
    }
    fft(buf, false);

    std::vector<double> p(nfft / 2 + 1);
    double total = 0.0;
    size_t peak = 1;
    for (size_t k = 1; k <= nfft / 2; ++k) {
        p[k] = std::norm(buf[k]);
        total += p[k];
        if (p[k] > p[peak]) peak = k;
    }
    if (total <= 0.0) return;

    double delta = 0.0;
    if (peak >= 2 && peak + 1 <= nfft / 2) {
        double a = std::log(p[peak - 1] + 1e-30);
        double b = std::log(p[peak] + 1e-30);
        double c = std::log(p[peak + 1] + 1e-30);
        double den = a - 2.0 * b + c;
        if (std::abs(den) > 1e-12) delta = std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
    }
    double freq = (peak + delta) * sr / nfft;

    // the Hann main lobe is 4 bins of the n-point window, wider on the
    // zero-padded nfft grid
    const size_t half = 3 * nfft / n + 2;
    double near = 0.0;
    for (size_t k = peak > half ? peak - half : 1; k <= std::min(peak + half, nfft / 2); ++k) {
        near += p[k];
    }
    long rounded = std::lround(freq / 10.0) * 10;
    if (rounded > 0) {
        out.push_back({"tone_" + std::to_string(rounded), near / total});
    }
}

// Welch-averaged spectral flatness, 512-sample Hann frames, hop 256.
double welch_flatness(const std::vector<double>& x) {
    const size_t frame = 512, hop = 256;
    if (x.size() < frame) return 0.0;
    std::vector<double> power(frame / 2 + 1, 0.0);
    size_t n_frames = 0;
    std::vector<std::complex<double>> buf(frame);
    for (size_t start = 0; start + frame <= x.size(); start += hop, ++n_frames) {
        for (size_t i = 0; i < frame; ++i) {
            double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / frame);
            buf[i] = x[start + i] * w;
        }
        fft(buf, false);
        for (size_t k = 0; k <= frame / 2; ++k) power[k] += std::norm(buf[k]);
    }
    double log_sum = 0.0, sum = 0.0;
    size_t bins = 0;
    for (size_t k = 1; k < frame / 2; ++k) {
        double v = power[k] / n_frames + 1e-20;
        log_sum += std::log(v);
        sum += v;
        ++bins;
    }
    return std::exp(log_sum / bins) / (sum / bins);
}

// Periodicity of the centered envelope. Picks the smallest lag within 10
// percent of the best normalized autocorrelation so harmonics of the true
// period do not win.
void detect_loop(const std::vector<double>& env, double cv, int sr, std::vector<Detection>& out) {
    if (cv < 0.15 || env.size() < 30) return;
    const size_t n = env.size();
    double mean = 0.0;
    for (double e : env) mean += e;
    mean /= n;
    std::vector<double> c(n);
    double denom = 0.0;
    for (size_t i = 0; i < n; ++i) {
        c[i] = env[i] - mean;
        denom += c[i] * c[i];
    }
    if (denom <= 0.0) return;
    denom /= n;

    const size_t lmin = 10, lmax = std::min<size_t>(250, n / 2);
    if (lmax < lmin) return;
    std::vector<double> rho(lmax + 1, 0.0);
    double best = -1.0;
    for (size_t lag = lmin; lag <= lmax; ++lag) {
        double s = 0.0;
        for (size_t t = 0; t + lag < n; ++t) s += c[t] * c[t + lag];
        rho[lag] = s / (n - lag) / denom;
        best = std::max(best, rho[lag]);
    }
    if (best < 0.4) return;
    size_t chosen = lmin;
    while (chosen <= lmax && rho[chosen] < 0.9 * best) ++chosen;

    const double frame_s = std::max<size_t>(1, sr / 100) / static_cast<double>(sr);
    double period = std::round(chosen * frame_s * 10.0) / 10.0;
    if (period <= 0.0) return;
    char label[32];
    std::snprintf(label, sizeof(label), "loop_%.1fs", period);
    out.push_back({label, std::min(rho[chosen], 1.0)});
}

std::vector<Detection> classify_clip(const AudioClip& clip) {
    const auto& x = clip.samples;
    double rms = 0.0;
    for (double s : x) rms += s * s;
    rms = std::sqrt(rms / std::max<size_t>(1, x.size()));
    if (rms < 1e-4) return {{"silence", 0.99}};

    std::vector<Detection> raw;
    detect_tone(x, clip.sample_rate, raw);

    std::vector<double> env = envelope(x, clip.sample_rate);
    double cv = 0.0;
    if (env.size() >= 4) {
        double m = 0.0, v = 0.0;
        for (double e : env) m += e;
        m /= env.size();
        for (double e : env) v += (e - m) * (e - m);
        if (m > 1e-12) cv = std::sqrt(v / env.size()) / m;
    }

    // flatness says broadband, a steady envelope says it stays broadband
    double flat = welch_flatness(x);
    raw.push_back({"noise", flat * std::clamp(1.0 - cv / 0.6, 0.0, 1.0)});

    detect_loop(env, cv, clip.sample_rate, raw);

    // confident detections survive; the single best one is kept even when
    // weak so every clip carries its most plausible label
    size_t best = 0;
    for (size_t i = 1; i < raw.size(); ++i) {
        if (raw[i].score > raw[best].score) best = i;
    }
    std::vector<Detection> kept;
    for (size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].score >= 0.3 || (i == best && raw[i].score > 0.05)) {
            kept.push_back({raw[i].label, std::clamp(raw[i].score, 0.0, 1.0)});
        }
    }
    if (kept.empty()) kept.push_back({"unknown", 0.5});
    std::sort(kept.begin(), kept.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.label < b.label;
    });
    return kept;
}

}  // namespace

size_t oracle_labeler(const std::string& wav_dir, const std::string& out_path) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(wav_dir)) {
        throw std::invalid_argument("oracle_labeler: not a directory: " + wav_dir);
    }
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(wav_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".wav") {
            paths.push_back(entry.path());
        }
    }
    std::sort(paths.begin(), paths.end());

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("oracle_labeler: cannot write " + out_path);

    size_t labeled = 0;
    for (const auto& path : paths) {
        AudioClip clip;
        try {
            clip = read_wav(path.string());
        } catch (const WavError& e) {
            std::fprintf(stderr, "warning: skipping %s: %s\n", path.string().c_str(), e.what());
            continue;
        }
        if (clip.samples.empty()) {
            std::fprintf(stderr, "warning: skipping %s: no samples\n", path.string().c_str());
            continue;
        }

        nlohmann::ordered_json line;
        line["sample_id"] = path.stem().string();
        auto preds = nlohmann::ordered_json::array();
        for (const Detection& d : classify_clip(clip)) {
            preds.push_back({{"label", d.label}, {"score", d.score}});
        }
        line["predictions"] = preds;
        out << line.dump() << "\n";
        ++labeled;
    }
    return labeled;
}

}  // namespace soundcollage
