#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "soundcollage/synth.hpp"
#include "soundcollage/audio_io.hpp"
#include "soundcollage/discovery.hpp"
#include "soundcollage/features.hpp"
#include "soundcollage/labeling.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace soundcollage;

namespace {

// index of the strongest positive-frequency bin of a naive DFT over the
// first n_fft samples
size_t peak_bin(const std::vector<double>& x, size_t n_fft) {
    std::vector<double> head(x.begin(), x.begin() + std::min(x.size(), n_fft));
    head.resize(n_fft, 0.0);
    auto spec = oracle::naive_dft(head, n_fft);
    size_t best = 1;
    for (size_t k = 1; k <= n_fft / 2; ++k) {
        if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
    }
    return best;
}

size_t zero_crossings(const std::vector<double>& x, size_t lo, size_t hi) {
    size_t n = 0;
    for (size_t t = lo + 1; t < hi; ++t) {
        if ((x[t - 1] < 0.0) != (x[t] < 0.0)) ++n;
    }
    return n;
}

// raw autocorrelation, directly summed
double autocorr_at(const std::vector<double>& x, size_t lag) {
    double s = 0.0;
    for (size_t t = 0; t + lag < x.size(); ++t) s += x[t] * x[t + lag];
    return s;
}

// Welch-averaged spectral flatness over 512-sample Hann frames, built on the
// naive DFT so it is independent of both the synth and features modules
double welch_flatness(const std::vector<double>& x, int) {
    const size_t frame = 512, hop = 256;
    std::vector<double> power(frame / 2, 0.0);
    size_t n_frames = 0;
    for (size_t start = 0; start + frame <= x.size(); start += hop, ++n_frames) {
        std::vector<double> w(frame);
        for (size_t i = 0; i < frame; ++i) {
            double win = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / frame);
            w[i] = x[start + i] * win;
        }
        auto spec = oracle::naive_dft(w, frame);
        for (size_t k = 0; k < frame / 2; ++k) power[k] += std::norm(spec[k]);
    }
    double log_sum = 0.0, sum = 0.0;
    size_t n_bins = 0;
    for (size_t k = 1; k < frame / 2; ++k) {
        double p = power[k] / n_frames + 1e-20;
        log_sum += std::log(p);
        sum += p;
        ++n_bins;
    }
    return std::exp(log_sum / n_bins) / (sum / n_bins);
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("sc_synth_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("tone peaks at its frequency under a naive DFT") {
    ClipSpec spec;
    spec.kind = ClipKind::kTone;
    spec.duration_s = 1.0;
    spec.freq_hz = 440.0;
    AudioClip clip = gen_clip(spec);
    REQUIRE(clip.samples.size() == 16000);
    CHECK(clip.sample_rate == 16000);

    // 8000-point DFT: 2 Hz bins, so bin 220 is 440 Hz and one bin is +-2 Hz
    size_t k = peak_bin(clip.samples, 8000);
    CHECK(std::abs(static_cast<double>(k) * 2.0 - 440.0) <= 2.0);

    double peak = 0.0;
    for (double s : clip.samples) peak = std::max(peak, std::abs(s));
    CHECK(peak <= 0.5 + 1e-12);
    CHECK(peak > 0.49);

    CHECK(gen_clip(spec).samples == clip.samples);
}

TEST_CASE("chirp sweeps: zero-crossing rate rises from start to end frequency") {
    ClipSpec spec;
    spec.kind = ClipKind::kChirp;
    spec.duration_s = 1.0;
    spec.freq_hz = 440.0;
    spec.freq_end_hz = 880.0;
    AudioClip clip = gen_clip(spec);

    // phase integral of a linear sweep: 46.2 cycles in the first tenth,
    // 85.8 in the last
    size_t first = zero_crossings(clip.samples, 0, 1600);
    size_t last = zero_crossings(clip.samples, 14400, 16000);
    CHECK(first >= 88);
    CHECK(first <= 97);
    CHECK(last >= 165);
    CHECK(last <= 178);
}

TEST_CASE("noise is seed-deterministic, bounded, and roughly centered") {
    ClipSpec spec;
    spec.kind = ClipKind::kNoise;
    spec.duration_s = 1.0;
    spec.seed = 7;
    AudioClip a = gen_clip(spec);
    AudioClip b = gen_clip(spec);
    CHECK(a.samples == b.samples);

    spec.seed = 8;
    AudioClip c = gen_clip(spec);
    CHECK(a.samples != c.samples);

    double mean = 0.0, peak = 0.0;
    size_t above_half = 0;
    for (double s : a.samples) {
        mean += s;
        peak = std::max(peak, std::abs(s));
        if (std::abs(s) > 0.25) ++above_half;
    }
    mean /= a.samples.size();
    CHECK(peak <= 0.5);
    CHECK(std::abs(mean) < 0.01);
    // |uniform| exceeds half its range half the time
    CHECK(above_half > 7200);
    CHECK(above_half < 8800);
}

TEST_CASE("loop tiles one pattern exactly and autocorrelation peaks at the period") {
    ClipSpec spec;
    spec.kind = ClipKind::kLoop;
    spec.duration_s = 4.0;
    spec.period_s = 0.5;
    spec.seed = 11;
    AudioClip clip = gen_clip(spec);
    REQUIRE(clip.samples.size() == 64000);

    for (size_t t = 0; t + 8000 < clip.samples.size(); t += 97) {
        REQUIRE(clip.samples[t] == clip.samples[t + 8000]);
    }

    size_t best_lag = 4000;
    double best = -1.0;
    for (size_t lag = 4000; lag <= 12000; lag += 10) {
        double r = autocorr_at(clip.samples, lag);
        if (r > best) {
            best = r;
            best_lag = lag;
        }
    }
    CHECK(best_lag == 8000);

    // burst occupies burst_frac of each period
    size_t nonzero = 0;
    for (size_t t = 0; t < 8000; ++t) {
        if (clip.samples[t] != 0.0) ++nonzero;
    }
    CHECK(nonzero > 3600);
    CHECK(nonzero <= 4000);
}

TEST_CASE("mixture stems sum to the mixture exactly") {
    ClipSpec spec;
    spec.kind = ClipKind::kMixture;
    spec.duration_s = 4.0;
    spec.period_s = 0.5;
    spec.amplitude = 0.4;
    spec.seed = 3;
    spec.n_events = 4;
    spec.event_dur_s = 0.25;
    MixtureStems stems;
    AudioClip mix = gen_clip(spec, &stems);
    REQUIRE(stems.background.size() == mix.samples.size());
    REQUIRE(stems.foreground.size() == mix.samples.size());
    for (size_t t = 0; t < mix.samples.size(); ++t) {
        REQUIRE(mix.samples[t] == stems.background[t] + stems.foreground[t]);
    }

    // the background stem is the loop this spec describes
    ClipSpec loop_spec = spec;
    loop_spec.kind = ClipKind::kLoop;
    CHECK(gen_clip(loop_spec).samples == stems.background);
}

TEST_CASE("mixture schedules the requested number of separated bursts") {
    ClipSpec spec;
    spec.kind = ClipKind::kMixture;
    spec.duration_s = 4.0;
    spec.amplitude = 0.4;
    spec.seed = 9;
    spec.n_events = 4;
    spec.event_dur_s = 0.25;
    MixtureStems stems;
    gen_clip(spec, &stems);

    size_t runs = 0, run_len = 0, max_run = 0, min_run = SIZE_MAX;
    bool in_run = false;
    for (double s : stems.foreground) {
        if (s != 0.0) {
            if (!in_run) {
                ++runs;
                in_run = true;
                run_len = 0;
            }
            ++run_len;
        } else if (in_run) {
            in_run = false;
            max_run = std::max(max_run, run_len);
            min_run = std::min(min_run, run_len);
        }
    }
    if (in_run) {
        max_run = std::max(max_run, run_len);
        min_run = std::min(min_run, run_len);
    }
    CHECK(runs == 4);
    // Hann fade zeroes the burst endpoints, nothing more
    CHECK(min_run >= 3998);
    CHECK(max_run <= 4000);
}

TEST_CASE("non-physical specs are rejected naming the field") {
    auto message_of = [](const ClipSpec& spec) {
        try {
            gen_clip(spec);
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };

    ClipSpec tone;
    tone.kind = ClipKind::kTone;
    tone.freq_hz = 8000.0;
    CHECK(message_of(tone).find("freq_hz") != std::string::npos);

    ClipSpec chirp;
    chirp.kind = ClipKind::kChirp;
    chirp.freq_end_hz = 9000.0;
    CHECK(message_of(chirp).find("freq_end_hz") != std::string::npos);

    ClipSpec mix;
    mix.kind = ClipKind::kMixture;
    mix.event_freq_hz = 8000.0;
    CHECK(message_of(mix).find("event_freq_hz") != std::string::npos);

    ClipSpec loop;
    loop.kind = ClipKind::kLoop;
    loop.period_s = 9.0;  // longer than the clip
    CHECK(message_of(loop).find("period_s") != std::string::npos);

    loop.period_s = 0.5;
    loop.burst_frac = 0.0;
    CHECK(message_of(loop).find("burst_frac") != std::string::npos);

    ClipSpec bad;
    bad.duration_s = 0.0;
    CHECK(message_of(bad).find("duration_s") != std::string::npos);

    bad.duration_s = 1.0;
    bad.amplitude = 1.5;
    CHECK(message_of(bad).find("amplitude") != std::string::npos);

    bad.amplitude = 0.5;
    bad.sample_rate = 0;
    CHECK(message_of(bad).find("sample_rate") != std::string::npos);

    ClipSpec events;
    events.kind = ClipKind::kMixture;
    events.n_events = 0;
    CHECK(message_of(events).find("n_events") != std::string::npos);

    // a frequency just under Nyquist is fine
    ClipSpec ok;
    ok.kind = ClipKind::kTone;
    ok.freq_hz = 7999.0;
    CHECK_NOTHROW(gen_clip(ok));
}

TEST_CASE("planted dataset is balanced, labeled, and id-stable") {
    PlantedClassSpec tone_class;
    tone_class.name = "tone_440";
    tone_class.base.kind = ClipKind::kTone;
    tone_class.base.freq_hz = 440.0;

    PlantedClassSpec noise_class;
    noise_class.name = "noise";
    noise_class.base.kind = ClipKind::kNoise;

    PlantedDataset ds = gen_planted_dataset(20, {tone_class, noise_class}, 42);
    REQUIRE(ds.ids.size() == 40);
    REQUIRE(ds.clips.size() == 40);
    CHECK(ds.ids[0] == "tone_440-0000");
    CHECK(ds.ids[19] == "tone_440-0019");
    CHECK(ds.ids[20] == "noise-0000");

    size_t zeros = 0;
    for (const auto& [id, lab] : ds.task.assignment) {
        if (lab == 0) ++zeros;
    }
    CHECK(zeros == 20);
    CHECK(ds.task.assignment.size() == 40);
    for (size_t i = 0; i < 40; ++i) {
        CHECK(ds.labels.at(ds.ids[i]) == (i < 20 ? "tone_440" : "noise"));
        CHECK(ds.task.assignment.at(ds.ids[i]) == (i < 20 ? 0 : 1));
        CHECK(ds.clips[i].id == ds.ids[i]);
    }
}

TEST_CASE("planted jitter varies clips but keeps the dominant bin") {
    PlantedClassSpec tone_class;
    tone_class.name = "tone_440";
    tone_class.base.kind = ClipKind::kTone;
    tone_class.base.freq_hz = 440.0;

    PlantedClassSpec noise_class;
    noise_class.name = "noise";
    noise_class.base.kind = ClipKind::kNoise;

    PlantedDataset ds = gen_planted_dataset(3, {tone_class, noise_class}, 1);
    CHECK(ds.clips[0].samples != ds.clips[1].samples);
    CHECK(ds.clips[3].samples != ds.clips[4].samples);

    // 4000-point DFT: 4 Hz bins, 440 Hz lands on bin 110 for every jitter
    CHECK(peak_bin(ds.clips[0].samples, 4000) == 110);
    CHECK(peak_bin(ds.clips[1].samples, 4000) == 110);
    CHECK(peak_bin(ds.clips[2].samples, 4000) == 110);

    // amplitude jitter stays within +-10 percent of the base 0.5
    for (size_t i = 0; i < 3; ++i) {
        double peak = 0.0;
        for (double s : ds.clips[i].samples) peak = std::max(peak, std::abs(s));
        CHECK(peak >= 0.44);
        CHECK(peak <= 0.56);
    }

    PlantedDataset again = gen_planted_dataset(3, {tone_class, noise_class}, 1);
    REQUIRE(again.ids == ds.ids);
    for (size_t i = 0; i < ds.clips.size(); ++i) {
        REQUIRE(again.clips[i].samples == ds.clips[i].samples);
    }
    CHECK(again.labels == ds.labels);
    CHECK(again.task.assignment == ds.task.assignment);

    PlantedDataset moved = gen_planted_dataset(3, {tone_class, noise_class}, 2);
    CHECK(moved.clips[0].samples != ds.clips[0].samples);
}

TEST_CASE("planted dataset with three templates marks template zero against the rest") {
    PlantedClassSpec a, b, c;
    a.name = "tone_440";
    a.base.kind = ClipKind::kTone;
    b.name = "tone_880";
    b.base.kind = ClipKind::kTone;
    b.base.freq_hz = 880.0;
    c.name = "noise";
    c.base.kind = ClipKind::kNoise;

    PlantedDataset ds = gen_planted_dataset(4, {a, b, c}, 5);
    size_t zeros = 0;
    for (const auto& [id, lab] : ds.task.assignment) {
        if (lab == 0) ++zeros;
    }
    CHECK(zeros == 4);
    CHECK(ds.task.assignment.size() == 12);
}

TEST_CASE("planted dataset validation") {
    PlantedClassSpec only;
    only.name = "tone_440";
    CHECK_THROWS_AS(gen_planted_dataset(4, {only}, 1), std::invalid_argument);

    PlantedClassSpec dup = only;
    CHECK_THROWS_AS(gen_planted_dataset(4, {only, dup}, 1), std::invalid_argument);

    PlantedClassSpec unnamed;
    CHECK_THROWS_AS(gen_planted_dataset(4, {only, unnamed}, 1), std::invalid_argument);

    PlantedClassSpec other;
    other.name = "noise";
    other.base.kind = ClipKind::kNoise;
    CHECK_THROWS_AS(gen_planted_dataset(0, {only, other}, 1), std::invalid_argument);
}

TEST_CASE("the planted task scores recoverable agreement on real features") {
    PlantedClassSpec tone_class;
    tone_class.name = "tone_440";
    tone_class.base.kind = ClipKind::kTone;
    tone_class.base.freq_hz = 440.0;

    PlantedClassSpec noise_class;
    noise_class.name = "noise";
    noise_class.base.kind = ClipKind::kNoise;

    PlantedDataset ds = gen_planted_dataset(25, {tone_class, noise_class}, 17);
    std::map<std::string, FeatureGrid> feats;
    for (size_t i = 0; i < ds.ids.size(); ++i) {
        feats[ds.ids[i]] = resample_time(extract_mfcc(ds.clips[i]), 64);
    }
    AgreementEstimate est = agreement_score(ds.task, feats, AsParams{}, 5);
    CHECK(est.mean >= 0.85);
}

TEST_CASE("oracle labeler names tones, noise, loops, and silence") {
    TempDir dir("labels");

    ClipSpec tone;
    tone.kind = ClipKind::kTone;
    tone.freq_hz = 440.0;
    tone.duration_s = 1.0;
    AudioClip tone_clip = gen_clip(tone);
    tone_clip.id = "a_tone";
    write_wav((dir.path / "a_tone.wav").string(), tone_clip);

    ClipSpec noise;
    noise.kind = ClipKind::kNoise;
    noise.duration_s = 2.0;
    noise.seed = 3;
    AudioClip noise_clip = gen_clip(noise);
    noise_clip.id = "b_noise";
    write_wav((dir.path / "b_noise.wav").string(), noise_clip);

    ClipSpec loop;
    loop.kind = ClipKind::kLoop;
    loop.duration_s = 4.0;
    loop.period_s = 0.5;
    loop.seed = 11;
    AudioClip loop_clip = gen_clip(loop);
    loop_clip.id = "c_loop";
    write_wav((dir.path / "c_loop.wav").string(), loop_clip);

    AudioClip silent;
    silent.id = "d_silence";
    silent.sample_rate = 16000;
    silent.samples.assign(16000, 0.0);
    write_wav((dir.path / "d_silence.wav").string(), silent);

    ClipSpec high;
    high.kind = ClipKind::kTone;
    high.freq_hz = 881.0;  // detector rounds to the 10 Hz grid
    AudioClip high_clip = gen_clip(high);
    high_clip.id = "e_high";
    write_wav((dir.path / "e_high.wav").string(), high_clip);

    std::string out = (dir.path / "pred.jsonl").string();
    size_t n = oracle_labeler(dir.path.string(), out);
    CHECK(n == 5);

    auto preds = ingest_predictions(out);
    REQUIRE(preds.size() == 5);
    CHECK(preds.at("a_tone").entries.front().first == "tone_440");
    CHECK(preds.at("a_tone").entries.front().second >= 0.9);
    CHECK(preds.at("b_noise").entries.front().first == "noise");
    CHECK(preds.at("c_loop").entries.front().first == "loop_0.5s");
    CHECK(preds.at("d_silence").entries.front().first == "silence");
    CHECK(preds.at("e_high").entries.front().first == "tone_880");

    // flatness oracle: the noise clip really is spectrally flat
    CHECK(welch_flatness(noise_clip.samples, noise_clip.sample_rate) >= 0.8);
    // and the tone is not
    CHECK(welch_flatness(tone_clip.samples, tone_clip.sample_rate) < 0.5);

    std::string first = slurp(out);
    oracle_labeler(dir.path.string(), out);
    CHECK(slurp(out) == first);
}

TEST_CASE("oracle labeler skips unreadable files and labels the rest") {
    TempDir dir("skips");

    ClipSpec tone;
    tone.kind = ClipKind::kTone;
    AudioClip clip = gen_clip(tone);
    clip.id = "good";
    write_wav((dir.path / "good.wav").string(), clip);

    std::ofstream bad(dir.path / "bad.wav", std::ios::binary);
    bad << "RIFFjunk";
    bad.close();

    std::string out = (dir.path / "pred.jsonl").string();
    size_t n = oracle_labeler(dir.path.string(), out);
    CHECK(n == 1);
    auto preds = ingest_predictions(out);
    CHECK(preds.size() == 1);
    CHECK(preds.count("good") == 1);
}
