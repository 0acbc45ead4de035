#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "soundcollage/audio_io.hpp"
#include "soundcollage/discovery.hpp"

namespace soundcollage {

enum class ClipKind { kTone, kChirp, kNoise, kLoop, kMixture };

// Deterministic clip recipe. Kind-specific fields are ignored by the other
// kinds. Same spec, same samples, bit for bit.
struct ClipSpec {
    ClipKind kind = ClipKind::kTone;
    int sample_rate = 16000;
    double duration_s = 1.0;
    double amplitude = 0.5;  // peak of the generated part, in (0, 1]
    uint64_t seed = 0;       // noise, loop, mixture

    double phase = 0.0;      // tone, chirp: starting phase, radians
    double freq_hz = 440.0;  // tone; chirp sweep start
    double freq_end_hz = 880.0;  // chirp sweep end

    double period_s = 0.5;    // loop: tile period
    double burst_frac = 0.5;  // loop: fraction of each period carrying the noise burst

    double event_freq_hz = 1000.0;  // mixture: foreground tone-burst frequency
    double event_dur_s = 0.25;      // mixture: length of each burst
    size_t n_events = 4;            // mixture: bursts, one per equal time slot
};

// Ground-truth stems for kind = mixture. background[i] + foreground[i]
// equals the returned clip sample for sample, exactly.
struct MixtureStems {
    std::vector<double> background;
    std::vector<double> foreground;
};

// tone: sine at freq_hz. chirp: linear sweep freq_hz -> freq_end_hz.
// noise: seeded uniform in [-amplitude, amplitude]. loop: one seeded noise
// burst tiled at period_s. mixture: loop background plus scheduled
// foreground tone bursts (Hann-faded edges), stems written when requested.
// Non-physical parameters (frequencies at or above Nyquist, zero duration,
// out-of-range fractions) throw std::invalid_argument naming the field.
AudioClip gen_clip(const ClipSpec& spec, MixtureStems* stems = nullptr);

struct PlantedClassSpec {
    std::string name;  // ground-truth label string, also the id prefix
    ClipSpec base;
};

struct PlantedDataset {
    std::vector<std::string> ids;  // "<name>-NNNN", grouped by class
    std::vector<AudioClip> clips;  // parallel to ids
    Task task;                     // template 0 -> label 0, every other template -> 1
    std::map<std::string, std::string> labels;  // id -> class name
};

// n_per_class jittered instantiations of each template: per clip, a fresh
// derived seed, a random starting phase, and an amplitude scale drawn from
// [0.9, 1.1]. Requires >= 2 templates with distinct non-empty names.
PlantedDataset gen_planted_dataset(size_t n_per_class,
                                   const std::vector<PlantedClassSpec>& classes, uint64_t seed);

// Classifies every .wav in wav_dir by spectral heuristics and writes one
// prediction line per clip, keyed by file stem, sorted by stem:
//   tone_<Hz>    dominant-bin concentration (peak frequency rounded to 10 Hz)
//   noise        Welch-averaged spectral flatness, discounted for bursty envelopes
//   loop_<p>s    envelope autocorrelation period (rounded to 0.1 s)
//   silence      RMS below 1e-4
//   unknown      fallback when nothing fires
// Unreadable files are skipped with a warning on stderr. Returns the number
// of clips labeled. Implements the external labeler contract: callers treat
// the output as ingest_predictions input.
size_t oracle_labeler(const std::string& wav_dir, const std::string& out_path);

}  // namespace soundcollage
