#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace soundcollage {

// Mono audio buffer. Samples are nominally in [-1, 1]; reading a float WAV
// preserves whatever the file holds, writing clamps.
struct AudioClip {
    std::string id;
    int sample_rate = 0;
    std::vector<double> samples;

    double duration_s() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

class WavError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// structurally malformed RIFF/WAVE container
class WavFormatError : public WavError {
public:
    using WavError::WavError;
};

// well-formed container but an encoding we do not decode
class UnsupportedCodecError : public WavError {
public:
    using WavError::WavError;
};

// data chunk declares more bytes than the file holds
class TruncatedDataError : public WavError {
public:
    using WavError::WavError;
};

// Reads PCM-16 (scaled by 1/32768) or IEEE float-32 WAV files.
// Multi-channel input is mixed down by per-frame arithmetic mean.
// The clip id is the file's basename without its extension.
AudioClip read_wav(const std::string& path);

// Writes mono 16-bit PCM. Samples are clamped to [-1, 1] before
// quantization, so a repeated write/read cycle is byte-stable.
void write_wav(const std::string& path, const AudioClip& clip);

// Linear-interpolation resampler with edge hold. Output length is
// round(n * target_rate / source_rate). Equal rates return a copy.
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace soundcollage
