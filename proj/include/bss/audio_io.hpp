#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace bss {

/// Multichannel audio held as one sample sequence per channel,
/// nominally in [-1, 1]. All channels always have the same length.
struct AudioBuffer {
  std::vector<std::vector<double>> samples;  // [channel][sample]
  int sample_rate = 0;

  std::size_t num_channels() const { return samples.size(); }
  std::size_t num_samples() const {
    return samples.empty() ? 0 : samples.front().size();
  }

  /// Throws std::invalid_argument on ragged channels or rate <= 0.
  void validate() const;
};

struct AudioIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Anything other than PCM-16 / IEEE float-32 RIFF/WAVE.
struct UnsupportedEncodingError : AudioIoError {
  using AudioIoError::AudioIoError;
};
/// File ends before the declared chunk data does.
struct TruncatedFileError : AudioIoError {
  using AudioIoError::AudioIoError;
};

enum class WavEncoding { pcm16, float32 };

struct WavWriteResult {
  bool clipped = false;  // set when pcm16 saturated samples outside [-1, 1]
};

/// Reads a RIFF/WAVE file. PCM-16 samples are scaled by 1/32768;
/// float-32 data is passed through unchanged.
AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes buf re-readably. float32 round-trips bit-exactly (for values
/// representable in single precision); pcm16 within 1/32768 per sample,
/// saturating outside [-1, 1].
WavWriteResult write_wav(const std::filesystem::path& path,
                         const AudioBuffer& buf, WavEncoding encoding);

}  // namespace bss
