#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "latent/implicit_likelihood.hpp"

namespace latent {

inline constexpr int kSampleRate = 8000;
inline constexpr Eigen::Index kChunkLength = 800;  // 100 ms
inline constexpr Eigen::Index kChunkHop = 400;     // 50 ms overlap

struct AudioSignal {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;
};

struct ChunkSet {
  std::vector<Vector> chunks;  // each kChunkLength, already windowed
  Eigen::Index hop = kChunkHop;
  Vector window;
};

/// Periodic Hann window (denominator n); shifted copies at hop n/2 sum to 1.
Vector periodic_hann(Eigen::Index n);

/// Reads 16-bit PCM mono 8 kHz WAV, scaling samples by 1/32768.
/// Throws IoError, UnsupportedFormat, SampleRateMismatch.
AudioSignal load_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono 8 kHz WAV. Samples must lie in [-1, 1].
void save_wav(const AudioSignal& signal, const std::filesystem::path& path);

/// Frame t covers samples [t*400, t*400 + 800) times the Hann window; a
/// trailing remainder shorter than a frame is dropped. Throws TooShort.
ChunkSet chunk(const AudioSignal& signal);

/// Sums chunks at hop offsets without a synthesis window.
AudioSignal overlap_add(const ChunkSet& chunks);

/// Magnitude STFT by direct DFT with a periodic Hann analysis window.
/// Rows are frequency bins 0..fft_size/2, columns are frames.
Matrix spectrogram(const AudioSignal& signal, Eigen::Index fft_size = 256,
                   Eigen::Index hop = 128);

/// Header "frame_0,...", one row per frequency bin.
void write_spectrogram_csv(std::ostream& out, const Matrix& grid);

/// Sequence of 250 ms notes, each two random partials from a fixed pitch set
/// with raised-cosine fades, peak amplitude 0.5.
AudioSignal synthetic_tone_sequence(SeededRng& rng, double seconds);

struct GeneratedAudio {
  AudioSignal signal;
  std::vector<std::size_t> states;
  double clip_fraction = 0.0;
  /// Set when more than 1% of the samples were clipped.
  bool clip_warning = false;
};

/// Samples T frames from the HMM base, decodes each to a chunk and
/// overlap-adds them; the result is hard-clipped to [-1, 1].
GeneratedAudio generate_audio(const ImplicitModel& model, SeededRng& rng, std::size_t frames);

}  // namespace latent
