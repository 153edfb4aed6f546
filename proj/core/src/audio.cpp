#include "latent/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <ostream>

#include <spdlog/spdlog.h>

#include "latent/csv.hpp"

namespace latent {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const std::array<char, 2> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b.data(), 2);
}

}  // namespace

Vector periodic_hann(Eigen::Index n) {
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

AudioSignal load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::kUnsupportedFormat, "not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw Error(ErrorCode::kUnsupportedFormat, "truncated WAV chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorCode::kUnsupportedFormat, "short fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw Error(ErrorCode::kUnsupportedFormat, "data chunk before fmt chunk");
      if (format != 1 || channels != 1 || bits != 16) {
        throw Error(ErrorCode::kUnsupportedFormat, "only 16-bit PCM mono WAV is supported");
      }
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw Error(ErrorCode::kSampleRateMismatch,
                    "expected 8000 Hz, got " + std::to_string(rate) + " Hz");
      }
      AudioSignal signal;
      signal.samples.resize(size / 2);
      for (std::size_t i = 0; i < signal.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes.data() + body + 2 * i));
        signal.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return signal;
    }
    pos = body + size + (size & 1u);
  }
  throw Error(ErrorCode::kUnsupportedFormat, "WAV file has no data chunk");
}

void save_wav(const AudioSignal& signal, const std::filesystem::path& path) {
  if (signal.sample_rate != kSampleRate) {
    throw Error(ErrorCode::kSampleRateMismatch, "only 8000 Hz output is supported");
  }
  for (double s : signal.samples) {
    if (!(s >= -1.0 && s <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "WAV samples must lie in [-1, 1]");
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, kSampleRate);
  put_u32(out, kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double s : signal.samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

ChunkSet chunk(const AudioSignal& signal) {
  const auto len = static_cast<Eigen::Index>(signal.samples.size());
  if (len < kChunkLength) {
    throw Error(ErrorCode::kTooShort, "signal shorter than one 800-sample chunk");
  }
  ChunkSet set;
  set.window = periodic_hann(kChunkLength);
  const Eigen::Index frames = (len - kChunkLength) / kChunkHop + 1;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Map<const Vector> frame(signal.samples.data() + t * kChunkHop, kChunkLength);
    set.chunks.push_back(frame.cwiseProduct(set.window));
  }
  return set;
}

AudioSignal overlap_add(const ChunkSet& chunks) {
  if (chunks.chunks.empty()) throw Error(ErrorCode::kInvalidArgument, "no chunks to overlap-add");
  const Eigen::Index len = chunks.chunks.front().size();
  const auto n = static_cast<Eigen::Index>(chunks.chunks.size());
  AudioSignal out;
  out.samples.assign(static_cast<std::size_t>((n - 1) * chunks.hop + len), 0.0);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Vector& c = chunks.chunks[static_cast<std::size_t>(t)];
    require_dim(c.size(), len, "overlap-add chunk");
    for (Eigen::Index i = 0; i < len; ++i) out.samples[static_cast<std::size_t>(t * chunks.hop + i)] += c[i];
  }
  return out;
}

Matrix spectrogram(const AudioSignal& signal, Eigen::Index fft_size, Eigen::Index hop) {
  const auto len = static_cast<Eigen::Index>(signal.samples.size());
  if (fft_size < 1 || hop < 1) throw Error(ErrorCode::kInvalidArgument, "bad STFT geometry");
  if (len < fft_size) throw Error(ErrorCode::kTooShort, "signal shorter than the FFT size");
  const Eigen::Index frames = (len - fft_size) / hop + 1;
  const Eigen::Index bins = fft_size / 2 + 1;
  const Vector window = periodic_hann(fft_size);
  // Twiddle table: angle index (k * n) mod fft_size.
  Vector cos_table(fft_size), sin_table(fft_size);
  for (Eigen::Index i = 0; i < fft_size; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(fft_size);
    cos_table[i] = std::cos(a);
    sin_table[i] = std::sin(a);
  }
  Matrix grid(bins, frames);
  Vector frame(fft_size);
  for (Eigen::Index f = 0; f < frames; ++f) {
    for (Eigen::Index i = 0; i < fft_size; ++i) {
      frame[i] = signal.samples[static_cast<std::size_t>(f * hop + i)] * window[i];
    }
    for (Eigen::Index k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (Eigen::Index i = 0; i < fft_size; ++i) {
        const Eigen::Index idx = (k * i) % fft_size;
        re += frame[i] * cos_table[idx];
        im -= frame[i] * sin_table[idx];
      }
      grid(k, f) = std::hypot(re, im);
    }
  }
  return grid;
}

void write_spectrogram_csv(std::ostream& out, const Matrix& grid) {
  for (Eigen::Index f = 0; f < grid.cols(); ++f) out << (f ? "," : "") << "frame_" << f;
  out << '\n';
  for (Eigen::Index k = 0; k < grid.rows(); ++k) {
    for (Eigen::Index f = 0; f < grid.cols(); ++f) out << (f ? "," : "") << format_double(grid(k, f));
    out << '\n';
  }
}

AudioSignal synthetic_tone_sequence(SeededRng& rng, double seconds) {
  static constexpr double kPitches[] = {300.0, 400.0, 500.0, 600.0, 800.0, 1000.0, 1200.0};
  constexpr std::size_t kNote = kSampleRate / 4;
  constexpr std::size_t kFade = 200;
  AudioSignal out;
  const auto total = static_cast<std::size_t>(seconds * kSampleRate);
  out.samples.reserve(total);
  while (out.samples.size() < total) {
    const double f1 = kPitches[rng.uniform_index(std::size(kPitches))];
    const double f2 = kPitches[rng.uniform_index(std::size(kPitches))];
    for (std::size_t i = 0; i < kNote && out.samples.size() < total; ++i) {
      const double t = static_cast<double>(i) / kSampleRate;
      double env = 1.0;
      if (i < kFade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / kFade);
      if (kNote - i <= kFade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(kNote - i) / kFade);
      out.samples.push_back(0.25 * env * (std::sin(2.0 * std::numbers::pi * f1 * t) +
                                          std::sin(2.0 * std::numbers::pi * f2 * t)));
    }
  }
  return out;
}

GeneratedAudio generate_audio(const ImplicitModel& model, SeededRng& rng, std::size_t frames) {
  const auto* hmm = std::get_if<GaussianHMM>(&model.base);
  if (hmm == nullptr) throw Error(ErrorCode::kInvalidArgument, "audio generation needs an HMM base");
  if (frames < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one frame");
  require_dim(input_dim(model.mapping), kChunkLength, "audio decoder output");

  const HmmSample draw = hmm_sample(*hmm, rng, frames);
  ChunkSet set;
  set.hop = kChunkHop;
  for (const auto& h : draw.sequence.frames) set.chunks.push_back(decode(model.mapping, h));
  GeneratedAudio out;
  out.signal = overlap_add(set);
  out.states = draw.states;
  std::size_t clipped = 0;
  for (double& s : out.signal.samples) {
    if (!std::isfinite(s)) throw Error(ErrorCode::kNonFiniteObjective, "decoder produced non-finite audio");
    if (s > 1.0 || s < -1.0) {
      ++clipped;
      s = std::clamp(s, -1.0, 1.0);
    }
  }
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(out.signal.samples.size());
  out.clip_warning = out.clip_fraction > 0.01;
  if (out.clip_warning) {
    spdlog::warn("generated audio clipped on {:.2f}% of samples", 100.0 * out.clip_fraction);
  }
  return out;
}

}  // namespace latent
