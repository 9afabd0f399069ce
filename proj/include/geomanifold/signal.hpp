// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace gm {

/// Multichannel recording, channel-major fp32 samples.
struct EEGRecording {
  std::uint32_t subject_id = 0;
  std::optional<std::uint32_t> label;
  std::size_t n_channels = 0;
  std::size_t n_samples = 0;
  float rate_hz = 0.0f;
  std::vector<float> data;

  std::span<const float> channel(std::size_t c) const {
    return std::span<const float>(data).subspan(c * n_samples, n_samples);
  }
  std::span<float> channel(std::size_t c) {
    return std::span<float>(data).subspan(c * n_samples, n_samples);
  }
  double duration_s() const { return static_cast<double>(n_samples) / rate_hz; }
  /// Throws UsageError on inconsistent sizes, non-positive rate or
  /// non-finite samples.
  void validate() const;
  bool operator==(const EEGRecording&) const = default;
};

struct FilterSpec {
  float low_hz = 0.5f;
  float high_hz = 45.0f;
  /// Butterworth prototype order; the bandpass has 2 * order poles.
  int order = 6;
};

/// Dimensionally homogeneous segments plus an optional fold per segment.
struct SegmentSet {
  std::vector<EEGRecording> segments;
  std::vector<int> folds;  // empty until assign_subject_folds

  void validate() const;
};

/// Second-order section in transposed direct form II, a0 == 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// Windowed-sinc resampling of every channel; n' = floor(n * target / rate).
/// Identical rates return the input unchanged.
EEGRecording resample(const EEGRecording& rec, float target_hz);

/// Digital Butterworth bandpass as cascaded sections (bilinear transform with
/// prewarped edges), normalised to unit gain at the geometric centre.
std::vector<Biquad> design_butterworth_bandpass(double low_hz, double high_hz, double rate_hz,
                                                int order);
/// Complex response of the cascade at frequency f.
double sos_magnitude(std::span<const Biquad> sos, double f_hz, double rate_hz);
/// Zero-phase forward-backward filtering with odd-extension padding and
/// steady-state initial conditions.
std::vector<double> filtfilt(std::span<const Biquad> sos, std::span<const double> x);

EEGRecording bandpass(const EEGRecording& rec, const FilterSpec& spec);
EEGRecording average_rereference(const EEGRecording& rec);
/// Non-overlapping windows of floor(window_s * rate) samples; the remainder
/// is dropped.
SegmentSet segment(const EEGRecording& rec, float window_s);

/// Assigns each subject (not segment) to one of k folds after a seeded
/// shuffle. Throws UsageError with fewer subjects than folds.
void assign_subject_folds(SegmentSet& set, std::size_t k, std::uint64_t seed);

// ---- EEGB container --------------------------------------------------------

std::vector<std::uint8_t> encode_eegb(std::span<const EEGRecording> recs);
/// Throws FormatError carrying the byte offset of the first problem.
std::vector<EEGRecording> decode_eegb(std::span<const std::uint8_t> bytes);
void write_eegb(const std::filesystem::path& path, std::span<const EEGRecording> recs);
std::vector<EEGRecording> read_eegb(const std::filesystem::path& path);

}  // namespace gm
