// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <string>

#include "geomanifold/error.hpp"
#include "geomanifold/rng.hpp"

namespace gm {

using cplx = std::complex<double>;

void EEGRecording::validate() const {
  if (n_channels == 0 || n_samples == 0) throw UsageError("recording has no channels or samples");
  if (!(rate_hz > 0.0f) || !std::isfinite(rate_hz))
    throw UsageError("recording rate must be positive");
  if (data.size() != n_channels * n_samples)
    throw UsageError("recording data length " + std::to_string(data.size()) + " != " +
                     std::to_string(n_channels) + " x " + std::to_string(n_samples));
  for (float v : data)
    if (!std::isfinite(v)) throw UsageError("recording contains non-finite samples");
}

void SegmentSet::validate() const {
  for (const auto& s : segments) {
    s.validate();
    const auto& f = segments.front();
    if (s.n_channels != f.n_channels || s.n_samples != f.n_samples || s.rate_hz != f.rate_hz)
      throw UsageError("segment set is not dimensionally homogeneous");
  }
  if (folds.empty()) return;
  if (folds.size() != segments.size()) throw UsageError("fold list length mismatch");
  std::map<std::uint32_t, int> fold_of;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto [it, fresh] = fold_of.emplace(segments[i].subject_id, folds[i]);
    if (!fresh && it->second != folds[i])
      throw UsageError("subject " + std::to_string(segments[i].subject_id) +
                       " spans more than one fold");
  }
}

// ---- resampling ------------------------------------------------------------

EEGRecording resample(const EEGRecording& rec, float target_hz) {
  if (!(target_hz > 0.0f)) throw UsageError("resample: target rate must be positive");
  rec.validate();
  if (target_hz == rec.rate_hz) return rec;

  const double ratio = static_cast<double>(target_hz) / rec.rate_hz;
  const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(rec.n_samples) * ratio));
  if (n_out == 0) throw UsageError("resample: recording too short for target rate");

  // Lowpass at 0.45 of the lower rate, expressed in source samples.
  const double cutoff = 0.45 * std::min(1.0, ratio);
  const double half_width = 16.0 / (2.0 * cutoff);
  EEGRecording out = rec;
  out.rate_hz = target_hz;
  out.n_samples = n_out;
  out.data.assign(rec.n_channels * n_out, 0.0f);

  for (std::size_t m = 0; m < n_out; ++m) {
    const double u = static_cast<double>(m) / ratio;  // position in source samples
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(u - half_width));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor(u + half_width));
    std::vector<std::pair<std::size_t, double>> taps;
    for (std::ptrdiff_t n = std::max<std::ptrdiff_t>(lo, 0);
         n <= std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(rec.n_samples) - 1); ++n) {
      const double x = u - static_cast<double>(n);
      const double arg = 2.0 * cutoff * x;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      // Blackman window over [-half_width, half_width]
      const double w = 0.42 + 0.5 * std::cos(std::numbers::pi * x / half_width) +
                       0.08 * std::cos(2.0 * std::numbers::pi * x / half_width);
      taps.emplace_back(static_cast<std::size_t>(n), 2.0 * cutoff * sinc * w);
    }
    for (std::size_t c = 0; c < rec.n_channels; ++c) {
      const float* src = rec.data.data() + c * rec.n_samples;
      double acc = 0.0;
      for (const auto& [n, w] : taps) acc += w * src[n];
      out.data[c * n_out + m] = static_cast<float>(acc);
    }
  }
  return out;
}

// ---- Butterworth bandpass ----------------------------------------------------

std::vector<Biquad> design_butterworth_bandpass(double low_hz, double high_hz, double rate_hz,
                                                int order) {
  if (order < 1) throw UsageError("bandpass: order must be positive");
  const double nyquist = rate_hz / 2.0;
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist))
    throw UsageError("bandpass: band edges must satisfy 0 < low < high < Nyquist (" +
                     std::to_string(nyquist) + " Hz)");

  const double fs2 = 2.0 * rate_hz;
  const double w1 = fs2 * std::tan(std::numbers::pi * low_hz / rate_hz);
  const double w2 = fs2 * std::tan(std::numbers::pi * high_hz / rate_hz);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  std::vector<cplx> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    const cplx p = std::polar(1.0, theta);
    // lowpass -> bandpass: s^2 - p*bw*s + w0^2 = 0
    const cplx pb = p * bw;
    const cplx disc = std::sqrt(pb * pb - 4.0 * w0sq);
    for (cplx s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) poles.push_back((fs2 + s) / (fs2 - s));
  }

  // Pair conjugates into sections; each section carries one zero at z=1 and
  // one at z=-1.
  std::vector<cplx> upper, real;
  for (const cplx& z : poles) {
    if (z.imag() > 1e-12)
      upper.push_back(z);
    else if (std::abs(z.imag()) <= 1e-12)
      real.push_back(z);
  }
  std::vector<Biquad> sos;
  for (const cplx& z : upper)
    sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  std::sort(real.begin(), real.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
  for (std::size_t i = 0; i + 1 < real.size(); i += 2)
    sos.push_back({1.0, 0.0, -1.0, -(real[i].real() + real[i + 1].real()),
                   real[i].real() * real[i + 1].real()});

  const double f0 = std::atan(std::sqrt(w0sq) / fs2) * rate_hz / std::numbers::pi;
  const double gain = sos_magnitude(sos, f0, rate_hz);
  const double per = std::pow(gain, -1.0 / static_cast<double>(sos.size()));
  for (auto& s : sos) {
    s.b0 *= per;
    s.b1 *= per;
    s.b2 *= per;
  }
  return sos;
}

double sos_magnitude(std::span<const Biquad> sos, double f_hz, double rate_hz) {
  const cplx zi = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / rate_hz);
  cplx h = 1.0;
  for (const auto& s : sos)
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  return std::abs(h);
}

namespace {

// Runs the cascade over x in place starting from the steady state that a
// constant input of value x[0] would produce.
void sosfilt_steady(std::span<const Biquad> sos, std::vector<double>& x) {
  if (x.empty()) return;
  double level = x[0];
  for (const auto& s : sos) {
    const double dc_gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double y = dc_gain * level;
    double z2 = s.b2 * level - s.a2 * y;
    double z1 = s.b1 * level - s.a1 * y + z2;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
    level = y;
  }
}

}  // namespace

std::vector<double> filtfilt(std::span<const Biquad> sos, std::span<const double> x) {
  const std::size_t n = x.size();
  std::size_t pad = 3 * 2 * sos.size();
  if (n < 2) return {x.begin(), x.end()};
  pad = std::min(pad, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  sosfilt_steady(sos, ext);
  std::reverse(ext.begin(), ext.end());
  sosfilt_steady(sos, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

EEGRecording bandpass(const EEGRecording& rec, const FilterSpec& spec) {
  rec.validate();
  const auto sos = design_butterworth_bandpass(spec.low_hz, spec.high_hz, rec.rate_hz, spec.order);
  EEGRecording out = rec;
  std::vector<double> buf(rec.n_samples);
  for (std::size_t c = 0; c < rec.n_channels; ++c) {
    auto ch = rec.channel(c);
    std::copy(ch.begin(), ch.end(), buf.begin());
    const auto y = filtfilt(sos, buf);
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < y.size(); ++i) dst[i] = static_cast<float>(y[i]);
  }
  return out;
}

EEGRecording average_rereference(const EEGRecording& rec) {
  rec.validate();
  if (rec.n_channels < 2) throw UsageError("average re-reference needs at least 2 channels");
  EEGRecording out = rec;
  for (std::size_t t = 0; t < rec.n_samples; ++t) {
    double m = 0.0;
    for (std::size_t c = 0; c < rec.n_channels; ++c) m += rec.data[c * rec.n_samples + t];
    m /= static_cast<double>(rec.n_channels);
    for (std::size_t c = 0; c < rec.n_channels; ++c)
      out.data[c * rec.n_samples + t] =
          static_cast<float>(rec.data[c * rec.n_samples + t] - m);
  }
  return out;
}

SegmentSet segment(const EEGRecording& rec, float window_s) {
  rec.validate();
  if (!(window_s > 0.0f)) throw UsageError("segment: window must be positive");
  const auto win = static_cast<std::size_t>(std::floor(static_cast<double>(window_s) * rec.rate_hz));
  if (win == 0 || win > rec.n_samples)
    throw UsageError("segment: window of " + std::to_string(window_s) +
                     " s is longer than the recording (" + std::to_string(rec.duration_s()) + " s)");
  SegmentSet set;
  for (std::size_t start = 0; start + win <= rec.n_samples; start += win) {
    EEGRecording s;
    s.subject_id = rec.subject_id;
    s.label = rec.label;
    s.n_channels = rec.n_channels;
    s.n_samples = win;
    s.rate_hz = rec.rate_hz;
    s.data.resize(rec.n_channels * win);
    for (std::size_t c = 0; c < rec.n_channels; ++c) {
      auto src = rec.channel(c).subspan(start, win);
      std::copy(src.begin(), src.end(), s.data.begin() + static_cast<std::ptrdiff_t>(c * win));
    }
    set.segments.push_back(std::move(s));
  }
  return set;
}

void assign_subject_folds(SegmentSet& set, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw UsageError("need at least 2 folds");
  std::vector<std::uint32_t> subjects;
  for (const auto& s : set.segments) subjects.push_back(s.subject_id);
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < k)
    throw UsageError("only " + std::to_string(subjects.size()) + " subjects for " +
                     std::to_string(k) + " folds");
  Rng rng = Rng::stream(seed, "folds");
  for (std::size_t i = subjects.size(); i > 1; --i) std::swap(subjects[i - 1], subjects[rng.below(i)]);
  std::map<std::uint32_t, int> fold_of;
  for (std::size_t i = 0; i < subjects.size(); ++i) fold_of[subjects[i]] = static_cast<int>(i % k);
  set.folds.clear();
  for (const auto& s : set.segments) set.folds.push_back(fold_of.at(s.subject_id));
}

}  // namespace gm
