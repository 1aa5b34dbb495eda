#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nsplat/core/linalg.hpp"

namespace nsplat::eeg {

// Multichannel time-series window. data holds one channel per row.
struct EegSegment {
  std::size_t n_channels = 0;
  std::size_t n_samples = 0;
  double sample_rate_hz = 0.0;
  Matrix data;  // n_channels x n_samples

  double duration_ms() const {
    return static_cast<double>(n_samples) * 1000.0 / sample_rate_hz;
  }
};

enum class SegmentFormat {
  csv,        // one channel per row; '#'-prefixed comment lines allowed,
              // "# sample_rate_hz=<v>" sets the rate (default 1000)
  raw_f32le,  // 16-byte header: "EEGS", u32 channels, u32 samples, f32 rate
              // (little-endian), then row-major float32 samples
};

// Throws nsplat::Error(validation) if any invariant fails.
void validate_segment(const EegSegment& seg);

EegSegment load_segment(const std::string& path, SegmentFormat format);
void save_segment(const EegSegment& seg, const std::string& path,
                  SegmentFormat format);

// Samples with start_ms <= t < end_ms, t in milliseconds from the first
// sample. Window bounds outside [0, duration] raise a validation error.
EegSegment crop_window(const EegSegment& seg, double start_ms, double end_ms);

// One second-order section, normalized so a0 = 1.
struct Biquad {
  double b0 = 0, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

// Butterworth band-pass of overall order `order` (even), as a cascade of
// order/2 biquads, unit gain at the band's geometric center.
std::vector<Biquad> design_butter_bandpass(double low_hz, double high_hz,
                                           double sample_rate_hz,
                                           int order = 4);

// Zero-phase single-channel pass: odd-reflection pad by `pad` samples, run
// the cascade forward, then backward, trim. Edge transients decay within a
// few dozen samples for the default band; tests exclude 100-sample margins.
std::vector<double> filtfilt(const std::vector<Biquad>& sos,
                             const std::vector<double>& x, int pad);

// Per-channel zero-phase band-pass; shape and channel order preserved.
EegSegment bandpass_filter(const EegSegment& seg, double low_hz = 55.0,
                           double high_hz = 95.0);

}  // namespace nsplat::eeg
