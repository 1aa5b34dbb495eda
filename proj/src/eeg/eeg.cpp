#include "nsplat/eeg/eeg.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nsplat/core/error.hpp"

namespace nsplat::eeg {

namespace {

constexpr int kFilterOrder = 4;

bool all_finite(const Matrix& m) {
  for (double v : m.storage())
    if (!std::isfinite(v)) return false;
  return true;
}

std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

float read_f32le(const unsigned char* p) {
  std::uint32_t u = read_u32le(p);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32le(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  write_u32le(os, u);
}

EegSegment load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_validation("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  double rate = 1000.0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find("sample_rate_hz=");
      if (eq != std::string::npos) {
        rate = std::strtod(line.c_str() + eq + 15, nullptr);
        if (!(rate > 0.0))
          throw_validation("csv header declares non-positive sample rate");
      }
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      while (end && *end == ' ') ++end;
      if (end == cell.c_str() || (end && *end != '\0'))
        throw_validation("csv cell '" + cell + "' is not a number");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw_validation("csv rows have inconsistent column counts");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty())
    throw_validation("csv '" + path + "' holds no samples");

  EegSegment seg;
  seg.n_channels = rows.size();
  seg.n_samples = rows.front().size();
  seg.sample_rate_hz = rate;
  seg.data = Matrix(seg.n_channels, seg.n_samples);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) seg.data(r, c) = rows[r][c];
  return seg;
}

EegSegment load_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_validation("cannot open '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 16)
    throw_validation("raw segment '" + path + "' shorter than its header");
  if (std::memcmp(buf.data(), "EEGS", 4) != 0)
    throw_validation("raw segment '" + path + "' has a bad magic");
  const std::uint32_t channels = read_u32le(buf.data() + 4);
  const std::uint32_t samples = read_u32le(buf.data() + 8);
  const float rate = read_f32le(buf.data() + 12);
  if (channels == 0 || samples == 0)
    throw_validation("raw segment header declares an empty matrix");
  if (!(rate > 0.0f) || !std::isfinite(rate))
    throw_validation("raw segment header declares a non-positive sample rate");
  const std::size_t expect = 16 + 4ull * channels * samples;
  if (buf.size() != expect)
    throw_validation("raw segment payload size mismatch: expected " +
                     std::to_string(expect) + " bytes, got " +
                     std::to_string(buf.size()));

  EegSegment seg;
  seg.n_channels = channels;
  seg.n_samples = samples;
  seg.sample_rate_hz = static_cast<double>(rate);
  seg.data = Matrix(channels, samples);
  const unsigned char* p = buf.data() + 16;
  for (std::size_t r = 0; r < channels; ++r)
    for (std::size_t c = 0; c < samples; ++c, p += 4)
      seg.data(r, c) = static_cast<double>(read_f32le(p));
  return seg;
}

}  // namespace

void validate_segment(const EegSegment& seg) {
  if (seg.n_channels == 0 || seg.n_samples == 0)
    throw_validation("segment must have at least one channel and one sample");
  if (seg.data.rows() != seg.n_channels || seg.data.cols() != seg.n_samples)
    throw_validation("segment data shape does not match declared counts");
  if (!(seg.sample_rate_hz > 0.0))
    throw_validation("sample rate must be positive");
  if (!all_finite(seg.data))
    throw_validation("segment contains non-finite samples");
}

EegSegment load_segment(const std::string& path, SegmentFormat format) {
  EegSegment seg =
      format == SegmentFormat::csv ? load_csv(path) : load_raw(path);
  validate_segment(seg);
  return seg;
}

void save_segment(const EegSegment& seg, const std::string& path,
                  SegmentFormat format) {
  validate_segment(seg);
  if (format == SegmentFormat::csv) {
    std::ofstream out(path);
    if (!out) throw_validation("cannot write '" + path + "'");
    char buf[64];
    std::snprintf(buf, sizeof buf, "# sample_rate_hz=%.17g", seg.sample_rate_hz);
    out << buf << "\n";
    for (std::size_t r = 0; r < seg.n_channels; ++r) {
      for (std::size_t c = 0; c < seg.n_samples; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", seg.data(r, c));
        out << (c ? "," : "") << buf;
      }
      out << "\n";
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_validation("cannot write '" + path + "'");
  out.write("EEGS", 4);
  write_u32le(out, static_cast<std::uint32_t>(seg.n_channels));
  write_u32le(out, static_cast<std::uint32_t>(seg.n_samples));
  write_f32le(out, static_cast<float>(seg.sample_rate_hz));
  for (std::size_t r = 0; r < seg.n_channels; ++r)
    for (std::size_t c = 0; c < seg.n_samples; ++c)
      write_f32le(out, static_cast<float>(seg.data(r, c)));
}

EegSegment crop_window(const EegSegment& seg, double start_ms, double end_ms) {
  validate_segment(seg);
  const double duration = seg.duration_ms();
  if (!(start_ms >= 0.0) || !(start_ms < end_ms) || end_ms > duration + 1e-9)
    throw_validation("crop window [" + std::to_string(start_ms) + ", " +
                     std::to_string(end_ms) + ") outside recording of " +
                     std::to_string(duration) + " ms");
  // Sample i sits at t_i = i * 1000 / rate ms; keep start <= t_i < end.
  const double per_ms = seg.sample_rate_hz / 1000.0;
  const auto first = static_cast<std::size_t>(
      std::max(0.0, std::ceil(start_ms * per_ms - 1e-9)));
  const auto end_excl = static_cast<std::size_t>(
      std::min(static_cast<double>(seg.n_samples),
               std::ceil(end_ms * per_ms - 1e-9)));
  if (end_excl <= first)
    throw_validation("crop window contains no samples");

  EegSegment out;
  out.n_channels = seg.n_channels;
  out.n_samples = end_excl - first;
  out.sample_rate_hz = seg.sample_rate_hz;
  out.data = Matrix(out.n_channels, out.n_samples);
  for (std::size_t r = 0; r < seg.n_channels; ++r)
    for (std::size_t c = 0; c < out.n_samples; ++c)
      out.data(r, c) = seg.data(r, first + c);
  return out;
}

std::vector<Biquad> design_butter_bandpass(double low_hz, double high_hz,
                                           double sample_rate_hz, int order) {
  using cd = std::complex<double>;
  if (!(low_hz > 0.0) || !(low_hz < high_hz) ||
      !(high_hz < sample_rate_hz / 2.0))
    throw_validation("band edges must satisfy 0 < low < high < rate/2");
  if (order < 2 || order % 2 != 0)
    throw_validation("band-pass order must be a positive even number");

  const double fs2 = 2.0 * sample_rate_hz;
  const double pi = std::numbers::pi;
  // Bilinear pre-warp of the edges, then low-pass -> band-pass transform.
  const double wl = fs2 * std::tan(pi * low_hz / sample_rate_hz);
  const double wh = fs2 * std::tan(pi * high_hz / sample_rate_hz);
  const double w0 = std::sqrt(wl * wh);
  const double bw = wh - wl;

  const int m = order / 2;  // analog low-pass prototype order
  std::vector<cd> s_poles;
  for (int k = 0; k < m; ++k) {
    const cd proto = std::exp(cd(0.0, pi * (2.0 * k + m + 1.0) / (2.0 * m)));
    if (proto.imag() < -1e-12) continue;  // conjugates handled below
    const cd pb = proto * bw;
    const cd disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
    const cd s1 = (pb + disc) * 0.5;
    const cd s2 = (pb - disc) * 0.5;
    if (proto.imag() > 1e-12) {
      // Complex prototype pole: s1 and s2 each pair with their conjugate.
      s_poles.push_back(s1);
      s_poles.push_back(s2);
    } else {
      // Real prototype pole maps to one conjugate (or real) pair; keep the
      // representative with nonnegative imaginary part.
      s_poles.push_back(s1.imag() >= 0.0 ? s1 : s2);
    }
  }

  // Each representative pole yields one biquad: denominator from the pole
  // and its conjugate after the bilinear map, numerator (z-1)(z+1) from the
  // transform's zeros at DC and Nyquist.
  std::vector<Biquad> sos;
  for (const cd& s : s_poles) {
    const cd zp = (fs2 + s) / (fs2 - s);
    Biquad q;
    q.b0 = 1.0;
    q.b1 = 0.0;
    q.b2 = -1.0;
    q.a1 = -2.0 * zp.real();
    q.a2 = std::norm(zp);
    sos.push_back(q);
  }

  // Normalize to unit gain at the warped-back center frequency.
  const double fc = std::atan(w0 / fs2) * sample_rate_hz / pi;
  const cd zc = std::exp(cd(0.0, 2.0 * pi * fc / sample_rate_hz));
  cd h(1.0, 0.0);
  for (const Biquad& q : sos) {
    const cd num = q.b0 * zc * zc + q.b1 * zc + cd(q.b2, 0.0);
    const cd den = zc * zc + q.a1 * zc + cd(q.a2, 0.0);
    h *= num / den;
  }
  const double gain = 1.0 / std::abs(h);
  const double per_section = std::pow(gain, 1.0 / sos.size());
  for (Biquad& q : sos) {
    q.b0 *= per_section;
    q.b1 *= per_section;
    q.b2 *= per_section;
  }
  return sos;
}

namespace {

void run_cascade(const std::vector<Biquad>& sos, std::vector<double>& x) {
  for (const Biquad& q : sos) {
    double z1 = 0.0, z2 = 0.0;  // direct form II transposed
    for (double& v : x) {
      const double y = q.b0 * v + z1;
      z1 = q.b1 * v - q.a1 * y + z2;
      z2 = q.b2 * v - q.a2 * y;
      v = y;
    }
  }
}

}  // namespace

std::vector<double> filtfilt(const std::vector<Biquad>& sos,
                             const std::vector<double>& x, int pad) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (static_cast<std::size_t>(pad) >= n)
    throw_validation("segment too short for the filter's edge padding (" +
                     std::to_string(n) + " samples, need > " +
                     std::to_string(pad) + ")");

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (int i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (int i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  run_cascade(sos, ext);
  std::reverse(ext.begin(), ext.end());
  run_cascade(sos, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + pad, ext.begin() + pad + n);
}

EegSegment bandpass_filter(const EegSegment& seg, double low_hz,
                           double high_hz) {
  validate_segment(seg);
  const auto sos =
      design_butter_bandpass(low_hz, high_hz, seg.sample_rate_hz, kFilterOrder);
  const int pad = 3 * kFilterOrder;

  EegSegment out = seg;
  std::vector<double> channel(seg.n_samples);
  for (std::size_t r = 0; r < seg.n_channels; ++r) {
    for (std::size_t c = 0; c < seg.n_samples; ++c) channel[c] = seg.data(r, c);
    const std::vector<double> filtered = filtfilt(sos, channel, pad);
    for (std::size_t c = 0; c < seg.n_samples; ++c) out.data(r, c) = filtered[c];
  }
  return out;
}

}  // namespace nsplat::eeg
