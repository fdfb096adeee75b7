#include "mmi/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

namespace mmi::dsp {

using cplx = std::complex<double>;

BandpassFilter::BandpassFilter(double low_hz, double high_hz, double fs, int order, std::vector<Biquad> sections)
    : low_(low_hz), high_(high_hz), fs_(fs), order_(order), sections_(std::move(sections)) {}

namespace {

std::vector<double> poly_mul(const std::vector<double>& p, const std::array<double, 3>& q) {
  std::vector<double> out(p.size() + 2, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) out[i + j] += p[i] * q[j];
  return out;
}

cplx response(const std::vector<Biquad>& sections, double omega) {
  const cplx zi = std::polar(1.0, -omega);  // z^-1
  cplx h = 1.0;
  for (const auto& s : sections) {
    const cplx num = s.b[0] + s.b[1] * zi + s.b[2] * zi * zi;
    const cplx den = s.a[0] + s.a[1] * zi + s.a[2] * zi * zi;
    h *= num / den;
  }
  return h;
}

}  // namespace

std::vector<double> BandpassFilter::feedforward() const {
  std::vector<double> p{1.0};
  for (const auto& s : sections_) p = poly_mul(p, s.b);
  return p;
}

std::vector<double> BandpassFilter::feedback() const {
  std::vector<double> p{1.0};
  for (const auto& s : sections_) p = poly_mul(p, s.a);
  return p;
}

double BandpassFilter::magnitude(double freq_hz) const {
  return std::abs(response(sections_, 2.0 * std::numbers::pi * freq_hz / fs_));
}

BandpassFilter design_bandpass(double low_hz, double high_hz, double fs, int order) {
  require(fs > 0.0, "sampling rate must be positive");
  require(order >= 1, "filter order must be >= 1");
  require(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0,
          "band edges must satisfy 0 < low < high < fs/2 (got " + std::to_string(low_hz) + ", " +
              std::to_string(high_hz) + ")");

  // Bilinear transform with prewarped edges.
  const double k2 = 2.0 * fs;
  const double w1 = k2 * std::tan(std::numbers::pi * low_hz / fs);
  const double w2 = k2 * std::tan(std::numbers::pi * high_hz / fs);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);

  std::vector<cplx> digital;
  digital.reserve(static_cast<std::size_t>(2 * order));
  for (int k = 0; k < order; ++k) {
    const cplx proto = std::polar(1.0, std::numbers::pi * (2.0 * k + order + 1.0) / (2.0 * order));
    const cplx base = proto * (bw / 2.0);
    const cplx disc = std::sqrt(base * base - w0 * w0);
    for (const cplx s : {base + disc, base - disc}) digital.push_back((k2 + s) / (k2 - s));
  }

  // One section per conjugate pair; leftover real poles are paired up.
  std::vector<Biquad> sections;
  std::vector<double> real_poles;
  constexpr double kImagTol = 1e-12;
  for (const auto& z : digital) {
    if (std::abs(z.imag()) <= kImagTol) {
      real_poles.push_back(z.real());
    } else if (z.imag() > 0.0) {
      Biquad s;
      s.b = {1.0, 0.0, -1.0};
      s.a = {1.0, -2.0 * z.real(), std::norm(z)};
      sections.push_back(s);
    }
  }
  std::sort(real_poles.begin(), real_poles.end());
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    Biquad s;
    s.b = {1.0, 0.0, -1.0};
    s.a = {1.0, -(real_poles[i] + real_poles[i + 1]), real_poles[i] * real_poles[i + 1]};
    sections.push_back(s);
  }
  if (static_cast<int>(sections.size()) != order)
    throw NumericalError("band-pass design produced an unexpected pole layout");

  // Unit gain at the (prewarped) geometric center, where Butterworth peaks.
  const double omega_c = 2.0 * std::atan(w0 / k2);
  const double g = std::abs(response(sections, omega_c));
  for (auto& b : sections.front().b) b /= g;

  BandpassFilter f(low_hz, high_hz, fs, order, std::move(sections));
  for (const auto& s : f.sections())
    for (int i = 0; i < 3; ++i)
      if (!std::isfinite(s.a[i]) || !std::isfinite(s.b[i]))
        throw NumericalError("non-finite filter coefficients");
  return f;
}

std::vector<double> sosfilt(const BandpassFilter& f, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  if (y.empty()) return y;
  double level = x.front();  // steady-state input level of the current section
  for (const auto& s : f.sections()) {
    const double gain = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
    const double out_level = gain * level;
    double z2 = s.b[2] * level - s.a[2] * out_level;
    double z1 = s.b[1] * level - s.a[1] * out_level + z2;
    for (auto& v : y) {
      const double in = v;
      const double out = s.b[0] * in + z1;
      z1 = s.b[1] * in - s.a[1] * out + z2;
      z2 = s.b[2] * in - s.a[2] * out;
      v = out;
    }
    level = out_level;
  }
  return y;
}

std::vector<double> filtfilt(const BandpassFilter& f, std::span<const double> x) {
  const auto n = x.size();
  const auto pad = static_cast<std::size_t>(f.pad_length());
  require(n > pad, "signal of length " + std::to_string(n) + " too short for padding " + std::to_string(pad));

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  auto reversed = [](std::vector<double> v) {
    std::reverse(v.begin(), v.end());
    return v;
  };
  // forward then backward
  auto fb = reversed(sosfilt(f, reversed(sosfilt(f, ext))));
  // backward then forward
  auto bf = sosfilt(f, reversed(sosfilt(f, reversed(ext))));

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (fb[pad + i] + bf[pad + i]);
  return out;
}

Matrix filtfilt_rows(const BandpassFilter& f, const Matrix& epoch) {
  Matrix out(epoch.rows(), epoch.cols());
  std::vector<double> row(static_cast<std::size_t>(epoch.cols()));
  for (Eigen::Index c = 0; c < epoch.rows(); ++c) {
    for (Eigen::Index s = 0; s < epoch.cols(); ++s) row[static_cast<std::size_t>(s)] = epoch(c, s);
    const auto y = filtfilt(f, row);
    for (Eigen::Index s = 0; s < epoch.cols(); ++s) out(c, s) = y[static_cast<std::size_t>(s)];
  }
  return out;
}

std::vector<Matrix> apply_bank(std::span<const Band> bands, int order, double fs, const Matrix& epoch) {
  std::vector<Matrix> out;
  out.reserve(bands.size());
  for (const auto& [lo, hi] : bands) out.push_back(filtfilt_rows(design_bandpass(lo, hi, fs, order), epoch));
  return out;
}

std::vector<Band> default_bands() { return {{8.0, 12.0}, {12.0, 16.0}, {16.0, 22.0}, {22.0, 30.0}}; }

}  // namespace mmi::dsp
