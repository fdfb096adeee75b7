#pragma once

#include "mmi/common.hpp"

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace mmi::dsp {

/// One biquad, a[0] == 1.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{};
};

using Band = std::pair<double, double>;

/// Digital Butterworth band-pass stored as cascaded second-order sections.
/// A prototype of order N gives a band-pass with 2N poles and N sections.
class BandpassFilter {
 public:
  BandpassFilter(double low_hz, double high_hz, double fs, int order, std::vector<Biquad> sections);

  double low_hz() const { return low_; }
  double high_hz() const { return high_; }
  double fs() const { return fs_; }
  int order() const { return order_; }
  const std::vector<Biquad>& sections() const { return sections_; }

  /// Expanded transfer-function coefficients, feedback()[0] == 1.
  std::vector<double> feedforward() const;
  std::vector<double> feedback() const;

  /// |H(e^{jw})| at the given frequency.
  double magnitude(double freq_hz) const;

  /// Edge padding length used by filtfilt.
  int pad_length() const { return 3 * (2 * order_ + 1); }

 private:
  double low_, high_, fs_;
  int order_;
  std::vector<Biquad> sections_;
};

BandpassFilter design_bandpass(double low_hz, double high_hz, double fs, int order);

/// Single causal pass with steady-state initial conditions scaled by x[0].
std::vector<double> sosfilt(const BandpassFilter& f, std::span<const double> x);

/// Zero-phase filtering. Odd-reflection padding, then the average of the
/// forward-backward and backward-forward passes, which makes the result
/// commute exactly with time reversal.
std::vector<double> filtfilt(const BandpassFilter& f, std::span<const double> x);

/// Filters each row (channel) independently.
Matrix filtfilt_rows(const BandpassFilter& f, const Matrix& epoch);

/// One filtered copy of the epoch per band.
std::vector<Matrix> apply_bank(std::span<const Band> bands, int order, double fs, const Matrix& epoch);

/// Canonical motor-imagery sub-bands: alpha, beta1, beta2, beta3.
std::vector<Band> default_bands();

}  // namespace mmi::dsp
