#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "nomon/core.hpp"

namespace nomon {

/// Maps a click onto the circular offset domain [-period/2, period/2)
/// relative to a noon crossing.
template <typename T>
  requires std::is_arithmetic_v<T>
T wrap_offset(T t_click, T t_noon, T period) {
  if (!(period > 0)) throw Error("wrap_offset: period must be positive");
  if constexpr (std::is_integral_v<T>) {
    // [-p/2, p/2) for even p; for odd p the half-width rounds toward -inf.
    const T half = period / 2;
    T r = (t_click - t_noon + half) % period;
    if (r < 0) r += period;
    return r - half;
  } else {
    T r = std::fmod(t_click - t_noon + period / 2, period);
    if (r < 0) r += period;
    if (r >= period) r -= period;
    return r - period / 2;
  }
}

/// Learned likelihood of click offsets relative to noon: an 80-bin histogram
/// over one rotation period plus a circular Gaussian smoothing kernel.
///
/// `weights()` is the raw histogram with a per-bin floor mixed in; it sums to
/// one and is what `sample` draws from. `density` evaluates the
/// kernel-smoothed histogram, piecewise constant per bin.
class ClickTimeDistribution {
 public:
  static constexpr int kDefaultBins = 80;
  static constexpr double kDefaultForgetting = 0.98;

  ClickTimeDistribution() : ClickTimeDistribution(uniform(2000.0)) {}

  /// `histogram` need not be normalized; it must be non-negative with positive sum.
  ClickTimeDistribution(double period, std::vector<double> histogram, double kernel_sigma, double floor,
                        double evidence)
      : period_(period), kernel_sigma_(kernel_sigma), floor_(floor), evidence_(evidence),
        hist_(std::move(histogram)) {
    const int b = bins();
    if (!(period_ > 0)) throw Error("ClickTimeDistribution: period must be positive");
    if (b < 2) throw Error("ClickTimeDistribution: need at least two bins");
    if (!(floor_ > 0) || floor_ * b >= 1.0) throw Error("ClickTimeDistribution: floor must lie in (0, 1/B)");
    if (kernel_sigma_ < 0) throw Error("ClickTimeDistribution: kernel_sigma must be non-negative");
    const double total = std::accumulate(hist_.begin(), hist_.end(), 0.0);
    if (!(total > 0) || std::any_of(hist_.begin(), hist_.end(), [](double w) { return w < 0 || !std::isfinite(w); }))
      throw Error("ClickTimeDistribution: histogram must be non-negative with positive mass");
    for (auto& w : hist_) w /= total;
    rebuild();
  }

  static ClickTimeDistribution uniform(double period, int bins = kDefaultBins) {
    return {period, std::vector<double>(static_cast<std::size_t>(bins), 1.0), default_sigma(period, bins),
            default_floor(bins), 1.0};
  }

  static double default_sigma(double period, int bins = kDefaultBins) { return 2.0 * period / bins; }
  static double default_floor(int bins = kDefaultBins) { return 1e-4 / bins; }

  double period() const { return period_; }
  int bins() const { return static_cast<int>(hist_.size()); }
  double bin_width() const { return period_ / bins(); }
  double kernel_sigma() const { return kernel_sigma_; }
  double floor() const { return floor_; }
  /// Effective number of observations behind the histogram.
  double evidence() const { return evidence_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& smoothed() const { return smoothed_; }

  /// Bin containing `offset`, which must already be wrapped. Exact bin edges
  /// resolve away from zero on both sides so mirrored offsets land in
  /// mirrored bins.
  int bin_of(double offset) const { return bin_index(offset, period_, bins()); }

  static int bin_index(double offset, double period, int b) {
    const int half = b / 2;
    const double w = period / b;
    int k;
    if (b % 2 == 0) {
      k = offset >= 0 ? half + static_cast<int>(std::floor(offset / w))
                      : half - 1 - static_cast<int>(std::floor(-offset / w));
    } else {
      k = static_cast<int>(std::floor((offset + period / 2) / w));
    }
    return std::clamp(k, 0, b - 1);
  }

  double bin_center(int k) const { return -period_ / 2 + (k + 0.5) * bin_width(); }

  double density(double offset) const { return smoothed_[static_cast<std::size_t>(bin_of(offset))] / bin_width(); }
  double log_density(double offset) const { return log_density_[static_cast<std::size_t>(bin_of(offset))]; }

  /// Center of the highest smoothed bin (lowest index on ties).
  double mode() const {
    const auto it = std::max_element(smoothed_.begin(), smoothed_.end());
    return bin_center(static_cast<int>(it - smoothed_.begin()));
  }

  /// Adds one observation at `offset` after decaying old evidence by `forgetting`.
  ClickTimeDistribution update(double offset, double forgetting = kDefaultForgetting) const {
    if (!(forgetting > 0 && forgetting <= 1)) throw Error("update: forgetting factor must lie in (0, 1]");
    std::vector<double> h = hist_;
    const double old_mass = forgetting * evidence_;
    for (auto& w : h) w *= old_mass;
    h[static_cast<std::size_t>(bin_of(offset))] += 1.0;
    return {period_, std::move(h), kernel_sigma_, floor_, old_mass + 1.0};
  }

  double sample(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    int k = std::min(static_cast<int>(it - cdf_.begin()), bins() - 1);
    double x = -period_ / 2 + (k + rng.uniform()) * bin_width();
    return std::min(x, std::nextafter(period_ / 2, 0.0));
  }

  /// Same offsets in milliseconds, re-binned onto a new rotation period.
  ClickTimeDistribution with_period(double period) const {
    const int b = bins();
    std::vector<double> h(static_cast<std::size_t>(b), 0.0);
    const int fine = 16;
    for (int k = 0; k < b; ++k) {
      for (int f = 0; f < fine; ++f) {
        const double x = -period_ / 2 + (k + (f + 0.5) / fine) * bin_width();
        if (x < -period / 2 || x >= period / 2) continue;
        h[static_cast<std::size_t>(bin_index(x, period, b))] += hist_[static_cast<std::size_t>(k)] / fine;
      }
    }
    if (std::accumulate(h.begin(), h.end(), 0.0) <= 0) h.assign(static_cast<std::size_t>(b), 1.0);
    return {period, std::move(h), kernel_sigma_ * period / period_, floor_, evidence_};
  }

  /// The raw histogram before the floor is mixed in (sums to one).
  const std::vector<double>& histogram() const { return hist_; }

 private:
  void rebuild() {
    const int b = bins();
    const auto n = static_cast<std::size_t>(b);
    weights_.resize(n);
    for (std::size_t k = 0; k < n; ++k) weights_[k] = floor_ + (1.0 - b * floor_) * hist_[k];

    std::vector<double> kernel(n, 0.0);
    if (kernel_sigma_ <= 0) {
      kernel[0] = 1.0;
    } else {
      const double w = bin_width();
      for (std::size_t d = 0; d < n; ++d) {
        double s = 0;
        for (int m = -3; m <= 3; ++m) {
          const double x = static_cast<double>(d) * w + m * period_;
          s += std::exp(-0.5 * (x / kernel_sigma_) * (x / kernel_sigma_));
        }
        kernel[d] = s;
      }
      const double total = std::accumulate(kernel.begin(), kernel.end(), 0.0);
      for (auto& v : kernel) v /= total;
    }
    smoothed_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (weights_[i] == 0) continue;
      for (std::size_t d = 0; d < n; ++d) smoothed_[(i + d) % n] += weights_[i] * kernel[d];
    }
    log_density_.resize(n);
    for (std::size_t k = 0; k < n; ++k) log_density_[k] = std::log(smoothed_[k] / bin_width());
    cdf_.resize(n);
    std::partial_sum(weights_.begin(), weights_.end(), cdf_.begin());
    for (auto& c : cdf_) c /= cdf_.back();
  }

  double period_;
  double kernel_sigma_;
  double floor_;
  double evidence_;
  std::vector<double> hist_;
  std::vector<double> weights_;
  std::vector<double> smoothed_;
  std::vector<double> log_density_;
  std::vector<double> cdf_;
};

/// Wrapped Gaussian integrated over each bin.
inline ClickTimeDistribution gaussian_distribution(double period, double mean, double sd,
                                                   int bins = ClickTimeDistribution::kDefaultBins,
                                                   double evidence = 10.0) {
  if (!(sd > 0)) throw Error("gaussian_distribution: sd must be positive");
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  const double w = period / bins;
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0))); };
  const int wraps = static_cast<int>(std::ceil(6 * sd / period)) + 1;
  for (int k = 0; k < bins; ++k) {
    const double lo = -period / 2 + k * w;
    for (int m = -wraps; m <= wraps; ++m) h[static_cast<std::size_t>(k)] += cdf(lo + w + m * period) - cdf(lo + m * period);
  }
  return {period, std::move(h), ClickTimeDistribution::default_sigma(period, bins),
          ClickTimeDistribution::default_floor(bins), evidence};
}

/// All mass in the bin holding `offset` (plus the floor), no smoothing: the
/// likelihood of a user who never misses.
inline ClickTimeDistribution point_mass_distribution(double period, double offset = 0.0,
                                                     int bins = ClickTimeDistribution::kDefaultBins) {
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  h[static_cast<std::size_t>(ClickTimeDistribution::bin_index(offset, period, bins))] = 1.0;
  return {period, std::move(h), 0.0, ClickTimeDistribution::default_floor(bins), 1.0};
}

/// Prior used until calibration completes: zero-mean, sd = period / 8.
inline ClickTimeDistribution default_prior_distribution(double period) {
  return gaussian_distribution(period, 0.0, period / 8.0);
}

/// Histogram of calibration offsets (already wrapped), smoothed by the kernel.
inline ClickTimeDistribution init_from_calibration(std::span<const double> samples, double period,
                                                   int bins = ClickTimeDistribution::kDefaultBins) {
  if (samples.empty()) throw Error("init_from_calibration: no calibration samples");
  ClickTimeDistribution shape = ClickTimeDistribution::uniform(period, bins);
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  for (double s : samples) {
    if (s < -period / 2 || s >= period / 2) throw Error("init_from_calibration: offset outside [-T/2, T/2)");
    h[static_cast<std::size_t>(shape.bin_of(s))] += 1.0;
  }
  return {period, std::move(h), ClickTimeDistribution::default_sigma(period, bins),
          ClickTimeDistribution::default_floor(bins), static_cast<double>(samples.size())};
}

/// Text form: header `period B kernel_sigma floor evidence`, then B weights,
/// one per line, at 12 significant digits. A four-field header (no evidence)
/// is accepted on read.
inline void write_distribution(std::ostream& os, const ClickTimeDistribution& d) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(12);
  os << d.period() << ' ' << d.bins() << ' ' << d.kernel_sigma() << ' ' << d.floor() << ' ' << d.evidence()
     << '\n';
  for (double w : d.weights()) os << w << '\n';
  os.flags(flags);
  os.precision(prec);
}

inline ClickTimeDistribution read_distribution(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw Error("distribution: missing header");
  std::istringstream hs(header);
  double period = 0, sigma = 0, floor = 0, evidence = 1.0;
  int bins = 0;
  if (!(hs >> period >> bins >> sigma >> floor)) throw Error("distribution: malformed header");
  if (!(hs >> evidence)) evidence = 1.0;
  if (bins < 2) throw Error("distribution: bad bin count");
  std::vector<double> h(static_cast<std::size_t>(bins));
  for (auto& w : h) {
    if (!(is >> w)) throw Error("distribution: expected " + std::to_string(bins) + " weights");
    w = std::max(0.0, (w - floor) / (1.0 - bins * floor));
  }
  return {period, std::move(h), sigma, floor, evidence};
}

}  // namespace nomon
