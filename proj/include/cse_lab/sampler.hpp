#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "decompose.hpp"
#include "error.hpp"
#include "fock.hpp"

namespace cse_lab {

using Engine = std::mt19937_64;

inline constexpr std::uint64_t kChunkSize = std::uint64_t{1} << 15;

/// Independent generator for (seed, domain, chunk). Every chunk of trials owns
/// its stream, so results depend on the seed but not on the worker count.
inline Engine make_stream(std::uint64_t seed, std::uint64_t domain, std::uint64_t chunk) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(domain), hi(domain), lo(chunk), hi(chunk)};
  return Engine(seq);
}

inline double uniform01(Engine& e) { return static_cast<double>(e() >> 11) * 0x1.0p-53; }

inline double uniform_phase(Engine& e) { return 2.0 * std::numbers::pi * uniform01(e); }

inline bool bernoulli(Engine& e, double p) { return uniform01(e) < p; }

inline int resolve_threads(int threads) {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs `trial(engine, acc)` n times split into fixed-size chunks. Partial
/// accumulators are merged in chunk order, which fixes the floating-point
/// reduction independently of scheduling.
template <class Acc, class Trial>
Acc run_trials(std::uint64_t n, std::uint64_t seed, std::uint64_t domain, int threads, const Acc& zero,
               Trial&& trial) {
  const std::uint64_t chunks = (n + kChunkSize - 1) / kChunkSize;
  std::vector<Acc> partial(chunks, zero);
  std::atomic<std::uint64_t> next{0};
  auto worker = [&] {
    for (std::uint64_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
      Engine e = make_stream(seed, domain, c);
      const std::uint64_t begin = c * kChunkSize;
      const std::uint64_t end = std::min(n, begin + kChunkSize);
      Acc& acc = partial[c];
      for (std::uint64_t k = begin; k < end; ++k) trial(e, acc);
    }
  };
  const int nt = static_cast<int>(std::min<std::uint64_t>(resolve_threads(threads), std::max<std::uint64_t>(chunks, 1)));
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  Acc total = zero;
  for (const auto& p : partial) total.merge(p);
  return total;
}

/// Running sums of K jointly observed per-trial values.
template <std::size_t K>
struct Moments {
  std::uint64_t count = 0;
  std::array<double, K> sum{};
  std::array<double, K * K> cross{};

  void add(const std::array<double, K>& x) {
    ++count;
    for (std::size_t i = 0; i < K; ++i) {
      sum[i] += x[i];
      for (std::size_t j = 0; j < K; ++j) cross[i * K + j] += x[i] * x[j];
    }
  }

  void add(double x) requires(K == 1) { add(std::array<double, 1>{x}); }

  void merge(const Moments& o) {
    count += o.count;
    for (std::size_t i = 0; i < K; ++i) sum[i] += o.sum[i];
    for (std::size_t i = 0; i < K * K; ++i) cross[i] += o.cross[i];
  }

  double mean(std::size_t i = 0) const { return count ? sum[i] / static_cast<double>(count) : 0.0; }

  /// Unbiased sample covariance of single-trial values.
  double covariance(std::size_t i, std::size_t j) const {
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    return (cross[i * K + j] - sum[i] * sum[j] / n) / (n - 1.0);
  }

  double variance(std::size_t i = 0) const { return std::max(0.0, covariance(i, i)); }
};

struct SignedMixture {
  std::vector<double> probabilities;
  std::vector<int> signs;
  double zeta = 1.0;
  std::vector<std::size_t> probe_refs;
  std::vector<double> cdf;

  std::size_t size() const noexcept { return probabilities.size(); }

  static SignedMixture from_coefficients(const RealVector& c) {
    detail::require(c.size() > 0, ErrorKind::invalid_argument, "signed mixture needs coefficients");
    SignedMixture m;
    m.zeta = c.cwiseAbs().sum();
    detail::require(m.zeta > 0.0 && std::isfinite(m.zeta), ErrorKind::invalid_argument,
                    "coefficient norm must be positive and finite");
    double acc = 0.0, check = 0.0;
    for (Eigen::Index j = 0; j < c.size(); ++j) {
      const double p = std::abs(c(j)) / m.zeta;
      m.probabilities.push_back(p);
      m.signs.push_back(c(j) < 0.0 ? -1 : 1);
      m.probe_refs.push_back(static_cast<std::size_t>(j));
      acc += p;
      m.cdf.push_back(acc);
      check += m.signs.back() * p * m.zeta;
    }
    m.cdf.back() = 1.0;
    detail::require(std::abs(check - 1.0) <= 1e-9 * std::max(1.0, m.zeta), ErrorKind::invalid_argument,
                    "signed weights must sum to one");
    return m;
  }

  static SignedMixture from_representation(const Representation& rep) {
    return from_coefficients(rep.coefficients);
  }
};

struct SignedDraw {
  std::size_t index;
  int sign;
};

inline std::size_t sample_index(const std::vector<double>& cdf, double u) {
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return static_cast<std::size_t>(it - cdf.begin());
}

inline SignedDraw sample_signed(const SignedMixture& mix, Engine& e) {
  const std::size_t j = sample_index(mix.cdf, uniform01(e));
  return {mix.probe_refs[j], mix.signs[j]};
}

/// Outcome values shared by all probes and, per probe, the outcome distribution.
class MeasurementModel {
 public:
  MeasurementModel(std::vector<double> values, std::vector<std::vector<double>> distributions, double bound = -1.0)
      : values_(std::move(values)), dist_(std::move(distributions)) {
    detail::require(!values_.empty() && !dist_.empty(), ErrorKind::invalid_argument,
                    "measurement model needs outcomes and probes");
    double vmax = 0.0;
    for (double v : values_) vmax = std::max(vmax, std::abs(v));
    if (bound < 0.0) bound = vmax;
    detail::require(vmax <= bound * (1.0 + 1e-12), ErrorKind::invalid_argument,
                    "outcome value exceeds the declared bound");
    bound_ = bound;
    for (const auto& d : dist_) {
      detail::require(d.size() == values_.size(), ErrorKind::dimension_mismatch,
                      "outcome distribution size mismatch");
      double s = 0.0, m1 = 0.0, m2 = 0.0;
      std::vector<double> cdf;
      for (std::size_t k = 0; k < d.size(); ++k) {
        detail::require(d[k] >= -1e-15, ErrorKind::invalid_argument, "negative outcome probability");
        s += d[k];
        cdf.push_back(s);
        m1 += d[k] * values_[k];
        m2 += d[k] * values_[k] * values_[k];
      }
      detail::require(std::abs(s - 1.0) <= 1e-10, ErrorKind::invalid_argument,
                      "outcome distribution does not sum to one");
      cdf.back() = 1.0;
      cdf_.push_back(std::move(cdf));
      mean_.push_back(m1);
      second_.push_back(m2);
    }
  }

  /// Each probe yields its own fixed value: the conditional-expectation protocol.
  static MeasurementModel deterministic(const std::vector<double>& per_probe_values) {
    std::vector<std::vector<double>> dist;
    for (std::size_t j = 0; j < per_probe_values.size(); ++j) {
      std::vector<double> d(per_probe_values.size(), 0.0);
      d[j] = 1.0;
      dist.push_back(std::move(d));
    }
    return MeasurementModel(per_probe_values, std::move(dist));
  }

  /// Photon counting on diagonal probes; the outcome n carries value a_n.
  static MeasurementModel photon_counting(const ProbeSet& probes, const RealVector& values) {
    std::vector<std::vector<double>> dist;
    for (const auto& p : probes.probes) {
      detail::require(p.is_diagonal(), ErrorKind::invalid_argument, "photon counting expects diagonal probes");
      RealVector d = p.diagonal().cwiseMax(0.0);
      d /= d.sum();
      dist.emplace_back(d.data(), d.data() + d.size());
    }
    return MeasurementModel(std::vector<double>(values.data(), values.data() + values.size()), std::move(dist));
  }

  /// Diagonal POVM with element m carrying value z_m.
  static MeasurementModel from_povm(const ProbeSet& probes, const std::vector<RealVector>& povm,
                                    const RealVector& values) {
    detail::require(povm.size() == static_cast<std::size_t>(values.size()), ErrorKind::dimension_mismatch,
                    "one value per POVM element is required");
    std::vector<std::vector<double>> dist;
    for (const auto& p : probes.probes) {
      RealVector diag = p.diagonal();
      std::vector<double> d;
      for (const auto& pi : povm) {
        detail::require(pi.size() >= diag.size(), ErrorKind::dimension_mismatch, "POVM shorter than probe");
        d.push_back(std::clamp(diag.dot(pi.head(diag.size())), 0.0, 1.0));
      }
      double s = 0.0;
      for (double v : d) s += v;
      for (double& v : d) v /= s;
      dist.push_back(std::move(d));
    }
    return MeasurementModel(std::vector<double>(values.data(), values.data() + values.size()), std::move(dist));
  }

  std::size_t outcome_count() const noexcept { return values_.size(); }
  std::size_t probe_count() const noexcept { return dist_.size(); }
  double value(std::size_t k) const { return values_[k]; }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<double>& distribution(std::size_t j) const { return dist_[j]; }
  double mean(std::size_t j) const { return mean_[j]; }
  double second_moment(std::size_t j) const { return second_[j]; }
  double bound() const noexcept { return bound_; }

  std::size_t sample(std::size_t j, Engine& e) const { return sample_index(cdf_[j], uniform01(e)); }

 private:
  std::vector<double> values_;
  std::vector<std::vector<double>> dist_;
  std::vector<std::vector<double>> cdf_;
  std::vector<double> mean_, second_;
  double bound_ = 0.0;
};

struct EmulationEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t n_samples = 0;
  std::uint64_t seed = 0;
  double variance_empirical = 0.0;
  double variance_predicted = std::numeric_limits<double>::quiet_NaN();
};

inline EmulationEstimate make_estimate(const Moments<1>& m, std::uint64_t seed) {
  EmulationEstimate est;
  est.n_samples = m.count;
  est.seed = seed;
  est.mean = m.mean();
  est.variance_empirical = m.variance();
  est.std_error = std::sqrt(est.variance_empirical / static_cast<double>(std::max<std::uint64_t>(m.count, 1)));
  return est;
}

struct EmulationOptions {
  int threads = 0;
  std::uint64_t domain = 0;
};

/// Single-trial variance split of the signed estimator. delta_ab is the
/// variance of the weighted outcome zeta*s*A, delta_a the variance of A in the
/// represented state; excess is their difference.
struct VarianceBreakdown {
  double mean = 0.0;
  double delta_ab = 0.0;
  double delta_a = 0.0;
  double excess = 0.0;
};

/// Variances from per-probe first and second moments of the measured value.
inline VarianceBreakdown signed_variance(const RealVector& c, const RealVector& first, const RealVector& second) {
  detail::require(c.size() == first.size() && c.size() == second.size(), ErrorKind::dimension_mismatch,
                  "moment vectors must match the coefficients");
  const auto [zp, zm] = zeta_split(c);
  double ap = 0.0, am = 0.0, a2p = 0.0, a2m = 0.0;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    if (c(j) > 0.0) {
      ap += c(j) * first(j);
      a2p += c(j) * second(j);
    } else {
      am -= c(j) * first(j);
      a2m -= c(j) * second(j);
    }
  }
  // a2p = zeta_+ Tr{rho_+ A^2}, a2m = zeta_- Tr{rho_- A^2}
  VarianceBreakdown v;
  v.mean = ap - am;
  v.delta_ab = (zp + zm) * (a2p + a2m) - v.mean * v.mean;
  v.delta_a = (zp - zm) * (a2p - a2m) - v.mean * v.mean;
  const double tp = zp > 0.0 ? a2p / zp : 0.0;
  const double tm = zm > 0.0 ? a2m / zm : 0.0;
  v.excess = 2.0 * zp * zm * (tp + tm);
  return v;
}

/// Operator-level variances: second moments Tr{rho_j A^2}.
inline VarianceBreakdown excess_variance(const Representation& rep, const Observable& a) {
  const auto j = static_cast<Eigen::Index>(rep.probe_set.size());
  RealVector first(j), second(j);
  const Matrix a2 = a.matrix() * a.matrix();
  for (Eigen::Index k = 0; k < j; ++k) {
    const auto& p = rep.probe_set.probes[static_cast<std::size_t>(k)];
    first(k) = expectation(a, p);
    second(k) = trace_product(a2, p.matrix());
  }
  return signed_variance(rep.coefficients, first, second);
}

/// Probe-resolved variances: each probe contributes its conditional mean
/// Tr{rho_j A}, so second moments are (Tr{rho_j A})^2.
inline VarianceBreakdown conditional_excess_variance(const Representation& rep, const Observable& a) {
  const auto j = static_cast<Eigen::Index>(rep.probe_set.size());
  RealVector first(j);
  for (Eigen::Index k = 0; k < j; ++k) first(k) = expectation(a, rep.probe_set.probes[static_cast<std::size_t>(k)]);
  return signed_variance(rep.coefficients, first, first.cwiseAbs2());
}

/// Variances implied by a measurement model's outcome tables.
inline VarianceBreakdown excess_variance(const RealVector& c, const MeasurementModel& meas) {
  const auto j = c.size();
  detail::require(static_cast<std::size_t>(j) == meas.probe_count(), ErrorKind::dimension_mismatch,
                  "measurement model probe count mismatch");
  RealVector first(j), second(j);
  for (Eigen::Index k = 0; k < j; ++k) {
    first(k) = meas.mean(static_cast<std::size_t>(k));
    second(k) = meas.second_moment(static_cast<std::size_t>(k));
  }
  return signed_variance(c, first, second);
}

/// Signed estimator (zeta/N) sum_k s_k A_k with outcomes drawn from the model.
inline EmulationEstimate emulate_expectation(const SignedMixture& mix, const MeasurementModel& meas, std::uint64_t n,
                                             std::uint64_t seed, const EmulationOptions& opt = {}) {
  detail::require(n >= 1, ErrorKind::invalid_argument, "sample count must be at least 1");
  detail::require(meas.probe_count() >= mix.size(), ErrorKind::dimension_mismatch,
                  "measurement model does not cover every probe");
  const double zeta = mix.zeta;
  auto acc = run_trials(n, seed, opt.domain, opt.threads, Moments<1>{}, [&](Engine& e, Moments<1>& m) {
    const SignedDraw d = sample_signed(mix, e);
    const std::size_t k = meas.sample(d.index, e);
    m.add(zeta * d.sign * meas.value(k));
  });
  EmulationEstimate est = make_estimate(acc, seed);
  RealVector c(static_cast<Eigen::Index>(mix.size()));
  for (std::size_t j = 0; j < mix.size(); ++j) c(static_cast<Eigen::Index>(j)) = mix.signs[j] * mix.probabilities[j] * zeta;
  RealVector f(c.size()), s(c.size());
  for (std::size_t j = 0; j < mix.size(); ++j) {
    f(static_cast<Eigen::Index>(j)) = meas.mean(mix.probe_refs[j]);
    s(static_cast<Eigen::Index>(j)) = meas.second_moment(mix.probe_refs[j]);
  }
  est.variance_predicted = signed_variance(c, f, s).delta_ab;
  return est;
}

/// Smallest N with sigmas * sqrt(variance / N) <= halfwidth.
inline std::uint64_t required_samples(double variance, double halfwidth, double sigmas = 3.0) {
  detail::require(variance >= 0.0 && std::isfinite(variance), ErrorKind::invalid_argument,
                  "variance must be finite and nonnegative");
  detail::require(halfwidth > 0.0 && sigmas > 0.0, ErrorKind::invalid_argument,
                  "halfwidth and confidence level must be positive");
  if (variance == 0.0) return 1;
  auto ok = [&](double n) { return sigmas * std::sqrt(variance / n) <= halfwidth; };
  double n = std::max(1.0, std::ceil(sigmas * sigmas * variance / (halfwidth * halfwidth)));
  while (n > 1.0 && ok(n - 1.0)) n -= 1.0;
  while (!ok(n)) n += 1.0;
  return static_cast<std::uint64_t>(n);
}

struct MseReport {
  double general = 0.0;
  std::optional<double> pure;
};

inline Eigen::MatrixXd probe_gram(const ProbeSet& probes) {
  const auto j = static_cast<Eigen::Index>(probes.size());
  Eigen::MatrixXd g(j, j);
  for (Eigen::Index a = 0; a < j; ++a)
    for (Eigen::Index b = a; b < j; ++b)
      g(a, b) = g(b, a) = trace_product(probes.probes[static_cast<std::size_t>(a)].matrix(),
                                        probes.probes[static_cast<std::size_t>(b)].matrix());
  return g;
}

/// Expected Tr{(rho_hat - rho)^2} when rho is rebuilt from N_s signed draws.
inline MseReport sampling_mse(const Representation& rep, std::uint64_t n_s) {
  detail::require(n_s >= 1, ErrorKind::invalid_argument, "sample count must be at least 1");
  const Eigen::MatrixXd g = probe_gram(rep.probe_set);
  const RealVector& c = rep.coefficients;
  const double zeta = rep.zeta();
  const double n = static_cast<double>(n_s);
  const double purity = c.dot(g * c);
  MseReport out;
  out.general = (zeta * c.cwiseAbs().dot(g.diagonal()) - purity) / n;
  if ((g.diagonal().array() - 1.0).abs().maxCoeff() <= 1e-10) {
    out.pure = ((1.0 - purity) + (zeta * zeta - 1.0)) / n;
  }
  return out;
}

inline double sampling_mse_pure(const Representation& rep, std::uint64_t n_s) {
  auto r = sampling_mse(rep, n_s);
  detail::require(r.pure.has_value(), ErrorKind::invalid_argument,
                  "pure-probe MSE requested for a representation with mixed probes");
  return *r.pure;
}

}  // namespace cse_lab
