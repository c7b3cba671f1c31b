#include "flagdim/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "flagdim/errors.hpp"
#include "flagdim/parallel.hpp"
#include "flagdim/rng.hpp"

namespace flagdim::estimate {

namespace {

constexpr double kEulerGamma = 0.57721566490153286060651209;

// digamma at a positive integer: psi(m) = -gamma + H_{m-1}
double psi_int(int m) {
  double h = 0.0;
  for (int t = 1; t < m; ++t) h += 1.0 / t;
  return -kEulerGamma + h;
}

// asymptotic two-sample Kolmogorov-Smirnov p-value
double ks_pvalue(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) return 1.0;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() && ib < b.size()) {
    if (a[ia] <= b[ib])
      ++ia;
    else
      ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) / a.size() -
                             static_cast<double>(ib) / b.size()));
  }
  const double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  if (lambda < 1e-3) return 1.0;
  double p = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    p += sign * 2.0 * std::exp(-2.0 * j * j * lambda * lambda);
    sign = -sign;
  }
  return std::clamp(p, 0.0, 1.0);
}

std::vector<int> strided_subset(int total, int wanted) {
  std::vector<int> out;
  if (wanted >= total) {
    out.resize(static_cast<std::size_t>(total));
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  const double step = static_cast<double>(total) / wanted;
  for (int t = 0; t < wanted; ++t) out.push_back(static_cast<int>(t * step));
  return out;
}

double ols_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const int n = static_cast<int>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int t = 0; t < n; ++t) {
    sx += xs[static_cast<std::size_t>(t)];
    sy += ys[static_cast<std::size_t>(t)];
    sxx += xs[static_cast<std::size_t>(t)] * xs[static_cast<std::size_t>(t)];
    sxy += xs[static_cast<std::size_t>(t)] * ys[static_cast<std::size_t>(t)];
  }
  const double denom = n * sxx - sx * sx;
  return denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
}

double ols_r2(const std::vector<double>& xs, const std::vector<double>& ys) {
  const int n = static_cast<int>(xs.size());
  const double slope = ols_slope(xs, ys);
  double sx = 0, sy = 0;
  for (int t = 0; t < n; ++t) {
    sx += xs[static_cast<std::size_t>(t)];
    sy += ys[static_cast<std::size_t>(t)];
  }
  const double mx = sx / n, my = sy / n;
  double ss_res = 0, ss_tot = 0;
  for (int t = 0; t < n; ++t) {
    const double fit = my + slope * (xs[static_cast<std::size_t>(t)] - mx);
    ss_res += (ys[static_cast<std::size_t>(t)] - fit) * (ys[static_cast<std::size_t>(t)] - fit);
    ss_tot += (ys[static_cast<std::size_t>(t)] - my) * (ys[static_cast<std::size_t>(t)] - my);
  }
  if (ss_tot <= 0.0) return 1.0;
  return 1.0 - ss_res / ss_tot;
}

} // namespace

FlagEnsemble sample_flag_ensemble(const MatrixMeasure& m, const LyapunovSpectrum& spec,
                                  const EnsembleParams& params) {
  if (params.count < 2) throw validation_error("sample_flag_ensemble: count must be >= 2");
  FlagEnsemble ens;
  ens.spec = spec;
  ens.horizon = params.horizon;
  ens.seed = params.seed;
  ens.samples.resize(static_cast<std::size_t>(params.count));

  std::vector<int> retries(static_cast<std::size_t>(params.count), 0);
  parallel::run(params.count, [&](std::ptrdiff_t idx) {
    auto& sample = ens.samples[static_cast<std::size_t>(idx)];
    sample.substream = rng::subseed(params.seed, static_cast<std::uint64_t>(idx));
    for (int attempt = 0;; ++attempt) {
      if (attempt > params.max_resample)
        throw degeneracy_error("sample_flag_ensemble: persistent general-position failure");
      const std::uint64_t sub = rng::subseed(sample.substream, static_cast<std::uint64_t>(attempt));
      try {
        spectrum::TwoSidedSample two = spectrum::sample_flag_pair(m, spec, params.horizon, sub);
        sample.oseledets = spectrum::oseledets_splitting(two.flags, spec);
        const int depth = std::min(params.past_depth, static_cast<int>(two.backward.size()));
        sample.past.assign(two.backward.begin(), two.backward.begin() + depth);
        retries[static_cast<std::size_t>(idx)] = attempt;
        return;
      } catch (const degeneracy_error&) {
        continue;
      }
    }
  });
  for (int r : retries) ens.resampled += r;

  // stationarity smoke test: one sampled step must preserve the pairwise
  // distance statistics of the splitting ensemble
  const int pairs = std::min(params.stationarity_pairs, params.count / 2);
  std::vector<double> base(static_cast<std::size_t>(pairs)), pushed(static_cast<std::size_t>(pairs));
  parallel::run(pairs, [&](std::ptrdiff_t t) {
    const auto& sa = ens.samples[static_cast<std::size_t>(2 * t)];
    const auto& sb = ens.samples[static_cast<std::size_t>(2 * t + 1)];
    Point pa(sa.oseledets.parts.begin(), sa.oseledets.parts.end());
    Point pb(sb.oseledets.parts.begin(), sb.oseledets.parts.end());
    base[static_cast<std::size_t>(t)] = point_distance(pa, pb);
    rng::Stream push_stream(rng::subseed(params.seed ^ 0xA11CEull, static_cast<std::uint64_t>(t)));
    const std::vector<double> probs = m.probabilities();
    const Mat& ga = m.atoms[static_cast<std::size_t>(push_stream.categorical(probs))].m;
    const Mat& gb = m.atoms[static_cast<std::size_t>(push_stream.categorical(probs))].m;
    for (auto& s : pa) s = linalg::apply(ga, s);
    for (auto& s : pb) s = linalg::apply(gb, s);
    pushed[static_cast<std::size_t>(t)] = point_distance(pa, pb);
  });
  ens.stationarity_pvalue = ks_pvalue(base, pushed);
  return ens;
}

double point_distance(const Point& a, const Point& b) {
  if (a.size() != b.size()) throw validation_error("point_distance: mismatched points");
  double dist = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const Subspace& sa = a[t];
    if (sa.rank() == 0 || sa.rank() == sa.ambient_dim) continue;
    dist = std::max(dist, linalg::max_principal_angle(sa, b[t]));
  }
  return dist;
}

std::vector<Point> ensemble_points(const FlagEnsemble& ens, const AdmissibleTopology& t) {
  if (t.n != ens.spec.blocks())
    throw validation_error("ensemble_points: topology size != number of blocks");
  const auto opens = t.opens();
  std::vector<Point> pts(ens.samples.size());
  parallel::run(static_cast<std::ptrdiff_t>(ens.samples.size()), [&](std::ptrdiff_t idx) {
    const bundle::Configuration c =
        bundle::configuration_from_splitting(t, ens.samples[static_cast<std::size_t>(idx)].oseledets);
    Point p;
    for (topology::IndexSet open : opens) p.push_back(c.space(open));
    pts[static_cast<std::size_t>(idx)] = std::move(p);
  });
  return pts;
}

std::vector<Point> ensemble_flag_points(const FlagEnsemble& ens, const LeftFiltration& l) {
  if (l.n != ens.spec.blocks())
    throw validation_error("ensemble_flag_points: filtration size != number of blocks");
  std::vector<Point> pts(ens.samples.size());
  parallel::run(static_cast<std::ptrdiff_t>(ens.samples.size()), [&](std::ptrdiff_t idx) {
    const auto& parts = ens.samples[static_cast<std::size_t>(idx)].oseledets.parts;
    Point p;
    for (int prefix : l.prefix_lengths) {
      if (prefix == 0 || prefix == l.n) continue;
      Subspace s = parts[0];
      for (int e = 1; e < prefix; ++e) s = linalg::subspace_sum(s, parts[static_cast<std::size_t>(e)]);
      p.push_back(std::move(s));
    }
    pts[static_cast<std::size_t>(idx)] = std::move(p);
  });
  return pts;
}

namespace {

// Ross-style k-NN mutual information between a discrete label and points of a
// metric space, on the index subset idx.
double knn_mi_subset(const std::vector<int>& labels, const std::vector<Point>& pts,
                     const std::vector<int>& idx, int k) {
  const int n = static_cast<int>(idx.size());
  if (n < 3) return 0.0;
  bool labels_vary = false;
  for (int t = 1; t < n; ++t)
    if (labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(t)])] !=
        labels[static_cast<std::size_t>(idx[0])])
      labels_vary = true;
  if (!labels_vary) return 0.0;

  Eigen::MatrixXd dist(n, n);
  double maxd = 0.0;
  for (int a = 0; a < n; ++a) {
    dist(a, a) = 0.0;
    for (int b = a + 1; b < n; ++b) {
      const double d = point_distance(pts[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])],
                                      pts[static_cast<std::size_t>(idx[static_cast<std::size_t>(b)])]);
      dist(a, b) = dist(b, a) = d;
      maxd = std::max(maxd, d);
    }
  }
  if (maxd <= 1e-12) return 0.0; // the flag marginal is a point mass

  double acc = 0.0;
  int used = 0;
  std::vector<double> same;
  for (int a = 0; a < n; ++a) {
    same.clear();
    const int label = labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
    for (int b = 0; b < n; ++b)
      if (b != a && labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(b)])] == label)
        same.push_back(dist(a, b));
    if (same.empty()) continue;
    const int ki = std::min<int>(k, static_cast<int>(same.size()));
    std::nth_element(same.begin(), same.begin() + (ki - 1), same.end());
    const double da = same[static_cast<std::size_t>(ki - 1)];
    int m_count = 0;
    if (da <= 1e-12) {
      for (int b = 0; b < n; ++b)
        if (b != a && dist(a, b) <= 1e-12) ++m_count;
    } else {
      for (int b = 0; b < n; ++b)
        if (b != a && dist(a, b) < da) ++m_count;
    }
    m_count = std::max(m_count, ki);
    acc += psi_int(n) - psi_int(static_cast<int>(same.size()) + 1) + psi_int(ki) - psi_int(m_count);
    ++used;
  }
  return used > 0 ? acc / used : 0.0;
}

constexpr int kBatches = 10;

std::vector<std::vector<int>> batch_indices(int count) {
  std::vector<std::vector<int>> batches(kBatches);
  for (int i = 0; i < count; ++i) batches[static_cast<std::size_t>(i % kBatches)].push_back(i);
  return batches;
}

EntropyEstimate from_batches(std::vector<double> values, const std::string& method, double param) {
  EntropyEstimate est;
  est.method = method;
  est.param = param;
  est.batches = static_cast<int>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  if (values.size() > 1) var /= static_cast<double>(values.size() - 1);
  est.raw_value = mean;
  est.value = std::max(mean, 0.0);
  est.stderr_ = std::sqrt(var / static_cast<double>(values.size()));
  return est;
}

std::vector<int> last_labels(const FlagEnsemble& ens) {
  std::vector<int> labels(ens.samples.size());
  for (std::size_t t = 0; t < ens.samples.size(); ++t)
    labels[t] = ens.samples[t].past.empty() ? 0 : ens.samples[t].past.front();
  return labels;
}

} // namespace

EntropyEstimate furstenberg_entropy(const FlagEnsemble& ens, const LeftFiltration& l, int k) {
  if (ens.count() < 100) throw validation_error("furstenberg_entropy: ensemble too small (< 100)");
  const std::vector<int> labels = last_labels(ens);
  const std::vector<Point> pts = ensemble_flag_points(ens, l);
  const auto batches = batch_indices(ens.count());
  std::vector<double> values(kBatches, 0.0);
  parallel::run(kBatches, [&](std::ptrdiff_t b) {
    values[static_cast<std::size_t>(b)] =
        knn_mi_subset(labels, pts, batches[static_cast<std::size_t>(b)], k);
  });
  return from_batches(std::move(values), "knn-mi", k);
}

EntropyEstimate fiber_entropy(const FlagEnsemble& ens, const AdmissibleTopology& t,
                              const AdmissibleTopology& tp, int k) {
  if (ens.count() < 100) throw validation_error("fiber_entropy: ensemble too small (< 100)");
  if (!topology::refines(t, tp)) throw validation_error("fiber_entropy: t must refine tp");
  const std::vector<int> labels = last_labels(ens);
  const std::vector<Point> pts_t = ensemble_points(ens, t);
  const std::vector<Point> pts_tp = ensemble_points(ens, tp);
  const auto batches = batch_indices(ens.count());
  std::vector<double> values(kBatches, 0.0);
  parallel::run(kBatches, [&](std::ptrdiff_t b) {
    const auto& idx = batches[static_cast<std::size_t>(b)];
    // chain rule: I(g, E_T | E_T') = I(g, E_T) - I(g, E_T')
    values[static_cast<std::size_t>(b)] =
        knn_mi_subset(labels, pts_t, idx, k) - knn_mi_subset(labels, pts_tp, idx, k);
  });
  return from_batches(std::move(values), "knn-mi", k);
}

EntropyEstimate cylinder_entropy(const FlagEnsemble& ens, const AdmissibleTopology& t,
                                 const AdmissibleTopology& tp, int depth) {
  if (ens.count() < 100) throw validation_error("cylinder_entropy: ensemble too small (< 100)");
  if (depth < 1 || depth > 12) throw validation_error("cylinder_entropy: depth must lie in [1,12]");
  for (const auto& s : ens.samples)
    if (static_cast<int>(s.past.size()) < depth)
      throw validation_error("cylinder_entropy: ensemble retains fewer past steps than depth");

  const int n = ens.count();
  const std::vector<Point> pts_t = ensemble_points(ens, t);
  const std::vector<Point> pts_tp = ensemble_points(ens, tp);

  // bandwidth from a deterministic sample of pairwise distances
  auto median_distance = [n](const std::vector<Point>& pts) {
    rng::Stream stream(0x9d1ce5u);
    std::vector<double> sample;
    for (int it = 0; it < 2000; ++it) {
      const int a = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(n));
      const int b = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(n));
      if (a == b) continue;
      sample.push_back(point_distance(pts[static_cast<std::size_t>(a)],
                                      pts[static_cast<std::size_t>(b)]));
    }
    std::sort(sample.begin(), sample.end());
    return sample.empty() ? 0.0 : sample[sample.size() / 2];
  };

  double bw_t = median_distance(pts_t) / 4.0;
  double bw_tp = median_distance(pts_tp) / 4.0;

  const std::vector<int> probes = strided_subset(n, 1000);
  EntropyEstimate est;
  for (int widen = 0; widen < 4; ++widen) {
    std::vector<double> probe_values(probes.size(), 0.0);
    std::vector<char> usable(probes.size(), 0);
    parallel::run(static_cast<std::ptrdiff_t>(probes.size()), [&](std::ptrdiff_t pi) {
      const int i = probes[static_cast<std::size_t>(pi)];
      double num_t = 0, den_t = 0, num_tp = 0, den_tp = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        bool match = true;
        for (int s = 0; s < depth && match; ++s)
          match = ens.samples[static_cast<std::size_t>(i)].past[static_cast<std::size_t>(s)] ==
                  ens.samples[static_cast<std::size_t>(j)].past[static_cast<std::size_t>(s)];
        const double dt = point_distance(pts_t[static_cast<std::size_t>(i)],
                                         pts_t[static_cast<std::size_t>(j)]);
        const double dtp = point_distance(pts_tp[static_cast<std::size_t>(i)],
                                          pts_tp[static_cast<std::size_t>(j)]);
        const double wt = bw_t > 0.0 ? std::exp(-0.5 * (dt / bw_t) * (dt / bw_t)) : 1.0;
        const double wtp = bw_tp > 0.0 ? std::exp(-0.5 * (dtp / bw_tp) * (dtp / bw_tp)) : 1.0;
        den_t += wt;
        den_tp += wtp;
        if (match) {
          num_t += wt;
          num_tp += wtp;
        }
      }
      if (num_t > 0.0 && num_tp > 0.0 && den_t > 1e-12 && den_tp > 1e-12) {
        probe_values[static_cast<std::size_t>(pi)] =
            std::log((num_t / den_t) / (num_tp / den_tp)) / depth;
        usable[static_cast<std::size_t>(pi)] = 1;
      }
    });
    int used = 0;
    for (char u : usable) used += u;
    if (used >= static_cast<int>(probes.size()) * 4 / 5 || widen == 3) {
      std::vector<double> batch_values(kBatches, 0.0);
      std::vector<int> batch_counts(kBatches, 0);
      for (std::size_t pi = 0; pi < probes.size(); ++pi) {
        if (!usable[pi]) continue;
        batch_values[pi % kBatches] += probe_values[pi];
        batch_counts[pi % kBatches] += 1;
      }
      std::vector<double> means;
      for (int b = 0; b < kBatches; ++b)
        if (batch_counts[static_cast<std::size_t>(b)] > 0)
          means.push_back(batch_values[static_cast<std::size_t>(b)] /
                          batch_counts[static_cast<std::size_t>(b)]);
      if (means.empty()) means.push_back(0.0);
      est = from_batches(std::move(means), "cylinder", depth);
      est.bandwidth_widened = widen > 0;
      return est;
    }
    bw_t *= 2.0; // empty neighborhoods: widen and flag
    bw_tp *= 2.0;
  }
  return est;
}

double entropy_cap(const LyapunovSpectrum& spec, const LeftFiltration& l) {
  double cap = 0.0;
  for (int i = 1; i <= spec.blocks(); ++i) {
    const int top = l.atom_max(i);
    for (int j = top + 1; j <= spec.blocks(); ++j)
      cap += static_cast<double>(spec.mults[static_cast<std::size_t>(i - 1)]) *
             spec.mults[static_cast<std::size_t>(j - 1)] *
             (spec.chis[static_cast<std::size_t>(i - 1)] - spec.chis[static_cast<std::size_t>(j - 1)]);
  }
  return cap;
}

std::vector<double> RadiusLadder::radii(double measured_r_max) const {
  const double top = r_max > 0.0 ? r_max : measured_r_max;
  std::vector<double> out;
  for (int t = points - 1; t >= 0; --t) out.push_back(top / std::pow(2.0, t));
  return out; // ascending
}

namespace {

template <typename DistanceToAll>
DimensionEstimate local_dimension_impl(int n, const RadiusLadder& ladder, int probes,
                                       std::uint64_t seed, const DistanceToAll& distances_from) {
  DimensionEstimate est;
  if (n < 10) return est;
  (void)seed;

  // scale from a deterministic sample of pairwise distances
  rng::Stream stream(0xba11);
  std::vector<double> sample;
  for (int it = 0; it < 2000; ++it) {
    const int a = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(n));
    const int b = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(n));
    if (a != b) sample.push_back(distances_from(a)[static_cast<std::size_t>(b)]);
  }
  std::sort(sample.begin(), sample.end());
  const double med = sample.empty() ? 0.0 : sample[sample.size() / 2];
  if (sample.empty() || sample.back() <= 1e-13) {
    // atomic ensemble: every ball has full mass at every radius
    est.defined = true;
    est.value = 0.0;
    est.probes_used = n;
    return est;
  }
  est.radii = ladder.radii(med);
  const int rungs = static_cast<int>(est.radii.size());

  const std::vector<int> probe_ids = strided_subset(n, probes);
  std::vector<std::vector<double>> log_mass(probe_ids.size());
  std::vector<std::vector<int>> counts(probe_ids.size());
  parallel::run(static_cast<std::ptrdiff_t>(probe_ids.size()), [&](std::ptrdiff_t pi) {
    std::vector<double> d = distances_from(probe_ids[static_cast<std::size_t>(pi)]);
    d.erase(d.begin() + probe_ids[static_cast<std::size_t>(pi)]);
    std::sort(d.begin(), d.end());
    auto& lm = log_mass[static_cast<std::size_t>(pi)];
    auto& ct = counts[static_cast<std::size_t>(pi)];
    lm.resize(static_cast<std::size_t>(rungs));
    ct.resize(static_cast<std::size_t>(rungs));
    for (int r = 0; r < rungs; ++r) {
      const auto it = std::upper_bound(d.begin(), d.end(), est.radii[static_cast<std::size_t>(r)]);
      const int c = static_cast<int>(it - d.begin());
      ct[static_cast<std::size_t>(r)] = c;
      lm[static_cast<std::size_t>(r)] =
          std::log(std::max(c, 1) / static_cast<double>(n - 1));
    }
  });

  // rung usability: enough neighbors for a stable count, but far from
  // saturation (a saturated plateau fits a line perfectly with slope 0)
  std::vector<int> usable_rungs;
  est.mean_log_mass.assign(static_cast<std::size_t>(rungs), 0.0);
  for (int r = 0; r < rungs; ++r) {
    std::vector<int> per_probe;
    double acc = 0.0;
    for (std::size_t pi = 0; pi < probe_ids.size(); ++pi) {
      per_probe.push_back(counts[pi][static_cast<std::size_t>(r)]);
      acc += log_mass[pi][static_cast<std::size_t>(r)];
    }
    est.mean_log_mass[static_cast<std::size_t>(r)] = acc / static_cast<double>(probe_ids.size());
    std::nth_element(per_probe.begin(), per_probe.begin() + per_probe.size() / 2, per_probe.end());
    const int med_count = per_probe[per_probe.size() / 2];
    if (med_count >= 5 && med_count <= (n - 1) / 2) usable_rungs.push_back(r);
  }

  // longest contiguous window of >= 4 usable rungs with R^2 >= 0.98 on the
  // aggregate curve
  int best_len = 0, best_begin = -1;
  double best_r2 = 0.0;
  for (std::size_t a = 0; a < usable_rungs.size(); ++a) {
    for (std::size_t b = a + 3; b < usable_rungs.size(); ++b) {
      if (usable_rungs[b] - usable_rungs[a] != static_cast<int>(b - a)) break; // not contiguous
      std::vector<double> xs, ys;
      for (std::size_t t = a; t <= b; ++t) {
        xs.push_back(std::log(est.radii[static_cast<std::size_t>(usable_rungs[t])]));
        ys.push_back(est.mean_log_mass[static_cast<std::size_t>(usable_rungs[t])]);
      }
      const double r2 = ols_r2(xs, ys);
      const int len = static_cast<int>(b - a) + 1;
      if (r2 >= 0.98 && (len > best_len || (len == best_len && r2 > best_r2))) {
        best_len = len;
        best_begin = usable_rungs[a];
        best_r2 = r2;
      }
    }
  }
  if (best_len == 0) return est; // no scaling window: undefined-dimension report

  est.window_begin = best_begin;
  est.window_len = best_len;
  std::vector<double> slopes;
  for (std::size_t pi = 0; pi < probe_ids.size(); ++pi) {
    std::vector<double> xs, ys;
    bool ok = true;
    for (int r = best_begin; r < best_begin + best_len; ++r) {
      if (counts[pi][static_cast<std::size_t>(r)] < 1) {
        ok = false;
        break;
      }
      xs.push_back(std::log(est.radii[static_cast<std::size_t>(r)]));
      ys.push_back(log_mass[pi][static_cast<std::size_t>(r)]);
    }
    if (ok) slopes.push_back(ols_slope(xs, ys));
  }
  if (slopes.empty()) return est;
  std::sort(slopes.begin(), slopes.end());
  const std::size_t trim = slopes.size() / 10;
  double mean = 0.0;
  std::size_t used = 0;
  for (std::size_t t = trim; t < slopes.size() - trim; ++t) {
    mean += slopes[t];
    ++used;
  }
  mean /= static_cast<double>(used);
  double var = 0.0;
  for (std::size_t t = trim; t < slopes.size() - trim; ++t)
    var += (slopes[t] - mean) * (slopes[t] - mean);
  if (used > 1) var /= static_cast<double>(used - 1);

  est.defined = true;
  est.value = mean;
  est.spread = std::sqrt(var);
  est.stderr_ = std::sqrt(var / static_cast<double>(used));
  est.probes_used = static_cast<int>(used);
  return est;
}

} // namespace

DimensionEstimate local_dimension(const std::vector<Point>& pts, const RadiusLadder& ladder,
                                  int probes, std::uint64_t seed) {
  const int n = static_cast<int>(pts.size());
  auto distances_from = [&](int a) {
    std::vector<double> d(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b)
      d[static_cast<std::size_t>(b)] =
          b == a ? 0.0 : point_distance(pts[static_cast<std::size_t>(a)], pts[static_cast<std::size_t>(b)]);
    return d;
  };
  return local_dimension_impl(n, ladder, probes, seed, distances_from);
}

DimensionEstimate local_dimension_euclidean(const std::vector<Vec>& pts, const RadiusLadder& ladder,
                                            int probes, std::uint64_t seed) {
  const int n = static_cast<int>(pts.size());
  auto distances_from = [&](int a) {
    std::vector<double> d(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b)
      d[static_cast<std::size_t>(b)] =
          (pts[static_cast<std::size_t>(a)] - pts[static_cast<std::size_t>(b)]).norm();
    return d;
  };
  return local_dimension_impl(n, ladder, probes, seed, distances_from);
}

OneStepDimension one_step_dimension(const FlagEnsemble& ens, const AdmissibleTopology& t,
                                    const AdmissibleTopology& tp, int k, bool with_direct) {
  const auto step = topology::one_step(t, tp);
  if (!step) throw validation_error("one_step_dimension: not a one-step pair");
  OneStepDimension out;
  out.kappa = fiber_entropy(ens, t, tp, k);
  out.chi = topology::chi_step(step->first, step->second, ens.spec.chis);
  if (out.chi < 1e-6) throw degeneracy_error("one_step_dimension: exponent gap below 1e-6");
  out.ratio.defined = true;
  out.ratio.value = out.kappa.value / out.chi;
  out.ratio.stderr_ = out.kappa.stderr_ / out.chi;

  if (with_direct) {
    // ball counting in fiber coordinates around probes whose base points agree
    // within a bandwidth
    const std::vector<Point> base_pts = ensemble_points(ens, tp);
    const int n = ens.count();
    rng::Stream stream(0xf1be5);
    std::vector<double> sample;
    for (int it = 0; it < 2000; ++it) {
      const int a = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(n));
      const int b = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(n));
      if (a != b) sample.push_back(point_distance(base_pts[static_cast<std::size_t>(a)],
                                                  base_pts[static_cast<std::size_t>(b)]));
    }
    std::sort(sample.begin(), sample.end());
    const double bw = sample.empty() ? 0.0 : sample[sample.size() / 2] / 4.0;

    const std::vector<int> probe_ids = strided_subset(n, 60);
    std::vector<double> slopes;
    for (int i : probe_ids) {
      const bundle::Configuration xp = bundle::configuration_from_splitting(
          tp, ens.samples[static_cast<std::size_t>(i)].oseledets);
      const Splitting v = bundle::perpendicular_splitting(xp);
      const coords::FiberChart chart = coords::fiber_chart(t, tp, v);
      std::vector<Vec> cloud;
      Vec center;
      for (int j = 0; j < n; ++j) {
        if (point_distance(base_pts[static_cast<std::size_t>(i)],
                           base_pts[static_cast<std::size_t>(j)]) > bw && j != i)
          continue;
        try {
          const bundle::Configuration cj = bundle::configuration_from_splitting(
              t, ens.samples[static_cast<std::size_t>(j)].oseledets);
          const Vec c = chart.vectorize(chart.to_coords(bundle::psi(t, tp, v, cj)));
          if (j == i) center = c;
          cloud.push_back(c);
        } catch (const degeneracy_error&) {
          continue; // neighbor too far from the fiber
        }
      }
      if (static_cast<int>(cloud.size()) < 30 || center.size() == 0) continue;
      std::vector<double> dists;
      for (const Vec& c : cloud) dists.push_back((c - center).norm());
      std::sort(dists.begin(), dists.end());
      const double rmax = dists[dists.size() / 2];
      if (rmax <= 1e-13) {
        slopes.push_back(0.0);
        continue;
      }
      std::vector<double> xs, ys;
      for (int rung = 0; rung < 8; ++rung) {
        const double r = rmax / std::pow(2.0, rung);
        const auto it = std::upper_bound(dists.begin(), dists.end(), r);
        const int c = static_cast<int>(it - dists.begin());
        if (c < 5) break;
        xs.push_back(std::log(r));
        ys.push_back(std::log(static_cast<double>(c) / static_cast<double>(cloud.size())));
      }
      if (xs.size() >= 4) slopes.push_back(ols_slope(xs, ys));
    }
    if (!slopes.empty()) {
      DimensionEstimate direct;
      std::sort(slopes.begin(), slopes.end());
      const std::size_t trim = slopes.size() / 10;
      double mean = 0.0;
      std::size_t used = 0;
      for (std::size_t s = trim; s < slopes.size() - trim; ++s) {
        mean += slopes[s];
        ++used;
      }
      mean /= static_cast<double>(used);
      double var = 0.0;
      for (std::size_t s = trim; s < slopes.size() - trim; ++s)
        var += (slopes[s] - mean) * (slopes[s] - mean);
      if (used > 1) var /= static_cast<double>(used - 1);
      direct.defined = true;
      direct.value = mean;
      direct.spread = std::sqrt(var);
      direct.stderr_ = std::sqrt(var / static_cast<double>(used));
      direct.probes_used = static_cast<int>(used);
      out.direct = direct;
    }
  }
  return out;
}

PathDimension path_dimension(const FlagEnsemble& ens,
                             const std::vector<topology::RefinementStep>& path, int k) {
  PathDimension out;
  out.total.defined = true;
  double var = 0.0;
  for (const auto& step : path) {
    out.steps.push_back(one_step_dimension(ens, step.finer, step.coarser, k));
    out.total.value += out.steps.back().ratio.value;
    var += out.steps.back().ratio.stderr_ * out.steps.back().ratio.stderr_;
  }
  out.total.stderr_ = std::sqrt(var);
  return out;
}

DimensionEstimate product_dimension(const DimensionEstimate& delta,
                                    const DimensionEstimate& delta_prime) {
  if (!delta.defined || !delta_prime.defined)
    throw validation_error("product_dimension: both factors must be defined");
  DimensionEstimate out;
  out.defined = true;
  out.value = delta.value + delta_prime.value;
  out.stderr_ = std::sqrt(delta.stderr_ * delta.stderr_ + delta_prime.stderr_ * delta_prime.stderr_);
  return out;
}

double LyapunovDimensionProfile::value_at(double s) const {
  double value = kappa;
  double pos = 0.0;
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    const double width = capacities[l];
    const double take = std::clamp(s - pos, 0.0, width);
    value -= lambdas[l] * take;
    pos += width;
  }
  return value;
}

LyapunovDimensionProfile lyapunovdimension_build(const LyapunovSpectrum& spec,
                                                 const LeftFiltration& l, double kappa_value) {
  LyapunovDimensionProfile profile;
  profile.kappa = kappa_value;
  std::vector<std::pair<double, std::pair<int, int>>> entries;
  for (int i = 1; i <= spec.blocks(); ++i) {
    const int top = l.atom_max(i);
    for (int j = top + 1; j <= spec.blocks(); ++j)
      entries.push_back({topology::chi_step(i, j, spec.chis), {i, j}});
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first < b.first;
              return a.second < b.second;
            });
  for (const auto& [lambda, pair] : entries) {
    profile.lambdas.push_back(lambda);
    profile.pairs.push_back(pair);
    profile.capacities.push_back(spec.mults[static_cast<std::size_t>(pair.first - 1)] *
                                 spec.mults[static_cast<std::size_t>(pair.second - 1)]);
    profile.total_capacity += profile.capacities.back();
  }
  // walk the segments to the root
  double pos = 0.0, value = kappa_value;
  profile.dim_ly = profile.total_capacity;
  for (std::size_t seg = 0; seg < profile.lambdas.size(); ++seg) {
    const double drop = profile.lambdas[seg] * profile.capacities[seg];
    if (value - drop <= 0.0) {
      profile.dim_ly = pos + value / profile.lambdas[seg];
      break;
    }
    value -= drop;
    pos += profile.capacities[seg];
  }
  if (profile.lambdas.empty()) profile.dim_ly = 0.0;
  return profile;
}

LyapunovDimensionProfile lyapunov_dimension(const LyapunovSpectrum& spec, const LeftFiltration& l,
                                            const EntropyEstimate& kappa) {
  if (l.n != spec.blocks())
    throw validation_error("lyapunov_dimension: filtration size != number of blocks");
  if (kappa.value < 0.0) throw validation_error("lyapunov_dimension: kappa must be >= 0");
  LyapunovDimensionProfile profile = lyapunovdimension_build(spec, l, kappa.value);
  const double cap = entropy_cap(spec, l);
  profile.cap_warning = kappa.raw_value > cap + 3.0 * kappa.stderr_;
  return profile;
}

RwEntropyResult rw_entropy(const MatrixMeasure& m, int max_n) {
  RwEntropyResult out;
  constexpr double kDedupTol = 1e-9;
  constexpr std::size_t kSupportCap = 1000000;

  using Key = std::vector<long long>;
  auto key_of = [&](const Mat& g) -> std::optional<Key> {
    Key key;
    key.reserve(static_cast<std::size_t>(g.size()));
    for (int c = 0; c < g.cols(); ++c) {
      for (int r = 0; r < g.rows(); ++r) {
        const double v = g(r, c);
        if (std::abs(v) > 8.0e8) return std::nullopt; // quantization overflow
        key.push_back(std::llround(v / kDedupTol));
      }
    }
    return key;
  };

  std::map<Key, std::pair<double, Mat>> current;
  for (const auto& atom : m.atoms) {
    const auto key = key_of(atom.m);
    if (!key) {
      out.truncated = true;
      return out;
    }
    auto [it, fresh] = current.emplace(*key, std::make_pair(atom.p, atom.m));
    if (!fresh) it->second.first += atom.p;
  }

  for (int n = 1; n <= max_n; ++n) {
    if (n > 1) {
      std::map<Key, std::pair<double, Mat>> next;
      for (const auto& [key, entry] : current) {
        for (const auto& atom : m.atoms) {
          Mat product = atom.m * entry.second;
          const auto pkey = key_of(product);
          if (!pkey) {
            out.truncated = true;
            return out;
          }
          auto [it, fresh] =
              next.emplace(*pkey, std::make_pair(entry.first * atom.p, std::move(product)));
          if (!fresh) it->second.first += entry.first * atom.p;
          if (next.size() > kSupportCap) {
            out.truncated = true;
            return out;
          }
        }
      }
      current = std::move(next);
    }
    double h = 0.0;
    for (const auto& [key, entry] : current)
      if (entry.first > 0.0) h -= entry.first * std::log(entry.first);
    out.normalized.push_back(h / n);
    out.support_sizes.push_back(current.size());
    out.achieved_n = n;
  }
  out.value = *std::min_element(out.normalized.begin(), out.normalized.end());
  return out;
}

Report verify_report(const MatrixMeasure& m, const LeftFiltration& l, const ReportParams& params) {
  Report report;
  nlohmann::json doc;

  const LyapunovSpectrum spec = spectrum::lyapunov_spectrum(m, params.spectrum);
  doc["spectrum"] = {{"d", spec.d},
                     {"chis", spec.chis},
                     {"mults", spec.mults},
                     {"raw", spec.raw},
                     {"raw_stderr", spec.raw_stderr},
                     {"cluster_tol", spec.cluster_tol},
                     {"horizon", spec.horizon},
                     {"replicas", spec.replicas}};
  report.spectrum_csv = spectrum::spectrum_csv(spec);

  LeftFiltration filt = l;
  if (filt.n != spec.blocks()) {
    if (filt.n < spec.blocks())
      throw validation_error("verify_report: filtration is over " + std::to_string(filt.n) +
                             " blocks but the spectrum has " + std::to_string(spec.blocks()));
    // coarser spectrum than requested: clamp the filtration
    std::vector<int> inner;
    for (int p : filt.prefix_lengths)
      if (p > 0 && p < spec.blocks()) inner.push_back(p);
    filt = LeftFiltration::from_inner(spec.blocks(), inner);
  }

  EnsembleParams ens_params = params.ensemble;
  ens_params.seed = rng::subseed(params.seed, 1);
  const FlagEnsemble ens = sample_flag_ensemble(m, spec, ens_params);
  doc["ensemble"] = {{"count", ens.count()},
                     {"horizon", ens.horizon},
                     {"resampled", ens.resampled},
                     {"stationarity_pvalue", ens.stationarity_pvalue},
                     {"mass_deficit", m.mass_deficit}};

  const AdmissibleTopology t_l = topology::filtered_topology(filt);
  const auto [t1, t0] = topology::extremes(spec.blocks());
  const auto path = topology::monotone_path(t_l, t0, spec.chis);
  doc["topology_path"] = nlohmann::json::array();
  for (const auto& step : path)
    doc["topology_path"].push_back({{"finer", step.finer.to_string()},
                                    {"coarser", step.coarser.to_string()},
                                    {"i", step.i},
                                    {"j", step.j},
                                    {"chi", topology::chi_step(step.i, step.j, spec.chis)}});

  const EntropyEstimate kappa = furstenberg_entropy(ens, filt, params.knn_k);
  const double cap = entropy_cap(spec, filt);
  doc["entropies"] = nlohmann::json::array();
  doc["entropies"].push_back({{"name", "furstenberg"},
                              {"value", kappa.value},
                              {"raw_value", kappa.raw_value},
                              {"stderr", kappa.stderr_},
                              {"method", kappa.method},
                              {"cap", cap}});

  const PathDimension pd = path_dimension(ens, path, params.knn_k);
  doc["dimensions"] = nlohmann::json::array();
  double kappa_path_total = 0.0;
  for (std::size_t s = 0; s < pd.steps.size(); ++s) {
    const auto& step = pd.steps[s];
    kappa_path_total += step.kappa.value;
    doc["entropies"].push_back({{"name", "fiber:" + path[s].finer.to_string() + " -> " +
                                             path[s].coarser.to_string()},
                                {"value", step.kappa.value},
                                {"raw_value", step.kappa.raw_value},
                                {"stderr", step.kappa.stderr_},
                                {"method", step.kappa.method}});
    doc["dimensions"].push_back({{"name", "gamma_" + std::to_string(s + 1)},
                                 {"value", step.ratio.value},
                                 {"stderr", step.ratio.stderr_},
                                 {"chi", step.chi}});
  }

  // direct flag-space dimension for comparison
  const std::vector<Point> flag_pts = ensemble_flag_points(ens, filt);
  const DimensionEstimate direct =
      local_dimension(flag_pts, RadiusLadder{}, 200, rng::subseed(params.seed, 2));
  doc["dimensions"].push_back({{"name", "delta_path"},
                               {"value", pd.total.value},
                               {"stderr", pd.total.stderr_}});
  doc["dimensions"].push_back({{"name", "delta_direct"},
                               {"defined", direct.defined},
                               {"value", direct.value},
                               {"stderr", direct.stderr_},
                               {"spread", direct.spread}});

  const LyapunovDimensionProfile profile = lyapunov_dimension(spec, filt, kappa);
  doc["lyapunov_profile"] = {{"kappa", profile.kappa},
                             {"lambdas", profile.lambdas},
                             {"capacities", profile.capacities},
                             {"dim_flag_space", profile.total_capacity},
                             {"dim_ly", profile.dim_ly},
                             {"cap_warning", profile.cap_warning}};

  const RwEntropyResult rw = rw_entropy(m, 8);
  doc["rw_entropy"] = {{"value", rw.value},
                       {"achieved_n", rw.achieved_n},
                       {"truncated", rw.truncated},
                       {"normalized", rw.normalized}};

  report.delta = pd.total.value;
  report.dim_ly = profile.dim_ly;
  report.lyapunov_bound_holds = pd.total.value <= profile.dim_ly + 2.0 * pd.total.stderr_ + 1e-12;
  report.entropy_cap_holds = kappa.raw_value <= cap + 2.0 * kappa.stderr_ + 1e-12;
  doc["inequalities"] = nlohmann::json::array();
  doc["inequalities"].push_back({{"name", "delta <= dim_LY + 2se"},
                                 {"holds", report.lyapunov_bound_holds},
                                 {"lhs", pd.total.value},
                                 {"rhs", profile.dim_ly + 2.0 * pd.total.stderr_}});
  doc["inequalities"].push_back({{"name", "kappa <= cap + 2se"},
                                 {"holds", report.entropy_cap_holds},
                                 {"lhs", kappa.raw_value},
                                 {"rhs", cap + 2.0 * kappa.stderr_}});
  doc["inequalities"].push_back(
      {{"name", "kappa chain vs path sum (3 pooled se)"},
       {"holds", std::abs(kappa_path_total - kappa.value) <=
                     3.0 * (kappa.stderr_ + pd.total.stderr_) + 1e-12},
       {"lhs", kappa.value},
       {"rhs", kappa_path_total}});

  {
    std::ostringstream os;
    os.precision(17);
    os << "r,mean_log_mass\n";
    for (std::size_t rr = 0; rr < direct.radii.size(); ++rr)
      os << direct.radii[rr] << ',' << direct.mean_log_mass[rr] << '\n';
    report.ball_mass_csv = os.str();
  }
  {
    std::ostringstream os;
    os.precision(17);
    os << "n,H_over_n\n";
    for (std::size_t nn = 0; nn < rw.normalized.size(); ++nn)
      os << nn + 1 << ',' << rw.normalized[nn] << '\n';
    report.rw_entropy_csv = os.str();
  }
  report.json = doc.dump(2);
  return report;
}

} // namespace flagdim::estimate
