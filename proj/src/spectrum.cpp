#include "flagdim/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "flagdim/errors.hpp"
#include "flagdim/parallel.hpp"
#include "flagdim/rng.hpp"

namespace flagdim::spectrum {

int LyapunovSpectrum::prefix_dim(int i) const {
  int total = 0;
  for (int b = 0; b < i; ++b) total += mults[static_cast<std::size_t>(b)];
  return total;
}

int LyapunovSpectrum::dim_of(topology::IndexSet I) const {
  int total = 0;
  for (int i : topology::set_elements(I)) total += mults[static_cast<std::size_t>(i - 1)];
  return total;
}

LyapunovSpectrum lyapunov_spectrum(const MatrixMeasure& m, const SpectrumParams& params) {
  if (params.horizon < 10) throw validation_error("lyapunov_spectrum: horizon must be >= 10");
  if (params.replicas < 1) throw validation_error("lyapunov_spectrum: replicas must be >= 1");
  const int d = m.d;
  const int r = params.replicas;

  std::vector<Vec> slots(static_cast<std::size_t>(r));
  parallel::run(r, [&](std::ptrdiff_t k) {
    Word w = randwalk::sample_word(m, params.horizon, rng::subseed(params.seed, static_cast<std::uint64_t>(k)));
    randwalk::ProductFactorization f = randwalk::accumulate(m, w);
    slots[static_cast<std::size_t>(k)] = f.log_diag / static_cast<double>(params.horizon);
  });

  LyapunovSpectrum spec;
  spec.d = d;
  spec.horizon = params.horizon;
  spec.replicas = r;
  spec.per_replica.resize(static_cast<std::size_t>(r), std::vector<double>(static_cast<std::size_t>(d)));
  Vec mean = Vec::Zero(d);
  for (int k = 0; k < r; ++k) {
    mean += slots[static_cast<std::size_t>(k)];
    for (int j = 0; j < d; ++j)
      spec.per_replica[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] =
          slots[static_cast<std::size_t>(k)](j);
  }
  mean /= static_cast<double>(r);
  Vec var = Vec::Zero(d);
  for (int k = 0; k < r; ++k) {
    Vec dev = slots[static_cast<std::size_t>(k)] - mean;
    var += dev.cwiseProduct(dev);
  }
  if (r > 1) var /= static_cast<double>(r - 1);

  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mean(a) > mean(b); });
  spec.raw.resize(static_cast<std::size_t>(d));
  spec.raw_stderr.resize(static_cast<std::size_t>(d));
  double pooled = 0.0;
  for (int j = 0; j < d; ++j) {
    spec.raw[static_cast<std::size_t>(j)] = mean(order[static_cast<std::size_t>(j)]);
    spec.raw_stderr[static_cast<std::size_t>(j)] =
        std::sqrt(var(order[static_cast<std::size_t>(j)]) / static_cast<double>(r));
    pooled += spec.raw_stderr[static_cast<std::size_t>(j)];
  }
  pooled /= static_cast<double>(d);

  spec.cluster_tol = params.cluster_tol > 0.0 ? params.cluster_tol : std::max(5.0 * pooled, 1e-12);

  // single-linkage clustering of the sorted exponents at the gap threshold
  std::vector<int> block_of(static_cast<std::size_t>(d), 0);
  int blocks = 1;
  for (int j = 1; j < d; ++j) {
    if (spec.raw[static_cast<std::size_t>(j - 1)] - spec.raw[static_cast<std::size_t>(j)] >
        spec.cluster_tol)
      ++blocks;
    block_of[static_cast<std::size_t>(j)] = blocks - 1;
  }
  spec.chis.assign(static_cast<std::size_t>(blocks), 0.0);
  spec.mults.assign(static_cast<std::size_t>(blocks), 0);
  for (int j = 0; j < d; ++j) {
    spec.chis[static_cast<std::size_t>(block_of[static_cast<std::size_t>(j)])] +=
        spec.raw[static_cast<std::size_t>(j)];
    spec.mults[static_cast<std::size_t>(block_of[static_cast<std::size_t>(j)])] += 1;
  }
  for (int b = 0; b < blocks; ++b)
    spec.chis[static_cast<std::size_t>(b)] /= spec.mults[static_cast<std::size_t>(b)];
  const double spread = spec.raw.front() - spec.raw.back();
  spec.single_cluster_warning = (blocks == 1 && d > 1 && spec.cluster_tol >= spread);
  return spec;
}

std::string spectrum_csv(const LyapunovSpectrum& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "replica,k,raw_k\n";
  for (std::size_t k = 0; k < spec.per_replica.size(); ++k)
    for (std::size_t j = 0; j < spec.per_replica[k].size(); ++j)
      os << k << ',' << j << ',' << spec.per_replica[k][j] << '\n';
  return os.str();
}

namespace {

// leading-column spans of the orthogonal factor at the block prefix dims
std::vector<Subspace> chain_from_q(const Mat& q, const LyapunovSpectrum& spec) {
  std::vector<Subspace> chain;
  for (int i = 1; i <= spec.blocks(); ++i) {
    const int k = spec.prefix_dim(i);
    chain.push_back(Subspace{spec.d, q.leftCols(k)});
  }
  return chain;
}

} // namespace

std::vector<Subspace> unstable_flag(const MatrixMeasure& m, const Word& backward_word,
                                    const LyapunovSpectrum& spec) {
  if (backward_word.direction != randwalk::Direction::backward)
    throw validation_error("unstable_flag: expected a backward word");
  if (backward_word.length() < 1) throw validation_error("unstable_flag: empty word");
  randwalk::ProductFactorization f = randwalk::accumulate(m, backward_word);
  return chain_from_q(f.q, spec);
}

std::vector<Subspace> stable_flag(const MatrixMeasure& m, const Word& forward_word,
                                  const LyapunovSpectrum& spec) {
  if (forward_word.direction != randwalk::Direction::forward)
    throw validation_error("stable_flag: expected a forward word");
  if (forward_word.length() < 1) throw validation_error("stable_flag: empty word");
  // right singular directions of g_0^n are the left singular directions of the
  // transposed product g_0^T ... g_{n-1}^T, which the left-multiplying kernel
  // builds by consuming the word in reverse
  randwalk::ProductFactorization f = randwalk::ProductFactorization::identity(m.d);
  for (auto it = forward_word.indices.rbegin(); it != forward_word.indices.rend(); ++it)
    randwalk::qr_push(f, m.atoms[static_cast<std::size_t>(*it)].m.transpose());
  // E_k+...+E_N is the orthogonal complement of the top d(1..k-1) right
  // singular directions
  std::vector<Subspace> chain;
  for (int k = 1; k <= spec.blocks(); ++k) {
    const int top = spec.prefix_dim(k - 1);
    if (top == 0) {
      chain.push_back(Subspace::full(spec.d));
    } else {
      chain.push_back(Subspace{spec.d, f.q.rightCols(spec.d - top)});
    }
  }
  return chain;
}

Splitting oseledets_splitting(const FlagSample& fs, const LyapunovSpectrum& spec) {
  const int n = spec.blocks();
  if (static_cast<int>(fs.unstable.size()) != n || static_cast<int>(fs.stable.size()) != n)
    throw validation_error("oseledets_splitting: chains do not match the spectrum");
  Splitting split;
  for (int i = 1; i <= n; ++i) {
    Subspace e = linalg::subspace_intersection(fs.unstable[static_cast<std::size_t>(i - 1)],
                                               fs.stable[static_cast<std::size_t>(i - 1)]);
    if (e.rank() != spec.mults[static_cast<std::size_t>(i - 1)]) {
      std::ostringstream os;
      os << "oseledets_splitting: block " << i << " has rank " << e.rank() << ", expected "
         << spec.mults[static_cast<std::size_t>(i - 1)]
         << " (general-position failure; increase the horizon)";
      throw degeneracy_error(os.str());
    }
    split.parts.push_back(std::move(e));
  }
  if (split.condition_number() > linalg::kConditionLimit)
    throw degeneracy_error("oseledets_splitting: blocks nearly dependent; increase the horizon");
  return split;
}

TwoSidedSample sample_flag_pair(const MatrixMeasure& m, const LyapunovSpectrum& spec,
                                int horizon, std::uint64_t seed) {
  TwoSidedSample out;
  Word back = randwalk::sample_word(m, horizon, rng::subseed(seed, 0), randwalk::Direction::backward);
  Word fwd = randwalk::sample_word(m, horizon, rng::subseed(seed, 1), randwalk::Direction::forward);
  out.backward = back.indices;
  out.forward = fwd.indices;
  out.flags.unstable = unstable_flag(m, back, spec);
  out.flags.stable = stable_flag(m, fwd, spec);
  return out;
}

Trajectory oseledets_along_orbit(const MatrixMeasure& m, const LyapunovSpectrum& spec,
                                 int length, int warmup, std::uint64_t seed) {
  Trajectory traj;
  Word back = randwalk::sample_word(m, warmup, rng::subseed(seed, 0), randwalk::Direction::backward);
  Word orbit = randwalk::sample_word(m, length + warmup, rng::subseed(seed, 1));
  traj.steps.assign(orbit.indices.begin(), orbit.indices.begin() + length);

  const int n = spec.blocks();
  traj.flags.resize(static_cast<std::size_t>(length) + 1);
  traj.splittings.resize(static_cast<std::size_t>(length) + 1);

  // unstable chain at time 0, pushed forward (the attracting direction)
  std::vector<Subspace> unstable = unstable_flag(m, back, spec);
  traj.flags[0].unstable = unstable;
  for (int t = 0; t < length; ++t) {
    const Mat& g = m.atoms[static_cast<std::size_t>(traj.steps[static_cast<std::size_t>(t)])].m;
    for (auto& u : unstable) u = linalg::apply(g, u);
    traj.flags[static_cast<std::size_t>(t) + 1].unstable = unstable;
  }

  // stable chain at the final time from the remaining forward tail, pulled
  // back step by step (attracting under the inverse dynamics)
  Word tail;
  tail.direction = randwalk::Direction::forward;
  tail.indices.assign(orbit.indices.begin() + length, orbit.indices.end());
  std::vector<Subspace> stable = stable_flag(m, tail, spec);
  traj.flags[static_cast<std::size_t>(length)].stable = stable;
  for (int t = length - 1; t >= 0; --t) {
    const Mat ginv = m.inverse_atom(traj.steps[static_cast<std::size_t>(t)]);
    for (auto& s : stable) s = linalg::apply(ginv, s);
    traj.flags[static_cast<std::size_t>(t)].stable = stable;
  }

  for (int t = 0; t <= length; ++t)
    traj.splittings[static_cast<std::size_t>(t)] =
        oseledets_splitting(traj.flags[static_cast<std::size_t>(t)], spec);
  (void)n;
  return traj;
}

SublinearityResult angle_sublinearity(const MatrixMeasure& m, const LyapunovSpectrum& spec,
                                      topology::IndexSet I, topology::IndexSet J,
                                      int trajectory_len, std::uint64_t seed) {
  if (spec.blocks() < 2) throw validation_error("angle_sublinearity: needs N >= 2");
  if (I == 0 || J == 0 || (I & J) != 0)
    throw validation_error("angle_sublinearity: I and J must be disjoint and non-empty");
  for (int e : topology::set_elements(I | J))
    if (e > spec.blocks()) throw validation_error("angle_sublinearity: block index out of range");

  const int warmup = std::max(50 * spec.d, 100);
  Trajectory traj = oseledets_along_orbit(m, spec, trajectory_len, warmup, seed);

  SublinearityResult res;
  res.low_confidence = trajectory_len < 100;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (int t = 0; t <= trajectory_len; ++t) {
    const Splitting& w = traj.splittings[static_cast<std::size_t>(t)];
    std::vector<Subspace> partsI, partsJ;
    for (int e : topology::set_elements(I)) partsI.push_back(w.parts[static_cast<std::size_t>(e - 1)]);
    for (int e : topology::set_elements(J)) partsJ.push_back(w.parts[static_cast<std::size_t>(e - 1)]);
    Subspace a = partsI.front(), b = partsJ.front();
    for (std::size_t q = 1; q < partsI.size(); ++q) a = linalg::subspace_sum(a, partsI[q]);
    for (std::size_t q = 1; q < partsJ.size(); ++q) b = linalg::subspace_sum(b, partsJ[q]);
    const double angle = linalg::min_principal_angle(a, b);
    const double value = std::log(std::max(std::sin(angle), 1e-300));
    res.series.emplace_back(t, value);
    sx += t;
    sy += value;
    sxx += static_cast<double>(t) * t;
    sxy += t * value;
    ++count;
  }
  const double denom = count * sxx - sx * sx;
  res.slope = denom != 0.0 ? (count * sxy - sx * sy) / denom : 0.0;
  res.intercept = (sy - res.slope * sx) / count;
  return res;
}

std::string sublinearity_csv(const SublinearityResult& r) {
  std::ostringstream os;
  os.precision(17);
  os << "n,log_sin_angle\n";
  for (const auto& [n, v] : r.series) os << n << ',' << v << '\n';
  return os.str();
}

} // namespace flagdim::spectrum
