#include "flagdim/coords.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "flagdim/errors.hpp"
#include "flagdim/parallel.hpp"
#include "flagdim/rng.hpp"

namespace flagdim::coords {

using randwalk::Word;

NoncommPoly NoncommPoly::zero(int n) { return NoncommPoly{n, {}}; }

NoncommPoly NoncommPoly::constant(int n, long long c) {
  NoncommPoly p{n, {}};
  if (c != 0) p.terms.push_back(Term{c, {}});
  return p;
}

NoncommPoly NoncommPoly::var(int n, int id) {
  NoncommPoly p{n, {}};
  p.terms.push_back(Term{1, {static_cast<std::uint8_t>(id)}});
  return p;
}

NoncommPoly NoncommPoly::operator+(const NoncommPoly& other) const {
  NoncommPoly out{n_blocks, terms};
  out.terms.insert(out.terms.end(), other.terms.begin(), other.terms.end());
  out.canonicalize();
  return out;
}

NoncommPoly NoncommPoly::operator-(const NoncommPoly& other) const {
  return *this + other.scaled(-1);
}

NoncommPoly NoncommPoly::operator*(const NoncommPoly& other) const {
  NoncommPoly out{n_blocks, {}};
  out.terms.reserve(terms.size() * other.terms.size());
  for (const Term& a : terms) {
    for (const Term& b : other.terms) {
      Term t{a.coef * b.coef, a.word};
      t.word.insert(t.word.end(), b.word.begin(), b.word.end());
      out.terms.push_back(std::move(t));
    }
  }
  out.canonicalize();
  return out;
}

NoncommPoly NoncommPoly::scaled(long long c) const {
  if (c == 0) return zero(n_blocks);
  NoncommPoly out{n_blocks, terms};
  for (Term& t : out.terms) t.coef *= c;
  return out;
}

void NoncommPoly::canonicalize() {
  std::sort(terms.begin(), terms.end());
  std::vector<Term> merged;
  for (Term& t : terms) {
    if (!merged.empty() && merged.back().word == t.word) {
      merged.back().coef += t.coef;
    } else {
      merged.push_back(std::move(t));
    }
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(),
                              [](const Term& t) { return t.coef == 0; }),
               merged.end());
  terms = std::move(merged);
}

int NoncommPoly::x_degree(const Term& t) const {
  return static_cast<int>(std::count(t.word.begin(), t.word.end(), std::uint8_t{0}));
}

int NoncommPoly::max_x_degree() const {
  int deg = 0;
  for (const Term& t : terms) deg = std::max(deg, x_degree(t));
  return deg;
}

NoncommPoly NoncommPoly::filter_x_degree(int lo, int hi) const {
  NoncommPoly out{n_blocks, {}};
  for (const Term& t : terms) {
    const int deg = x_degree(t);
    if (deg >= lo && deg <= hi) out.terms.push_back(t);
  }
  return out;
}

Mat NoncommPoly::eval(const Mat& x, const std::vector<Mat>& alphas,
                      const std::vector<Mat>& betas) const {
  const int d = static_cast<int>(x.rows());
  Mat total = Mat::Zero(d, d);
  for (const Term& t : terms) {
    Mat value = Mat::Identity(d, d);
    for (std::uint8_t id : t.word) {
      if (id == 0)
        value = value * x;
      else if (id <= n_blocks)
        value = value * alphas[static_cast<std::size_t>(id - 1)];
      else
        value = value * betas[static_cast<std::size_t>(id - n_blocks - 1)];
    }
    total += static_cast<double>(t.coef) * value;
  }
  return total;
}

std::string NoncommPoly::to_string() const {
  if (terms.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const Term& t : terms) {
    const long long c = t.coef;
    if (c >= 0) {
      if (!first) os << " + ";
    } else {
      os << (first ? "-" : " - ");
    }
    const long long mag = c < 0 ? -c : c;
    bool printed = false;
    if (mag != 1 || t.word.empty()) {
      os << mag;
      printed = true;
    }
    for (std::uint8_t id : t.word) {
      if (printed) os << '.';
      if (id == 0)
        os << 'x';
      else if (id <= n_blocks)
        os << 'a' << static_cast<int>(id);
      else
        os << 'b' << static_cast<int>(id - n_blocks);
      printed = true;
    }
    first = false;
  }
  return os.str();
}

namespace {

NoncommPoly geometric_inverse(int n) {
  // r(x) = 1 - x + x^2 - ... + (-x)^{N-1}; evaluates to (id+f)^{-1} on
  // nilpotent f with f^N = 0
  NoncommPoly r = NoncommPoly::constant(n, 1);
  NoncommPoly power = NoncommPoly::constant(n, 1);
  const NoncommPoly x = NoncommPoly::var(n, 0);
  long long sign = 1;
  for (int k = 1; k < n; ++k) {
    power = power * x;
    sign = -sign;
    r = r + power.scaled(sign);
  }
  return r;
}

} // namespace

ChangePolynomials build_change_poly(const AdmissibleTopology& t, const AdmissibleTopology& tp) {
  if (!topology::refines(t, tp)) throw validation_error("build_change_poly: t must refine tp");
  const int n = t.n;
  ChangePolynomials out;
  out.t = t;
  out.tp = tp;
  out.p.assign(static_cast<std::size_t>(n) + 1,
               std::vector<NoncommPoly>(static_cast<std::size_t>(n) + 1, NoncommPoly::zero(n)));
  out.q = out.p;

  const NoncommPoly r = geometric_inverse(n);
  const NoncommPoly x = NoncommPoly::var(n, 0);
  auto alpha = [&](int k) { return NoncommPoly::var(n, k); };
  auto beta = [&](int k) { return NoncommPoly::var(n, n + k); };

  for (int i = 1; i <= n; ++i) {
    for (int j = 2; j <= n; ++j) {
      if (topology::contains(t.atom(i), j)) {
        NoncommPoly acc = NoncommPoly::zero(n);
        for (int k = 1; k <= j; ++k)
          acc = acc + out.p[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        out.q[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = alpha(j) * acc;
        // p stays zero
      } else {
        NoncommPoly qji = (alpha(j) * r * beta(i)).scaled(-1);
        const NoncommPoly head = alpha(j) * r * x;
        for (int l : topology::set_elements(tp.atom(i) & ~t.atom(i))) {
          for (int k = l; k < j; ++k) {
            qji = qji +
                  head * alpha(k) * out.p[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
          }
        }
        out.q[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = qji;
        NoncommPoly acc = NoncommPoly::zero(n);
        for (int k = 1; k <= j; ++k)
          acc = acc + out.q[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        out.p[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = beta(j) * acc;
      }
    }
  }

  out.total = NoncommPoly::zero(n);
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j)
      out.total = out.total + out.p[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
  return out;
}

Mat eval_change(const AdmissibleTopology& t, const AdmissibleTopology& tp, const Splitting& v,
                const Splitting& w, const Mat& f) {
  if (!topology::refines(t, tp)) throw validation_error("eval_change: t must refine tp");
  const int n = t.n;
  const int d = v.ambient_dim();
  const std::vector<Mat> pv = linalg::oblique_projections(v);
  const std::vector<Mat> pw = linalg::oblique_projections(w);

  // r(f) = (id + f)^{-1} for nilpotent f
  Mat r = Mat::Identity(d, d);
  Mat power = Mat::Identity(d, d);
  double sign = 1.0;
  for (int k = 1; k < n; ++k) {
    power = power * f;
    sign = -sign;
    r += sign * power;
  }

  // the integer polynomial recursion, evaluated directly on matrices
  std::vector<std::vector<Mat>> p(static_cast<std::size_t>(n) + 1,
                                  std::vector<Mat>(static_cast<std::size_t>(n) + 1, Mat::Zero(d, d)));
  std::vector<std::vector<Mat>> q = p;
  for (int i = 1; i <= n; ++i) {
    for (int j = 2; j <= n; ++j) {
      if (topology::contains(t.atom(i), j)) {
        Mat acc = Mat::Zero(d, d);
        for (int k = 1; k <= j; ++k) acc += p[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        q[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
            pv[static_cast<std::size_t>(j - 1)] * acc;
      } else {
        Mat qji = -pv[static_cast<std::size_t>(j - 1)] * r * pw[static_cast<std::size_t>(i - 1)];
        const Mat head = pv[static_cast<std::size_t>(j - 1)] * r * f;
        for (int l : topology::set_elements(tp.atom(i) & ~t.atom(i))) {
          for (int k = l; k < j; ++k) {
            qji += head * pv[static_cast<std::size_t>(k - 1)] *
                   p[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
          }
        }
        q[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = qji;
        Mat acc = Mat::Zero(d, d);
        for (int k = 1; k <= j; ++k) acc += q[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        p[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
            pw[static_cast<std::size_t>(j - 1)] * acc;
      }
    }
  }

  Mat g = Mat::Zero(d, d);
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j) g += p[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
  return g;
}

Mat brute_change(const AdmissibleTopology& t, const AdmissibleTopology& tp, const Splitting& v,
                 const Splitting& w, const Mat& f) {
  return bundle::psi(t, tp, w, bundle::phi(t, tp, v, f));
}

OneStepAffine one_step_affine(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                              const Splitting& v, const Splitting& w) {
  const auto step = topology::one_step(t, tp);
  if (!step) throw validation_error("one_step_affine: not a one-step pair");
  OneStepAffine out;
  out.i = step->first;
  out.j = step->second;
  const std::vector<Mat> pw = linalg::oblique_projections(w);
  out.proj_wi = pw[static_cast<std::size_t>(out.i - 1)];
  out.proj_wj = pw[static_cast<std::size_t>(out.j - 1)];
  const int d = v.ambient_dim();
  out.offset = eval_change(t, tp, v, w, Mat::Zero(d, d));

  // two probe points certify the affine form against the full evaluation
  const auto basis = bundle::nil_basis(t, tp, v);
  if (!basis.empty()) {
    Mat probe = Mat::Zero(d, d);
    for (const auto& b : basis) probe += b.matrix;
    for (double scale : {1.0, -0.5}) {
      const Mat lhs = out.apply(scale * probe);
      const Mat rhs = eval_change(t, tp, v, w, scale * probe);
      if ((lhs - rhs).norm() > 1e-8 * std::max(1.0, rhs.norm()))
        throw internal_error("one_step_affine: affine form disagrees with the polynomial");
    }
  }
  return out;
}

FilteredAffine filtered_affine(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                               const Splitting& v, const Splitting& w) {
  if (!topology::is_filtered(t)) throw validation_error("filtered_affine: T is not filtered");
  const int d = v.ambient_dim();
  return FilteredAffine{eval_change(t, tp, v, w, Mat::Zero(d, d))};
}

Mat conjugate_action(const Mat& g, const Mat& f) {
  return g * f * g.partialPivLu().inverse();
}

Splitting apply_splitting(const Mat& g, const Splitting& v) {
  Splitting out;
  out.parts.reserve(v.parts.size());
  for (const auto& part : v.parts) out.parts.push_back(linalg::apply(g, part));
  return out;
}

FiberChart fiber_chart(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                       const Splitting& v) {
  const auto step = topology::one_step(t, tp);
  if (!step) throw validation_error("fiber_chart: not a one-step pair");
  FiberChart chart;
  chart.i = step->first;
  chart.j = step->second;
  chart.ui = v.parts[static_cast<std::size_t>(chart.i - 1)].basis;
  chart.uj = v.parts[static_cast<std::size_t>(chart.j - 1)].basis;
  chart.di = static_cast<int>(chart.ui.cols());
  chart.dj = static_cast<int>(chart.uj.cols());
  Mat concat = v.concat_basis();
  Mat inv = concat.partialPivLu().inverse();
  int offset = 0;
  for (int e = 1; e < chart.i; ++e) offset += v.parts[static_cast<std::size_t>(e - 1)].rank();
  chart.coord_rows = inv.middleRows(offset, chart.di);
  return chart;
}

Vec FiberChart::vectorize(const Mat& c) const {
  return Eigen::Map<const Vec>(c.data(), c.size());
}

AffineFiberMap compose(const AffineFiberMap& second, const AffineFiberMap& first) {
  return AffineFiberMap{second.linear * first.linear, second.linear * first.offset + second.offset};
}

AffineFiberMap one_step_fiber_map(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                                  const Splitting& v_now, const Splitting& v_next, const Mat& g) {
  const FiberChart now = fiber_chart(t, tp, v_now);
  const FiberChart next = fiber_chart(t, tp, v_next);
  const std::vector<Mat> pn = linalg::oblique_projections(v_next);
  const Mat& proj_i = pn[static_cast<std::size_t>(next.i - 1)];
  const Mat& proj_j = pn[static_cast<std::size_t>(next.j - 1)];
  const Mat ginv = g.partialPivLu().inverse();

  const int k = now.fiber_dim();
  AffineFiberMap map;
  map.linear.resize(k, k);
  for (int col = 0; col < k; ++col) {
    Mat unit = Mat::Zero(now.dj, now.di);
    unit(col % now.dj, col / now.dj) = 1.0; // column-major unit to match vectorize()
    const Mat ambient = now.to_ambient(unit);
    const Mat image = proj_j * (g * ambient * ginv) * proj_i;
    map.linear.col(col) = next.vectorize(next.to_coords(image));
  }
  // offset: where the zero section lands
  const bundle::Configuration zero_section = bundle::configuration_from_splitting(t, v_now);
  const bundle::Configuration pushed = bundle::apply_configuration(g, zero_section);
  const Mat b_ambient = bundle::psi(t, tp, v_next, pushed);
  map.offset = next.vectorize(next.to_coords(b_ambient));
  return map;
}

CocycleResult fiber_cocycle(const MatrixMeasure& m, const spectrum::LyapunovSpectrum& spec,
                            const AdmissibleTopology& t, const AdmissibleTopology& tp, int length,
                            int warmup, std::uint64_t seed, int keep_maps) {
  const auto step = topology::one_step(t, tp);
  if (!step) throw validation_error("fiber_cocycle: not a one-step pair");
  const spectrum::Trajectory traj = spectrum::oseledets_along_orbit(m, spec, length, warmup, seed);

  std::vector<Splitting> perp(static_cast<std::size_t>(length) + 1);
  for (int s = 0; s <= length; ++s) {
    const bundle::Configuration xp =
        bundle::configuration_from_splitting(tp, traj.splittings[static_cast<std::size_t>(s)]);
    perp[static_cast<std::size_t>(s)] = bundle::perpendicular_splitting(xp);
  }

  CocycleResult out;
  out.steps = length;
  const int k = spec.mults[static_cast<std::size_t>(step->first - 1)] *
                spec.mults[static_cast<std::size_t>(step->second - 1)];
  out.fiber_dim = k;
  randwalk::ProductFactorization acc = randwalk::ProductFactorization::identity(k);
  for (int s = 0; s < length; ++s) {
    const Mat& g = m.atoms[static_cast<std::size_t>(traj.steps[static_cast<std::size_t>(s)])].m;
    AffineFiberMap map = one_step_fiber_map(t, tp, perp[static_cast<std::size_t>(s)],
                                            perp[static_cast<std::size_t>(s) + 1], g);
    // Frobenius margin audit of ||A|| <= ||g||_F ||g^{-1}||_F
    Eigen::JacobiSVD<Mat> svd(map.linear);
    const double bound = g.norm() * m.inverse_atom(traj.steps[static_cast<std::size_t>(s)]).norm();
    out.worst_norm_margin =
        std::max(out.worst_norm_margin, std::log(svd.singularValues()(0)) - std::log(bound));
    if (static_cast<int>(out.first_maps.size()) < keep_maps) out.first_maps.push_back(map);
    randwalk::qr_push(acc, map.linear);
  }
  out.log_singular.assign(acc.log_diag.data(), acc.log_diag.data() + k);
  std::sort(out.log_singular.begin(), out.log_singular.end(), std::greater<double>());
  out.exponent_estimates.resize(static_cast<std::size_t>(k));
  for (int s = 0; s < k; ++s)
    out.exponent_estimates[static_cast<std::size_t>(s)] =
        -out.log_singular[static_cast<std::size_t>(s)] / static_cast<double>(length);
  std::sort(out.exponent_estimates.begin(), out.exponent_estimates.end());
  return out;
}

RateResult approximation_rate(const MatrixMeasure& m, const spectrum::LyapunovSpectrum& spec,
                              const AdmissibleTopology& t, const AdmissibleTopology& tp,
                              const std::vector<int>& ladder, std::uint64_t seed) {
  if (t == tp) throw validation_error("approximation_rate: needs a strict refinement");
  if (!topology::refines(t, tp)) throw validation_error("approximation_rate: t must refine tp");
  const int warmup = std::max(50 * spec.d, 100);
  const int maxn = *std::max_element(ladder.begin(), ladder.end());

  const Word back = randwalk::sample_word(m, maxn + warmup, rng::subseed(seed, 0),
                                          randwalk::Direction::backward);
  const Word fwd = randwalk::sample_word(m, warmup, rng::subseed(seed, 1));

  // Oseledets configuration at time 0 from the same two-sided word
  spectrum::FlagSample flags0;
  flags0.unstable = spectrum::unstable_flag(m, back, spec);
  flags0.stable = spectrum::stable_flag(m, fwd, spec);
  const Splitting split0 = spectrum::oseledets_splitting(flags0, spec);
  const bundle::Configuration e_t = bundle::configuration_from_splitting(t, split0);

  RateResult res;
  for (int n : ladder) {
    // flags at time -n: the past beyond -n, and the forward steps
    // g_{-n}, ..., g_{-1} followed by the tail
    Word back_n;
    back_n.direction = randwalk::Direction::backward;
    back_n.indices.assign(back.indices.begin() + n, back.indices.end());
    Word fwd_n;
    fwd_n.direction = randwalk::Direction::forward;
    fwd_n.indices.assign(back.indices.rend() - n, back.indices.rend());
    fwd_n.indices.insert(fwd_n.indices.end(), fwd.indices.begin(), fwd.indices.end());

    spectrum::FlagSample flags_n;
    flags_n.unstable = spectrum::unstable_flag(m, back_n, spec);
    flags_n.stable = spectrum::stable_flag(m, fwd_n, spec);
    const Splitting split_n = spectrum::oseledets_splitting(flags_n, spec);
    const bundle::Configuration xp = bundle::configuration_from_splitting(tp, split_n);
    const Splitting v = bundle::perpendicular_splitting(xp);

    // probes: the zero section and a unit-norm nil direction
    const auto basis = bundle::nil_basis(t, tp, v);
    Mat probe = Mat::Zero(spec.d, spec.d);
    for (const auto& b : basis) probe += b.matrix;
    if (probe.norm() > 0.0) probe /= probe.norm();

    double dist = 0.0;
    for (const Mat& f0 : {Mat(Mat::Zero(spec.d, spec.d)), probe}) {
      bundle::Configuration c = bundle::phi(t, tp, v, f0);
      for (int s = n - 1; s >= 0; --s) {
        const Mat& g = m.atoms[static_cast<std::size_t>(back.indices[static_cast<std::size_t>(s)])].m;
        c = bundle::apply_configuration(g, c);
      }
      dist = std::max(dist, bundle::configuration_distance(c, e_t));
    }
    res.series.emplace_back(n, std::log(std::max(dist, 1e-300)));
  }

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (const auto& [n, logd] : res.series) {
    if (logd < std::log(1e-13)) continue; // below the angle resolution floor
    sx += n;
    sy += logd;
    sxx += static_cast<double>(n) * n;
    sxy += n * logd;
    ++used;
  }
  res.low_confidence = used < 4;
  const double denom = used * sxx - sx * sx;
  res.slope = denom != 0.0 ? (used * sxy - sx * sy) / denom : 0.0;
  return res;
}

double chi_min_gap(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                   const std::vector<double>& chis) {
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= t.n; ++i)
    for (int j : topology::set_elements(tp.atom(i) & ~t.atom(i)))
      gap = std::min(gap, topology::chi_step(i, j, chis));
  return gap;
}

namespace {

Splitting splitting_from_columns(const Mat& columns, const std::vector<int>& dims) {
  Splitting v;
  int col = 0;
  for (int k : dims) {
    v.parts.push_back(linalg::orthonormalize(columns.middleCols(col, k)));
    col += k;
  }
  return v;
}

} // namespace

std::vector<FixtureCase> builtin_fixtures(std::uint64_t seed, int random_trials) {
  std::vector<FixtureCase> cases;

  { // N=4 quadratic case: entries (a-1, -a+b+ad, c+d-1, d-1) at
    // (2,1),(4,1),(4,2),(4,3) for the nested basis w_k = v_k + ... + v_4
    AdmissibleTopology t{4, {topology::singleton(1) | topology::singleton(3),
                             topology::singleton(2) | topology::singleton(3),
                             topology::singleton(3), topology::singleton(4)}};
    const AdmissibleTopology tp = topology::extremes(4).second;
    const std::vector<int> dims{1, 1, 1, 1};
    const Mat vbasis = Mat::Identity(4, 4);
    Mat wbasis(4, 4);
    wbasis << 1, 0, 0, 0, 1, 1, 0, 0, 1, 1, 1, 0, 1, 1, 1, 1;
    const Splitting v = splitting_from_columns(vbasis, dims);
    const Splitting w = splitting_from_columns(wbasis, dims);
    const double a = 2, b = 3, c = 5, dd = 7;
    Mat f = Mat::Zero(4, 4);
    f(1, 0) = a;
    f(3, 0) = b;
    f(3, 1) = c;
    f(3, 2) = dd;

    const Mat g = eval_change(t, tp, v, w, f);
    const Mat x = wbasis.partialPivLu().solve(g * wbasis); // matrix of g in the w basis
    Mat expected = Mat::Zero(4, 4);
    expected(1, 0) = a - 1;
    expected(3, 0) = -a + b + a * dd;
    expected(3, 1) = c + dd - 1;
    expected(3, 2) = dd - 1;
    FixtureCase quad{"n4-quadratic", (x - expected).cwiseAbs().maxCoeff(), false};
    quad.pass = quad.max_error <= 1e-10;
    cases.push_back(quad);

    // nonlinearity witness: the second difference along f has the exact
    // (4,1) entry 2ad in the w basis
    const Mat second = eval_change(t, tp, v, w, 2.0 * f) - 2.0 * g +
                       eval_change(t, tp, v, w, Mat::Zero(4, 4));
    const Mat second_w = wbasis.partialPivLu().solve(second * wbasis);
    Mat expected2 = Mat::Zero(4, 4);
    expected2(3, 0) = 2.0 * a * dd;
    FixtureCase witness{"n4-nonlinearity-witness",
                        (second_w - expected2).cwiseAbs().maxCoeff(), false};
    witness.pass = witness.max_error <= 1e-10 && std::abs(second_w(3, 0)) > 1.0;
    cases.push_back(witness);
  }

  { // N=3 affine case: entries (a - alpha, b - gamma)
    AdmissibleTopology t{3, {topology::singleton(1) | topology::singleton(3),
                             topology::singleton(2), topology::singleton(3)}};
    const AdmissibleTopology tp = topology::extremes(3).second;
    const std::vector<int> dims{1, 1, 1};
    rng::Stream stream(seed);
    FixtureCase affine{"n3-affine", 0.0, false};
    for (int trial = 0; trial < std::max(random_trials, 1); ++trial) {
      auto rational = [&stream]() {
        return (static_cast<double>(stream.next_u64() % 33) - 16.0) / 8.0;
      };
      const double a = rational(), b = rational();
      const double alpha = rational(), beta = rational(), gamma = rational();
      Mat wbasis(3, 3);
      wbasis << 1, 0, 0, alpha, 1, 0, beta, gamma, 1;
      const Splitting v = splitting_from_columns(Mat::Identity(3, 3), dims);
      const Splitting w = splitting_from_columns(wbasis, dims);
      Mat f = Mat::Zero(3, 3);
      f(1, 0) = a;
      f(2, 1) = b;
      const Mat g = eval_change(t, tp, v, w, f);
      const Mat x = wbasis.partialPivLu().solve(g * wbasis);
      Mat expected = Mat::Zero(3, 3);
      expected(1, 0) = a - alpha;
      expected(2, 1) = b - gamma;
      affine.max_error = std::max(affine.max_error, (x - expected).cwiseAbs().maxCoeff());
    }
    affine.pass = affine.max_error <= 1e-10;
    cases.push_back(affine);
  }
  return cases;
}

OracleSweepResult oracle_sweep(int max_n, int trials_per_pair, std::uint64_t seed, double tol) {
  OracleSweepResult out;
  out.tolerance = tol;

  struct PairTask {
    AdmissibleTopology t, tp;
    int n;
  };
  std::vector<PairTask> tasks;
  for (int n = 1; n <= max_n; ++n) {
    const auto all = topology::enumerate_admissible(n);
    for (const auto& t : all)
      for (const auto& tp : all)
        if (topology::refines(t, tp)) tasks.push_back({t, tp, n});
  }

  std::vector<OracleSweepResult::PairStats> stats(tasks.size());
  parallel::run(static_cast<std::ptrdiff_t>(tasks.size()), [&](std::ptrdiff_t idx) {
    const PairTask& task = tasks[static_cast<std::size_t>(idx)];
    rng::Stream stream(rng::subseed(seed, static_cast<std::uint64_t>(idx)));
    OracleSweepResult::PairStats st;
    st.finer = task.t.to_string();
    st.coarser = task.tp.to_string();
    st.n = task.n;
    for (int trial = 0; trial < trials_per_pair; ++trial) {
      std::vector<int> dims(static_cast<std::size_t>(task.n));
      int d = 0;
      for (auto& k : dims) {
        k = 1 + static_cast<int>(stream.next_u64() % 2);
        d += k;
      }
      const Splitting base = bundle::random_splitting(d, dims, stream);
      const bundle::Configuration xp = bundle::configuration_from_splitting(task.tp, base);
      const Splitting v = bundle::random_compatible_splitting(xp, stream);
      const Splitting w = bundle::random_compatible_splitting(xp, stream);
      Mat f = Mat::Zero(d, d);
      for (const auto& b : bundle::nil_basis(task.t, task.tp, v))
        f += (0.5 * stream.normal()) * b.matrix;
      const Mat via_poly = eval_change(task.t, task.tp, v, w, f);
      const Mat via_oracle = brute_change(task.t, task.tp, v, w, f);
      const double err = (via_poly - via_oracle).cwiseAbs().maxCoeff();
      st.max_error = std::max(st.max_error, err);
      ++st.trials;
    }
    stats[static_cast<std::size_t>(idx)] = std::move(st);
  });

  for (auto& st : stats) {
    out.trials += st.trials;
    out.max_error = std::max(out.max_error, st.max_error);
    out.per_pair.push_back(std::move(st));
  }
  out.pass = out.max_error <= tol;
  return out;
}

std::string cocycle_csv(const CocycleResult& r) {
  std::ostringstream os;
  os.precision(17);
  os << "k,log_sk,exponent_estimate\n";
  for (std::size_t k = 0; k < r.log_singular.size(); ++k)
    os << k + 1 << ',' << r.log_singular[k] << ',' << r.exponent_estimates[k] << '\n';
  return os.str();
}

} // namespace flagdim::coords
