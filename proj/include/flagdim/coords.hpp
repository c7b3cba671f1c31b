#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flagdim/bundle.hpp"
#include "flagdim/spectrum.hpp"

namespace flagdim::coords {

using bundle::Configuration;
using linalg::Mat;
using linalg::Splitting;
using linalg::Vec;
using randwalk::MatrixMeasure;
using topology::AdmissibleTopology;

// Integer polynomial in the non-commuting variables x, a_1..a_N, b_1..b_N
// (a_i evaluates to the projection onto V_i, b_i onto W_i).
struct NoncommPoly {
  // variable ids: 0 is x, 1..N are a_i, N+1..2N are b_i
  struct Term {
    long long coef;
    std::vector<std::uint8_t> word; // empty word = identity

    bool operator<(const Term& other) const { return word < other.word; }
  };

  int n_blocks = 0;
  std::vector<Term> terms;

  static NoncommPoly zero(int n);
  static NoncommPoly constant(int n, long long c);
  static NoncommPoly var(int n, int id);

  bool is_zero() const { return terms.empty(); }
  NoncommPoly operator+(const NoncommPoly& other) const;
  NoncommPoly operator-(const NoncommPoly& other) const;
  NoncommPoly operator*(const NoncommPoly& other) const;
  NoncommPoly scaled(long long c) const;
  void canonicalize();

  int x_degree(const Term& t) const;
  int max_x_degree() const;
  // the sub-polynomial whose terms use x between lo and hi times
  NoncommPoly filter_x_degree(int lo, int hi) const;

  Mat eval(const Mat& x, const std::vector<Mat>& alphas, const std::vector<Mat>& betas) const;
  std::string to_string() const; // signed word sum, e.g. "- a3 r b1 + ..."
};

// The p_{j,i}, q_{j,i} family and the assembled change-of-coordinates
// polynomial p_{T,T'} with integer coefficients.
struct ChangePolynomials {
  AdmissibleTopology t, tp;
  // 1-based [j][i]; p[j][i](X) should evaluate to proj_{W_j} g proj_{W_i}
  std::vector<std::vector<NoncommPoly>> p, q;
  NoncommPoly total;
};

ChangePolynomials build_change_poly(const AdmissibleTopology& t, const AdmissibleTopology& tp);

// Evaluate the change of coordinates psi_W(phi_V(f)) through the polynomial
// recursion with numeric matrices.  Returns the ambient matrix of the image
// Nil map over W.
Mat eval_change(const AdmissibleTopology& t, const AdmissibleTopology& tp, const Splitting& v,
                const Splitting& w, const Mat& f);

// Independent oracle for eval_change: the constructive inverse applied to the
// parametrized configuration.
Mat brute_change(const AdmissibleTopology& t, const AdmissibleTopology& tp, const Splitting& v,
                 const Splitting& w, const Mat& f);

// One-step pairs: the change of coordinates is affine with linear part
// f -> proj_{W_j} f proj_{W_i}.
struct OneStepAffine {
  int i = 0, j = 0;
  Mat proj_wj, proj_wi;
  Mat offset; // value at f = 0

  Mat linear(const Mat& f) const { return proj_wj * f * proj_wi; }
  Mat apply(const Mat& f) const { return linear(f) + offset; }
};
OneStepAffine one_step_affine(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                              const Splitting& v, const Splitting& w);

// Filtered T: the change of coordinates is f -> g_0 + f (id + g_0).
struct FilteredAffine {
  Mat g0;

  Mat apply(const Mat& f) const {
    return g0 + f * (Mat::Identity(g0.rows(), g0.cols()) + g0);
  }
};
FilteredAffine filtered_affine(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                               const Splitting& v, const Splitting& w);

// phi_V^{-1} g phi_{g^{-1}V} is conjugation; returns g f g^{-1} (a Nil map
// for the pushed-forward splitting gV).
Mat conjugate_action(const Mat& g, const Mat& f);
Splitting apply_splitting(const Mat& g, const Splitting& v);

// Coordinates on a one-step fiber: f = U_j C R_i with U orthonormal part
// bases and R_i the oblique coordinate rows; the Euclidean norm of C is the
// fiber Frobenius norm for perpendicular splittings.
struct FiberChart {
  int i = 0, j = 0;
  int di = 0, dj = 0;
  Mat ui, uj;      // orthonormal bases of V_i, V_j
  Mat coord_rows;  // d_i x d extraction of V_i coordinates

  int fiber_dim() const { return di * dj; }
  Mat to_ambient(const Mat& c) const { return uj * c * coord_rows; }
  Mat to_coords(const Mat& ambient) const { return uj.transpose() * ambient * ui; }
  Vec vectorize(const Mat& c) const;
};
FiberChart fiber_chart(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                       const Splitting& v);

// Linear part and offset of one step of the fiber dynamics, as a matrix on
// vectorized fiber coordinates.
struct AffineFiberMap {
  Mat linear;
  Vec offset;
};
AffineFiberMap compose(const AffineFiberMap& second, const AffineFiberMap& first);
AffineFiberMap one_step_fiber_map(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                                  const Splitting& v_now, const Splitting& v_next, const Mat& g);

// Accumulated singular-value exponents of the cocycle A_0^n along one orbit;
// the contract is -(1/n) log s_k -> chi_i - chi_j for every k.
struct CocycleResult {
  int steps = 0;
  int fiber_dim = 0;
  std::vector<double> log_singular;            // accumulated, length fiber_dim
  std::vector<double> exponent_estimates;      // -(log s_k)/n, sorted
  double worst_norm_margin = 0.0;              // max over steps of log ||A|| - log (||g||_F ||g^-1||_F)
  std::vector<AffineFiberMap> first_maps;      // leading per-step maps kept for composition checks
};
CocycleResult fiber_cocycle(const MatrixMeasure& m, const spectrum::LyapunovSpectrum& spec,
                            const AdmissibleTopology& t, const AdmissibleTopology& tp, int length,
                            int warmup, std::uint64_t seed, int keep_maps = 0);

// Measured decay rate of dist(g_{-n}^0 phi_{V(sigma^{-n})}(f0), E_T) over a
// ladder of n; the contract is slope <= -min gap + slack.
struct RateResult {
  double slope = 0.0;
  bool low_confidence = false;
  std::vector<std::pair<int, double>> series; // (n, log distance)
};
RateResult approximation_rate(const MatrixMeasure& m, const spectrum::LyapunovSpectrum& spec,
                              const AdmissibleTopology& t, const AdmissibleTopology& tp,
                              const std::vector<int>& ladder, std::uint64_t seed);

// min over i and j in T'(i) \ T(i) of chi_i - chi_j
double chi_min_gap(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                   const std::vector<double>& chis);

std::string cocycle_csv(const CocycleResult& r);

// Two hand-checkable change-of-coordinates cases with exact expected entries:
// an N=4 pair whose change is quadratic and an N=3 filtered pair whose change
// is affine.  random_trials draws rational inputs for the affine case.
struct FixtureCase {
  std::string name;
  double max_error = 0.0;
  bool pass = false;
};
std::vector<FixtureCase> builtin_fixtures(std::uint64_t seed, int random_trials);

// eval_change against the constructive inverse on every admissible pair up to
// max_n blocks, with block dimensions drawn from {1,2}.
struct OracleSweepResult {
  struct PairStats {
    std::string finer, coarser;
    int n = 0;
    long trials = 0;
    double max_error = 0.0;
  };
  std::vector<PairStats> per_pair;
  long trials = 0;
  double max_error = 0.0;
  double tolerance = 1e-8;
  bool pass = true;
};
OracleSweepResult oracle_sweep(int max_n, int trials_per_pair, std::uint64_t seed,
                               double tol = 1e-8);

} // namespace flagdim::coords
