#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flagdim/linalg.hpp"
#include "flagdim/randwalk.hpp"
#include "flagdim/topology.hpp"

namespace flagdim::spectrum {

using linalg::Mat;
using linalg::Splitting;
using linalg::Subspace;
using linalg::Vec;
using randwalk::MatrixMeasure;
using randwalk::Word;

struct SpectrumParams {
  int horizon = 2000;
  int replicas = 64;
  double cluster_tol = 0.0; // 0 = auto: 5x pooled standard error
  std::uint64_t seed = 0;
};

struct LyapunovSpectrum {
  int d = 0;
  std::vector<double> raw;        // per-direction exponents, sorted descending
  std::vector<double> raw_stderr; // matching standard errors
  std::vector<double> chis;       // clustered exponents chi_1 > ... > chi_N
  std::vector<int> mults;         // multiplicities d_1 ... d_N
  double cluster_tol = 0.0;
  int horizon = 0;
  int replicas = 0;
  bool single_cluster_warning = false; // tolerance swallowed the whole spread
  std::vector<std::vector<double>> per_replica; // replicas x d, for CSV export

  int blocks() const { return static_cast<int>(chis.size()); }
  // d_1 + ... + d_i
  int prefix_dim(int i) const;
  // d(I) for an index set over blocks
  int dim_of(topology::IndexSet I) const;
};

LyapunovSpectrum lyapunov_spectrum(const MatrixMeasure& m, const SpectrumParams& params);

std::string spectrum_csv(const LyapunovSpectrum& spec);

// Nested unstable chain E_1+...+E_i (i = 1..N) and stable chain E_k+...+E_N
// (k = 1..N) estimated at time 0.
struct FlagSample {
  std::vector<Subspace> unstable;
  std::vector<Subspace> stable;
};

// Unstable flag members are the spans of the leading d(1..i) columns of the
// accumulated orthogonal factor of g_{-n}^0.
std::vector<Subspace> unstable_flag(const MatrixMeasure& m, const Word& backward_word,
                                    const LyapunovSpectrum& spec);

// Stable flag members come from the trailing right-singular directions of
// g_0^n, read off the transposed product's orthogonal factor.
std::vector<Subspace> stable_flag(const MatrixMeasure& m, const Word& forward_word,
                                  const LyapunovSpectrum& spec);

// E_i = (E_1+...+E_i) intersect (E_i+...+E_N); throws degeneracy_error with a
// retry hint when the chains are not in general position.
Splitting oseledets_splitting(const FlagSample& fs, const LyapunovSpectrum& spec);

// One two-sided draw: backward and forward words of the given horizon from a
// single substream, with the flags computed from them.
struct TwoSidedSample {
  FlagSample flags;
  std::vector<int> backward; // atom indices of g_{-1}, g_{-2}, ...
  std::vector<int> forward;  // atom indices of g_0, g_1, ...
};
TwoSidedSample sample_flag_pair(const MatrixMeasure& m, const LyapunovSpectrum& spec,
                                int horizon, std::uint64_t seed);

// Covariant sweep along one orbit: unstable flags pushed forward from a
// backward warmup window, stable flags pulled back from a forward tail window,
// splittings intersected at every time 0..length.
struct Trajectory {
  std::vector<int> steps;            // atom indices of g_0 ... g_{length-1}
  std::vector<FlagSample> flags;     // length+1 entries
  std::vector<Splitting> splittings; // length+1 entries
};
Trajectory oseledets_along_orbit(const MatrixMeasure& m, const LyapunovSpectrum& spec,
                                 int length, int warmup, std::uint64_t seed);

struct SublinearityResult {
  double slope = 0.0;
  double intercept = 0.0;
  bool low_confidence = false;
  std::vector<std::pair<int, double>> series; // (n, log sin angle)
};

// Least-squares slope of n -> log sin angle(E_I, E_J) along an orbit; the
// Oseledets angle condition predicts slope -> 0.
SublinearityResult angle_sublinearity(const MatrixMeasure& m, const LyapunovSpectrum& spec,
                                      topology::IndexSet I, topology::IndexSet J,
                                      int trajectory_len, std::uint64_t seed);

std::string sublinearity_csv(const SublinearityResult& r);

} // namespace flagdim::spectrum
