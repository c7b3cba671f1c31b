#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flagdim/coords.hpp"
#include "flagdim/spectrum.hpp"

namespace flagdim::estimate {

using linalg::Mat;
using linalg::Splitting;
using linalg::Subspace;
using linalg::Vec;
using randwalk::MatrixMeasure;
using spectrum::LyapunovSpectrum;
using topology::AdmissibleTopology;
using topology::LeftFiltration;

struct EnsembleParams {
  int count = 1000;
  int horizon = 400;
  std::uint64_t seed = 0;
  int past_depth = 16;    // backward steps kept for the cylinder estimator
  int max_resample = 50;  // retries on general-position dropouts
  int stationarity_pairs = 500;
};

// Monte Carlo draws of the Oseledets splitting at time 0 together with the
// most recent past steps; every configuration and flag the estimators use is
// assembled from these splittings.
struct FlagEnsemble {
  LyapunovSpectrum spec;
  int horizon = 0;
  std::uint64_t seed = 0;
  int resampled = 0;
  double stationarity_pvalue = 1.0;

  struct Sample {
    std::uint64_t substream;
    std::vector<int> past; // atom indices of g_{-1}, g_{-2}, ...
    Splitting oseledets;
  };
  std::vector<Sample> samples;

  int count() const { return static_cast<int>(samples.size()); }
};

FlagEnsemble sample_flag_ensemble(const MatrixMeasure& m, const LyapunovSpectrum& spec,
                                  const EnsembleParams& params);

// A configuration-valued data point: one subspace per tracked index set.
// Distance is the max over entries of the largest principal angle; entries of
// full or zero rank contribute nothing.
using Point = std::vector<Subspace>;
double point_distance(const Point& a, const Point& b);

// Points of X_T (one entry per open set of T).
std::vector<Point> ensemble_points(const FlagEnsemble& ens, const AdmissibleTopology& t);
// Points of the flag space F_L (one entry per proper non-empty prefix).
std::vector<Point> ensemble_flag_points(const FlagEnsemble& ens, const LeftFiltration& l);

struct EntropyEstimate {
  double value = 0.0;     // clipped below at 0
  double raw_value = 0.0; // unclipped batch mean
  double stderr_ = 0.0;
  std::string method;     // "knn-mi" or "cylinder"
  double param = 0.0;     // k or cylinder depth
  int batches = 0;
  bool bandwidth_widened = false; // cylinder estimator only
};

// k-NN mutual information between the last step index and the flag point
// (Ross-style estimator for a discrete/continuous pair), batch means over 10
// seed groups.
EntropyEstimate furstenberg_entropy(const FlagEnsemble& ens, const LeftFiltration& l, int k = 4);

// Conditional mutual information I(g_{-1}, E_T | E_{T'}) via the chain rule
// I(g, E_T) - I(g, E_{T'}).
EntropyEstimate fiber_entropy(const FlagEnsemble& ens, const AdmissibleTopology& t,
                              const AdmissibleTopology& tp, int k = 4);

// Cylinder-mass ratio estimator with kernel conditioning on configuration
// distance (bandwidth = median pairwise distance / 4).
EntropyEstimate cylinder_entropy(const FlagEnsemble& ens, const AdmissibleTopology& t,
                                 const AdmissibleTopology& tp, int depth);

// Theorem bound sum d_i d_j (chi_i - chi_j) over j not in L(i).
double entropy_cap(const LyapunovSpectrum& spec, const LeftFiltration& l);

struct RadiusLadder {
  double r_max = 0.0; // 0 = auto (median pairwise distance)
  int points = 12;    // dyadic rungs r_max, r_max/2, ...
  std::vector<double> radii(double measured_r_max) const;
};

struct DimensionEstimate {
  bool defined = false;
  double value = 0.0;
  double stderr_ = 0.0;
  double spread = 0.0; // dispersion of per-probe slopes
  std::vector<double> radii;
  std::vector<double> mean_log_mass; // aggregate curve per radius
  int window_begin = 0;
  int window_len = 0;
  int probes_used = 0;
};

// Per-probe slopes of log ball mass against log r over the detected scaling
// window (longest sub-ladder of >= 4 rungs with linear-fit R^2 >= 0.98);
// value is the 20%-trimmed mean.
DimensionEstimate local_dimension(const std::vector<Point>& pts, const RadiusLadder& ladder,
                                  int probes, std::uint64_t seed);
DimensionEstimate local_dimension_euclidean(const std::vector<Vec>& pts, const RadiusLadder& ladder,
                                            int probes, std::uint64_t seed);

struct OneStepDimension {
  EntropyEstimate kappa;
  double chi = 0.0;
  DimensionEstimate ratio;             // kappa / chi with propagated stderr
  std::optional<DimensionEstimate> direct; // ball counting in fiber coordinates
};

OneStepDimension one_step_dimension(const FlagEnsemble& ens, const AdmissibleTopology& t,
                                    const AdmissibleTopology& tp, int k = 4,
                                    bool with_direct = false);

struct PathDimension {
  std::vector<OneStepDimension> steps;
  DimensionEstimate total; // sum of the per-step ratios
};

PathDimension path_dimension(const FlagEnsemble& ens,
                             const std::vector<topology::RefinementStep>& path, int k = 4);

DimensionEstimate product_dimension(const DimensionEstimate& delta,
                                    const DimensionEstimate& delta_prime);

// The piecewise affine profile D with D(0) = kappa and slope -lambda_l over a
// segment of width d_{i_l} d_{j_l}; dim_LY is its root (or the full dimension
// when D stays positive).
struct LyapunovDimensionProfile {
  double kappa = 0.0;
  std::vector<double> lambdas;            // ascending
  std::vector<int> capacities;            // segment widths d_i d_j
  std::vector<std::pair<int, int>> pairs; // the (i, j) behind each segment
  double total_capacity = 0.0;            // dim of the flag space
  double dim_ly = 0.0;
  bool cap_warning = false; // kappa exceeded the theorem cap by > 3 stderr

  double value_at(double s) const;
};

LyapunovDimensionProfile lyapunov_dimension(const LyapunovSpectrum& spec, const LeftFiltration& l,
                                            const EntropyEstimate& kappa);

struct RwEntropyResult {
  std::vector<double> normalized; // H(mu^{*n})/n for n = 1..achieved
  std::vector<std::size_t> support_sizes;
  double value = 0.0; // min over the computed range
  int achieved_n = 0;
  bool truncated = false; // support cap hit before max_n
};

// inf_n H(mu^{*n})/n over n <= max_n with tolerance-based matrix
// deduplication; aborts past 10^6 distinct products.
RwEntropyResult rw_entropy(const MatrixMeasure& m, int max_n);

struct ReportParams {
  spectrum::SpectrumParams spectrum;
  EnsembleParams ensemble;
  int knn_k = 4;
  std::uint64_t seed = 0;
};

struct Report {
  std::string json;                       // the full report document
  std::string spectrum_csv;               // (replica, k, raw_k)
  std::string ball_mass_csv;              // (r, mass) aggregate ladder
  std::string rw_entropy_csv;             // (n, H/n)
  bool lyapunov_bound_holds = false;      // delta <= dim_LY + 2 stderr
  bool entropy_cap_holds = false;         // kappa within the theorem cap
  double delta = 0.0;
  double dim_ly = 0.0;
};

// Full pipeline: spectrum, monotone path to T_0, entropies, dimensions,
// Lyapunov profile, inequality checks.
Report verify_report(const MatrixMeasure& m, const LeftFiltration& l, const ReportParams& params);

} // namespace flagdim::estimate
