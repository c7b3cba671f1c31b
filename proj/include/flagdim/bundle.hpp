#pragma once

#include <map>
#include <vector>

#include "flagdim/linalg.hpp"
#include "flagdim/rng.hpp"
#include "flagdim/topology.hpp"

namespace flagdim::bundle {

using linalg::Mat;
using linalg::Splitting;
using linalg::Subspace;
using linalg::Vec;
using topology::AdmissibleTopology;
using topology::IndexSet;
using topology::LeftFiltration;

// A point of the configuration space X_T: one subspace per open set, closed
// under sums and intersections.
struct Configuration {
  AdmissibleTopology topology;
  std::map<IndexSet, Subspace> spaces; // keyed by open set, empty set omitted

  int d() const;
  const Subspace& space(IndexSet I) const;
  const Subspace& atom_space(int i) const { return space(topology.atom(i)); }
};

// Build the configuration from its atom spaces; the other opens are completed
// as sums.
Configuration make_configuration(const AdmissibleTopology& t,
                                 const std::vector<Subspace>& atom_spaces);

// x_I = sum of V_i over i in I; this is phi_V(0).
Configuration configuration_from_splitting(const AdmissibleTopology& t, const Splitting& v);

// Forget the spaces outside the coarser topology (the bundle projection).
Configuration restrict_configuration(const Configuration& x, const AdmissibleTopology& coarser);

// Push every space forward by g and re-orthonormalize.
Configuration apply_configuration(const Mat& g, const Configuration& x);

// Verify dimensions d(I) and the sum/intersection axioms within tol.
bool check_configuration(const Configuration& x, const std::vector<int>& dims,
                         double tol = 1e-7);

// Max over open sets of the largest principal angle.
double configuration_distance(const Configuration& a, const Configuration& b);

// V_i = x'_{T'(i)} intersect (x'_{T'(i) minus i})^perp, with the convention
// that the empty index set names the zero subspace.
Splitting perpendicular_splitting(const Configuration& xp);

// A random splitting compatible with x' (each V_i a generic complement of
// x'_{T'(i) minus i} inside x'_{T'(i)}).
Splitting random_compatible_splitting(const Configuration& xp, rng::Stream& stream);

// A generic splitting of R^d with the given part dimensions (Gaussian bases,
// redrawn while the concatenated basis is badly conditioned).
Splitting random_splitting(int d, const std::vector<int>& dims, rng::Stream& stream);

bool is_compatible(const Splitting& v, const Configuration& xp, double tol = 1e-7);

// An element of Nil_{T,T'}(V): a linear map with f(V_i) inside the direct sum
// of V_j over j in T'(i) \ T(i).  The matrix is in ambient coordinates.
struct NilMap {
  AdmissibleTopology source; // T
  AdmissibleTopology target; // T'
  Mat matrix;
};

bool is_nil(const AdmissibleTopology& t, const AdmissibleTopology& tp, const Splitting& v,
            const Mat& f, double tol = 1e-9);

// Blockwise basis of matrix units V_i -> V_j; its size is the fiber dimension
// sum d_i d_j over j in T'(i) \ T(i).
std::vector<NilMap> nil_basis(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                              const Splitting& v);

int nil_dimension(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                  const std::vector<int>& dims);

// phi_V(f)_I = (id + f)(sum of V_i over I).
Configuration phi(const AdmissibleTopology& t, const AdmissibleTopology& tp, const Splitting& v,
                  const Mat& f);

// The unique f with phi_V(f) = x, solved per block by the i-good descent:
// for each basis vector u of V_i the unique w in the span of V_j,
// j in T'(i) \ T(i), with u + w in x_{T(i)}.
Mat psi(const AdmissibleTopology& t, const AdmissibleTopology& tp, const Splitting& v,
        const Configuration& x);

// F_L(x, y)_{I cap J} = x_I cap y_J for the filtered topology generated by L
// and T_0.  unstable_chain[i-1] must span x_{1..i}, stable_chain[k-1] must
// span y_{k..N}.  Throws naming the violating pair when the inputs are not in
// general position.
Configuration assemble_filtered(const LeftFiltration& l,
                                const std::vector<Subspace>& unstable_chain,
                                const std::vector<Subspace>& stable_chain,
                                const std::vector<int>& dims);

// Distance on a one-step fiber: Frobenius norm of the difference restricted
// to x'_{T'(i)}.
struct FiberMetric {
  int i = 0;
  int j = 0;
  Subspace domain; // x'_{T'(i)}
};

FiberMetric fiber_metric(const Configuration& xp, int i, int j);
double fiber_norm(const FiberMetric& metric, const Mat& f);
double fiber_distance(const FiberMetric& metric, const Mat& f, const Mat& g);

// JSON round trip for archival (basis matrices row-major).
std::string configuration_to_json(const Configuration& x);
Configuration configuration_from_json(const std::string& text);

} // namespace flagdim::bundle
