#pragma once

#include <Eigen/Dense>
#include <vector>

namespace flagdim::linalg {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Relative singular-value cutoff used for every rank decision in the project.
inline constexpr double kRankTol = 1e-8;
// Two subspaces compare equal when their largest principal angle is below this.
inline constexpr double kEqualTol = 1e-8;
// Oblique projections refuse splittings whose basis condition number exceeds this.
inline constexpr double kConditionLimit = 1e12;

// A linear subspace of R^d stored by a d x k matrix with orthonormal columns.
struct Subspace {
  int ambient_dim = 0;
  Mat basis; // d x k, orthonormal columns; k == 0 encodes the zero subspace

  int rank() const { return static_cast<int>(basis.cols()); }
  bool is_zero() const { return rank() == 0; }

  // orthogonal projector basis * basis^T
  Mat projector() const;

  static Subspace zero(int ambient_dim);
  static Subspace full(int ambient_dim);
  // span of selected standard basis vectors (0-based indices)
  static Subspace coordinate(int ambient_dim, const std::vector<int>& indices);
};

// Span of the given vectors; rank decided at tol relative to the largest
// singular value.  Empty input yields the zero subspace.
Subspace orthonormalize(const std::vector<Vec>& vectors, double tol = kRankTol);
Subspace orthonormalize(const Mat& columns, double tol = kRankTol);

// Orthogonal complement within R^d.
Subspace orthogonal_complement(const Subspace& a);

// Image of a under the (invertible) matrix g, re-orthonormalized.
Subspace apply(const Mat& g, const Subspace& a);

Subspace subspace_sum(const Subspace& a, const Subspace& b, double tol = kRankTol);
Subspace subspace_intersection(const Subspace& a, const Subspace& b, double tol = kRankTol);

// Principal angles between a and b, ascending, min(rank a, rank b) of them.
// Small angles are resolved through the sine route so that values near zero
// are accurate to machine precision, not to the acos() cliff.
std::vector<double> principal_angles(const Subspace& a, const Subspace& b);

// Smallest angle between unit vectors of a and b, in [0, pi/2]; equals
// arccos of the largest singular value of basis_a^T basis_b.
double min_principal_angle(const Subspace& a, const Subspace& b);

// Largest principal angle; the Grassmannian distance used for subspaces of
// equal rank.
double max_principal_angle(const Subspace& a, const Subspace& b);

bool subspace_equal(const Subspace& a, const Subspace& b, double tol = kEqualTol);

// Whether v lies in a (within tol, relative to |v|).
bool contains(const Subspace& a, const Vec& v, double tol = 1e-9);

// An ordered direct-sum decomposition R^d = V_1 + ... + V_N.
struct Splitting {
  std::vector<Subspace> parts;

  int ambient_dim() const { return parts.empty() ? 0 : parts.front().ambient_dim; }
  int size() const { return static_cast<int>(parts.size()); }
  std::vector<int> dims() const;
  int total_dim() const;
  // bases side by side, d x (sum of ranks)
  Mat concat_basis() const;
  double condition_number() const;
};

// Projection onto parts[i] along the direct sum of the others, as a d x d
// matrix.  Throws degeneracy_error when the concatenated basis has condition
// number above kConditionLimit.
Mat oblique_projection(const Splitting& split, int i);

// All N projections at the cost of a single factorization.
std::vector<Mat> oblique_projections(const Splitting& split);

} // namespace flagdim::linalg
