#include "flagdim/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "flagdim/errors.hpp"

namespace flagdim::linalg {

namespace {

Mat thin_svd_basis(const Mat& m, double tol, int max_rank = -1) {
  if (m.cols() == 0 || m.rows() == 0) return Mat(m.rows(), 0);
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? sv(0) * tol : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff && sv(i) > 0.0) ++rank;
  if (max_rank >= 0) rank = std::min(rank, max_rank);
  return svd.matrixU().leftCols(rank);
}

} // namespace

Mat Subspace::projector() const {
  if (rank() == 0) return Mat::Zero(ambient_dim, ambient_dim);
  return basis * basis.transpose();
}

Subspace Subspace::zero(int ambient_dim) {
  return Subspace{ambient_dim, Mat(ambient_dim, 0)};
}

Subspace Subspace::full(int ambient_dim) {
  return Subspace{ambient_dim, Mat::Identity(ambient_dim, ambient_dim)};
}

Subspace Subspace::coordinate(int ambient_dim, const std::vector<int>& indices) {
  Mat b = Mat::Zero(ambient_dim, static_cast<int>(indices.size()));
  for (std::size_t c = 0; c < indices.size(); ++c) b(indices[c], static_cast<int>(c)) = 1.0;
  return Subspace{ambient_dim, b};
}

Subspace orthonormalize(const Mat& columns, double tol) {
  return Subspace{static_cast<int>(columns.rows()), thin_svd_basis(columns, tol)};
}

Subspace orthonormalize(const std::vector<Vec>& vectors, double tol) {
  if (vectors.empty()) return Subspace::zero(0);
  const int d = static_cast<int>(vectors.front().size());
  Mat m(d, static_cast<int>(vectors.size()));
  for (std::size_t c = 0; c < vectors.size(); ++c) {
    if (vectors[c].size() != d) throw validation_error("orthonormalize: vectors of mixed length");
    m.col(static_cast<int>(c)) = vectors[c];
  }
  return orthonormalize(m, tol);
}

Subspace orthogonal_complement(const Subspace& a) {
  const int d = a.ambient_dim;
  if (a.rank() == 0) return Subspace::full(d);
  if (a.rank() == d) return Subspace::zero(d);
  // full SVD of the basis: trailing left singular vectors span the complement
  Eigen::JacobiSVD<Mat> svd(a.basis, Eigen::ComputeFullU);
  return Subspace{d, svd.matrixU().rightCols(d - a.rank())};
}

Subspace apply(const Mat& g, const Subspace& a) {
  if (g.cols() != a.ambient_dim) throw validation_error("apply: dimension mismatch");
  // image of an invertible map keeps the rank; cap it so roundoff can't grow it
  Mat image = g * a.basis;
  return Subspace{static_cast<int>(g.rows()), thin_svd_basis(image, kRankTol, a.rank())};
}

Subspace subspace_sum(const Subspace& a, const Subspace& b, double tol) {
  if (a.ambient_dim != b.ambient_dim)
    throw validation_error("subspace_sum: ambient dimension mismatch");
  Mat stacked(a.ambient_dim, a.rank() + b.rank());
  stacked << a.basis, b.basis;
  return Subspace{a.ambient_dim, thin_svd_basis(stacked, tol)};
}

Subspace subspace_intersection(const Subspace& a, const Subspace& b, double tol) {
  if (a.ambient_dim != b.ambient_dim)
    throw validation_error("subspace_intersection: ambient dimension mismatch");
  const int d = a.ambient_dim;
  // v lies in a iff it is orthogonal to a's complement; the intersection is the
  // null space of the two complements' transposes stacked as row constraints
  Subspace ca = orthogonal_complement(a);
  Subspace cb = orthogonal_complement(b);
  Mat rows(ca.rank() + cb.rank(), d);
  if (ca.rank() > 0) rows.topRows(ca.rank()) = ca.basis.transpose();
  if (cb.rank() > 0) rows.bottomRows(cb.rank()) = cb.basis.transpose();
  if (rows.rows() == 0) return Subspace::full(d);
  Eigen::JacobiSVD<Mat> svd(rows, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? std::max(sv(0), 1.0) * tol : 0.0;
  int row_rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++row_rank;
  return Subspace{d, svd.matrixV().rightCols(d - row_rank)};
}

std::vector<double> principal_angles(const Subspace& a, const Subspace& b) {
  if (a.rank() == 0 || b.rank() == 0)
    throw degeneracy_error("principal_angles: undefined for a rank-0 subspace");
  const int m = std::min(a.rank(), b.rank());
  Mat c = a.basis.transpose() * b.basis;
  Eigen::JacobiSVD<Mat> cos_svd(c);
  // sines: singular values of (I - P_a) b, ascending order pairs with the
  // cosines' descending order
  const Subspace& small = (a.rank() <= b.rank()) ? b : a;
  const Subspace& big = (a.rank() <= b.rank()) ? a : b;
  Mat s = small.basis - big.basis * (big.basis.transpose() * small.basis);
  Eigen::JacobiSVD<Mat> sin_svd(s);
  std::vector<double> angles(m);
  for (int i = 0; i < m; ++i) {
    const double cosv = std::clamp(cos_svd.singularValues()(i), 0.0, 1.0);
    if (cosv * cosv < 0.5) {
      angles[i] = std::acos(cosv);
    } else {
      // sin singular values are descending; the i-th largest cosine pairs with
      // the i-th smallest sine
      const double sinv =
          std::clamp(sin_svd.singularValues()(sin_svd.singularValues().size() - 1 - i), 0.0, 1.0);
      angles[i] = std::asin(sinv);
    }
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

double min_principal_angle(const Subspace& a, const Subspace& b) {
  return principal_angles(a, b).front();
}

double max_principal_angle(const Subspace& a, const Subspace& b) {
  return principal_angles(a, b).back();
}

bool subspace_equal(const Subspace& a, const Subspace& b, double tol) {
  if (a.ambient_dim != b.ambient_dim || a.rank() != b.rank()) return false;
  if (a.rank() == 0) return true;
  return max_principal_angle(a, b) < tol;
}

bool contains(const Subspace& a, const Vec& v, double tol) {
  const double norm = v.norm();
  if (norm == 0.0) return true;
  if (a.rank() == 0) return false;
  Vec residual = v - a.basis * (a.basis.transpose() * v);
  return residual.norm() <= tol * norm;
}

std::vector<int> Splitting::dims() const {
  std::vector<int> out(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) out[i] = parts[i].rank();
  return out;
}

int Splitting::total_dim() const {
  int t = 0;
  for (const auto& p : parts) t += p.rank();
  return t;
}

Mat Splitting::concat_basis() const {
  const int d = ambient_dim();
  Mat b(d, total_dim());
  int col = 0;
  for (const auto& p : parts) {
    b.middleCols(col, p.rank()) = p.basis;
    col += p.rank();
  }
  return b;
}

double Splitting::condition_number() const {
  Mat b = concat_basis();
  if (b.cols() == 0) return 1.0;
  Eigen::JacobiSVD<Mat> svd(b);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return svd.singularValues()(0) / smin;
}

std::vector<Mat> oblique_projections(const Splitting& split) {
  const int d = split.ambient_dim();
  if (split.total_dim() != d)
    throw validation_error("oblique_projections: parts do not fill the ambient space");
  if (split.condition_number() > kConditionLimit)
    throw degeneracy_error("oblique_projections: ill-conditioned splitting");
  Mat b = split.concat_basis();
  Mat binv = b.partialPivLu().inverse();
  std::vector<Mat> projections;
  projections.reserve(split.parts.size());
  int row = 0;
  for (const auto& part : split.parts) {
    projections.push_back(part.basis * binv.middleRows(row, part.rank()));
    row += part.rank();
  }
  return projections;
}

Mat oblique_projection(const Splitting& split, int i) {
  return oblique_projections(split)[static_cast<std::size_t>(i)];
}

} // namespace flagdim::linalg
