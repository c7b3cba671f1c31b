#include <doctest.h>

#include <cmath>

#include "flagdim/bundle.hpp"
#include "flagdim/errors.hpp"
#include "flagdim/linalg.hpp"
#include "flagdim/rng.hpp"
#include "flagdim/topology.hpp"

using namespace flagdim;
using linalg::Mat;
using linalg::Subspace;
using linalg::Vec;

namespace {

Mat random_matrix(int rows, int cols, rng::Stream& stream) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = stream.normal();
  return m;
}

// classical Gram-Schmidt, the independent oracle for orthonormalize
Mat gram_schmidt(const Mat& columns) {
  Mat out(columns.rows(), columns.cols());
  int kept = 0;
  for (int c = 0; c < columns.cols(); ++c) {
    Vec v = columns.col(c);
    for (int k = 0; k < kept; ++k) v -= out.col(k).dot(v) * out.col(k);
    for (int k = 0; k < kept; ++k) v -= out.col(k).dot(v) * out.col(k); // re-orthogonalize
    if (v.norm() > 1e-10) {
      out.col(kept) = v / v.norm();
      ++kept;
    }
  }
  return out.leftCols(kept);
}

} // namespace

TEST_CASE("orthonormalize identity and dependent columns") {
  const Subspace id = linalg::orthonormalize(Mat(Mat::Identity(3, 3)));
  CHECK(id.rank() == 3);
  CHECK((id.projector() - Mat::Identity(3, 3)).norm() < 1e-12);

  Mat dependent(2, 2);
  dependent << 1, 2, 0, 0;
  const Subspace line = linalg::orthonormalize(dependent);
  CHECK(line.rank() == 1);
  CHECK(std::abs(std::abs(line.basis(0, 0)) - 1.0) < 1e-12);

  CHECK(linalg::orthonormalize(std::vector<Vec>{}).rank() == 0);
}

TEST_CASE("orthonormalize matches the Gram-Schmidt oracle projector") {
  rng::Stream stream(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat cols = random_matrix(3, 5, stream);
    const Subspace s = linalg::orthonormalize(cols);
    CHECK(s.rank() == 3);
    const Mat oracle = gram_schmidt(cols);
    CHECK((s.projector() - oracle * oracle.transpose()).norm() < 1e-9);
  }
  const Subspace s = linalg::orthonormalize(random_matrix(6, 4, stream));
  CHECK((s.basis.transpose() * s.basis - Mat::Identity(4, 4)).norm() < 1e-10);
}

TEST_CASE("subspace_sum basics and rank oracle") {
  const Subspace e1 = Subspace::coordinate(3, {0});
  const Subspace e2 = Subspace::coordinate(3, {1});
  const Subspace sum = linalg::subspace_sum(e1, e2);
  CHECK(sum.rank() == 2);
  CHECK(linalg::subspace_equal(sum, Subspace::coordinate(3, {0, 1})));
  CHECK(linalg::subspace_equal(linalg::subspace_sum(e1, e1), e1));

  rng::Stream stream(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Subspace a = linalg::orthonormalize(random_matrix(4, 2, stream));
    const Subspace b = linalg::orthonormalize(random_matrix(4, 3, stream));
    Mat stacked(4, a.rank() + b.rank());
    stacked << a.basis, b.basis;
    Eigen::JacobiSVD<Mat> svd(stacked);
    int oracle_rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()(i) > 1e-8 * svd.singularValues()(0)) ++oracle_rank;
    CHECK(linalg::subspace_sum(a, b).rank() == oracle_rank);
  }

  CHECK_THROWS_AS(linalg::subspace_sum(e1, Subspace::coordinate(2, {0})), validation_error);
}

TEST_CASE("subspace_intersection basics and dimension-count oracle") {
  const Subspace a = Subspace::coordinate(3, {0, 1});
  const Subspace b = Subspace::coordinate(3, {1, 2});
  const Subspace meet = linalg::subspace_intersection(a, b);
  CHECK(meet.rank() == 1);
  CHECK(linalg::subspace_equal(meet, Subspace::coordinate(3, {1})));
  CHECK(linalg::subspace_equal(linalg::subspace_intersection(a, a), a));

  rng::Stream stream(19);
  for (int trial = 0; trial < 20; ++trial) {
    const Subspace x = linalg::orthonormalize(random_matrix(3, 2, stream));
    const Subspace y = linalg::orthonormalize(random_matrix(3, 2, stream));
    const int oracle = x.rank() + y.rank() - linalg::subspace_sum(x, y).rank();
    CHECK(linalg::subspace_intersection(x, y).rank() == oracle);
    CHECK(oracle == 1);
  }
}

TEST_CASE("dimension formula holds on random inputs") {
  rng::Stream stream(23);
  for (int trial = 0; trial < 40; ++trial) {
    const int d = 3 + static_cast<int>(stream.next_u64() % 4);
    const int ka = 1 + static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(d));
    const int kb = 1 + static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(d));
    const Subspace a = linalg::orthonormalize(random_matrix(d, ka, stream));
    const Subspace b = linalg::orthonormalize(random_matrix(d, kb, stream));
    const int sum = linalg::subspace_sum(a, b).rank();
    const int meet = linalg::subspace_intersection(a, b).rank();
    CHECK(sum + meet == a.rank() + b.rank());
  }
}

TEST_CASE("min_principal_angle named values") {
  const Subspace e1 = Subspace::coordinate(2, {0});
  const Subspace e2 = Subspace::coordinate(2, {1});
  CHECK(linalg::min_principal_angle(e1, e2) == doctest::Approx(M_PI / 2).epsilon(1e-12));
  CHECK(linalg::min_principal_angle(e1, e1) == doctest::Approx(0.0).epsilon(1e-12));

  Mat diag(2, 1);
  diag << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const Subspace mixed{2, diag};
  CHECK(linalg::min_principal_angle(e1, mixed) == doctest::Approx(M_PI / 4).epsilon(1e-12));

  CHECK_THROWS_AS(linalg::min_principal_angle(e1, Subspace::zero(2)), degeneracy_error);
}

TEST_CASE("min_principal_angle is symmetric and detects intersections") {
  rng::Stream stream(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Subspace a = linalg::orthonormalize(random_matrix(4, 2, stream));
    const Subspace b = linalg::orthonormalize(random_matrix(4, 2, stream));
    CHECK(linalg::min_principal_angle(a, b) ==
          doctest::Approx(linalg::min_principal_angle(b, a)).epsilon(1e-10));
    const bool intersects = linalg::subspace_intersection(a, b).rank() >= 1;
    CHECK(intersects == (linalg::min_principal_angle(a, b) < 1e-7));
  }
  const Subspace a = linalg::orthonormalize(random_matrix(4, 2, stream));
  Mat shared(4, 2);
  shared.col(0) = a.basis.col(0);
  shared.col(1) = random_matrix(4, 1, stream);
  const Subspace b = linalg::orthonormalize(shared);
  CHECK(linalg::min_principal_angle(a, b) < 1e-7);
}

TEST_CASE("small principal angles survive the acos cliff") {
  // tilting a plane by 1e-7 must come back as a 1e-7 Grassmann distance
  const double eps = 1e-7;
  Mat base(4, 2);
  base.setZero();
  base(0, 0) = 1;
  base(1, 1) = 1;
  Mat tilted = base;
  tilted(2, 0) = std::tan(eps);
  const Subspace a{4, base};
  const Subspace b = linalg::orthonormalize(tilted);
  CHECK(linalg::max_principal_angle(a, b) == doctest::Approx(eps).epsilon(1e-6));
}

TEST_CASE("oblique projections: coordinate splitting and partition of identity") {
  linalg::Splitting split;
  split.parts = {Subspace::coordinate(3, {0}), Subspace::coordinate(3, {1}),
                 Subspace::coordinate(3, {2})};
  const Mat p2 = linalg::oblique_projection(split, 1);
  Mat expected = Mat::Zero(3, 3);
  expected(1, 1) = 1.0;
  CHECK((p2 - expected).norm() < 1e-12);

  rng::Stream stream(5);
  linalg::Splitting random_split = bundle::random_splitting(4, {1, 2, 1}, stream);
  const auto projections = linalg::oblique_projections(random_split);
  Mat sum = Mat::Zero(4, 4);
  for (const auto& p : projections) {
    sum += p;
    CHECK((p * p - p).norm() < 1e-9);
  }
  CHECK((sum - Mat::Identity(4, 4)).norm() < 1e-9);

  for (std::size_t i = 0; i < random_split.parts.size(); ++i) {
    for (std::size_t j = 0; j < random_split.parts.size(); ++j) {
      const Mat image = projections[i] * random_split.parts[j].basis;
      if (i == j)
        CHECK((image - random_split.parts[j].basis).norm() < 1e-9);
      else
        CHECK(image.norm() < 1e-9);
    }
  }
}

TEST_CASE("ill-conditioned splittings are an error, not a NaN") {
  linalg::Splitting split;
  Mat almost = Mat::Identity(2, 2);
  almost(0, 1) = 1.0;
  almost(1, 1) = 1e-14; // nearly dependent directions
  Mat col0 = almost.col(0);
  Vec col1 = almost.col(1) / almost.col(1).norm();
  split.parts = {Subspace{2, col0}, Subspace{2, Mat(col1)}};
  CHECK_THROWS_AS(linalg::oblique_projections(split), degeneracy_error);
}

TEST_CASE("projection rules for compatible splittings") {
  // for V, W compatible with one configuration:
  // P_{V_i} = P_{V_i} P_{W_i} P_{V_i} and P_{W_i} P_{V_j} = 0 for j > i
  rng::Stream stream(77);
  const auto all3 = topology::enumerate_admissible(3);
  for (const auto& tp : all3) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto base = bundle::random_splitting(4, {1, 2, 1}, stream);
      const auto xp = bundle::configuration_from_splitting(tp, base);
      const auto v = bundle::random_compatible_splitting(xp, stream);
      const auto w = bundle::random_compatible_splitting(xp, stream);
      const auto pv = linalg::oblique_projections(v);
      const auto pw = linalg::oblique_projections(w);
      for (int i = 0; i < 3; ++i) {
        CHECK((pv[i] * pw[i] * pv[i] - pv[i]).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((pw[i] * pv[i] * pw[i] - pw[i]).cwiseAbs().maxCoeff() < 1e-9);
        for (int j = i + 1; j < 3; ++j) {
          CHECK((pw[i] * pv[j]).cwiseAbs().maxCoeff() < 1e-9);
          CHECK((pv[i] * pw[j]).cwiseAbs().maxCoeff() < 1e-9);
        }
      }
    }
  }
}
