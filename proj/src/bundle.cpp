#include "flagdim/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "flagdim/errors.hpp"

namespace flagdim::bundle {

int Configuration::d() const {
  return spaces.empty() ? 0 : spaces.begin()->second.ambient_dim;
}

const Subspace& Configuration::space(IndexSet I) const {
  auto it = spaces.find(I);
  if (it == spaces.end())
    throw validation_error("configuration: " + topology::set_to_string(I) + " is not open");
  return it->second;
}

Configuration make_configuration(const AdmissibleTopology& t,
                                 const std::vector<Subspace>& atom_spaces) {
  if (static_cast<int>(atom_spaces.size()) != t.n)
    throw validation_error("make_configuration: one space per atom required");
  Configuration x;
  x.topology = t;
  for (IndexSet open : t.opens()) {
    // every open set is the union of the atoms of its elements
    Subspace s = Subspace::zero(atom_spaces.front().ambient_dim);
    bool first = true;
    for (int i : topology::set_elements(open)) {
      const Subspace& a = atom_spaces[static_cast<std::size_t>(i - 1)];
      s = first ? a : linalg::subspace_sum(s, a);
      first = false;
    }
    x.spaces.emplace(open, std::move(s));
  }
  return x;
}

Configuration configuration_from_splitting(const AdmissibleTopology& t, const Splitting& v) {
  if (static_cast<int>(v.parts.size()) != t.n)
    throw validation_error("configuration_from_splitting: splitting size != N");
  std::vector<Subspace> atoms;
  for (int i = 1; i <= t.n; ++i) {
    std::vector<Vec> cols;
    Mat stacked(v.ambient_dim(), 0);
    for (int e : topology::set_elements(t.atom(i))) {
      const Mat& b = v.parts[static_cast<std::size_t>(e - 1)].basis;
      Mat widened(stacked.rows(), stacked.cols() + b.cols());
      widened << stacked, b;
      stacked = std::move(widened);
    }
    atoms.push_back(linalg::orthonormalize(stacked));
  }
  return make_configuration(t, atoms);
}

Configuration restrict_configuration(const Configuration& x, const AdmissibleTopology& coarser) {
  if (!topology::refines(x.topology, coarser))
    throw validation_error("restrict_configuration: topology does not refine the target");
  Configuration out;
  out.topology = coarser;
  for (IndexSet open : coarser.opens()) out.spaces.emplace(open, x.space(open));
  return out;
}

Configuration apply_configuration(const Mat& g, const Configuration& x) {
  Configuration out;
  out.topology = x.topology;
  for (const auto& [open, s] : x.spaces) out.spaces.emplace(open, linalg::apply(g, s));
  return out;
}

bool check_configuration(const Configuration& x, const std::vector<int>& dims, double tol) {
  const auto opens = x.topology.opens();
  for (IndexSet I : opens) {
    int expected = 0;
    for (int e : topology::set_elements(I)) expected += dims[static_cast<std::size_t>(e - 1)];
    if (x.space(I).rank() != expected) return false;
  }
  for (IndexSet I : opens) {
    for (IndexSet J : opens) {
      const Subspace sum = linalg::subspace_sum(x.space(I), x.space(J));
      if (!linalg::subspace_equal(sum, x.space(I | J), tol)) return false;
      if ((I & J) != 0) {
        const Subspace meet = linalg::subspace_intersection(x.space(I), x.space(J));
        if (!linalg::subspace_equal(meet, x.space(I & J), tol)) return false;
      } else {
        const Subspace meet = linalg::subspace_intersection(x.space(I), x.space(J));
        if (meet.rank() != 0) return false;
      }
    }
  }
  return true;
}

double configuration_distance(const Configuration& a, const Configuration& b) {
  if (!(a.topology == b.topology))
    throw validation_error("configuration_distance: mismatched topologies");
  double dist = 0.0;
  for (const auto& [open, s] : a.spaces) {
    if (s.rank() == 0) continue;
    dist = std::max(dist, linalg::max_principal_angle(s, b.space(open)));
  }
  return dist;
}

Splitting perpendicular_splitting(const Configuration& xp) {
  const AdmissibleTopology& tp = xp.topology;
  Splitting v;
  for (int i = 1; i <= tp.n; ++i) {
    const IndexSet atom = tp.atom(i);
    const IndexSet rest = atom & ~topology::singleton(i);
    const Subspace& whole = xp.space(atom);
    if (rest == 0) {
      v.parts.push_back(whole);
    } else {
      v.parts.push_back(
          linalg::subspace_intersection(whole, linalg::orthogonal_complement(xp.space(rest))));
    }
  }
  return v;
}

Splitting random_compatible_splitting(const Configuration& xp, rng::Stream& stream) {
  const AdmissibleTopology& tp = xp.topology;
  Splitting v;
  for (int i = 1; i <= tp.n; ++i) {
    const IndexSet atom = tp.atom(i);
    const IndexSet rest = atom & ~topology::singleton(i);
    const Subspace& whole = xp.space(atom);
    const int di = whole.rank() - (rest == 0 ? 0 : xp.space(rest).rank());
    // a generic di-dimensional subspace of x'_{T'(i)} complements the rest
    Mat coeff(whole.rank(), di);
    for (int r = 0; r < coeff.rows(); ++r)
      for (int c = 0; c < coeff.cols(); ++c) coeff(r, c) = stream.normal();
    v.parts.push_back(linalg::orthonormalize(whole.basis * coeff));
  }
  if (!is_compatible(v, xp)) return random_compatible_splitting(xp, stream); // retry on a null draw
  return v;
}

Splitting random_splitting(int d, const std::vector<int>& dims, rng::Stream& stream) {
  int total = 0;
  for (int k : dims) total += k;
  if (total != d) throw validation_error("random_splitting: dims must sum to d");
  for (int attempt = 0; attempt < 64; ++attempt) {
    Mat m(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) m(r, c) = stream.normal();
    Splitting v;
    int col = 0;
    for (int k : dims) {
      v.parts.push_back(linalg::orthonormalize(m.middleCols(col, k)));
      col += k;
    }
    if (v.condition_number() < 1e6) return v;
  }
  throw degeneracy_error("random_splitting: could not draw a well-conditioned splitting");
}

bool is_compatible(const Splitting& v, const Configuration& xp, double tol) {
  const AdmissibleTopology& tp = xp.topology;
  if (static_cast<int>(v.parts.size()) != tp.n) return false;
  for (IndexSet open : tp.opens()) {
    Subspace s = Subspace::zero(xp.d());
    bool first = true;
    int expected = 0;
    for (int e : topology::set_elements(open)) {
      const Subspace& part = v.parts[static_cast<std::size_t>(e - 1)];
      expected += part.rank();
      s = first ? part : linalg::subspace_sum(s, part);
      first = false;
    }
    if (s.rank() != expected) return false;
    if (!linalg::subspace_equal(s, xp.space(open), tol)) return false;
  }
  return true;
}

bool is_nil(const AdmissibleTopology& t, const AdmissibleTopology& tp, const Splitting& v,
            const Mat& f, double tol) {
  const int d = v.ambient_dim();
  for (int i = 1; i <= t.n; ++i) {
    const IndexSet allowed = tp.atom(i) & ~t.atom(i);
    Mat image = f * v.parts[static_cast<std::size_t>(i - 1)].basis;
    Subspace target = Subspace::zero(d);
    bool first = true;
    for (int e : topology::set_elements(allowed)) {
      target = first ? v.parts[static_cast<std::size_t>(e - 1)]
                     : linalg::subspace_sum(target, v.parts[static_cast<std::size_t>(e - 1)]);
      first = false;
    }
    for (int c = 0; c < image.cols(); ++c) {
      Vec col = image.col(c);
      if (col.norm() <= tol) continue;
      if (target.rank() == 0) return false;
      Vec residual = col - target.basis * (target.basis.transpose() * col);
      if (residual.norm() > tol * std::max(1.0, col.norm())) return false;
    }
  }
  // nilpotency
  Mat power = Mat::Identity(d, d);
  for (int k = 0; k < t.n; ++k) power = power * f;
  return power.norm() <= 1e-8 * std::max(1.0, std::pow(f.norm(), t.n));
}

std::vector<NilMap> nil_basis(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                              const Splitting& v) {
  if (!topology::refines(t, tp)) throw validation_error("nil_basis: t must refine tp");
  const int d = v.ambient_dim();
  Mat concat = v.concat_basis();
  Mat inv = concat.partialPivLu().inverse();
  std::vector<int> row_offset(static_cast<std::size_t>(t.n) + 1, 0);
  for (int i = 1; i <= t.n; ++i)
    row_offset[static_cast<std::size_t>(i)] =
        row_offset[static_cast<std::size_t>(i - 1)] + v.parts[static_cast<std::size_t>(i - 1)].rank();

  std::vector<NilMap> basis;
  for (int i = 1; i <= t.n; ++i) {
    const Mat coords_i = inv.middleRows(row_offset[static_cast<std::size_t>(i - 1)],
                                        v.parts[static_cast<std::size_t>(i - 1)].rank());
    for (int j : topology::set_elements(tp.atom(i) & ~t.atom(i))) {
      const Mat& bj = v.parts[static_cast<std::size_t>(j - 1)].basis;
      for (int a = 0; a < bj.cols(); ++a) {
        for (int b = 0; b < coords_i.rows(); ++b) {
          NilMap unit{t, tp, Mat::Zero(d, d)};
          unit.matrix = bj.col(a) * coords_i.row(b);
          basis.push_back(std::move(unit));
        }
      }
    }
  }
  return basis;
}

int nil_dimension(const AdmissibleTopology& t, const AdmissibleTopology& tp,
                  const std::vector<int>& dims) {
  int total = 0;
  for (int i = 1; i <= t.n; ++i)
    for (int j : topology::set_elements(tp.atom(i) & ~t.atom(i)))
      total += dims[static_cast<std::size_t>(i - 1)] * dims[static_cast<std::size_t>(j - 1)];
  return total;
}

Configuration phi(const AdmissibleTopology& t, const AdmissibleTopology& tp, const Splitting& v,
                  const Mat& f) {
  if (!topology::refines(t, tp)) throw validation_error("phi: t must refine tp");
  if (!is_nil(t, tp, v, f, 1e-7)) throw validation_error("phi: f violates the Nil constraints");
  const int d = v.ambient_dim();
  Mat shifted = Mat::Identity(d, d) + f;
  std::vector<Subspace> atoms;
  for (int i = 1; i <= t.n; ++i) {
    Mat cols(d, 0);
    for (int e : topology::set_elements(t.atom(i))) {
      const Mat& b = v.parts[static_cast<std::size_t>(e - 1)].basis;
      Mat widened(d, cols.cols() + b.cols());
      widened << cols, shifted * b;
      cols = std::move(widened);
    }
    atoms.push_back(linalg::orthonormalize(cols));
  }
  return make_configuration(t, atoms);
}

Mat psi(const AdmissibleTopology& t, const AdmissibleTopology& tp, const Splitting& v,
        const Configuration& x) {
  if (!(x.topology == t)) throw validation_error("psi: configuration is not over T");
  const int d = v.ambient_dim();
  Mat concat = v.concat_basis();
  Mat inv = concat.partialPivLu().inverse();
  std::vector<int> row_offset(static_cast<std::size_t>(t.n) + 1, 0);
  for (int i = 1; i <= t.n; ++i)
    row_offset[static_cast<std::size_t>(i)] =
        row_offset[static_cast<std::size_t>(i - 1)] + v.parts[static_cast<std::size_t>(i - 1)].rank();

  Mat f = Mat::Zero(d, d);
  // the i-good descent: each stage is an independent linear solve against the
  // complement of x_{T(i)}
  for (int i = t.n; i >= 1; --i) {
    const IndexSet free = tp.atom(i) & ~t.atom(i);
    if (free == 0) continue;
    Mat s_basis(d, 0);
    for (int e : topology::set_elements(free)) {
      const Mat& b = v.parts[static_cast<std::size_t>(e - 1)].basis;
      Mat widened(d, s_basis.cols() + b.cols());
      widened << s_basis, b;
      s_basis = std::move(widened);
    }
    const Subspace complement = linalg::orthogonal_complement(x.space(t.atom(i)));
    const Mat constraint = complement.basis.transpose() * s_basis; // rows x dim S
    Eigen::ColPivHouseholderQR<Mat> solver(constraint);
    const Mat& bi = v.parts[static_cast<std::size_t>(i - 1)].basis;
    Mat w_block(d, bi.cols());
    for (int c = 0; c < bi.cols(); ++c) {
      const Vec rhs = -complement.basis.transpose() * bi.col(c);
      const Vec coeffs = solver.solve(rhs);
      const double residual = (constraint * coeffs - rhs).norm();
      if (residual > 1e-8 * std::max(1.0, rhs.norm()))
        throw degeneracy_error("psi: point is not in the fiber (stage " + std::to_string(i) + ")");
      w_block.col(c) = s_basis * coeffs;
    }
    const Mat coords_i = inv.middleRows(row_offset[static_cast<std::size_t>(i - 1)], bi.cols());
    f += w_block * coords_i;
  }
  return f;
}

Configuration assemble_filtered(const LeftFiltration& l,
                                const std::vector<Subspace>& unstable_chain,
                                const std::vector<Subspace>& stable_chain,
                                const std::vector<int>& dims) {
  const int n = l.n;
  if (static_cast<int>(unstable_chain.size()) != n || static_cast<int>(stable_chain.size()) != n)
    throw validation_error("assemble_filtered: chains must have N entries");
  const AdmissibleTopology t = topology::filtered_topology(l);

  auto d_of = [&](int lo, int hi) { // d({lo..hi}), empty when lo > hi
    int total = 0;
    for (int e = lo; e <= hi; ++e) total += dims[static_cast<std::size_t>(e - 1)];
    return total;
  };

  // general position: dim(x_I cap y_J) = d(I cap J) for all I in L, J in T_0
  for (int p : l.prefix_lengths) {
    if (p == 0) continue;
    for (int k = 1; k <= n; ++k) {
      const Subspace meet = linalg::subspace_intersection(
          unstable_chain[static_cast<std::size_t>(p - 1)], stable_chain[static_cast<std::size_t>(k - 1)]);
      if (meet.rank() != d_of(k, p)) {
        std::ostringstream os;
        os << "assemble_filtered: general-position failure at I={1.." << p << "}, J={" << k << ".."
           << n << "} (rank " << meet.rank() << ", expected " << d_of(k, p) << ")";
        throw degeneracy_error(os.str());
      }
    }
  }

  std::vector<Subspace> atoms;
  for (int i = 1; i <= n; ++i) {
    const int p = l.atom_max(i); // T(i) = {i..p} = L(i) cap T_0(i)
    atoms.push_back(linalg::subspace_intersection(unstable_chain[static_cast<std::size_t>(p - 1)],
                                                  stable_chain[static_cast<std::size_t>(i - 1)]));
  }
  return make_configuration(t, atoms);
}

FiberMetric fiber_metric(const Configuration& xp, int i, int j) {
  return FiberMetric{i, j, xp.space(xp.topology.atom(i))};
}

double fiber_norm(const FiberMetric& metric, const Mat& f) {
  return (f * metric.domain.basis).norm();
}

double fiber_distance(const FiberMetric& metric, const Mat& f, const Mat& g) {
  if (f.rows() != g.rows() || f.cols() != g.cols())
    throw validation_error("fiber_distance: mismatched fibers");
  return fiber_norm(metric, f - g);
}

std::string configuration_to_json(const Configuration& x) {
  nlohmann::json doc;
  doc["n"] = x.topology.n;
  doc["atoms"] = nlohmann::json::array();
  for (IndexSet a : x.topology.atoms) doc["atoms"].push_back(a);
  doc["spaces"] = nlohmann::json::object();
  for (const auto& [open, s] : x.spaces) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < s.basis.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < s.basis.cols(); ++c) row.push_back(s.basis(r, c));
      rows.push_back(row);
    }
    doc["spaces"][std::to_string(open)] = {{"d", s.ambient_dim}, {"basis", rows}};
  }
  return doc.dump();
}

Configuration configuration_from_json(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  Configuration x;
  x.topology.n = doc.at("n").get<int>();
  for (const auto& a : doc.at("atoms")) x.topology.atoms.push_back(a.get<IndexSet>());
  if (!x.topology.is_valid()) throw validation_error("configuration: invalid topology");
  for (const auto& [key, entry] : doc.at("spaces").items()) {
    Subspace s;
    s.ambient_dim = entry.at("d").get<int>();
    const auto& rows = entry.at("basis");
    const int r = static_cast<int>(rows.size());
    const int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
    s.basis.resize(r, c);
    for (int rr = 0; rr < r; ++rr)
      for (int cc = 0; cc < c; ++cc) s.basis(rr, cc) = rows[rr][cc].get<double>();
    x.spaces.emplace(static_cast<IndexSet>(std::stoul(key)), std::move(s));
  }
  return x;
}

} // namespace flagdim::bundle
