#include "flagdim/topology.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "flagdim/errors.hpp"

namespace flagdim::topology {

std::vector<int> set_elements(IndexSet s) {
  std::vector<int> out;
  for (int i = 1; s != 0; ++i, s >>= 1)
    if (s & 1u) out.push_back(i);
  return out;
}

std::string set_to_string(IndexSet s) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (int e : set_elements(s)) {
    if (!first) os << ',';
    os << e;
    first = false;
  }
  os << '}';
  return os.str();
}

int LeftFiltration::atom_max(int i) const {
  for (int p : prefix_lengths)
    if (p >= i) return p;
  throw internal_error("left filtration misses the full prefix");
}

IndexSet LeftFiltration::atom(int i) const {
  IndexSet s = 0;
  for (int e = i; e <= atom_max(i); ++e) s |= singleton(e);
  return s;
}

bool LeftFiltration::is_valid() const {
  if (n < 1) return false;
  if (prefix_lengths.empty()) return false;
  if (!std::is_sorted(prefix_lengths.begin(), prefix_lengths.end())) return false;
  if (prefix_lengths.front() != 0 || prefix_lengths.back() != n) return false;
  return std::adjacent_find(prefix_lengths.begin(), prefix_lengths.end()) == prefix_lengths.end();
}

LeftFiltration LeftFiltration::full(int n) {
  LeftFiltration l{n, {}};
  for (int p = 0; p <= n; ++p) l.prefix_lengths.push_back(p);
  return l;
}

LeftFiltration LeftFiltration::trivial(int n) { return LeftFiltration{n, {0, n}}; }

LeftFiltration LeftFiltration::from_inner(int n, const std::vector<int>& inner) {
  LeftFiltration l{n, {0}};
  for (int p : inner) {
    if (p < 1 || p > n) throw validation_error("left filtration: prefix out of range");
    l.prefix_lengths.push_back(p);
  }
  if (l.prefix_lengths.back() != n) l.prefix_lengths.push_back(n);
  std::sort(l.prefix_lengths.begin(), l.prefix_lengths.end());
  l.prefix_lengths.erase(std::unique(l.prefix_lengths.begin(), l.prefix_lengths.end()),
                         l.prefix_lengths.end());
  if (!l.is_valid()) throw validation_error("left filtration: invalid prefix set");
  return l;
}

bool AdmissibleTopology::is_valid() const {
  if (n < 1 || static_cast<int>(atoms.size()) != n) return false;
  for (int i = 1; i <= n; ++i) {
    const IndexSet ti = atom(i);
    if (!contains(ti, i)) return false;
    // admissibility: T(i) within {i..N}
    const IndexSet allowed = ((n == 32 ? ~IndexSet{0} : ((IndexSet{1} << n) - 1u))) &
                             ~((IndexSet{1} << (i - 1)) - 1u);
    if ((ti & ~allowed) != 0) return false;
    // atoms of a genuine topology: j in T(i) implies T(j) subset T(i)
    for (int j : set_elements(ti))
      if ((atom(j) & ~ti) != 0) return false;
  }
  return true;
}

std::vector<IndexSet> AdmissibleTopology::opens() const {
  std::set<IndexSet> seen;
  // closure of atoms under unions
  std::vector<IndexSet> stack(atoms.begin(), atoms.end());
  for (IndexSet a : stack) seen.insert(a);
  bool grew = true;
  while (grew) {
    grew = false;
    std::vector<IndexSet> current(seen.begin(), seen.end());
    for (IndexSet a : current)
      for (IndexSet b : current)
        if (seen.insert(a | b).second) grew = true;
  }
  return {seen.begin(), seen.end()};
}

bool AdmissibleTopology::operator<(const AdmissibleTopology& other) const {
  return atoms < other.atoms;
}

std::string AdmissibleTopology::to_string() const {
  std::ostringstream os;
  for (int i = 1; i <= n; ++i) {
    if (i > 1) os << ' ';
    os << i << ':' << set_to_string(atom(i));
  }
  return os.str();
}

std::vector<AdmissibleTopology> enumerate_admissible(int n) {
  if (n < 1 || n > 6) throw validation_error("enumerate_admissible: n must lie in [1,6]");
  std::vector<AdmissibleTopology> out;
  AdmissibleTopology t;
  t.n = n;
  t.atoms.assign(static_cast<std::size_t>(n), 0);
  // atom i always contains i; the free choices are the elements above i
  std::function<void(int)> rec = [&](int i) {
    if (i > n) {
      if (t.is_valid()) out.push_back(t);
      return;
    }
    const int free_bits = n - i;
    for (IndexSet extra = 0; extra < (IndexSet{1} << free_bits); ++extra) {
      t.atoms[static_cast<std::size_t>(i - 1)] = singleton(i) | (extra << i);
      rec(i + 1);
    }
  };
  rec(1);
  std::sort(out.begin(), out.end());
  return out;
}

std::pair<AdmissibleTopology, AdmissibleTopology> extremes(int n) {
  if (n < 1) throw validation_error("extremes: n must be >= 1");
  AdmissibleTopology finest, coarsest;
  finest.n = coarsest.n = n;
  for (int i = 1; i <= n; ++i) {
    finest.atoms.push_back(singleton(i));
    IndexSet tail = 0;
    for (int e = i; e <= n; ++e) tail |= singleton(e);
    coarsest.atoms.push_back(tail);
  }
  return {finest, coarsest};
}

bool refines(const AdmissibleTopology& t, const AdmissibleTopology& tp) {
  if (t.n != tp.n) throw validation_error("refines: mismatched n");
  for (int i = 1; i <= t.n; ++i)
    if ((t.atom(i) & ~tp.atom(i)) != 0) return false;
  return true;
}

std::optional<std::pair<int, int>> one_step(const AdmissibleTopology& t,
                                            const AdmissibleTopology& tp) {
  if (!refines(t, tp)) throw validation_error("one_step: t does not refine tp");
  std::optional<std::pair<int, int>> found;
  for (int i = 1; i <= t.n; ++i) {
    const IndexSet grown = tp.atom(i) & ~t.atom(i);
    if (grown == 0) continue;
    if (found || set_size(grown) != 1) return std::nullopt;
    found = {i, set_elements(grown).front()};
  }
  return found;
}

double chi_step(int i, int j, const std::vector<double>& chis) {
  if (i < 1 || j < 1 || i >= j || j > static_cast<int>(chis.size()))
    throw validation_error("chi_step: invalid index pair");
  const double value = chis[static_cast<std::size_t>(i - 1)] - chis[static_cast<std::size_t>(j - 1)];
  if (!(value > 0.0)) throw validation_error("chi_step: exponents not strictly decreasing");
  return value;
}

double chi_step(const RefinementStep& step, const std::vector<double>& chis) {
  if (!one_step(step.finer, step.coarser).has_value())
    throw validation_error("chi_step: not a one-step pair");
  return chi_step(step.i, step.j, chis);
}

namespace {

// pairs (i, j) such that growing atom i by j stays admissible and below tp
std::vector<std::pair<int, int>> grow_candidates(const AdmissibleTopology& t,
                                                 const AdmissibleTopology& tp) {
  std::vector<std::pair<int, int>> out;
  for (int i = 1; i <= t.n; ++i) {
    for (int j : set_elements(tp.atom(i) & ~t.atom(i))) {
      // closure stays intact iff T(j) is already inside T(i)+{j}, and every
      // atom containing i also contains j
      if ((t.atom(j) & ~(t.atom(i) | singleton(j))) != 0) continue;
      bool ok = true;
      for (int k = 1; ok && k <= t.n; ++k)
        if (k != i && contains(t.atom(k), i) && !contains(t.atom(k), j)) ok = false;
      if (ok) out.emplace_back(i, j);
    }
  }
  return out;
}

} // namespace

std::vector<RefinementStep> monotone_path(const AdmissibleTopology& t,
                                          const AdmissibleTopology& tp,
                                          const std::vector<double>& chis) {
  if (!refines(t, tp)) throw validation_error("monotone_path: t does not refine tp");
  std::vector<RefinementStep> path;
  std::function<bool(const AdmissibleTopology&, double)> dfs =
      [&](const AdmissibleTopology& current, double bound) -> bool {
    if (current == tp) return true;
    auto candidates = grow_candidates(current, tp);
    std::sort(candidates.begin(), candidates.end(),
              [&](const std::pair<int, int>& a, const std::pair<int, int>& b) {
                const double ca = chi_step(a.first, a.second, chis);
                const double cb = chi_step(b.first, b.second, chis);
                if (ca != cb) return ca > cb;
                return a < b;
              });
    for (const auto& [i, j] : candidates) {
      const double step_chi = chi_step(i, j, chis);
      if (step_chi > bound) continue; // coarsening order must be non-increasing
      AdmissibleTopology next = current;
      next.atoms[static_cast<std::size_t>(i - 1)] |= singleton(j);
      path.push_back(RefinementStep{current, next, i, j});
      if (dfs(next, step_chi)) return true;
      path.pop_back();
    }
    return false;
  };
  if (!dfs(t, std::numeric_limits<double>::infinity()))
    throw internal_error("monotone_path: no monotone path found (should be impossible)");
  return path;
}

AdmissibleTopology filtered_topology(const LeftFiltration& l) {
  if (!l.is_valid()) throw validation_error("filtered_topology: invalid filtration");
  AdmissibleTopology t;
  t.n = l.n;
  for (int i = 1; i <= l.n; ++i) {
    IndexSet s = 0;
    for (int e = i; e <= l.atom_max(i); ++e) s |= singleton(e);
    t.atoms.push_back(s);
  }
  return t;
}

bool is_filtered(const AdmissibleTopology& t) {
  for (int i = 1; i <= t.n; ++i) {
    const auto elems = set_elements(t.atom(i));
    if (elems.back() - i + 1 != static_cast<int>(elems.size())) return false; // not an interval
  }
  // intervals {i..m_i} come from a filtration iff m is a valid atom_max map,
  // which the topology closure already enforces; reconstruct and compare
  std::vector<int> inner;
  for (int i = 1; i <= t.n; ++i) inner.push_back(set_elements(t.atom(i)).back());
  LeftFiltration l = LeftFiltration::from_inner(t.n, inner);
  return filtered_topology(l) == t;
}

std::vector<LeftFiltration> enumerate_left_filtrations(int n) {
  if (n < 1 || n > 12) throw validation_error("enumerate_left_filtrations: n must lie in [1,12]");
  std::vector<LeftFiltration> out;
  const int inner = n - 1;
  for (std::uint32_t mask = 0; mask < (1u << inner); ++mask) {
    std::vector<int> chosen;
    for (int p = 1; p <= inner; ++p)
      if ((mask >> (p - 1)) & 1u) chosen.push_back(p);
    out.push_back(LeftFiltration::from_inner(n, chosen));
  }
  return out;
}

AdmissibleTopology parse_topology(const std::string& text) {
  AdmissibleTopology t;
  std::istringstream in(text);
  std::string chunk;
  std::vector<std::pair<int, IndexSet>> entries;
  while (in >> chunk) {
    const auto colon = chunk.find(':');
    if (colon == std::string::npos || chunk.size() < colon + 3 || chunk[colon + 1] != '{' ||
        chunk.back() != '}')
      throw validation_error("topology: expected entries like 1:{1,3}");
    const int i = std::stoi(chunk.substr(0, colon));
    IndexSet s = 0;
    std::string body = chunk.substr(colon + 2, chunk.size() - colon - 3);
    std::istringstream elems(body);
    std::string e;
    while (std::getline(elems, e, ',')) {
      if (e.empty()) continue;
      const int v = std::stoi(e);
      if (v < 1 || v > 31) throw validation_error("topology: element out of range");
      s |= singleton(v);
    }
    entries.emplace_back(i, s);
  }
  if (entries.empty()) throw validation_error("topology: empty specification");
  std::sort(entries.begin(), entries.end());
  t.n = static_cast<int>(entries.size());
  for (int i = 1; i <= t.n; ++i) {
    if (entries[static_cast<std::size_t>(i - 1)].first != i)
      throw validation_error("topology: atoms must cover 1..N exactly once");
    t.atoms.push_back(entries[static_cast<std::size_t>(i - 1)].second);
  }
  if (!t.is_valid()) throw validation_error("topology: not admissible: " + t.to_string());
  return t;
}

} // namespace flagdim::topology
