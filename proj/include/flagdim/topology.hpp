#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace flagdim::topology {

// Index sets over {1..N} are stored as bitmasks with bit i-1 for element i.
using IndexSet = std::uint32_t;

inline IndexSet singleton(int i) { return IndexSet{1} << (i - 1); }
inline bool contains(IndexSet s, int i) { return (s >> (i - 1)) & 1u; }
inline int set_size(IndexSet s) { return __builtin_popcount(s); }
std::vector<int> set_elements(IndexSet s);
std::string set_to_string(IndexSet s);

// A chain of prefix sets {1..p}, always containing the empty set and {1..N}.
struct LeftFiltration {
  int n = 0;
  std::vector<int> prefix_lengths; // sorted, includes 0 and n

  // largest element of the atom L(i), i.e. the smallest stored prefix >= i
  int atom_max(int i) const;
  IndexSet atom(int i) const;
  bool is_valid() const;

  static LeftFiltration full(int n);     // all prefixes: full flags
  static LeftFiltration trivial(int n);  // {0, n} only
  static LeftFiltration from_inner(int n, const std::vector<int>& inner);
};

// A topology on {1..N} specified by its atoms T(i); admissible means
// T(i) is contained in {i,...,N} and the atoms close under the topology axiom
// j in T(i) => T(j) subset T(i).
struct AdmissibleTopology {
  int n = 0;
  std::vector<IndexSet> atoms; // atoms[i-1] = T(i)

  IndexSet atom(int i) const { return atoms[static_cast<std::size_t>(i - 1)]; }
  bool is_valid() const;
  // every open set (all unions of atoms, deduplicated, sorted), without the
  // empty set
  std::vector<IndexSet> opens() const;
  bool operator==(const AdmissibleTopology& other) const = default;
  bool operator<(const AdmissibleTopology& other) const;

  std::string to_string() const; // "1:{1,3} 2:{2,3} 3:{3}"
};

// One-step coarsening T -> T' where atom i gained exactly the element j.
struct RefinementStep {
  AdmissibleTopology finer;
  AdmissibleTopology coarser;
  int i = 0;
  int j = 0;
};

// All admissible topologies on {1..N}, canonically ordered; guarded to N <= 6.
std::vector<AdmissibleTopology> enumerate_admissible(int n);

// (finest T_1, coarsest T_0).
std::pair<AdmissibleTopology, AdmissibleTopology> extremes(int n);

bool refines(const AdmissibleTopology& t, const AdmissibleTopology& tp);

// The (i, j) pair when tp is exactly one step coarser than t, nullopt when
// t == tp or the distance is larger; throws when t does not refine tp.
std::optional<std::pair<int, int>> one_step(const AdmissibleTopology& t,
                                            const AdmissibleTopology& tp);

// chi_i - chi_j for a one-step pair; positive because the chis decrease.
double chi_step(const RefinementStep& step, const std::vector<double>& chis);
double chi_step(int i, int j, const std::vector<double>& chis);

// A coarsening chain T = T^k -> ... -> T^0 = T' of one-step refinements whose
// exponent differences are non-increasing in coarsening order (so, monotone in
// the refinement order).  Greedy on the largest available difference with
// exhaustive backtracking; ties broken by lexicographic (i, j).
std::vector<RefinementStep> monotone_path(const AdmissibleTopology& t,
                                          const AdmissibleTopology& tp,
                                          const std::vector<double>& chis);

// The filtered topology generated by T_0 and L: T(i) = {i, ..., max L(i)}.
AdmissibleTopology filtered_topology(const LeftFiltration& l);
bool is_filtered(const AdmissibleTopology& t);

// All 2^{n-1} left filtrations; guarded to n <= 12.
std::vector<LeftFiltration> enumerate_left_filtrations(int n);

// Parse the "1:{1,3} 2:{2,3} 3:{3}" rendering accepted on the CLI.
AdmissibleTopology parse_topology(const std::string& text);

} // namespace flagdim::topology
