#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flagdim/linalg.hpp"

namespace flagdim::randwalk {

using linalg::Mat;
using linalg::Vec;

// Finitely supported step distribution on SL_d(R).
struct MatrixMeasure {
  struct Atom {
    double p;
    Mat m;
  };

  int d = 0;
  std::vector<Atom> atoms;
  // |1 - sum of raw probabilities| before normalization; a truncation
  // diagnostic, always <= 1e-9 for an accepted file.
  double mass_deficit = 0.0;

  int size() const { return static_cast<int>(atoms.size()); }
  std::vector<double> probabilities() const;
  Mat inverse_atom(int i) const;
};

enum class Direction { forward, backward };

// Indices into the measure's atoms.  A forward word (i_0, ..., i_{n-1}) stands
// for the steps g_0, ..., g_{n-1} and realizes the product g_{n-1} ... g_0;
// a backward word (i_1, ..., i_n) stands for g_{-1}, ..., g_{-n} and realizes
// g_{-1} ... g_{-n}.
struct Word {
  std::vector<int> indices;
  Direction direction = Direction::forward;

  int length() const { return static_cast<int>(indices.size()); }
};

// QR-renormalized factorization of a long matrix product: q carries the
// orthogonal factor, log_diag the accumulated log moduli of the triangular
// diagonal (the singular-value exponents at long horizons).
struct ProductFactorization {
  Mat q;
  Vec log_diag;
  long step_count = 0;

  static ProductFactorization identity(int d);
};

// One renormalized step: replaces the represented product P by m * P.
void qr_push(ProductFactorization& f, const Mat& m);

// Parse and validate a measure from its JSON text.  When the document sets
// "renormalize": true, atoms with |det - 1| <= 1e-3 are rescaled by
// det^{-1/d}; larger violations are rejected either way.
MatrixMeasure load_measure(const std::string& spec_text);
MatrixMeasure load_measure_file(const std::string& path);
std::string measure_to_json(const MatrixMeasure& m);

Word sample_word(const MatrixMeasure& m, int n, std::uint64_t seed,
                 Direction direction = Direction::forward);

// Factorization of the product named by the word (see Word).
ProductFactorization accumulate(const MatrixMeasure& m, const Word& w);

// Sum of p * log of the operator norm over atoms.
double first_moment(const MatrixMeasure& m);

} // namespace flagdim::randwalk
