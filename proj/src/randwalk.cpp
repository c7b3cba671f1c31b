#include "flagdim/randwalk.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flagdim/errors.hpp"
#include "flagdim/rng.hpp"

namespace flagdim::randwalk {

std::vector<double> MatrixMeasure::probabilities() const {
  std::vector<double> p(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) p[i] = atoms[i].p;
  return p;
}

Mat MatrixMeasure::inverse_atom(int i) const {
  return atoms[static_cast<std::size_t>(i)].m.partialPivLu().inverse();
}

ProductFactorization ProductFactorization::identity(int d) {
  return ProductFactorization{Mat::Identity(d, d), Vec::Zero(d), 0};
}

void qr_push(ProductFactorization& f, const Mat& m) {
  Mat z = m * f.q;
  Eigen::HouseholderQR<Mat> qr(z);
  Mat q = qr.householderQ();
  Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  // fix the sign convention (positive diagonal) so runs are reproducible
  for (int k = 0; k < r.rows(); ++k) {
    if (r(k, k) < 0.0) {
      q.col(k) = -q.col(k);
      r.row(k) = -r.row(k);
    }
    f.log_diag(k) += std::log(std::abs(r(k, k)));
  }
  f.q = q;
  f.step_count += 1;
}

namespace {

void validate_measure(MatrixMeasure& m, bool renormalize) {
  if (m.atoms.empty()) throw validation_error("measure: needs at least one atom");
  if (m.d < 1) throw validation_error("measure: d must be >= 1");
  double mass = 0.0;
  for (std::size_t i = 0; i < m.atoms.size(); ++i) {
    auto& atom = m.atoms[i];
    if (atom.m.rows() != m.d || atom.m.cols() != m.d) {
      std::ostringstream os;
      os << "measure: atom " << i << " is " << atom.m.rows() << "x" << atom.m.cols()
         << ", expected " << m.d << "x" << m.d;
      throw validation_error(os.str());
    }
    if (!(atom.p > 0.0) || atom.p > 1.0 + 1e-12)
      throw validation_error("measure: atom probabilities must lie in (0,1]");
    mass += atom.p;
    double det = atom.m.determinant();
    if (renormalize && std::abs(det - 1.0) <= 1e-3) {
      atom.m /= std::pow(det, 1.0 / m.d);
      det = atom.m.determinant();
    }
    if (std::abs(det - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "measure: atom " << i << " has det " << det << ", not in SL_" << m.d;
      throw validation_error(os.str());
    }
  }
  m.mass_deficit = std::abs(1.0 - mass);
  if (m.mass_deficit > 1e-9)
    throw validation_error("measure: probabilities sum to " + std::to_string(mass));
  for (auto& atom : m.atoms) atom.p /= mass;
}

} // namespace

MatrixMeasure load_measure(const std::string& spec_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(spec_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw validation_error(std::string("measure: ") + e.what());
  }
  MatrixMeasure m;
  try {
    m.d = doc.at("d").get<int>();
    const bool renormalize = doc.value("renormalize", false);
    for (const auto& entry : doc.at("atoms")) {
      MatrixMeasure::Atom atom;
      atom.p = entry.at("p").get<double>();
      const auto& rows = entry.at("m");
      atom.m.resize(static_cast<int>(rows.size()),
                    rows.empty() ? 0 : static_cast<int>(rows[0].size()));
      for (int r = 0; r < atom.m.rows(); ++r) {
        if (static_cast<int>(rows[r].size()) != atom.m.cols())
          throw validation_error("measure: ragged matrix rows");
        for (int c = 0; c < atom.m.cols(); ++c) atom.m(r, c) = rows[r][c].get<double>();
      }
      m.atoms.push_back(std::move(atom));
    }
    validate_measure(m, renormalize);
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("measure: ") + e.what());
  }
  return m;
}

MatrixMeasure load_measure_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("measure: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_measure(buffer.str());
}

std::string measure_to_json(const MatrixMeasure& m) {
  nlohmann::json doc;
  doc["d"] = m.d;
  doc["atoms"] = nlohmann::json::array();
  for (const auto& atom : m.atoms) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < atom.m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < atom.m.cols(); ++c) row.push_back(atom.m(r, c));
      rows.push_back(row);
    }
    doc["atoms"].push_back({{"p", atom.p}, {"m", rows}});
  }
  return doc.dump(2);
}

Word sample_word(const MatrixMeasure& m, int n, std::uint64_t seed, Direction direction) {
  if (n < 0) throw validation_error("sample_word: negative length");
  rng::Stream stream(seed);
  const std::vector<double> p = m.probabilities();
  Word w;
  w.direction = direction;
  w.indices.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) w.indices[static_cast<std::size_t>(k)] = stream.categorical(p);
  return w;
}

ProductFactorization accumulate(const MatrixMeasure& m, const Word& w) {
  ProductFactorization f = ProductFactorization::identity(m.d);
  for (int idx : w.indices)
    if (idx < 0 || idx >= m.size()) throw validation_error("accumulate: atom index out of range");
  if (w.direction == Direction::forward) {
    // g_{n-1} ... g_0: steps arrive oldest first and multiply on the left
    for (int idx : w.indices) qr_push(f, m.atoms[static_cast<std::size_t>(idx)].m);
  } else {
    // g_{-1} ... g_{-n}: each new step extends the product on the right, so the
    // same left-multiplying kernel consumes the word in reverse
    for (auto it = w.indices.rbegin(); it != w.indices.rend(); ++it)
      qr_push(f, m.atoms[static_cast<std::size_t>(*it)].m);
  }
  return f;
}

double first_moment(const MatrixMeasure& m) {
  double total = 0.0;
  for (const auto& atom : m.atoms) {
    Eigen::JacobiSVD<Mat> svd(atom.m);
    total += atom.p * std::log(svd.singularValues()(0));
  }
  return total;
}

} // namespace flagdim::randwalk
