// Compares the OpenMP kernels against the serial reference path on the three
// hot loops (spectrum replicas, k-NN entropy batches, ball counting) and
// checks that both produce identical results.

#include <chrono>
#include <cmath>
#include <iostream>

#include "flagdim/estimate.hpp"
#include "flagdim/parallel.hpp"

namespace fd = flagdim;

namespace {

fd::randwalk::MatrixMeasure hyperbolic_sl2() {
  fd::randwalk::MatrixMeasure m;
  m.d = 2;
  Eigen::Matrix2d a;
  a << 4.0, 0.0, 0.0, 0.25;
  const double c = std::cos(1.0471975511965976), s = std::sin(1.0471975511965976);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  m.atoms.push_back({0.5, a});
  m.atoms.push_back({0.5, r * a * r.transpose()});
  return m;
}

template <typename Fn>
double timed(const Fn& fn) {
  const auto begin = std::chrono::steady_clock::now();
  fn();
  const auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(end - begin).count();
}

} // namespace

int main() {
  const auto m = hyperbolic_sl2();
  std::cout << "threads available: " << fd::parallel::max_threads() << "\n\n";

  fd::spectrum::SpectrumParams sp{1000, 128, 0.0, 7};
  fd::spectrum::LyapunovSpectrum spec_serial, spec_parallel;
  fd::parallel::serial_override() = true;
  const double t_spec_serial = timed([&] { spec_serial = fd::spectrum::lyapunov_spectrum(m, sp); });
  fd::parallel::serial_override() = false;
  const double t_spec_parallel = timed([&] { spec_parallel = fd::spectrum::lyapunov_spectrum(m, sp); });
  bool same = spec_serial.raw == spec_parallel.raw && spec_serial.chis == spec_parallel.chis;
  std::cout << "spectrum (128 replicas x 1000 steps):  serial " << t_spec_serial << " s,  openmp "
            << t_spec_parallel << " s,  speedup " << t_spec_serial / t_spec_parallel
            << (same ? "  [identical]" : "  [MISMATCH]") << '\n';

  fd::estimate::EnsembleParams ep;
  ep.count = 3000;
  ep.horizon = 200;
  ep.seed = 11;
  fd::estimate::FlagEnsemble ens_serial, ens_parallel;
  fd::parallel::serial_override() = true;
  const double t_ens_serial = timed([&] { ens_serial = fd::estimate::sample_flag_ensemble(m, spec_serial, ep); });
  fd::parallel::serial_override() = false;
  const double t_ens_parallel = timed([&] { ens_parallel = fd::estimate::sample_flag_ensemble(m, spec_parallel, ep); });
  same = ens_serial.stationarity_pvalue == ens_parallel.stationarity_pvalue;
  std::cout << "ensemble (3000 draws x 200 steps):     serial " << t_ens_serial << " s,  openmp "
            << t_ens_parallel << " s,  speedup " << t_ens_serial / t_ens_parallel
            << (same ? "  [identical]" : "  [MISMATCH]") << '\n';

  const auto filt = fd::topology::LeftFiltration::full(spec_serial.blocks());
  fd::estimate::EntropyEstimate k_serial, k_parallel;
  fd::parallel::serial_override() = true;
  const double t_mi_serial = timed([&] { k_serial = fd::estimate::furstenberg_entropy(ens_serial, filt, 4); });
  fd::parallel::serial_override() = false;
  const double t_mi_parallel = timed([&] { k_parallel = fd::estimate::furstenberg_entropy(ens_parallel, filt, 4); });
  same = k_serial.value == k_parallel.value && k_serial.stderr_ == k_parallel.stderr_;
  std::cout << "knn entropy (3000 points):             serial " << t_mi_serial << " s,  openmp "
            << t_mi_parallel << " s,  speedup " << t_mi_serial / t_mi_parallel
            << (same ? "  [identical]" : "  [MISMATCH]") << '\n';

  const auto pts = fd::estimate::ensemble_flag_points(ens_serial, filt);
  fd::estimate::DimensionEstimate d_serial, d_parallel;
  fd::parallel::serial_override() = true;
  const double t_dim_serial =
      timed([&] { d_serial = fd::estimate::local_dimension(pts, {}, 200, 1); });
  fd::parallel::serial_override() = false;
  const double t_dim_parallel =
      timed([&] { d_parallel = fd::estimate::local_dimension(pts, {}, 200, 1); });
  same = d_serial.value == d_parallel.value;
  std::cout << "ball counting (3000 points x 200 probes): serial " << t_dim_serial
            << " s,  openmp " << t_dim_parallel << " s,  speedup "
            << t_dim_serial / t_dim_parallel << (same ? "  [identical]" : "  [MISMATCH]") << '\n';
  return 0;
}
