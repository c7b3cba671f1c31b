// flagdim: random walks on SL_d(R) -- Lyapunov spectra, Oseledets splittings,
// admissible-topology lattices, configuration-bundle coordinates, entropy and
// dimension estimators.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "flagdim/coords.hpp"
#include "flagdim/errors.hpp"
#include "flagdim/estimate.hpp"

namespace fd = flagdim;
using nlohmann::json;

namespace {

struct RunConfig {
  std::string command;
  std::string measure_path;
  std::uint64_t seed = 0;
  int horizon = 2000;
  int replicas = 64;
  int count = 2000;
  int ensemble_horizon = 400;
  double cluster_tol = 0.0;
  int knn_k = 4;
  int depth = 6;
  int n_blocks = 3;
  int trials = 500;
  std::string filtration = "";
  std::string chis = "";
  std::string from_topology = "";
  std::string to_topology = "";
  std::string radius_ladder = ""; // "rmax:points"
  std::string out_dir = ".";

  json to_json() const {
    return json{{"command", command},
                {"measure", measure_path},
                {"seed", seed},
                {"horizon", horizon},
                {"replicas", replicas},
                {"count", count},
                {"ensemble_horizon", ensemble_horizon},
                {"cluster_tol", cluster_tol},
                {"k", knn_k},
                {"depth", depth},
                {"N", n_blocks},
                {"trials", trials},
                {"filtration", filtration},
                {"chis", chis},
                {"from", from_topology},
                {"to", to_topology},
                {"radius_ladder", radius_ladder},
                {"out", out_dir}};
  }
};

void write_file(const RunConfig& cfg, const std::string& name, const std::string& content) {
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream out(std::filesystem::path(cfg.out_dir) / name, std::ios::binary);
  if (!out) throw fd::validation_error("cannot write " + name + " under " + cfg.out_dir);
  out << content;
}

// wall-clock context lives in a side file so the JSON/CSV artifacts stay
// byte-reproducible under a fixed seed
void write_meta(const RunConfig& cfg) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::ostringstream os;
  os << "command: " << cfg.command << "\nfinished: " << std::ctime(&tt);
  write_file(cfg, "run_meta.txt", os.str());
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

fd::topology::LeftFiltration filtration_for(const RunConfig& cfg, int blocks) {
  if (cfg.filtration.empty()) return fd::topology::LeftFiltration::full(blocks);
  return fd::topology::LeftFiltration::from_inner(blocks, parse_int_list(cfg.filtration));
}

fd::estimate::RadiusLadder ladder_for(const RunConfig& cfg) {
  fd::estimate::RadiusLadder ladder;
  if (cfg.radius_ladder.empty()) return ladder;
  const auto colon = cfg.radius_ladder.find(':');
  ladder.r_max = std::stod(cfg.radius_ladder.substr(0, colon));
  if (colon != std::string::npos) ladder.points = std::stoi(cfg.radius_ladder.substr(colon + 1));
  if (ladder.r_max <= 0.0 || ladder.points < 4)
    throw fd::validation_error("radius ladder: expected RMAX:POINTS with positive values");
  return ladder;
}

json spectrum_json(const fd::spectrum::LyapunovSpectrum& spec) {
  return json{{"d", spec.d},
              {"chis", spec.chis},
              {"mults", spec.mults},
              {"raw", spec.raw},
              {"raw_stderr", spec.raw_stderr},
              {"cluster_tol", spec.cluster_tol},
              {"horizon", spec.horizon},
              {"replicas", spec.replicas},
              {"single_cluster_warning", spec.single_cluster_warning}};
}

int cmd_lyapunov(const RunConfig& cfg) {
  const auto m = fd::randwalk::load_measure_file(cfg.measure_path);
  fd::spectrum::SpectrumParams params{cfg.horizon, cfg.replicas, cfg.cluster_tol, cfg.seed};
  const auto spec = fd::spectrum::lyapunov_spectrum(m, params);
  write_file(cfg, "spectrum.json", spectrum_json(spec).dump(2) + "\n");
  write_file(cfg, "spectrum.csv", fd::spectrum::spectrum_csv(spec));
  std::cout << "lyapunov: d=" << spec.d << " N=" << spec.blocks() << "\n  chis:";
  for (double chi : spec.chis) std::cout << ' ' << chi;
  std::cout << "\n  mults:";
  for (int mult : spec.mults) std::cout << ' ' << mult;
  std::cout << "\n  first moment: " << fd::randwalk::first_moment(m)
            << "\n  wrote spectrum.json, spectrum.csv\n";
  return 0;
}

int cmd_oseledets(const RunConfig& cfg) {
  const auto m = fd::randwalk::load_measure_file(cfg.measure_path);
  fd::spectrum::SpectrumParams params{cfg.horizon, cfg.replicas, cfg.cluster_tol, cfg.seed};
  const auto spec = fd::spectrum::lyapunov_spectrum(m, params);
  const auto two = fd::spectrum::sample_flag_pair(m, spec, cfg.ensemble_horizon,
                                                  fd::rng::subseed(cfg.seed, 0x05e1ed));
  const auto split = fd::spectrum::oseledets_splitting(two.flags, spec);

  json doc;
  doc["spectrum"] = spectrum_json(spec);
  doc["condition_number"] = split.condition_number();
  doc["blocks"] = json::array();
  for (std::size_t i = 0; i < split.parts.size(); ++i) {
    json rows = json::array();
    const auto& basis = split.parts[i].basis;
    for (int r = 0; r < basis.rows(); ++r) {
      json row = json::array();
      for (int c = 0; c < basis.cols(); ++c) row.push_back(basis(r, c));
      rows.push_back(row);
    }
    doc["blocks"].push_back({{"i", i + 1}, {"dim", split.parts[i].rank()}, {"basis", rows}});
  }
  write_file(cfg, "oseledets.json", doc.dump(2) + "\n");
  std::cout << "oseledets: " << split.parts.size()
            << " blocks, condition number " << split.condition_number()
            << "\n  wrote oseledets.json\n";
  return 0;
}

int cmd_topologies(const RunConfig& cfg) {
  const auto all = fd::topology::enumerate_admissible(cfg.n_blocks);
  json doc;
  doc["N"] = cfg.n_blocks;
  doc["count"] = all.size();
  doc["topologies"] = json::array();
  for (const auto& t : all) doc["topologies"].push_back(t.to_string());
  write_file(cfg, "topologies.json", doc.dump(2) + "\n");
  std::cout << "topologies: N=" << cfg.n_blocks << " admissible count=" << all.size() << '\n';
  for (const auto& t : all) std::cout << "  " << t.to_string() << '\n';
  return 0;
}

int cmd_path(const RunConfig& cfg) {
  std::vector<double> chis;
  if (!cfg.chis.empty()) {
    chis = parse_double_list(cfg.chis);
  } else if (!cfg.measure_path.empty()) {
    const auto m = fd::randwalk::load_measure_file(cfg.measure_path);
    fd::spectrum::SpectrumParams params{cfg.horizon, cfg.replicas, cfg.cluster_tol, cfg.seed};
    chis = fd::spectrum::lyapunov_spectrum(m, params).chis;
  } else {
    throw fd::validation_error("path: need --chis or --measure");
  }
  const int n = static_cast<int>(chis.size());
  const auto [t1, t0] = fd::topology::extremes(n);
  const auto from = cfg.from_topology.empty() ? t1 : fd::topology::parse_topology(cfg.from_topology);
  const auto to = cfg.to_topology.empty() ? t0 : fd::topology::parse_topology(cfg.to_topology);
  const auto path = fd::topology::monotone_path(from, to, chis);

  json doc;
  doc["chis"] = chis;
  doc["from"] = from.to_string();
  doc["to"] = to.to_string();
  doc["steps"] = json::array();
  std::cout << "path: " << from.to_string() << "  ->  " << to.to_string() << '\n';
  for (const auto& step : path) {
    const double chi = fd::topology::chi_step(step.i, step.j, chis);
    doc["steps"].push_back({{"i", step.i},
                            {"j", step.j},
                            {"chi", chi},
                            {"coarser", step.coarser.to_string()}});
    std::cout << "  add (" << step.i << ',' << step.j << ") chi=" << chi << "  -> "
              << step.coarser.to_string() << '\n';
  }
  write_file(cfg, "path.json", doc.dump(2) + "\n");
  return 0;
}

int cmd_coords_verify(const RunConfig& cfg) {
  const auto fixtures = fd::coords::builtin_fixtures(cfg.seed, 20);
  const auto sweep = fd::coords::oracle_sweep(cfg.n_blocks, cfg.trials, cfg.seed);

  json doc;
  doc["fixtures"] = json::array();
  bool all_pass = sweep.pass;
  std::cout << "coords-verify fixtures:\n";
  for (const auto& f : fixtures) {
    doc["fixtures"].push_back({{"name", f.name}, {"max_error", f.max_error}, {"pass", f.pass}});
    std::cout << "  " << (f.pass ? "PASS" : "FAIL") << "  " << f.name
              << "  max_error=" << f.max_error << '\n';
    all_pass = all_pass && f.pass;
  }
  doc["oracle"] = {{"pairs", sweep.per_pair.size()},
                   {"trials", sweep.trials},
                   {"max_error", sweep.max_error},
                   {"tolerance", sweep.tolerance},
                   {"pass", sweep.pass}};
  doc["per_pair"] = json::array();
  for (const auto& st : sweep.per_pair)
    doc["per_pair"].push_back({{"finer", st.finer},
                               {"coarser", st.coarser},
                               {"trials", st.trials},
                               {"max_error", st.max_error}});
  write_file(cfg, "coords_verify.json", doc.dump(2) + "\n");
  std::cout << "oracle sweep: " << sweep.per_pair.size() << " pairs, " << sweep.trials
            << " trials, max error " << sweep.max_error << " (tol " << sweep.tolerance << ") "
            << (sweep.pass ? "PASS" : "FAIL") << "\n  wrote coords_verify.json\n";
  return all_pass ? 0 : 3;
}

int cmd_entropy(const RunConfig& cfg) {
  const auto m = fd::randwalk::load_measure_file(cfg.measure_path);
  fd::spectrum::SpectrumParams sparams{cfg.horizon, cfg.replicas, cfg.cluster_tol, cfg.seed};
  const auto spec = fd::spectrum::lyapunov_spectrum(m, sparams);
  const auto filt = filtration_for(cfg, spec.blocks());

  fd::estimate::EnsembleParams eparams;
  eparams.count = cfg.count;
  eparams.horizon = cfg.ensemble_horizon;
  eparams.seed = fd::rng::subseed(cfg.seed, 1);
  eparams.past_depth = std::max(cfg.depth, 8);
  const auto ens = fd::estimate::sample_flag_ensemble(m, spec, eparams);

  const auto kappa = fd::estimate::furstenberg_entropy(ens, filt, cfg.knn_k);
  const auto t_l = fd::topology::filtered_topology(filt);
  const auto t0 = fd::topology::extremes(spec.blocks()).second;
  const auto cyl = fd::estimate::cylinder_entropy(ens, t_l, t0, cfg.depth);
  const double cap = fd::estimate::entropy_cap(spec, filt);

  json doc;
  doc["spectrum"] = spectrum_json(spec);
  doc["stationarity_pvalue"] = ens.stationarity_pvalue;
  doc["furstenberg"] = {{"value", kappa.value},
                        {"raw_value", kappa.raw_value},
                        {"stderr", kappa.stderr_},
                        {"method", kappa.method},
                        {"k", kappa.param}};
  doc["cylinder"] = {{"value", cyl.value},
                     {"raw_value", cyl.raw_value},
                     {"stderr", cyl.stderr_},
                     {"depth", cyl.param},
                     {"bandwidth_widened", cyl.bandwidth_widened}};
  doc["cap"] = cap;
  doc["cap_respected"] = kappa.raw_value <= cap + 2.0 * kappa.stderr_ + 1e-12;
  write_file(cfg, "entropy.json", doc.dump(2) + "\n");
  std::cout << "entropy: kappa=" << kappa.value << " +- " << kappa.stderr_
            << " (knn-mi), cylinder=" << cyl.value << " +- " << cyl.stderr_
            << "\n  cap=" << cap << (doc["cap_respected"].get<bool>() ? " respected" : " EXCEEDED")
            << "\n  wrote entropy.json\n";
  return 0;
}

int cmd_dimension(const RunConfig& cfg) {
  const auto m = fd::randwalk::load_measure_file(cfg.measure_path);
  fd::spectrum::SpectrumParams sparams{cfg.horizon, cfg.replicas, cfg.cluster_tol, cfg.seed};
  const auto spec = fd::spectrum::lyapunov_spectrum(m, sparams);
  const auto filt = filtration_for(cfg, spec.blocks());

  fd::estimate::EnsembleParams eparams;
  eparams.count = cfg.count;
  eparams.horizon = cfg.ensemble_horizon;
  eparams.seed = fd::rng::subseed(cfg.seed, 1);
  const auto ens = fd::estimate::sample_flag_ensemble(m, spec, eparams);

  const auto t_l = fd::topology::filtered_topology(filt);
  const auto t0 = fd::topology::extremes(spec.blocks()).second;
  const auto path = fd::topology::monotone_path(t_l, t0, spec.chis);
  const auto pd = fd::estimate::path_dimension(ens, path, cfg.knn_k);
  const auto pts = fd::estimate::ensemble_flag_points(ens, filt);
  const auto direct =
      fd::estimate::local_dimension(pts, ladder_for(cfg), 200, fd::rng::subseed(cfg.seed, 2));

  json doc;
  doc["spectrum"] = spectrum_json(spec);
  doc["path_steps"] = json::array();
  for (std::size_t s = 0; s < pd.steps.size(); ++s)
    doc["path_steps"].push_back({{"kappa", pd.steps[s].kappa.value},
                                 {"chi", pd.steps[s].chi},
                                 {"gamma", pd.steps[s].ratio.value},
                                 {"stderr", pd.steps[s].ratio.stderr_}});
  doc["delta_path"] = {{"value", pd.total.value}, {"stderr", pd.total.stderr_}};
  doc["delta_direct"] = {{"defined", direct.defined},
                         {"value", direct.value},
                         {"stderr", direct.stderr_},
                         {"spread", direct.spread},
                         {"window_begin", direct.window_begin},
                         {"window_len", direct.window_len}};
  write_file(cfg, "dimension.json", doc.dump(2) + "\n");
  {
    std::ostringstream os;
    os.precision(17);
    os << "r,mean_log_mass\n";
    for (std::size_t rr = 0; rr < direct.radii.size(); ++rr)
      os << direct.radii[rr] << ',' << direct.mean_log_mass[rr] << '\n';
    write_file(cfg, "ball_mass.csv", os.str());
  }
  std::cout << "dimension: delta_path=" << pd.total.value << " +- " << pd.total.stderr_
            << ", delta_direct=" << (direct.defined ? std::to_string(direct.value) : "undefined")
            << "\n  wrote dimension.json, ball_mass.csv\n";
  return 0;
}

int cmd_lydim(const RunConfig& cfg) {
  const auto m = fd::randwalk::load_measure_file(cfg.measure_path);
  fd::spectrum::SpectrumParams sparams{cfg.horizon, cfg.replicas, cfg.cluster_tol, cfg.seed};
  const auto spec = fd::spectrum::lyapunov_spectrum(m, sparams);
  const auto filt = filtration_for(cfg, spec.blocks());

  fd::estimate::EnsembleParams eparams;
  eparams.count = cfg.count;
  eparams.horizon = cfg.ensemble_horizon;
  eparams.seed = fd::rng::subseed(cfg.seed, 1);
  const auto ens = fd::estimate::sample_flag_ensemble(m, spec, eparams);
  const auto kappa = fd::estimate::furstenberg_entropy(ens, filt, cfg.knn_k);
  const auto profile = fd::estimate::lyapunov_dimension(spec, filt, kappa);

  json doc;
  doc["spectrum"] = spectrum_json(spec);
  doc["kappa"] = {{"value", kappa.value}, {"stderr", kappa.stderr_}};
  doc["lambdas"] = profile.lambdas;
  doc["capacities"] = profile.capacities;
  doc["dim_flag_space"] = profile.total_capacity;
  doc["dim_ly"] = profile.dim_ly;
  doc["cap_warning"] = profile.cap_warning;
  write_file(cfg, "lydim.json", doc.dump(2) + "\n");
  std::cout << "lydim: kappa=" << kappa.value << " dim_LY=" << profile.dim_ly << " (flag space dim "
            << profile.total_capacity << ")\n  wrote lydim.json\n";
  return 0;
}

int cmd_report(const RunConfig& cfg) {
  const auto m = fd::randwalk::load_measure_file(cfg.measure_path);
  fd::estimate::ReportParams params;
  params.spectrum = {cfg.horizon, cfg.replicas, cfg.cluster_tol, cfg.seed};
  params.ensemble.count = cfg.count;
  params.ensemble.horizon = cfg.ensemble_horizon;
  params.knn_k = cfg.knn_k;
  params.seed = cfg.seed;

  // the filtration is interpreted over spectrum blocks, so parse lazily inside
  const auto spec_probe = fd::spectrum::lyapunov_spectrum(m, params.spectrum);
  const auto filt = filtration_for(cfg, spec_probe.blocks());
  const auto report = fd::estimate::verify_report(m, filt, params);

  write_file(cfg, "report.json", report.json + "\n");
  write_file(cfg, "spectrum.csv", report.spectrum_csv);
  write_file(cfg, "ball_mass.csv", report.ball_mass_csv);
  write_file(cfg, "rw_entropy.csv", report.rw_entropy_csv);
  std::cout << "report: delta=" << report.delta << " dim_LY=" << report.dim_ly << '\n'
            << "  lyapunov bound " << (report.lyapunov_bound_holds ? "holds" : "VIOLATED") << '\n'
            << "  entropy cap " << (report.entropy_cap_holds ? "holds" : "VIOLATED") << '\n'
            << "  wrote report.json, spectrum.csv, ball_mass.csv, rw_entropy.csv\n";
  return (report.lyapunov_bound_holds && report.entropy_cap_holds) ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"random walks on SL_d(R): spectra, flags, configuration bundles, dimensions"};
  app.set_version_flag("--version", "flagdim 1.0.0");
  RunConfig cfg;
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the resolved run configuration and exit");

  auto add_common = [&](CLI::App* sub, bool needs_measure) {
    sub->add_option("--seed", cfg.seed, "root RNG seed (all randomness derives from it)")
        ->required();
    sub->add_option("--out", cfg.out_dir, "output directory");
    if (needs_measure)
      sub->add_option("--measure", cfg.measure_path, "measure spec JSON")->required();
  };

  auto* lyap = app.add_subcommand("lyapunov", "Lyapunov spectrum with multiplicities");
  add_common(lyap, true);
  lyap->add_option("--horizon", cfg.horizon)->check(CLI::PositiveNumber);
  lyap->add_option("--replicas", cfg.replicas)->check(CLI::PositiveNumber);
  lyap->add_option("--cluster-tol", cfg.cluster_tol);

  auto* osel = app.add_subcommand("oseledets", "one sampled Oseledets splitting");
  add_common(osel, true);
  osel->add_option("--horizon", cfg.horizon)->check(CLI::PositiveNumber);
  osel->add_option("--replicas", cfg.replicas)->check(CLI::PositiveNumber);
  osel->add_option("--flag-horizon", cfg.ensemble_horizon)->check(CLI::PositiveNumber);

  auto* topo = app.add_subcommand("topologies", "enumerate admissible topologies");
  topo->add_option("--N", cfg.n_blocks, "number of blocks")->required()->check(CLI::Range(1, 6));
  topo->add_option("--out", cfg.out_dir);

  auto* path = app.add_subcommand("path", "monotone path between admissible topologies");
  path->add_option("--seed", cfg.seed)->default_val(0);
  path->add_option("--out", cfg.out_dir);
  path->add_option("--measure", cfg.measure_path);
  path->add_option("--chis", cfg.chis, "comma-separated exponents, decreasing");
  path->add_option("--from", cfg.from_topology, "atom syntax, e.g. \"1:{1} 2:{2}\"");
  path->add_option("--to", cfg.to_topology);
  path->add_option("--horizon", cfg.horizon)->check(CLI::PositiveNumber);
  path->add_option("--replicas", cfg.replicas)->check(CLI::PositiveNumber);

  auto* cver = app.add_subcommand("coords-verify", "change-of-coordinates oracle equivalence");
  cver->add_option("--seed", cfg.seed)->required();
  cver->add_option("--N", cfg.n_blocks, "max blocks for the sweep")->check(CLI::Range(1, 4));
  cver->add_option("--trials", cfg.trials)->check(CLI::PositiveNumber);
  cver->add_option("--out", cfg.out_dir);

  auto* entr = app.add_subcommand("entropy", "Furstenberg and cylinder entropy estimates");
  add_common(entr, true);
  entr->add_option("--filtration", cfg.filtration, "inner prefix lengths, e.g. \"1,2\"");
  entr->add_option("--horizon", cfg.horizon)->check(CLI::PositiveNumber);
  entr->add_option("--replicas", cfg.replicas)->check(CLI::PositiveNumber);
  entr->add_option("--count", cfg.count)->check(CLI::PositiveNumber);
  entr->add_option("--ensemble-horizon", cfg.ensemble_horizon)->check(CLI::PositiveNumber);
  entr->add_option("--k", cfg.knn_k)->check(CLI::PositiveNumber);
  entr->add_option("--depth", cfg.depth)->check(CLI::Range(1, 12));

  auto* dime = app.add_subcommand("dimension", "path and direct dimension estimates");
  add_common(dime, true);
  dime->add_option("--filtration", cfg.filtration);
  dime->add_option("--horizon", cfg.horizon)->check(CLI::PositiveNumber);
  dime->add_option("--replicas", cfg.replicas)->check(CLI::PositiveNumber);
  dime->add_option("--count", cfg.count)->check(CLI::PositiveNumber);
  dime->add_option("--ensemble-horizon", cfg.ensemble_horizon)->check(CLI::PositiveNumber);
  dime->add_option("--k", cfg.knn_k)->check(CLI::PositiveNumber);
  dime->add_option("--radius-ladder", cfg.radius_ladder, "RMAX:POINTS");

  auto* lydim = app.add_subcommand("lydim", "Lyapunov dimension profile");
  add_common(lydim, true);
  lydim->add_option("--filtration", cfg.filtration);
  lydim->add_option("--horizon", cfg.horizon)->check(CLI::PositiveNumber);
  lydim->add_option("--replicas", cfg.replicas)->check(CLI::PositiveNumber);
  lydim->add_option("--count", cfg.count)->check(CLI::PositiveNumber);
  lydim->add_option("--ensemble-horizon", cfg.ensemble_horizon)->check(CLI::PositiveNumber);
  lydim->add_option("--k", cfg.knn_k)->check(CLI::PositiveNumber);

  auto* rep = app.add_subcommand("report", "full inequality report");
  add_common(rep, true);
  rep->add_option("--filtration", cfg.filtration);
  rep->add_option("--horizon", cfg.horizon)->check(CLI::PositiveNumber);
  rep->add_option("--replicas", cfg.replicas)->check(CLI::PositiveNumber);
  rep->add_option("--count", cfg.count)->check(CLI::PositiveNumber);
  rep->add_option("--ensemble-horizon", cfg.ensemble_horizon)->check(CLI::PositiveNumber);
  rep->add_option("--k", cfg.knn_k)->check(CLI::PositiveNumber);

  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::vector<std::pair<CLI::App*, int (*)(const RunConfig&)>> dispatch = {
      {lyap, cmd_lyapunov}, {osel, cmd_oseledets}, {topo, cmd_topologies},
      {path, cmd_path},     {cver, cmd_coords_verify}, {entr, cmd_entropy},
      {dime, cmd_dimension}, {lydim, cmd_lydim},   {rep, cmd_report}};

  try {
    for (const auto& [sub, fn] : dispatch) {
      if (sub->parsed()) {
        cfg.command = sub->get_name();
        if (print_config) {
          std::cout << cfg.to_json().dump(2) << '\n';
          return 0;
        }
        const int code = fn(cfg);
        write_meta(cfg);
        return code;
      }
    }
    std::cerr << app.help();
    return 2;
  } catch (const fd::validation_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fd::degeneracy_error& e) {
    std::cerr << "degeneracy: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 3;
  }
}
