#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "appendix.hpp"
#include "decompose.hpp"
#include "error.hpp"
#include "experiments.hpp"
#include "fock.hpp"
#include "noon.hpp"
#include "sampler.hpp"
#include "serialize.hpp"
#include "version.hpp"

namespace cse_lab {

enum class Experiment { decompose, noon, witness, witness4, hom, g2, bell, appendix_checks };

inline const char* to_string(Experiment e) noexcept {
  switch (e) {
    case Experiment::decompose: return "decompose";
    case Experiment::noon: return "noon";
    case Experiment::witness: return "witness";
    case Experiment::witness4: return "witness4";
    case Experiment::hom: return "hom";
    case Experiment::g2: return "g2";
    case Experiment::bell: return "bell";
    case Experiment::appendix_checks: return "appendix-checks";
  }
  return "decompose";
}

inline Experiment parse_experiment(const std::string& s) {
  for (auto e : {Experiment::decompose, Experiment::noon, Experiment::witness, Experiment::witness4, Experiment::hom,
                 Experiment::g2, Experiment::bell, Experiment::appendix_checks})
    if (s == to_string(e)) return e;
  throw Error(ErrorKind::invalid_argument, "unknown experiment '" + s + "'");
}

/// Job description. Unset optionals take per-experiment defaults when the
/// configuration is resolved.
struct RunConfig {
  Experiment experiment = Experiment::decompose;
  std::optional<double> eta;
  std::optional<double> epsilon;
  std::optional<double> overlap;
  std::optional<std::vector<double>> probes;
  std::optional<std::uint64_t> n;
  std::uint64_t seed = 1;
  std::optional<int> cutoff;
  int threads = 0;
  std::string out = "results";
  std::string target = "fock:1";
  int noon_order = 1;
  std::optional<std::string> mode;
  double sigmas = 3.0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::invalid_argument, "'" + key + "' expects a number, got '" + v + "'");
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  const double x = parse_double(key, v);
  require(x >= 0.0 && x == std::floor(x) && x < 1.8e19, ErrorKind::invalid_argument,
          "'" + key + "' expects a nonnegative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(x);
}

}  // namespace detail

/// Comma-separated list of amplitudes; an empty string yields an empty grid.
inline std::vector<double> parse_amplitude_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (!item.empty()) out.push_back(detail::parse_double("probes", item));
  }
  return out;
}

/// Applies one `key = value` setting. Keys match the long command-line flags.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "experiment") cfg.experiment = parse_experiment(value);
  else if (key == "eta") cfg.eta = detail::parse_double(key, value);
  else if (key == "eps") cfg.epsilon = detail::parse_double(key, value);
  else if (key == "f") cfg.overlap = detail::parse_double(key, value);
  else if (key == "probes") cfg.probes = parse_amplitude_list(value);
  else if (key == "n") cfg.n = detail::parse_count(key, value);
  else if (key == "seed") cfg.seed = detail::parse_count(key, value);
  else if (key == "cutoff") cfg.cutoff = static_cast<int>(detail::parse_count(key, value));
  else if (key == "threads") cfg.threads = static_cast<int>(detail::parse_count(key, value));
  else if (key == "out") cfg.out = value;
  else if (key == "target") cfg.target = value;
  else if (key == "N") cfg.noon_order = static_cast<int>(detail::parse_count(key, value));
  else if (key == "mode") cfg.mode = value;
  else if (key == "sigmas") cfg.sigmas = detail::parse_double(key, value);
  else throw Error(ErrorKind::invalid_argument, "unknown configuration key '" + key + "'");
}

/// Reads a configuration file of `key = value` lines; `#` starts a comment.
inline void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  detail::require(static_cast<bool>(is), ErrorKind::io, "cannot open config " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    detail::require(eq != std::string::npos, ErrorKind::invalid_argument,
                    path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

/// Fully resolved job: every parameter has a concrete value.
struct ResolvedConfig {
  Experiment experiment;
  DetectorModel detector;
  double overlap;
  std::vector<double> probes;
  std::uint64_t n;
  std::uint64_t seed;
  int cutoff;
  int threads;
  std::string out;
  int target_photons;
  int noon_order;
  std::string mode;
  double sigmas;
};

inline int parse_fock_target(const std::string& t) {
  detail::require(t.rfind("fock:", 0) == 0, ErrorKind::invalid_argument,
                  "target must have the form fock:<n>, got '" + t + "'");
  return static_cast<int>(detail::parse_count("target", t.substr(5)));
}

/// Fills defaults and validates every parameter before any computation.
inline ResolvedConfig resolve(const RunConfig& cfg) {
  using detail::require;
  ResolvedConfig r;
  r.experiment = cfg.experiment;
  const bool bell = cfg.experiment == Experiment::bell;
  const double eta = cfg.eta.value_or(bell ? 0.95 : 0.8);
  const double eps = cfg.epsilon.value_or(bell || cfg.experiment == Experiment::hom ? 0.0 : 0.001);
  require(std::isfinite(eta) && eta > 0.0 && eta <= 1.0, ErrorKind::invalid_argument, "eta must lie in (0, 1]");
  require(std::isfinite(eps) && eps >= 0.0 && eps < 1.0, ErrorKind::invalid_argument, "eps must lie in [0, 1)");
  r.detector = DetectorModel(eta, eps);
  r.overlap = cfg.overlap.value_or(cfg.experiment == Experiment::hom ? std::sqrt(0.95) : 0.95);
  require(std::isfinite(r.overlap) && r.overlap >= 0.0 && r.overlap <= 1.0, ErrorKind::invalid_argument,
          "f must lie in [0, 1]");
  r.target_photons = cfg.experiment == Experiment::decompose ? parse_fock_target(cfg.target) : 1;
  r.probes = cfg.probes.value_or(default_fock_amplitudes(r.target_photons));
  require(!r.probes.empty(), ErrorKind::invalid_argument, "probe grid is empty");
  for (double a : r.probes)
    require(std::isfinite(a) && a >= 0.0, ErrorKind::invalid_argument, "probe amplitudes must be finite and nonnegative");
  std::uint64_t n_default = 100000;
  if (cfg.experiment == Experiment::hom || cfg.experiment == Experiment::g2) n_default = 1000000;
  if (bell) n_default = 1500000;
  r.n = cfg.n.value_or(n_default);
  require(r.n >= 1, ErrorKind::invalid_argument, "n must be at least 1");
  r.seed = cfg.seed;
  r.cutoff = cfg.cutoff.value_or(default_cutoff());
  require(r.cutoff >= 2, ErrorKind::cutoff_too_small, "cutoff must be at least 2");
  require(cfg.threads >= 0, ErrorKind::invalid_argument, "threads must be nonnegative");
  r.threads = cfg.threads;
  require(!cfg.out.empty(), ErrorKind::invalid_argument, "output path is empty");
  r.out = cfg.out;
  r.noon_order = cfg.noon_order;
  require(r.noon_order >= 1 && r.noon_order <= 8, ErrorKind::invalid_argument, "N must lie in [1, 8]");
  require(std::isfinite(cfg.sigmas) && cfg.sigmas > 0.0, ErrorKind::invalid_argument, "sigmas must be positive");
  r.sigmas = cfg.sigmas;
  std::string mode_default = "outcome";
  if (cfg.experiment == Experiment::g2) mode_default = "conditional";
  if (bell) mode_default = "clicks";
  r.mode = cfg.mode.value_or(mode_default);
  if (bell) {
    require(r.mode == "clicks" || r.mode == "analytic", ErrorKind::invalid_argument,
            "bell mode must be clicks or analytic");
  } else {
    require(r.mode == "outcome" || r.mode == "conditional", ErrorKind::invalid_argument,
            "mode must be outcome or conditional");
  }
  if (cfg.experiment == Experiment::decompose)
    require(r.target_photons < r.cutoff, ErrorKind::cutoff_too_small, "target photon number must be below the cutoff");
  if (cfg.experiment == Experiment::noon)
    require(2 * r.noon_order < r.cutoff, ErrorKind::cutoff_too_small, "cutoff must exceed 2N for NOON composition");
  if (cfg.experiment == Experiment::witness || cfg.experiment == Experiment::witness4)
    require(r.cutoff >= 3, ErrorKind::cutoff_too_small, "witness needs a cutoff of at least 3");
  return r;
}

inline Json to_json(const ResolvedConfig& r) {
  return Json{{"experiment", to_string(r.experiment)},
              {"eta", r.detector.eta},
              {"eps", r.detector.epsilon},
              {"f", r.overlap},
              {"probes", r.probes},
              {"n", r.n},
              {"seed", r.seed},
              {"cutoff", r.cutoff},
              {"threads", r.threads},
              {"target", "fock:" + std::to_string(r.target_photons)},
              {"N", r.noon_order},
              {"mode", r.mode},
              {"sigmas", r.sigmas}};
}

struct OutputFile {
  std::string name;
  std::string content;
};

struct RunResult {
  Json report;
  std::vector<OutputFile> files;
};

namespace detail {

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline Json estimate_json(const EmulationEstimate& e) {
  Json j{{"mean", e.mean}, {"std_error", e.std_error}, {"n", e.n_samples}, {"seed", e.seed},
         {"variance_empirical", e.variance_empirical}};
  if (!std::isnan(e.variance_predicted)) j["variance_predicted"] = e.variance_predicted;
  return j;
}

inline Json variance_json(const VarianceBreakdown& v) {
  return Json{{"mean", v.mean}, {"delta_ab", v.delta_ab}, {"delta_a", v.delta_a}, {"excess", v.excess}};
}

inline Json report_header(const ResolvedConfig& cfg) {
  Json j = header("report");
  j["experiment"] = to_string(cfg.experiment);
  j["config"] = to_json(cfg);
  j["seed"] = cfg.seed;
  return j;
}

inline Representation single_photon_rep(const ResolvedConfig& cfg) {
  return fock_representation(1, cfg.probes, FockDim{cfg.cutoff}, 1e-8);
}

inline RunResult run_decompose(const ResolvedConfig& cfg) {
  const Representation rep = fock_representation(cfg.target_photons, cfg.probes, FockDim{cfg.cutoff}, 1e-8);
  RunResult out;
  out.report = report_header(cfg);
  out.report["closed_form_values"] = {{"fidelity", rep.fidelity}, {"zeta_plus", rep.zeta_plus},
                                      {"zeta_minus", rep.zeta_minus}, {"zeta", rep.zeta()}};
  out.report["representation"] = to_json(rep);
  std::ostringstream csv;
  csv << "label,amplitude,coefficient\n";
  for (std::size_t k = 0; k < rep.probe_set.size(); ++k)
    csv << rep.probe_set.labels[k] << ',' << csv_number(rep.probe_set.amplitudes[k].real()) << ','
        << csv_number(rep.coefficients(static_cast<Eigen::Index>(k))) << '\n';
  out.files.push_back({"representation.json", to_json(rep).dump(2) + "\n"});
  out.files.push_back({"decompose.csv", csv.str()});
  return out;
}

inline RunResult run_noon(const ResolvedConfig& cfg) {
  const FockDim d{cfg.cutoff};
  const NoonDecomposition dec = noon_decomposition(cfg.noon_order);
  const auto reps = noon_fock_representations(cfg.noon_order, d, cfg.probes);
  const TwoModeRepresentation composed = compose_with_fock_representations(dec, reps);
  RunResult out;
  out.report = report_header(cfg);
  out.report["closed_form_values"] = {{"fidelity", composed.fidelity}, {"zeta_plus", composed.zeta_plus},
                                      {"zeta_minus", composed.zeta_minus}, {"zeta", composed.zeta()}};
  out.report["decomposition"] = to_json(dec);
  out.files.push_back({"noon_decomposition.json", to_json(dec).dump(2) + "\n"});
  out.files.push_back({"noon_representation.json", to_json(composed).dump(2) + "\n"});
  std::ostringstream csv;
  csv << "family,interfered,theta,alpha_a,alpha_b,coefficient\n";
  for (const auto& t : composed.terms)
    csv << t.family << ',' << (t.interfered ? 1 : 0) << ',' << csv_number(t.theta) << ',' << csv_number(t.alpha_a)
        << ',' << csv_number(t.alpha_b) << ',' << csv_number(t.coefficient) << '\n';
  out.files.push_back({"noon_terms.csv", csv.str()});
  return out;
}

inline RunResult run_witness(const ResolvedConfig& cfg, bool four_detector) {
  const Representation rep = single_photon_rep(cfg);
  RunOptions run{cfg.n, cfg.seed, cfg.threads, cfg.sigmas};
  const auto mode = cfg.mode == "conditional" ? EmulationMode::conditional : EmulationMode::outcome;
  const WitnessReport w = witness_experiment(rep, run, four_detector ? &cfg.detector : nullptr, mode);
  RunResult out;
  out.report = report_header(cfg);
  out.report["W0"] = w.classical_limit;
  out.report["alpha0"] = w.argmax;
  out.report["target"] = w.target_value;
  out.report["mean"] = w.estimate.mean;
  out.report["excess_variance"] = w.probe_resolved.excess;
  out.report["required_N"] = w.required_n;
  out.report["closed_form_values"] = {{"classical_limit", w.classical_limit},
                                      {"argmax", w.argmax},
                                      {"target_value", w.target_value},
                                      {"representation_value", w.representation_value}};
  out.report["emulated_values"] = estimate_json(w.estimate);
  out.report["variances"] = {{"probe_resolved", variance_json(w.probe_resolved)},
                             {"outcome_level", variance_json(w.outcome_level)}};
  if (four_detector) out.report["outcome_values"] = std::vector<double>(w.z.data(), w.z.data() + w.z.size());
  std::ostringstream csv;
  csv << "alpha,witness\n";
  std::optional<RealisticWitness> rw;
  if (four_detector) rw = realistic_witness(cfg.detector);
  for (int k = 0; k <= 300; ++k) {
    const double a = 3.0 * k / 300;
    csv << csv_number(a) << ',' << csv_number(rw ? rw->coherent_value(a) : witness_value(a)) << '\n';
  }
  out.files.push_back({four_detector ? "witness4_curve.csv" : "witness_curve.csv", csv.str()});
  return out;
}

inline RunResult run_hom(const ResolvedConfig& cfg) {
  const Representation rep = single_photon_rep(cfg);
  RunOptions run{cfg.n, cfg.seed, cfg.threads, cfg.sigmas};
  const HomReport h = hom_emulation(rep, cfg.detector, cfg.overlap, run);
  RunResult out;
  out.report = report_header(cfg);
  out.report["closed_form_values"] = {{"p12_true", h.p12_true},
                                      {"p12_representation", h.p12_representation},
                                      {"p12_distinguishable", h.p12_distinguishable}};
  out.report["emulated_values"] = estimate_json(h.estimate);
  out.report["variances"] = variance_json(h.variance);
  out.report["required_N"] = h.required_n;
  std::ostringstream csv;
  csv << "f,p12_true\n";
  for (int k = 0; k <= 100; ++k) {
    const double f = k / 100.0;
    csv << csv_number(f) << ',' << csv_number(hom_true_p12(cfg.detector, f)) << '\n';
  }
  out.files.push_back({"hom_dip.csv", csv.str()});
  return out;
}

inline RunResult run_g2(const ResolvedConfig& cfg) {
  const Representation rep = single_photon_rep(cfg);
  RunOptions run{cfg.n, cfg.seed, cfg.threads, cfg.sigmas};
  const auto mode = cfg.mode == "conditional" ? EmulationMode::conditional : EmulationMode::outcome;
  const auto points = g2_scan(default_g2_thetas(), rep, cfg.detector, cfg.overlap, run, mode);
  RunResult out;
  out.report = report_header(cfg);
  Json closed = Json::array(), emu = Json::array();
  std::ostringstream csv;
  csv << "theta,g2_true,g2_emulated,sigma\n";
  for (const auto& p : points) {
    closed.push_back({{"theta", p.theta}, {"g2_true", p.g2_true}, {"g2_representation", p.g2_representation},
                      {"p2_ideal", p.p2_ideal}, {"p11_ideal", p.p11_ideal}});
    emu.push_back({{"theta", p.theta}, {"g2", p.g2_emulated}, {"sigma", p.sigma}, {"p11", p.p11},
                   {"p1", p.p1}, {"p2", p.p2}, {"n", p.n}});
    csv << csv_number(p.theta) << ',' << csv_number(p.g2_true) << ',' << csv_number(p.g2_emulated) << ','
        << csv_number(p.sigma) << '\n';
  }
  out.report["closed_form_values"] = std::move(closed);
  out.report["emulated_values"] = std::move(emu);
  out.files.push_back({"g2.csv", csv.str()});
  return out;
}

inline RunResult run_bell(const ResolvedConfig& cfg) {
  const Representation rep = single_photon_rep(cfg);
  const BellOptimum opt = bell_optimize(cfg.detector);
  BellConfig bc{opt.mu1, opt.mu2, cfg.detector, rep};
  RunOptions run{cfg.n, cfg.seed, cfg.threads, cfg.sigmas};
  const BellReport b = bell_emulation(bc, run, cfg.mode == "analytic" ? BellMode::analytic : BellMode::clicks);
  RunResult out;
  out.report = report_header(cfg);
  out.report["closed_form_values"] = {{"j0", opt.j0}, {"mu1", opt.mu1}, {"mu2", opt.mu2},
                                      {"j0_representation", b.j0_representation}};
  out.report["emulated_values"] = estimate_json(b.estimate);
  out.report["variances"] = {{"single_trial_predicted", b.estimate.variance_predicted},
                             {"single_trial_empirical", b.estimate.variance_empirical}};
  out.report["required_N"] = b.required_n;
  std::ostringstream csv;
  csv << "eta,j0,mu1,mu2\n";
  for (int k = 0; k <= 10; ++k) {
    const double eta = 0.8 + 0.02 * k;
    const BellOptimum o = bell_optimize(DetectorModel(eta, 0.0));
    csv << csv_number(eta) << ',' << csv_number(o.j0) << ',' << csv_number(o.mu1) << ',' << csv_number(o.mu2) << '\n';
  }
  out.files.push_back({"bell_optimum.csv", csv.str()});
  return out;
}

inline RunResult run_appendix(const ResolvedConfig& cfg) {
  const Representation rep = single_photon_rep(cfg);
  const auto sys = check_systematic_bound(500, cfg.seed);
  const auto conv = check_convergence(rep, {1000, 10000, 100000, 1000000}, 200, cfg.seed, cfg.threads);
  const auto mse = check_sampling_mse(rep, 1000, 500, cfg.seed);
  const auto resid = check_optimality_residual(random_coherent_representation(cfg.seed));
  RunResult out;
  out.report = report_header(cfg);
  out.report["systematic_bound"] = {{"trials", sys.trials}, {"violations", sys.violations},
                                    {"worst_slack", sys.worst_slack}};
  Json pts = Json::array();
  std::ostringstream csv;
  csv << "n,rms_error\n";
  for (const auto& p : conv.points) {
    pts.push_back({{"n", p.n}, {"rms_error", p.rms_error}});
    csv << p.n << ',' << csv_number(p.rms_error) << '\n';
  }
  out.report["convergence"] = {{"points", std::move(pts)}, {"slope", conv.slope}};
  out.report["sampling_mse"] = {{"predicted", mse.predicted}, {"empirical", mse.empirical},
                                {"relative_error", mse.relative_error()}};
  out.report["optimality_residual"] = {{"max_abs_error", resid.max_abs_error}};
  out.files.push_back({"convergence.csv", csv.str()});
  return out;
}

}  // namespace detail

/// Runs the job in memory; nothing is written.
inline RunResult run_experiment(const ResolvedConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::decompose: return detail::run_decompose(cfg);
    case Experiment::noon: return detail::run_noon(cfg);
    case Experiment::witness: return detail::run_witness(cfg, false);
    case Experiment::witness4: return detail::run_witness(cfg, true);
    case Experiment::hom: return detail::run_hom(cfg);
    case Experiment::g2: return detail::run_g2(cfg);
    case Experiment::bell: return detail::run_bell(cfg);
    case Experiment::appendix_checks: return detail::run_appendix(cfg);
  }
  throw Error(ErrorKind::invalid_argument, "unknown experiment");
}

/// Writes `<experiment>.json` and the auxiliary files into the output
/// directory. All files are staged first; on failure none are left behind.
inline std::vector<std::filesystem::path> emit_report(const ResolvedConfig& cfg, const RunResult& result) {
  namespace fs = std::filesystem;
  std::vector<OutputFile> files = result.files;
  files.insert(files.begin(), {std::string(to_string(cfg.experiment)) + ".json", result.report.dump(2) + "\n"});
  const fs::path dir(cfg.out);
  std::error_code ec;
  const bool created = !fs::exists(dir, ec);
  fs::create_directories(dir, ec);
  detail::require(!ec && fs::is_directory(dir), ErrorKind::io, "cannot create output directory " + dir.string());
  std::vector<fs::path> staged, written;
  auto cleanup = [&] {
    for (const auto& p : staged) fs::remove(p, ec);
    for (const auto& p : written) fs::remove(p, ec);
    if (created) fs::remove(dir, ec);
  };
  try {
    for (const auto& f : files) {
      const fs::path tmp = dir / ("." + f.name + ".tmp");
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      detail::require(static_cast<bool>(os), ErrorKind::io, "cannot write " + tmp.string());
      staged.push_back(tmp);
      os << f.content;
      os.close();
      detail::require(!os.fail(), ErrorKind::io, "failed writing " + tmp.string());
    }
    for (std::size_t k = 0; k < files.size(); ++k) {
      const fs::path dest = dir / files[k].name;
      fs::rename(staged[k], dest);
      written.push_back(dest);
    }
  } catch (const fs::filesystem_error& e) {
    cleanup();
    throw Error(ErrorKind::io, e.what());
  } catch (...) {
    cleanup();
    throw;
  }
  return written;
}

}  // namespace cse_lab
