// Command-line runner: one experiment per invocation, reports written to --out.

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cse_lab.hpp"

namespace {

int exit_code(cse_lab::ErrorKind kind) {
  using cse_lab::ErrorKind;
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::dimension_mismatch:
    case ErrorKind::cutoff_too_small:
    case ErrorKind::io: return 2;
    default: return 3;
  }
}

int fail(const std::string& kind, const std::string& message, int code) {
  cse_lab::Json err{{"schema", cse_lab::kSchema}, {"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << err.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emulate quantum measurements with signed mixtures of phase-averaged coherent states"};
  app.set_version_flag("--version", std::string(cse_lab::kVersion));
  app.require_subcommand(1);

  std::map<std::string, std::string> flags;
  std::string config_path;

  const std::map<std::string, std::string> options{
      {"eta", "Detector efficiency in (0, 1]"},
      {"eps", "Dark-count probability in [0, 1)"},
      {"f", "Mode overlap in [0, 1]"},
      {"n", "Number of emulation trials"},
      {"seed", "Random seed"},
      {"cutoff", "Fock cutoff per mode"},
      {"out", "Output directory"},
      {"threads", "Worker threads (0 = hardware concurrency)"},
      {"probes", "Comma-separated probe amplitudes"},
      {"target", "Decomposition target, fock:<n>"},
      {"N", "NOON order"},
      {"mode", "Emulation mode: outcome|conditional, or clicks|analytic for bell"},
      {"sigmas", "Confidence multiple used for required sample counts"},
  };

  const char* commands[][2] = {
      {"decompose", "Decompose a Fock state over phase-averaged coherent probes"},
      {"noon", "Decompose a NOON state and compose its two-mode representation"},
      {"witness", "Ideal nonclassicality witness on an emulated single photon"},
      {"witness4", "Four-detector witness on an emulated single photon"},
      {"hom", "Hong-Ou-Mandel coincidences from two emulated single photons"},
      {"g2", "Normalized coincidence scan for two-photon phase estimation"},
      {"bell", "Clauser-Horne test with displaced on-off detection"},
      {"appendix-checks", "Property checks of bounds, convergence and sampling noise"},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c[0], c[1]);
    for (const auto& [name, help] : options) {
      const std::string flag = "--" + name;
      sub->add_option_function<std::string>(flag, [&flags, name = name](const std::string& v) { flags[name] = v; },
                                            help);
    }
    sub->add_option("--config", config_path, "Configuration file of key = value lines (flags take precedence)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("invalid_argument", e.what(), 2);
  }

  try {
    cse_lab::RunConfig cfg;
    if (!config_path.empty()) cse_lab::load_config_file(cfg, config_path);
    cfg.experiment = cse_lab::parse_experiment(app.get_subcommands().front()->get_name());
    for (const auto& [key, value] : flags) cse_lab::apply_setting(cfg, key, value);
    const cse_lab::ResolvedConfig resolved = cse_lab::resolve(cfg);
    const cse_lab::RunResult result = cse_lab::run_experiment(resolved);
    const auto written = cse_lab::emit_report(resolved, result);
    for (const auto& p : written) std::cout << p.string() << '\n';
    return 0;
  } catch (const cse_lab::Error& e) {
    return fail(cse_lab::to_string(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return fail("numerical", e.what(), 3);
  }
}
