// vvl: batch driver for scenario reduction, VVC extraction, week simulation and identification.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "vvl/pipeline.hpp"

using namespace vvl;

int main(int argc, char** argv) {
  CLI::App app{"Volt-Var curve pipeline for unbalanced LV feeders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config;
  bool resilient = false, plots = false;
  std::string a_path, b_path, bank_path, meas_path, out_path;
  double tol = 0.05;
  double r_ohm = 0.5, l_h = 1e-3, noise = 0.0;

  auto* reduce = app.add_subcommand("reduce", "build and reduce the scenario set");
  reduce->add_option("-c,--config", config, "pipeline config (JSON)")->required();

  auto* extract = app.add_subcommand("extract", "run Stages I-IV per objective");
  extract->add_option("-c,--config", config, "pipeline config (JSON)")->required();
  extract->add_flag("--resilient", resilient, "build the contingency-indexed bank");
  extract->add_flag("--plots", plots, "write SVG scatter plots");

  auto* simulate = app.add_subcommand("simulate", "run the policy matrix over the week");
  simulate->add_option("-c,--config", config, "pipeline config (JSON)")->required();
  simulate->add_flag("--plots", plots, "write SVG voltage traces");

  auto* compare = app.add_subcommand("compare", "difference of two report summaries (b - a)");
  compare->add_option("a", a_path)->required();
  compare->add_option("b", b_path)->required();

  auto* identify = app.add_subcommand("identify", "classify a measured fingerprint against a bank");
  identify->add_option("--bank", bank_path)->required();
  identify->add_option("--measured", meas_path)->required();
  identify->add_option("--tol", tol, "relative tolerance")->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "write the configured time series as CSV");
  synth->add_option("-c,--config", config, "pipeline config (JSON)")->required();
  synth->add_option("-o,--out", out_path)->required();

  auto* prbs = app.add_subcommand("prbs", "PRBS impedance estimate on a Thevenin test circuit");
  prbs->add_option("--r", r_ohm, "resistance [ohm]");
  prbs->add_option("--l", l_h, "inductance [H]");
  prbs->add_option("--noise", noise, "voltage noise relative to the source RMS");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*reduce) {
      cmd_reduce(load_config(config), std::cout);
    } else if (*extract) {
      cmd_extract(load_config(config), resilient, plots, std::cout);
    } else if (*simulate) {
      cmd_simulate(load_config(config), plots, std::cout);
    } else if (*compare) {
      std::cout << cmd_compare(a_path, b_path).dump(2) << '\n';
    } else if (*identify) {
      std::cout << cmd_identify(bank_path, meas_path, tol).dump(2) << '\n';
    } else if (*synth) {
      const auto c = load_config(config);
      const auto m = load_network(c.resolve(c.network).string());
      std::ofstream out(out_path);
      if (!out) throw ParseError("cannot write '" + out_path + "'");
      write_timeseries_csv(out, load_series(c, m));
    } else if (*prbs) {
      PRBSConfig cfg;
      cfg.noise_fraction = noise;
      const auto est = estimate_impedance_prbs({r_ohm, l_h}, cfg);
      const cplx z_true{r_ohm, 2.0 * std::numbers::pi * 50.0 * l_h};
      std::cout << nlohmann::json{{"r_ohm", est.r_ohm},
                                  {"l_h", est.l_h},
                                  {"z_fundamental", {est.z_fundamental.real(), est.z_fundamental.imag()}},
                                  {"magnitude_error", std::abs(std::abs(est.z_fundamental) / std::abs(z_true) - 1.0)},
                                  {"phase_error_deg", (std::arg(est.z_fundamental) - std::arg(z_true)) * 180.0 / std::numbers::pi}}
                       .dump(2)
                << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "vvl: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
