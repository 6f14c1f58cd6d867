// nvmag-cli: configuration-driven runner for spectra, couplings and dynamics.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include <nvmag/cli.hpp>

namespace cli = nvmag::cli;

int main(int argc, char** argv) {
  CLI::App app{"Magnon spectra, NV couplings and entanglement protocols"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cli::version));

  std::string config_path;
  std::string geometry = "bar";
  cli::Overrides ov;

  auto* init = app.add_subcommand("config-init", "Write the default scenario to DIR/config.toml");
  init->add_option("--out", ov.out, "Output directory")->default_str(".");
  init->add_option("--geometry", geometry, "Scenario family")->check(CLI::IsMember({"bar", "waveguide"}));

  const std::map<std::string, std::string> about{
      {"dispersion", "Waveguide (0,0) band and coupling magnitude versus wavenumber"},
      {"coupling-map", "NV coupling strength over a grid of positions"},
      {"geff-sweep", "Dispersive NV-NV coupling and GDR versus separation"},
      {"bar-modes", "Bar mode frequencies versus field and per-mode couplings"},
      {"simulate", "Protocol traces and peak fidelities per temperature"},
      {"gate-fidelity", "Average sqrt(iSWAP) gate fidelity versus interaction time"},
      {"phase-diagram", "Protocol winner over damping and dephasing, with crossover"},
      {"decoherence", "Dephasing times and T1 rates per temperature"}};
  std::vector<CLI::App*> runners;
  for (const auto& [name, fn] : cli::subcommands()) {
    auto* sc = app.add_subcommand(name, about.at(name));
    sc->add_option("--config", config_path, "Scenario file")->required()->check(CLI::ExistingFile);
    sc->add_option("--out", ov.out, "Output directory (overrides output.dir)");
    sc->add_option("--jobs", ov.jobs, "Concurrent sweep workers")->check(CLI::Range(1, 256));
    sc->add_option("--quad-rtol", ov.quad_rtol, "Quadrature relative tolerance");
    sc->add_option("--n-trunc", ov.n_trunc, "Bar mode truncation N");
    sc->add_option("--fock-cutoff", ov.fock_cutoff, "Minimum magnon Fock cutoff");
    runners.push_back(sc);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::exit_config;
  }

  if (init->parsed()) {
    const auto cfg = geometry == "waveguide" ? cli::waveguide_defaults() : cli::ScenarioConfig{};
    const std::filesystem::path dir = ov.out.value_or(".");
    std::filesystem::create_directories(dir);
    const auto path = dir / "config.toml";
    std::ofstream f(path);
    if (!f) {
      std::cerr << "cannot write " << path << "\n";
      return cli::exit_config;
    }
    f << cli::emit_config(cfg);
    std::cout << path.string() << "\n";
    return cli::exit_ok;
  }

  for (auto* sc : runners) {
    if (!sc->parsed()) continue;
    cli::ScenarioConfig cfg;
    try {
      cfg = cli::apply(cli::load_config(config_path), ov);
    } catch (const cli::ConfigError& e) {
      std::cerr << e.what() << "\n";
      return cli::exit_config;
    }
    const int code = cli::run(sc->get_name(), cfg, ov.jobs, std::cerr);
    if (code == cli::exit_ok) std::cout << (std::filesystem::path(cfg.out_dir) / ("manifest_" + sc->get_name() + ".json")).string() << "\n";
    return code;
  }
  return cli::exit_config;
}
