// bathlab — run one experiment from a JSON config.
//
//   bathlab <kind> --config FILE [--out DIR] [--seed N] [--format csv|json|both]
//
// Exit codes: 0 all checks passed, 1 a check failed, 2 usage or config error,
// 3 model/numerical error, 4 I/O error.

#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <iterator>
#include <map>

#include "CLI11.hpp"
#include "bathlab/error.hpp"
#include "bathlab/experiment.hpp"

namespace {

enum Exit { kPassed = 0, kCheckFailed = 1, kConfigError = 2, kModelError = 3, kIoError = 4 };

std::string read_text(const std::string& path) {
  if (path == "-") {
    return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  }
  std::ifstream f(path, std::ios::binary);
  if (!f) throw bathlab::IoError(fmt::format("cannot read config {}", path));
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Oscillator coupled to a Lorentzian heat bath: experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string format = "both";
  const std::map<std::string, bathlab::OutputFormat> formats{
      {"csv", bathlab::OutputFormat::Csv},
      {"json", bathlab::OutputFormat::Json},
      {"both", bathlab::OutputFormat::Both}};

  const std::vector<std::pair<bathlab::ExperimentKind, std::string>> kinds{
      {bathlab::ExperimentKind::Roots, "characteristic roots, regime and positivity bound"},
      {bathlab::ExperimentKind::Kernel, "memory kernel: closed form against quadrature"},
      {bathlab::ExperimentKind::Covariance, "covariance coefficients A, B, C over time"},
      {bathlab::ExperimentKind::Density, "phase-space density at fixed points"},
      {bathlab::ExperimentKind::DecayFit, "decay rate of the density in the runaway regime"},
      {bathlab::ExperimentKind::Ensemble, "Monte Carlo over Gibbs-distributed finite baths"},
      {bathlab::ExperimentKind::RegimeScan, "coupling sweep across the positivity bound"},
      {bathlab::ExperimentKind::Runaway, "deterministic growth with the bath at rest"}};

  for (const auto& [kind, help] : kinds) {
    auto* sub = app.add_subcommand(std::string(bathlab::to_string(kind)), help);
    sub->add_option("-c,--config", config_path, "JSON config file ('-' for stdin)")->required();
    sub->add_option("-o,--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_option("--format", format, "csv, json or both")
        ->check(CLI::IsMember({"csv", "json", "both"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPassed : kConfigError;
  }

  const auto* sub = app.get_subcommands().front();
  const auto kind = *bathlab::parse_kind(sub->get_name());

  try {
    auto cfg = bathlab::parse_config(read_text(config_path), kind);
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--out")) cfg.output = out_dir;

    const auto out = bathlab::run_experiment(cfg);
    const auto paths = bathlab::write_outputs(out, cfg, cfg.output, formats.at(format));
    for (const auto& p : paths) fmt::print("wrote {}\n", p.string());
    fmt::print("{}: {}\n", bathlab::to_string(cfg.kind), out.passed ? "all checks passed"
                                                                   : "CHECK FAILED");
    return out.passed ? kPassed : kCheckFailed;
  } catch (const bathlab::ParseError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kConfigError;
  } catch (const bathlab::ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kConfigError;
  } catch (const bathlab::IoError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kIoError;
  } catch (const bathlab::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kModelError;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kModelError;
  }
}
