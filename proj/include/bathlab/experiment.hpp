// experiment.hpp — config-driven experiment runner behind the command-line tool.
//
// A config is a JSON object with a "kind" and the parameter block for that
// kind; unknown keys are errors. Each run produces a CSV series (17 significant
// digits, fixed columns per kind) and a JSON summary
//
//   {"config": {...}, "derived": {...}, "checks": [...], "warnings": [...], "passed": bool}
//
// whose "config" member is the canonical, fully defaulted config: feeding the
// summary back to parse_config reproduces the run byte for byte.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bathlab/density.hpp"
#include "bathlab/ensemble.hpp"

namespace bathlab {

enum class ExperimentKind { Roots, Kernel, Covariance, Density, DecayFit, Ensemble, RegimeScan, Runaway };

// "roots", "kernel", "covariance", "density", "decay-fit", "ensemble",
// "regime-scan", "runaway"
std::string_view to_string(ExperimentKind k) noexcept;
std::optional<ExperimentKind> parse_kind(std::string_view s) noexcept;

// Malformed document (not JSON, or not an object).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Output directory or file could not be written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FieldError {
  std::string field;
  std::string message;
};

// One or more fields violate a constraint; what() lists them all.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<FieldError> errors);
  const std::vector<FieldError>& errors() const noexcept { return errors_; }
  // Name of the first offending field.
  const std::string& field() const noexcept { return errors_.front().field; }

 private:
  std::vector<FieldError> errors_;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Roots;

  // Model. ω may be given as "omega" or "omega_sq", ε as "epsilon" or
  // "coupling_rhs" (= ε²π/(2b)); the given form is kept for the echo.
  double a = 0.0;
  double b = 0.0;
  double omega = 0.0;
  std::optional<double> omega_sq;
  double epsilon = 0.0;
  std::optional<double> coupling_rhs;
  double kT = 1.0;
  double q0 = 0.0;
  double p0 = 0.0;

  // Output grid (kernel, covariance, density, decay-fit, ensemble).
  std::vector<double> times;

  // kernel
  double tolerance = 1e-5;
  // covariance, density, decay-fit
  double quad_nu_max = 1000.0;
  double quad_tolerance = 1e-3;
  // density, decay-fit: fixed phase points
  std::vector<PhasePoint> points;

  // Finite bath (ensemble, regime-scan, runaway); nu_max 0 means 50·√(a/b).
  std::size_t n = 2000;
  double nu_max = 0.0;
  // ensemble
  std::size_t sample_count = 1000;
  std::uint64_t seed = 0;
  Method method = Method::SolutionFormula;
  double step = 0.0;
  // regime-scan; eps_sq_max 0 means twice the positivity bound
  double eps_sq_min = 0.0;
  double eps_sq_max = 0.0;
  std::size_t scan_points = 101;
  // runaway
  double t_max = 30.0;
  std::size_t fit_samples = 64;

  std::string output = "out";

  SpectralDensity spectral_density() const { return SpectralDensity(a, b); }
  ModelParams model_params() const { return ModelParams::make(omega, epsilon, kT, q0, p0); }
  // Bath used by ensemble, regime-scan and runaway.
  BathDiscretization bath() const;
  double bath_nu_max() const noexcept;
};

// Accepts a config document or a run summary (its "config" member).
// `kind_hint` supplies the kind when the document has none; if both are
// present they must agree. Throws ParseError or ValidationError.
ExperimentConfig parse_config(std::string_view text,
                              std::optional<ExperimentKind> kind_hint = std::nullopt);

// Canonical JSON text of the config (what the summary echoes).
std::string config_to_json(const ExperimentConfig& cfg);

struct ExperimentOutput {
  std::string csv;
  std::string summary;  // JSON text
  bool passed = false;
};

// Runs the experiment in memory. Module failures propagate as bathlab::Error
// or std::invalid_argument.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

enum class OutputFormat { Csv, Json, Both };

// Writes <dir>/<kind>.csv and/or <dir>/<kind>.json; returns the paths written.
// Throws IoError.
std::vector<std::filesystem::path> write_outputs(const ExperimentOutput& out,
                                                 const ExperimentConfig& cfg,
                                                 const std::filesystem::path& dir,
                                                 OutputFormat format);

}  // namespace bathlab
