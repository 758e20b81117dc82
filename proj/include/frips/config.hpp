#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frips/engine.hpp"

namespace frips {

enum class MethodKind { FripsMala, FripsIs, FripsRs, Mala, Is, Rs };

MethodKind parse_method(const std::string& name);
std::string method_name(MethodKind kind);
bool method_is_frips(MethodKind kind);

struct ManifoldSpec {
  std::string type;  // "euclidean" | "sphere" | "grassmann"
  int dim = 0;       // euclidean / sphere
  int rows = 0;      // grassmann ambient rows
  int cols = 0;      // grassmann subspace dim
};

struct TargetSpec {
  std::string family;           // "mog" | "student" | "gaussian"
  std::vector<double> weights;  // mixture weights, normalized later
  std::vector<double> sigmas;   // mog component widths
  std::string means = "poles";  // mog mean layout on the sphere
  double separation = 0.0;      // mog mean distance on grassmann
  double mu1 = 2.0;             // student mode 1 = mu1 * ones
  double mu2 = -1.0;            // student mode 2 = mu2 * ones
  double tau = 0.05;
  double nu = 1.0;
  bool lift = false;    // run the student target on the sphere
  double radius = 0.0;  // stereographic radius, 0 = sqrt(d)
  std::vector<double> mean;  // gaussian mean
  double sigma = 1.0;        // gaussian sd
};

struct ProbeSpec {
  std::vector<double> t_grid;
  int n_blind = 128;
  std::vector<int> components;  // empty = all components
  bool balanced = true;
};

struct ExperimentConfig {
  std::string name;
  ManifoldSpec manifold;
  TargetSpec target;
  std::vector<MethodKind> methods;
  std::vector<double> t0_grid;
  int n_samples = 4096;
  int repetitions = 4;
  std::uint64_t seed = 0;
  std::string out;
  int workers = 1;
  bool metric_wasserstein = false;
  bool metric_msle = false;
  double msle_xi = 0.99;
  double sigma0 = 1.0;
  FripsConfig frips;
  ProbeSpec probe;

  void validate() const;  // throws ConfigError
};

// Parses a sectioned key-value file.  Unknown sections or keys, type
// mismatches, and malformed lines raise ConfigError with a line number.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin);

}  // namespace frips
