#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "frips/config.hpp"
#include "frips/experiment.hpp"

using namespace frips;

namespace {

const char* kMinimal = R"(
[experiment]
name = "tiny"
methods = ["frips-mala"]

[manifold]
type = "euclidean"
dim = 2

[target]
family = "gaussian"
mean = [0.0, 0.0]
)";

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text, "bad.toml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string strip_wall_column(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    int idx = 0;
    while (std::getline(cells, cell, ',')) {
      if (idx != 9) out << cell << ',';
      ++idx;
    }
    out << '\n';
  }
  return out.str();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("minimal config picks up the documented defaults") {
  const auto cfg = parse_config_text(kMinimal, "mini.toml");
  CHECK(cfg.name == "tiny");
  CHECK(cfg.n_samples == 4096);
  CHECK(cfg.repetitions == 4);
  CHECK(cfg.workers == 1);
  CHECK(cfg.seed == 0);
  CHECK(cfg.sigma0 == 1.0);
  CHECK(cfg.msle_xi == 0.99);
  CHECK_FALSE(cfg.metric_wasserstein);
  CHECK(cfg.frips.K == 128);
  CHECK(cfg.frips.tK == 0.99);
  CHECK(cfg.frips.init == InitKind::Rla);
  CHECK(cfg.frips.backbone.n_chains == 8);
  CHECK(cfg.frips.backbone.steps == 32);
  CHECK(cfg.probe.n_blind == 128);
  REQUIRE(cfg.t0_grid.size() == 1);
  CHECK(cfg.t0_grid[0] == cfg.frips.t0);
  REQUIRE(cfg.methods.size() == 1);
  CHECK(cfg.methods[0] == MethodKind::FripsMala);
}

TEST_CASE("parse errors carry their line numbers") {
  CHECK(error_of("[experiment]\nname = \"x\"\nbogus = 3\n")
            .find("bad.toml:3") != std::string::npos);
  CHECK(error_of("[mystery]\nname = \"x\"\n").find("bad.toml:1") !=
        std::string::npos);
  CHECK(error_of("[experiment]\nname = \"x\"\nsamples = \"lots\"\n")
            .find("samples") != std::string::npos);
  CHECK(error_of("[experiment]\nname = \"a\"\nname = \"b\"\n")
            .find("bad.toml:3") != std::string::npos);
  CHECK(error_of("[target]\nmean = [1.0, \n").find("bad.toml:2") !=
        std::string::npos);
  CHECK(error_of("[experiment]\nseed = 12abc\n").find("bad.toml:2") !=
        std::string::npos);
  CHECK(error_of("name = \"x\"\n[experiment]\n").find("bad.toml:1") !=
        std::string::npos);
}

TEST_CASE("semantic validation refuses inconsistent setups") {
  auto with = [&](const std::string& patch_section,
                  const std::string& replacement) {
    std::string text = kMinimal;
    const auto pos = text.find(patch_section);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, patch_section.size(), replacement);
    return text;
  };

  // A name is required.
  CHECK_THROWS_AS(parse_config_text(with("name = \"tiny\"", ""), "x"),
                  ConfigError);
  // Geodesic mixtures need a curved manifold.
  CHECK_THROWS_AS(
      parse_config_text(
          with("family = \"gaussian\"\nmean = [0.0, 0.0]",
               "family = \"mog\"\nweights = [0.5, 0.5]\nsigmas = [0.3, 0.3]"),
          "x"),
      ConfigError);
  // Gaussian means must match the dimension.
  CHECK_THROWS_AS(parse_config_text(with("mean = [0.0, 0.0]", "mean = [0.0]"), "x"),
                  ConfigError);
  // Start times live strictly below 1.
  CHECK_THROWS_AS(
      parse_config_text(with("methods = [\"frips-mala\"]",
                             "methods = [\"frips-mala\"]\nt0_grid = [1.0]"),
                        "x"),
      ConfigError);
  // Flat student targets live on euclidean space, lifted ones on the sphere.
  CHECK_THROWS_AS(
      parse_config_text(
          with("family = \"gaussian\"\nmean = [0.0, 0.0]",
               "family = \"student\"\nlift = true"),
          "x"),
      ConfigError);
}

TEST_CASE("method names round-trip") {
  for (MethodKind k :
       {MethodKind::FripsMala, MethodKind::FripsIs, MethodKind::FripsRs,
        MethodKind::Mala, MethodKind::Is, MethodKind::Rs}) {
    CHECK(parse_method(method_name(k)) == k);
  }
  CHECK(method_is_frips(MethodKind::FripsIs));
  CHECK_FALSE(method_is_frips(MethodKind::Is));
  CHECK_THROWS_AS(parse_method("metropolis"), ConfigError);
}

TEST_CASE("config hashes are stable and seed-sensitive") {
  const auto a = parse_config_text(kMinimal, "a.toml");
  const auto b = parse_config_text(kMinimal, "b.toml");
  CHECK(config_hash_hex(a) == config_hash_hex(b));
  CHECK(config_hash_hex(a).size() == 16);
  auto c = a;
  c.seed = 12345;
  CHECK(config_hash_hex(c) != config_hash_hex(a));
  // The output directory is presentation, not identity.
  auto d = a;
  d.out = "elsewhere";
  CHECK(config_hash_hex(d) == config_hash_hex(a));
}

TEST_CASE("an experiment run writes matched, reproducible result files") {
  ExperimentConfig cfg = parse_config_text(kMinimal, "mini.toml");
  cfg.name = "cfg_api_smoke";
  cfg.n_samples = 32;
  cfg.repetitions = 1;
  cfg.seed = 11;
  cfg.t0_grid = {0.3};
  cfg.frips.t0 = 0.3;
  cfg.frips.K = 8;
  cfg.frips.init = InitKind::None;
  cfg.frips.backbone.n_chains = 2;
  cfg.frips.backbone.steps = 8;
  cfg.frips.backbone.keep = 4;
  cfg.methods = {MethodKind::FripsMala, MethodKind::Mala};

  cfg.out = "test_cfg_out/run_a";
  std::filesystem::remove_all("test_cfg_out");
  const auto out_a = run_experiment(cfg);
  REQUIRE(out_a.rows.size() == 2);
  CHECK(out_a.aborted_cells == 0);
  CHECK(out_a.rows[0].method == "frips-mala");
  CHECK(out_a.rows[1].method == "mala");
  for (const auto& row : out_a.rows) {
    CHECK(std::isfinite(row.rel_err));
    CHECK(row.q1_evals > 0);
    CHECK(row.wall_seconds >= 0.0);
  }
  // Budgets match within the audit tolerance.
  const double ratio = double(out_a.rows[0].q1_evals) / out_a.rows[1].q1_evals;
  CHECK(ratio <= 1.01);
  CHECK(ratio >= 1.0 / 1.01);

  cfg.out = "test_cfg_out/run_b";
  const auto out_b = run_experiment(cfg);
  CHECK(strip_wall_column(slurp(out_a.csv_path)) ==
        strip_wall_column(slurp(out_b.csv_path)));
  CHECK(slurp(out_a.csv_path).find("config_hash,method,t0,repetition") == 0);
}

TEST_CASE("a probe run reports return rates per component and time") {
  const char* text = R"(
[experiment]
name = "cfg_probe_smoke"
methods = ["frips-mala"]
seed = 3

[manifold]
type = "sphere"
dim = 2

[target]
family = "mog"
weights = [0.5, 0.5]
sigmas = [0.4, 0.4]

[frips]
t0 = 0.5
K = 8
init = "none"

[backbone]
n_chains = 2
steps = 8
keep = 2

[probe]
t_grid = [0.6, 0.99]
n_blind = 8
)";
  ExperimentConfig cfg = parse_config_text(text, "probe.toml");
  cfg.out = "test_cfg_out/probe";
  const auto out = run_probe(cfg);
  REQUIRE(out.rows.empty());
  REQUIRE(out.probe_rows.size() == 4);  // 2 components x 2 times
  for (const auto& row : out.probe_rows) {
    CHECK(row.tau >= 0.0);
    CHECK(row.tau <= 1.0);
    CHECK(row.n_blind == 8);
  }
  // Late probes classify almost perfectly on separated modes.
  for (const auto& row : out.probe_rows)
    if (row.t == 0.99) CHECK(row.tau >= 0.75);
  CHECK(slurp(out.csv_path).find("config_hash,component,t,tau") == 0);
}

TEST_CASE("direct mala baseline survives steps past the chart scale") {
  const char* text = R"(
[experiment]
name = "cfg_flat_mala"
methods = ["mala"]
seed = 5

[manifold]
type = "sphere"
dim = 4

[target]
family = "mog"
weights = [1.0, 1.0]
sigmas = [3.0, 3.0]
)";
  ExperimentConfig cfg = parse_config_text(text, "flat.toml");
  const TargetBundle bundle = build_bundle(cfg);
  Rng rng(91);
  BaselineStats stats;
  // With a step this large most proposal legs overshoot the cut locus;
  // those moves must be rejected, not crash the Jacobian evaluation.
  cfg.frips.backbone.step_size0 = 5.0;
  const auto out = direct_mala_baseline(bundle, *bundle.target, 2, 20000,
                                        cfg.frips.backbone, cfg.sigma0, rng,
                                        &stats);
  REQUIRE(out.size() == 2);
  for (const auto& x : out) {
    CHECK(x.allFinite());
    CHECK(x.norm() == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(stats.accept_rate > 0.0);
}
