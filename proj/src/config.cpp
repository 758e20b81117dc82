#include "frips/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace frips {

namespace {

struct Value {
  enum class Kind { Int, Float, Bool, Str, Array };
  Kind kind = Kind::Int;
  long long i = 0;
  double f = 0.0;
  bool b = false;
  std::string s;
  std::vector<Value> arr;
  int line = 0;
};

[[noreturn]] void fail(const std::string& origin, int line,
                       const std::string& msg) {
  std::ostringstream os;
  os << origin << ":" << line << ": " << msg;
  throw ConfigError(os.str());
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

Value parse_scalar(const std::string& origin, int line, const std::string& tok) {
  Value v;
  v.line = line;
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') {
    v.kind = Value::Kind::Str;
    v.s = tok.substr(1, tok.size() - 2);
    return v;
  }
  if (tok == "true" || tok == "false") {
    v.kind = Value::Kind::Bool;
    v.b = tok == "true";
    return v;
  }
  const bool looks_float = tok.find_first_of(".eE") != std::string::npos &&
                           tok.find('"') == std::string::npos;
  char* end = nullptr;
  if (!looks_float) {
    const long long i = std::strtoll(tok.c_str(), &end, 10);
    if (end && *end == '\0' && end != tok.c_str()) {
      v.kind = Value::Kind::Int;
      v.i = i;
      v.f = static_cast<double>(i);
      return v;
    }
  }
  end = nullptr;
  const double f = std::strtod(tok.c_str(), &end);
  if (!end || *end != '\0' || end == tok.c_str())
    fail(origin, line, "cannot parse value '" + tok + "'");
  v.kind = Value::Kind::Float;
  v.f = f;
  return v;
}

std::vector<std::string> split_top_level(const std::string& origin, int line,
                                         const std::string& body) {
  std::vector<std::string> parts;
  std::string cur;
  bool in_str = false;
  for (char c : body) {
    if (c == '"') in_str = !in_str;
    if (c == ',' && !in_str) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  const std::string last = trim(cur);
  if (!last.empty()) parts.push_back(last);
  if (in_str) fail(origin, line, "unterminated string");
  return parts;
}

Value parse_value(const std::string& origin, int line, const std::string& tok) {
  if (!tok.empty() && tok.front() == '[') {
    if (tok.back() != ']') fail(origin, line, "unterminated array");
    Value v;
    v.kind = Value::Kind::Array;
    v.line = line;
    for (const std::string& part :
         split_top_level(origin, line, tok.substr(1, tok.size() - 2)))
      v.arr.push_back(parse_scalar(origin, line, part));
    return v;
  }
  return parse_scalar(origin, line, tok);
}

class Table {
 public:
  Table(std::string origin) : origin_(std::move(origin)) {}

  void insert(const std::string& section, const std::string& key, Value v) {
    const std::string full = section + "." + key;
    if (values_.count(full))
      fail(origin_, v.line, "duplicate key '" + full + "'");
    values_[full] = std::move(v);
  }

  const Value* find(const std::string& section, const std::string& key) const {
    const auto it = values_.find(section + "." + key);
    if (it != values_.end()) consumed_.insert(section + "." + key);
    return it == values_.end() ? nullptr : &it->second;
  }

  bool has(const std::string& section, const std::string& key) const {
    return values_.count(section + "." + key) > 0;
  }

  void check_consumed() const {
    for (const auto& [full, v] : values_)
      if (!consumed_.count(full))
        fail(origin_, v.line, "unknown key '" + full + "'");
  }

  long long get_int(const std::string& s, const std::string& k,
                    long long def) const {
    const Value* v = find(s, k);
    if (!v) return def;
    if (v->kind != Value::Kind::Int)
      fail(origin_, v->line, "key '" + s + "." + k + "' must be an integer");
    return v->i;
  }

  double get_double(const std::string& s, const std::string& k,
                    double def) const {
    const Value* v = find(s, k);
    if (!v) return def;
    if (v->kind != Value::Kind::Int && v->kind != Value::Kind::Float)
      fail(origin_, v->line, "key '" + s + "." + k + "' must be a number");
    return v->f;
  }

  bool get_bool(const std::string& s, const std::string& k, bool def) const {
    const Value* v = find(s, k);
    if (!v) return def;
    if (v->kind != Value::Kind::Bool)
      fail(origin_, v->line, "key '" + s + "." + k + "' must be true/false");
    return v->b;
  }

  std::string get_string(const std::string& s, const std::string& k,
                         const std::string& def) const {
    const Value* v = find(s, k);
    if (!v) return def;
    if (v->kind != Value::Kind::Str)
      fail(origin_, v->line, "key '" + s + "." + k + "' must be a string");
    return v->s;
  }

  std::vector<double> get_double_array(const std::string& s,
                                       const std::string& k) const {
    const Value* v = find(s, k);
    std::vector<double> out;
    if (!v) return out;
    if (v->kind != Value::Kind::Array)
      fail(origin_, v->line, "key '" + s + "." + k + "' must be an array");
    for (const Value& e : v->arr) {
      if (e.kind != Value::Kind::Int && e.kind != Value::Kind::Float)
        fail(origin_, e.line, "array '" + s + "." + k + "' must hold numbers");
      out.push_back(e.f);
    }
    return out;
  }

  std::vector<int> get_int_array(const std::string& s,
                                 const std::string& k) const {
    const Value* v = find(s, k);
    std::vector<int> out;
    if (!v) return out;
    if (v->kind != Value::Kind::Array)
      fail(origin_, v->line, "key '" + s + "." + k + "' must be an array");
    for (const Value& e : v->arr) {
      if (e.kind != Value::Kind::Int)
        fail(origin_, e.line, "array '" + s + "." + k + "' must hold integers");
      out.push_back(static_cast<int>(e.i));
    }
    return out;
  }

  std::vector<std::string> get_string_array(const std::string& s,
                                            const std::string& k) const {
    const Value* v = find(s, k);
    std::vector<std::string> out;
    if (!v) return out;
    if (v->kind != Value::Kind::Array)
      fail(origin_, v->line, "key '" + s + "." + k + "' must be an array");
    for (const Value& e : v->arr) {
      if (e.kind != Value::Kind::Str)
        fail(origin_, e.line, "array '" + s + "." + k + "' must hold strings");
      out.push_back(e.s);
    }
    return out;
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::map<std::string, Value> values_;
  mutable std::set<std::string> consumed_;
};

Table parse_table(const std::string& text, const std::string& origin) {
  static const std::set<std::string> kSections = {
      "experiment", "manifold", "target", "frips",
      "backbone",   "metrics",  "probe"};
  Table table(origin);
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!kSections.count(section))
        fail(origin, line_no, "unknown section '" + section + "'");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(origin, line_no, "expected 'key = value'");
    if (section.empty())
      fail(origin, line_no, "key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      fail(origin, line_no, "expected 'key = value'");
    table.insert(section, key, parse_value(origin, line_no, val));
  }
  return table;
}

InitKind parse_init(const Table& t, const std::string& name, int line_hint) {
  if (name == "none") return InitKind::None;
  if (name == "rla") return InitKind::Rla;
  if (name == "imh") return InitKind::PseudoImh;
  fail(t.origin(), line_hint, "init must be one of none/rla/imh");
}

BackboneKind parse_backbone_kind(const Table& t, const std::string& name,
                                 int line_hint) {
  if (name == "mala") return BackboneKind::Mala;
  if (name == "rs") return BackboneKind::Rs;
  if (name == "is") return BackboneKind::Is;
  fail(t.origin(), line_hint, "backbone kind must be one of mala/rs/is");
}

}  // namespace

MethodKind parse_method(const std::string& name) {
  if (name == "frips-mala") return MethodKind::FripsMala;
  if (name == "frips-is") return MethodKind::FripsIs;
  if (name == "frips-rs") return MethodKind::FripsRs;
  if (name == "mala") return MethodKind::Mala;
  if (name == "is") return MethodKind::Is;
  if (name == "rs") return MethodKind::Rs;
  throw ConfigError("unknown method '" + name + "'");
}

std::string method_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::FripsMala: return "frips-mala";
    case MethodKind::FripsIs: return "frips-is";
    case MethodKind::FripsRs: return "frips-rs";
    case MethodKind::Mala: return "mala";
    case MethodKind::Is: return "is";
    case MethodKind::Rs: return "rs";
  }
  return "?";
}

bool method_is_frips(MethodKind kind) {
  return kind == MethodKind::FripsMala || kind == MethodKind::FripsIs ||
         kind == MethodKind::FripsRs;
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
  const Table t = parse_table(text, origin);
  ExperimentConfig cfg;

  cfg.name = t.get_string("experiment", "name", "");
  cfg.seed = static_cast<std::uint64_t>(t.get_int("experiment", "seed", 0));
  cfg.n_samples =
      static_cast<int>(t.get_int("experiment", "samples", cfg.n_samples));
  cfg.repetitions =
      static_cast<int>(t.get_int("experiment", "repetitions", cfg.repetitions));
  cfg.out = t.get_string("experiment", "out", "");
  cfg.workers = static_cast<int>(t.get_int("experiment", "workers", 1));
  for (const std::string& m : t.get_string_array("experiment", "methods"))
    cfg.methods.push_back(parse_method(m));
  cfg.t0_grid = t.get_double_array("experiment", "t0_grid");

  cfg.manifold.type = t.get_string("manifold", "type", "");
  cfg.manifold.dim = static_cast<int>(t.get_int("manifold", "dim", 0));
  cfg.manifold.rows = static_cast<int>(t.get_int("manifold", "rows", 0));
  cfg.manifold.cols = static_cast<int>(t.get_int("manifold", "cols", 0));

  cfg.target.family = t.get_string("target", "family", "");
  cfg.target.weights = t.get_double_array("target", "weights");
  cfg.target.sigmas = t.get_double_array("target", "sigmas");
  cfg.target.means = t.get_string("target", "means", cfg.target.means);
  cfg.target.separation =
      t.get_double("target", "separation", cfg.target.separation);
  cfg.target.mu1 = t.get_double("target", "mu1", cfg.target.mu1);
  cfg.target.mu2 = t.get_double("target", "mu2", cfg.target.mu2);
  cfg.target.tau = t.get_double("target", "tau", cfg.target.tau);
  cfg.target.nu = t.get_double("target", "nu", cfg.target.nu);
  cfg.target.lift = t.get_bool("target", "lift", false);
  cfg.target.radius = t.get_double("target", "radius", 0.0);
  cfg.target.mean = t.get_double_array("target", "mean");
  cfg.target.sigma = t.get_double("target", "sigma", cfg.target.sigma);

  cfg.frips.t0 = t.get_double("frips", "t0", cfg.frips.t0);
  cfg.frips.tK = t.get_double("frips", "tK", cfg.frips.tK);
  cfg.frips.K = static_cast<int>(t.get_int("frips", "K", cfg.frips.K));
  if (const auto* v = t.find("frips", "init")) {
    if (v->kind != Value::Kind::Str)
      fail(origin, v->line, "key 'frips.init' must be a string");
    cfg.frips.init = parse_init(t, v->s, v->line);
  }
  cfg.frips.init_steps =
      static_cast<int>(t.get_int("frips", "init_steps", cfg.frips.init_steps));
  cfg.frips.init_step_size =
      t.get_double("frips", "init_step_size", cfg.frips.init_step_size);
  cfg.frips.imh_batch =
      static_cast<int>(t.get_int("frips", "imh_batch", cfg.frips.imh_batch));
  cfg.sigma0 = t.get_double("frips", "sigma0", cfg.sigma0);

  BackboneConfig& bb = cfg.frips.backbone;
  if (const auto* v = t.find("backbone", "kind")) {
    if (v->kind != Value::Kind::Str)
      fail(origin, v->line, "key 'backbone.kind' must be a string");
    bb.kind = parse_backbone_kind(t, v->s, v->line);
  }
  bb.n_chains =
      static_cast<int>(t.get_int("backbone", "n_chains", bb.n_chains));
  bb.steps = static_cast<int>(t.get_int("backbone", "steps", bb.steps));
  bb.keep = static_cast<int>(t.get_int("backbone", "keep", bb.keep));
  bb.step_size0 = t.get_double("backbone", "step_size0", bb.step_size0);
  bb.target_accept =
      t.get_double("backbone", "target_accept", bb.target_accept);
  if (bb.target_accept <= 0.0 || bb.target_accept >= 1.0)
    throw ConfigError("backbone.target_accept must lie strictly in (0, 1)");
  bb.adapt_down = std::exp(-bb.target_accept / (1.0 - bb.target_accept) *
                           std::log(bb.adapt_up));
  bb.proposal_jacobian =
      t.get_bool("backbone", "proposal_jacobian", bb.proposal_jacobian);
  bb.is_samples =
      static_cast<int>(t.get_int("backbone", "is_samples", bb.is_samples));
  bb.rs_samples =
      static_cast<int>(t.get_int("backbone", "rs_samples", bb.rs_samples));
  bb.rs_cap_factor = static_cast<int>(
      t.get_int("backbone", "rs_cap_factor", bb.rs_cap_factor));
  bb.rs_budget_mode =
      t.get_bool("backbone", "rs_budget_mode", bb.rs_budget_mode);
  bb.rs_budget =
      static_cast<int>(t.get_int("backbone", "rs_budget", bb.rs_budget));
  bb.rs_adaptive_bound =
      t.get_bool("backbone", "rs_adaptive_bound", bb.rs_adaptive_bound);

  cfg.metric_wasserstein = t.get_bool("metrics", "wasserstein", false);
  cfg.metric_msle = t.get_bool("metrics", "msle", false);
  cfg.msle_xi = t.get_double("metrics", "xi", cfg.msle_xi);

  cfg.probe.t_grid = t.get_double_array("probe", "t_grid");
  cfg.probe.n_blind =
      static_cast<int>(t.get_int("probe", "n_blind", cfg.probe.n_blind));
  cfg.probe.components = t.get_int_array("probe", "components");
  cfg.probe.balanced = t.get_bool("probe", "balanced", true);

  t.check_consumed();
  if (cfg.t0_grid.empty()) cfg.t0_grid.push_back(cfg.frips.t0);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("experiment.name is required");
  if (n_samples < 1) throw ConfigError("experiment.samples must be >= 1");
  if (repetitions < 1) throw ConfigError("experiment.repetitions must be >= 1");
  if (workers < 1) throw ConfigError("experiment.workers must be >= 1");

  if (manifold.type == "euclidean" || manifold.type == "sphere") {
    if (manifold.dim < 1) throw ConfigError("manifold.dim must be >= 1");
  } else if (manifold.type == "grassmann") {
    if (manifold.rows < 2 || manifold.cols < 1 ||
        manifold.cols >= manifold.rows)
      throw ConfigError("manifold needs rows > cols >= 1");
  } else {
    throw ConfigError("manifold.type must be euclidean/sphere/grassmann");
  }

  const bool compact = manifold.type != "euclidean";
  if (target.family == "mog") {
    if (!compact) throw ConfigError("target 'mog' needs a compact manifold");
    if (target.weights.empty())
      throw ConfigError("target.weights is required for 'mog'");
    if (target.sigmas.size() != target.weights.size())
      throw ConfigError("target.sigmas must match target.weights in length");
    for (double s : target.sigmas)
      if (!(s > 0.0)) throw ConfigError("target.sigmas must be positive");
    if (manifold.type == "sphere" && target.means != "poles")
      throw ConfigError("sphere 'mog' supports means = \"poles\" only");
    if (manifold.type == "grassmann" && !(target.separation > 0.0))
      throw ConfigError("grassmann 'mog' needs target.separation > 0");
  } else if (target.family == "student") {
    if (target.weights.empty())
      throw ConfigError("target.weights is required for 'student'");
    if (!(target.tau > 0.0) || !(target.nu > 0.0))
      throw ConfigError("target.tau and target.nu must be positive");
    if (target.lift && manifold.type != "sphere")
      throw ConfigError("lifted 'student' needs manifold.type = \"sphere\"");
    if (!target.lift && manifold.type != "euclidean")
      throw ConfigError("plain 'student' needs manifold.type = \"euclidean\"");
  } else if (target.family == "gaussian") {
    if (manifold.type != "euclidean")
      throw ConfigError("target 'gaussian' needs manifold.type = \"euclidean\"");
    if (!target.mean.empty() &&
        static_cast<int>(target.mean.size()) != manifold.dim)
      throw ConfigError("target.mean length must equal manifold.dim");
    if (!(target.sigma > 0.0))
      throw ConfigError("target.sigma must be positive");
  } else {
    throw ConfigError("target.family must be mog/student/gaussian");
  }
  for (double w : target.weights)
    if (!(w > 0.0)) throw ConfigError("target.weights must be positive");

  for (double t0 : t0_grid)
    if (!(t0 >= 0.0 && t0 < 1.0))
      throw ConfigError("t0 grid values must lie in [0, 1)");
  {
    FripsConfig probe_cfg = frips;
    for (double t0 : t0_grid) {
      probe_cfg.t0 = t0;
      probe_cfg.validate();
    }
  }
  if (!(sigma0 > 0.0)) throw ConfigError("frips.sigma0 must be positive");

  const BackboneConfig& bb = frips.backbone;
  if (bb.n_chains < 1 || bb.steps < 1 || bb.keep < 1)
    throw ConfigError("backbone chain sizes must be >= 1");
  if (!(bb.step_size0 > 0.0))
    throw ConfigError("backbone.step_size0 must be positive");
  if (bb.is_samples < 1 || bb.rs_samples < 1 || bb.rs_budget < 1 ||
      bb.rs_cap_factor < 1)
    throw ConfigError("backbone sample counts must be >= 1");

  if (!(msle_xi >= 0.0 && msle_xi < 1.0))
    throw ConfigError("metrics.xi must lie in [0, 1)");
  if (probe.n_blind < 1) throw ConfigError("probe.n_blind must be >= 1");
  for (double tv : probe.t_grid)
    if (!(tv > 0.0 && tv < 1.0))
      throw ConfigError("probe.t_grid values must lie in (0, 1)");
}

}  // namespace frips
