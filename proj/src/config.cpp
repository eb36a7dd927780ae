#include "arbsurf/config.hpp"

#include <algorithm>
#include <filesystem>

#include "arbsurf/errors.hpp"
#include "arbsurf/hash.hpp"
#include "arbsurf/market_data.hpp"

namespace arbsurf {

namespace {

using nlohmann::json;

void merge_into(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string field = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError(field + ": unknown key");
    json& slot = base[it.key()];
    if (slot.is_object())
      merge_into(slot, it.value(), field);
    else
      slot = it.value();
  }
}

// Typed reads that name the offending field.
class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& at(const std::string& path) const {
    const json* node = &root_;
    std::size_t start = 0;
    while (start <= path.size()) {
      std::size_t dot = path.find('.', start);
      std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(key)) throw ConfigError(path + ": missing");
      node = &(*node)[key];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return *node;
  }
  double num(const std::string& p) const {
    const json& v = at(p);
    if (!v.is_number()) throw ConfigError(p + ": expected a number");
    return v.get<double>();
  }
  int integer(const std::string& p) const {
    const json& v = at(p);
    if (!v.is_number_integer()) throw ConfigError(p + ": expected an integer");
    return v.get<int>();
  }
  std::uint64_t seed(const std::string& p) const {
    const json& v = at(p);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError(p + ": expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  bool flag(const std::string& p) const {
    const json& v = at(p);
    if (!v.is_boolean()) throw ConfigError(p + ": expected true or false");
    return v.get<bool>();
  }
  std::string str(const std::string& p) const {
    const json& v = at(p);
    if (!v.is_string()) throw ConfigError(p + ": expected a string");
    return v.get<std::string>();
  }
  std::vector<double> nums(const std::string& p) const {
    const json& v = at(p);
    if (!v.is_array()) throw ConfigError(p + ": expected an array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
      if (!e.is_number()) throw ConfigError(p + ": expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  std::vector<int> ints(const std::string& p) const {
    const json& v = at(p);
    if (!v.is_array()) throw ConfigError(p + ": expected an array of integers");
    std::vector<int> out;
    for (const json& e : v) {
      if (!e.is_number_integer()) throw ConfigError(p + ": expected an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

 private:
  const json& root_;
};

template <class F>
void field_check(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

json default_config_json() {
  const CalibConfig c;
  const VaeConfig v;
  const SynthConfig s;
  const GenerateSettings g;
  return json{
      {"paths", {{"archive", ""}, {"conditioning", ""}, {"out", "run"}}},
      {"model", "ctmc"},
      {"calib",
       {{"alpha", json::array()},
        {"temporal_penalty", c.temporal_penalty},
        {"budget", c.budget},
        {"warm_budget", c.warm_budget},
        {"restarts", c.restarts},
        {"seed", c.seed},
        {"regimes", c.regimes}}},
      {"vae",
       {{"betas", {0.01, 0.1, 1.0, 10.0}},
        {"latent_dims", {3, 5, 10, 15}},
        {"hidden", v.mlp.hidden},
        {"learning_rate", v.learning_rate},
        {"weight_decay", v.weight_decay},
        {"batch", v.batch},
        {"epochs", v.epochs},
        {"seed", v.seed}}},
      {"generators", {{"vae", true}, {"cvae", false}, {"pca", true}, {"vae_iv", true}, {"empirical", true}}},
      {"split", {{"train_end", ""}, {"fit_test", true}}},
      {"evaluate", {{"n_draws", 500}, {"seed", 1}, {"windows", json::array()}, {"window_test_days", 0}}},
      {"generate",
       {{"generator", g.generator},
        {"beta", g.beta},
        {"latent_dim", g.latent_dim},
        {"n", g.n},
        {"seed", g.seed},
        {"audit", g.audit}}},
      {"synth",
       {{"days", s.days},
        {"seed", s.seed},
        {"start", format_date(s.start)},
        {"spot", s.spot},
        {"rd", s.rd},
        {"rf", s.rf},
        {"regimes", s.regimes},
        {"persistence", s.persistence},
        {"level_vol", s.level_vol},
        {"idio_vol", s.idio_vol},
        {"drift_vol", s.drift_vol},
        {"switch_prob", s.switch_prob},
        {"regime_block", s.regime_block},
        {"stress_shift", s.stress_shift},
        {"calm_level", s.calm_level},
        {"stress_level", s.stress_level},
        {"cond_noise", s.cond_noise}}},
  };
}

void apply_override(json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set " + assignment + ": expected section.key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;  // bare words are strings
  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    std::size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError(path + ": unknown key");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError(path + ": cannot replace a section");
  if (node->is_string() && !value.is_string()) value = text;
  *node = value;
}

RunConfig config_from_json(const json& j) {
  Reader r(j);
  RunConfig c;
  c.json = j;
  c.archive_path = r.str("paths.archive");
  c.conditioning_path = r.str("paths.conditioning");
  c.out_dir = r.str("paths.out");
  if (!c.archive_path.empty() && !std::filesystem::exists(c.archive_path))
    throw ConfigError("paths.archive: " + c.archive_path + " does not exist");
  if (!c.conditioning_path.empty() && !std::filesystem::exists(c.conditioning_path))
    throw ConfigError("paths.conditioning: " + c.conditioning_path + " does not exist");
  if (c.out_dir.empty()) throw ConfigError("paths.out: must not be empty");
  field_check("model", [&] {
    try {
      c.model = parse_model_kind(r.str("model"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  });

  c.calib.kind = c.model;
  c.calib.alpha = r.nums("calib.alpha");
  c.calib.temporal_penalty = r.num("calib.temporal_penalty");
  c.calib.budget = r.integer("calib.budget");
  c.calib.warm_budget = r.integer("calib.warm_budget");
  c.calib.restarts = r.integer("calib.restarts");
  c.calib.seed = r.seed("calib.seed");
  c.calib.regimes = r.integer("calib.regimes");
  field_check("calib", [&] { c.calib.validate(); });

  c.betas = r.nums("vae.betas");
  c.latent_dims = r.ints("vae.latent_dims");
  c.vae.mlp.hidden = r.ints("vae.hidden");
  c.vae.learning_rate = r.num("vae.learning_rate");
  c.vae.weight_decay = r.num("vae.weight_decay");
  c.vae.batch = r.integer("vae.batch");
  c.vae.epochs = r.integer("vae.epochs");
  c.vae.seed = r.seed("vae.seed");
  for (double b : c.betas)
    if (!(b > 0.0)) throw ConfigError("vae.betas: entries must be positive");
  for (int d : c.latent_dims)
    if (d < 1) throw ConfigError("vae.latent_dims: entries must be at least 1");
  field_check("vae", [&] { c.vae.validate(); });

  c.use_vae = r.flag("generators.vae");
  c.use_cvae = r.flag("generators.cvae");
  c.use_pca = r.flag("generators.pca");
  c.use_vae_iv = r.flag("generators.vae_iv");
  c.use_empirical = r.flag("generators.empirical");

  c.train_end = r.str("split.train_end");
  c.fit_test = r.flag("split.fit_test");
  if (!c.train_end.empty()) field_check("split.train_end", [&] {
      try {
        parse_date(c.train_end);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    });
  c.n_draws = r.integer("evaluate.n_draws");
  if (c.n_draws < 1) throw ConfigError("evaluate.n_draws: must be positive");
  c.eval_seed = r.seed("evaluate.seed");
  c.windows = r.ints("evaluate.windows");
  for (int w : c.windows)
    if (w < 2) throw ConfigError("evaluate.windows: windows need at least two days");
  c.window_test_days = r.integer("evaluate.window_test_days");
  if (c.window_test_days < 0) throw ConfigError("evaluate.window_test_days: must be nonnegative");

  c.generate.generator = r.str("generate.generator");
  static const std::vector<std::string> kinds{"vae", "cvae", "pca", "vae-iv", "empirical"};
  if (std::find(kinds.begin(), kinds.end(), c.generate.generator) == kinds.end())
    throw ConfigError("generate.generator: expected one of vae, cvae, pca, vae-iv, empirical");
  c.generate.beta = r.num("generate.beta");
  c.generate.latent_dim = r.integer("generate.latent_dim");
  c.generate.n = r.integer("generate.n");
  if (c.generate.n < 0) throw ConfigError("generate.n: must be nonnegative");
  c.generate.seed = r.seed("generate.seed");
  c.generate.audit = r.flag("generate.audit");

  SynthConfig& s = c.synth;
  s.days = r.integer("synth.days");
  s.seed = r.seed("synth.seed");
  field_check("synth.start", [&] {
    try {
      s.start = parse_date(r.str("synth.start"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  });
  s.spot = r.num("synth.spot");
  s.rd = r.num("synth.rd");
  s.rf = r.num("synth.rf");
  s.regimes = r.integer("synth.regimes");
  s.persistence = r.num("synth.persistence");
  s.level_vol = r.num("synth.level_vol");
  s.idio_vol = r.num("synth.idio_vol");
  s.drift_vol = r.num("synth.drift_vol");
  s.switch_prob = r.num("synth.switch_prob");
  s.regime_block = r.integer("synth.regime_block");
  s.stress_shift = r.num("synth.stress_shift");
  s.calm_level = r.num("synth.calm_level");
  s.stress_level = r.num("synth.stress_level");
  s.cond_noise = r.num("synth.cond_noise");
  field_check("synth", [&] { s.validate(); });
  return c;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json j = default_config_json();
  if (!path.empty()) {
    std::string text;
    try {
      text = read_text_file(path);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config file: ") + e.what());
    }
    json file = json::parse(text, nullptr, false, true);
    if (file.is_discarded()) throw ConfigError("config file " + path + ": not valid JSON");
    merge_into(j, file, "");
  }
  for (const std::string& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

std::string RunConfig::sha1() const { return sha1_hex(json.dump()); }

}  // namespace arbsurf
