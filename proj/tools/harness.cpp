#include "harness.hpp"

#include <boost/version.hpp>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace duotilt::harness {

namespace {

int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

template <class T>
T as(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + key + "'", line_of(n));
  }
}

template <class T>
void read(const YAML::Node& parent, const std::string& key, T& out) {
  if (const YAML::Node n = parent[key]) out = as<T>(n, key);
}

void check_keys(const YAML::Node& n, const std::set<std::string>& allowed, const std::string& where) {
  if (!n.IsMap()) throw ConfigError(where + " must be a mapping", line_of(n));
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where, line_of(kv.first));
  }
}

Eigen::Matrix3d read_matrix3(const YAML::Node& n, const std::string& key) {
  Eigen::Matrix3d m;
  double divisor = 1.0;
  YAML::Node rows = n;
  if (n.IsMap()) {
    check_keys(n, {"divisor", "rows"}, key);
    read(n, "divisor", divisor);
    if (!(divisor > 0.0))
      throw ConfigError("'" + key + ".divisor' must be positive", line_of(n["divisor"]));
    rows = n["rows"];
  }
  if (!rows || !rows.IsSequence() || rows.size() != 3)
    throw ConfigError("'" + key + "' must be a 3x3 matrix", line_of(n));
  for (int i = 0; i < 3; ++i) {
    if (!rows[i].IsSequence() || rows[i].size() != 3)
      throw ConfigError("'" + key + "' must be a 3x3 matrix", line_of(rows[i]));
    for (int j = 0; j < 3; ++j) m(i, j) = as<double>(rows[i][j], key) / divisor;
  }
  return m;
}

Eigen::Vector3d read_vector3(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence() || n.size() != 3) throw ConfigError("'" + key + "' must have 3 entries", line_of(n));
  return {as<double>(n[0], key), as<double>(n[1], key), as<double>(n[2], key)};
}

StageOneSampling parse_sampling(const YAML::Node& n) {
  const auto s = as<std::string>(n, "sampling");
  if (s == "original") return StageOneSampling::original;
  if (s == "adaptive") return StageOneSampling::adaptive;
  if (s == "pilot") return StageOneSampling::pilot;
  throw ConfigError("sampling must be original, adaptive or pilot", line_of(n));
}

void parse_sgd(const YAML::Node& n, SgdConfig& c, bool& pilot_auto) {
  check_keys(n,
             {"iterations", "batch_size", "max_batch", "a0", "kappa", "gamma", "early_stop",
              "sampling", "step_rule", "ridge", "allow_nonconvex", "lan_reparam", "pilot",
              "domain_margin"},
             "sgd");
  read(n, "iterations", c.iterations);
  read(n, "batch_size", c.batch_size);
  read(n, "max_batch", c.max_batch);
  read(n, "a0", c.a0);
  read(n, "kappa", c.kappa);
  read(n, "gamma", c.gamma);
  read(n, "early_stop", c.early_stop);
  read(n, "ridge", c.ridge);
  read(n, "allow_nonconvex", c.allow_nonconvex);
  read(n, "lan_reparam", c.lan_reparam);
  read(n, "domain_margin", c.domain_margin);
  if (n["sampling"]) c.sampling = parse_sampling(n["sampling"]);
  if (const auto r = n["step_rule"]) {
    const auto s = as<std::string>(r, "step_rule");
    if (s == "newton")
      c.step_rule = StepRule::newton;
    else if (s == "gradient")
      c.step_rule = StepRule::gradient;
    else
      throw ConfigError("step_rule must be newton or gradient", line_of(r));
  }
  if (const auto p = n["pilot"]) {
    const auto s = as<std::string>(p, "pilot");
    if (s != "auto" && s != "none") throw ConfigError("pilot must be auto or none", line_of(p));
    pilot_auto = s == "auto";
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ============================================================================
// Presets and validation
// ============================================================================

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "heston-t1") {
    c.model = "heston";
    c.heston = presets::heston_t1();
    c.event.ratio = presets::kHestonRatios[0];
    c.event.steps = presets::kHestonSteps;
    c.methods = {"plain", "classical", "two_stage"};
    c.sgd = presets::heston_t1_sgd();
  } else if (name == "sird-t2") {
    c.model = "sird";
    c.sird = presets::sird_t2();
    c.event.barrier_fraction = 0.3325;
    c.event.horizon = c.sird.horizon;
    c.methods = {"plain", "two_stage"};
    c.sgd = presets::sird_t2_sgd();
  } else if (name == "vargarch-t3") {
    c.model = "var_garch";
    c.var_garch = presets::vargarch_t3();
    c.event.b0 = presets::kVarGarchB0;
    c.event.b1 = presets::kVarGarchB1;
    c.event.T = c.var_garch.horizon;
    c.event.conditioning = presets::kVarGarchConditioning;
    c.event.target = presets::kVarGarchTarget;
    c.link = "lan";
    c.methods = {"plain", "two_stage"};
    c.sgd = presets::vargarch_t3_sgd();
  } else {
    throw ConfigError("unknown preset '" + name + "'", 0);
  }
  c.source = "preset:" + name;
  return c;
}

void ExperimentConfig::validate() const {
  if (schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version), 0);
  if (model != "heston" && model != "sird" && model != "var_garch")
    throw ConfigError("model must be heston, sird or var_garch", 0);
  if (methods.empty()) throw ConfigError("methods must list at least one method", 0);
  for (const auto& m : methods) {
    if (m != "plain" && m != "classical" && m != "two_stage" && m != "covar")
      throw ConfigError("unknown method '" + m + "'", 0);
    if (m == "classical" && model != "heston")
      throw ConfigError("classical needs an affine model (heston)", 0);
    if (m == "covar" && model != "var_garch") throw ConfigError("covar needs the var_garch model", 0);
  }
  if (samples < 100) throw ConfigError("samples must be at least 100", 0);
  if (link != "default" && link != "lan") throw ConfigError("link must be default or lan", 0);
  if (link == "lan" && model != "var_garch") throw ConfigError("link 'lan' is available for var_garch", 0);
  if (sweep && sweep->values.empty()) throw ConfigError("sweep grid must be nonempty", 0);
  try {
    sgd.validate();
    heston.validate();
    sird.validate();
    var_garch.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what(), 0);
  }
}

void apply_param(ExperimentConfig& c, const std::string& name, double v) {
  if (c.model == "heston") {
    if (name == "ratio") return void(c.event.ratio = v);
    if (name == "mu") return void(c.heston.mu = v);
    if (name == "kappa") return void(c.heston.kappa = v);
    if (name == "alpha") return void(c.heston.alpha = v);
    if (name == "sigma") return void(c.heston.sigma = v);
    if (name == "rho") return void(c.heston.rho = v);
  } else if (c.model == "sird") {
    if (name == "alpha") return void(c.sird.alpha = v);
    if (name == "beta") return void(c.sird.beta = v);
    if (name == "gamma") return void(c.sird.gamma = v);
    if (name == "barrier_fraction") return void(c.event.barrier_fraction = v);
  } else if (c.model == "var_garch") {
    if (name == "b0") return void(c.event.b0 = v);
    if (name == "b1") return void(c.event.b1 = v);
  }
  throw ConfigError("parameter '" + name + "' cannot be set for model " + c.model, 0);
}

// ============================================================================
// Parsing
// ============================================================================

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1);
  }
  if (!root || !root.IsMap()) throw ConfigError("config must be a mapping", line_of(root));
  check_keys(root,
             {"schema_version", "preset", "model", "event", "link", "methods", "samples", "seed",
              "workers", "output", "sgd", "covar", "sweep"},
             "config");
  if (!root["schema_version"]) throw ConfigError("missing schema_version", 1);
  const int version = as<int>(root["schema_version"], "schema_version");
  if (version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(version),
                      line_of(root["schema_version"]));

  ExperimentConfig c;
  if (const auto p = root["preset"]) {
    try {
      c = preset_config(as<std::string>(p, "preset"));
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), line_of(p));
    }
  }
  c.schema_version = version;

  if (const auto m = root["model"]) {
    check_keys(m, {"type", "params"}, "model");
    if (m["type"]) {
      const auto type = as<std::string>(m["type"], "type");
      if (type != "heston" && type != "sird" && type != "var_garch")
        throw ConfigError("model type must be heston, sird or var_garch", line_of(m["type"]));
      if (type != c.model && !c.model.empty())
        throw ConfigError("model type conflicts with the preset", line_of(m["type"]));
      c.model = type;
    }
    if (c.model.empty()) throw ConfigError("model type missing", line_of(m));
    if (const auto p = m["params"]) {
      if (c.model == "heston") {
        check_keys(p, {"mu", "kappa", "alpha", "sigma", "rho", "dt", "x0"}, "heston params");
        read(p, "mu", c.heston.mu);
        read(p, "kappa", c.heston.kappa);
        read(p, "alpha", c.heston.alpha);
        read(p, "sigma", c.heston.sigma);
        read(p, "rho", c.heston.rho);
        read(p, "dt", c.heston.dt);
        read(p, "x0", c.heston.x0);
      } else if (c.model == "sird") {
        check_keys(p, {"alpha", "beta", "gamma", "N0", "I0", "dt"}, "sird params");
        read(p, "alpha", c.sird.alpha);
        read(p, "beta", c.sird.beta);
        read(p, "gamma", c.sird.gamma);
        read(p, "N0", c.sird.N0);
        read(p, "I0", c.sird.I0);
        read(p, "dt", c.sird.dt);
      } else {
        check_keys(p, {"mu", "rho", "W", "A", "B"}, "var_garch params");
        if (p["mu"]) c.var_garch.mu = read_vector3(p["mu"], "mu");
        if (p["rho"]) c.var_garch.rho = read_matrix3(p["rho"], "rho");
        if (p["W"]) c.var_garch.W = read_matrix3(p["W"], "W");
        if (p["A"]) c.var_garch.A = read_matrix3(p["A"], "A");
        if (p["B"]) c.var_garch.B = read_matrix3(p["B"], "B");
      }
    }
  }
  if (c.model.empty()) throw ConfigError("either preset or model is required", 1);

  if (const auto e = root["event"]) {
    check_keys(e,
               {"ratio", "steps", "barrier_fraction", "horizon", "b0", "b1", "T", "conditioning",
                "target", "conditional"},
               "event");
    read(e, "ratio", c.event.ratio);
    read(e, "steps", c.event.steps);
    read(e, "barrier_fraction", c.event.barrier_fraction);
    read(e, "horizon", c.event.horizon);
    read(e, "b0", c.event.b0);
    read(e, "b1", c.event.b1);
    read(e, "T", c.event.T);
    read(e, "conditioning", c.event.conditioning);
    read(e, "target", c.event.target);
    read(e, "conditional", c.event.conditional);
  }
  read(root, "link", c.link);
  if (const auto m = root["methods"]) {
    if (!m.IsSequence()) throw ConfigError("methods must be a list", line_of(m));
    c.methods.clear();
    for (const auto& x : m) c.methods.push_back(as<std::string>(x, "methods"));
    if (c.methods.empty()) throw ConfigError("methods must list at least one method", line_of(m));
  }
  read(root, "samples", c.samples);
  read(root, "seed", c.seed);
  read(root, "workers", c.workers);
  read(root, "output", c.output);
  if (const auto s = root["sgd"]) parse_sgd(s, c.sgd, c.pilot_auto);
  if (const auto cv = root["covar"]) {
    check_keys(cv, {"q", "n_per_eval", "tolerance", "refresh_every", "common_random_numbers"},
               "covar");
    read(cv, "q", c.covar.q);
    read(cv, "n_per_eval", c.covar.n_per_eval);
    read(cv, "tolerance", c.covar.tolerance);
    read(cv, "refresh_every", c.covar.refresh_every);
    read(cv, "common_random_numbers", c.covar.common_random_numbers);
  }
  if (const auto s = root["sweep"]) {
    check_keys(s, {"param", "values", "from", "to", "points", "method"}, "sweep");
    Sweep sw;
    if (!s["param"]) throw ConfigError("sweep needs param", line_of(s));
    sw.param = as<std::string>(s["param"], "param");
    read(s, "method", sw.method);
    if (const auto v = s["values"]) {
      if (!v.IsSequence()) throw ConfigError("sweep values must be a list", line_of(v));
      for (const auto& x : v) sw.values.push_back(as<double>(x, "values"));
    } else if (s["from"] && s["to"] && s["points"]) {
      const double a = as<double>(s["from"], "from"), b = as<double>(s["to"], "to");
      const int k = as<int>(s["points"], "points");
      if (k < 1) throw ConfigError("sweep points must be positive", line_of(s["points"]));
      for (int i = 0; i < k; ++i) sw.values.push_back(k == 1 ? a : a + (b - a) * i / (k - 1));
    }
    if (sw.values.empty()) throw ConfigError("sweep grid must be nonempty", line_of(s));
    if (std::find(c.methods.begin(), c.methods.end(), sw.method) == c.methods.end())
      throw ConfigError("sweep method must be one of methods", line_of(s));
    c.sweep = sw;
  }
  c.source = YAML::Dump(root);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    if (e.line > 0) throw;
    throw ConfigError(e.what(), line_of(root));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ============================================================================
// Running
// ============================================================================

namespace {

nlohmann::json tilt_json(const std::optional<TiltParams>& t) {
  if (!t) return nullptr;
  return {{"theta", std::vector<double>(t->theta.data(), t->theta.data() + t->theta.size())},
          {"eta", std::vector<double>(t->eta.data(), t->eta.data() + t->eta.size())}};
}

nlohmann::json summary_json(const EstimateSummary& s) {
  return {{"method", s.method},
          {"event_id", s.event_id},
          {"mean", s.mean},
          {"std_error", s.std_error},
          {"sample_variance", s.sample_variance},
          {"n", s.n},
          {"hits", s.hits},
          {"elapsed_s", s.elapsed_seconds},
          {"tilt", tilt_json(s.tilt)}};
}

std::uint64_t method_tag(const std::string& m) {
  if (m == "plain") return 1;
  if (m == "classical") return 2;
  if (m == "two_stage") return 3;
  return 4;
}

struct PointContext {
  const ExperimentConfig& cfg;
  std::size_t point;
  std::optional<double> value;
  RunReport& report;
  std::string suffix;  // appended to method names for sweep points
};

/// Runs one method on one event; returns the summary or records the error.
template <class Model>
std::optional<EstimateSummary> run_method(const Model& model,
                                          const LinkFunction<typename Model::State>& link,
                                          const EventSpec& event, std::size_t event_index,
                                          const std::string& method, const SgdConfig& sgd,
                                          PointContext& ctx) {
  const auto& cfg = ctx.cfg;
  const RandomStreams streams =
      RandomStreams(cfg.seed).child(ctx.point * 64 + event_index * 16 + method_tag(method));
  BatchOptions batch = sgd.batch;
  batch.workers = cfg.workers;
  SgdConfig c = sgd;
  c.batch = batch;
  nlohmann::json rec;
  rec["event_id"] = event_id(event);
  if (ctx.value) rec["point"] = {{"param", cfg.sweep->param}, {"value", *ctx.value}};
  try {
    EstimateSummary s;
    if (method == "plain") {
      s = plain_mc(model, event, cfg.samples, streams, batch);
    } else if (method == "classical") {
      if constexpr (std::is_same_v<Model, HestonModel>) {
        s = classical_estimate(model, make_classical_link(model), event, cfg.samples, streams, batch);
      } else {
        throw UnsupportedError("classical needs an affine model");
      }
    } else if (method == "two_stage") {
      TwoStageResult r = two_stage_estimate(model, link, event, c, cfg.samples, streams);
      s = r.summary;
      rec["stage1_seconds"] = r.stage1_seconds;
      rec["stage1_samples"] = r.stage1_samples;
      rec["stage1_iterations"] = r.trace.size();
      std::string name = "trace_two_stage";
      if (event_index > 0) name += "_event" + std::to_string(event_index);
      if (ctx.value) name += "_point" + std::to_string(ctx.point);
      ctx.report.traces.emplace_back(name + ".csv", trace_csv(r.trace));
    } else {
      throw UnsupportedError("method '" + method + "' does not apply to this event");
    }
    s.method = method + ctx.suffix;
    rec["summary"] = summary_json(s);
    ctx.report.jobs[method].push_back(rec);
    return s;
  } catch (const std::exception& e) {
    rec["error"] = e.what();
    ctx.report.jobs[method].push_back(rec);
    ++ctx.report.failed_jobs;
    return std::nullopt;
  }
}

/// Runs every method on each event, attaching efficiency against plain.
template <class Model>
void run_events(const Model& model, const LinkFunction<typename Model::State>& link,
                const std::vector<EventSpec>& events, const SgdConfig& sgd, PointContext& ctx,
                std::vector<std::vector<std::optional<EstimateSummary>>>& out) {
  out.assign(events.size(), {});
  for (std::size_t e = 0; e < events.size(); ++e) {
    for (const auto& m : ctx.cfg.methods) {
      if (m == "covar") {
        out[e].push_back(std::nullopt);
        continue;
      }
      out[e].push_back(run_method(model, link, events[e], e, m, sgd, ctx));
    }
    std::optional<EstimateSummary> plain;
    for (std::size_t k = 0; k < ctx.cfg.methods.size(); ++k)
      if (ctx.cfg.methods[k] == "plain" && out[e][k]) plain = out[e][k];
    for (const auto& s : out[e]) {
      if (!s) continue;
      SummaryRow row{*s, std::nullopt};
      if (plain) {
        try {
          row.efficiency = efficiency_report(*s, *plain);
        } catch (const ContractError&) {
        }
      }
      ctx.report.rows.push_back(row);
    }
  }
}

void run_point(const ExperimentConfig& cfg, PointContext& ctx) {
  std::vector<std::vector<std::optional<EstimateSummary>>> results;
  const auto& methods = cfg.methods;
  auto sweep_index = [&]() -> std::optional<std::size_t> {
    if (!cfg.sweep) return std::nullopt;
    for (std::size_t k = 0; k < methods.size(); ++k)
      if (methods[k] == cfg.sweep->method) return k;
    return std::nullopt;
  };

  if (cfg.model == "heston") {
    const HestonModel model(cfg.heston);
    run_events(model, model.default_link(), {heston_tail_event(cfg.event.ratio, cfg.event.steps)},
               cfg.sgd, ctx, results);
  } else if (cfg.model == "sird") {
    SirdParams p = cfg.sird;
    p.barrier = cfg.event.barrier_fraction * p.N0;
    p.horizon = cfg.event.horizon;
    const SirdModel model(p);
    SgdConfig sgd = cfg.sgd;
    if (cfg.pilot_auto) sgd.initial = TiltParams{VectorXd(0), sird_pilot_tilt(p)};
    run_events(model, model.default_link(), {sird_overflow_event(p)}, sgd, ctx, results);
  } else {
    VarGarchParams p = cfg.var_garch;
    p.horizon = cfg.event.T;
    const VarGarchModel model(p);
    const auto link = cfg.link == "lan" ? var_garch_lan_link(model) : model.default_link();
    std::vector<EventSpec> events{var_garch_joint_event(cfg.event.conditioning, cfg.event.b0,
                                                        cfg.event.target, cfg.event.b1, cfg.event.T)};
    if (cfg.event.conditional)
      events.push_back(var_garch_passage_event(cfg.event.conditioning, cfg.event.b0, cfg.event.T));
    run_events(model, link, events, cfg.sgd, ctx, results);
    if (cfg.event.conditional) {
      for (std::size_t k = 0; k < methods.size(); ++k) {
        if (!results[0][k] || !results[1][k]) continue;
        nlohmann::json rec;
        try {
          const RatioEstimate r = ratio_estimate(*results[0][k], *results[1][k]);
          rec = {{"conditional_probability", r.value}, {"std_error", r.std_error}};
        } catch (const std::exception& e) {
          rec = {{"error", e.what()}};
        }
        if (ctx.value) rec["point"] = {{"param", cfg.sweep->param}, {"value", *ctx.value}};
        ctx.report.jobs[methods[k]].push_back(rec);
      }
    }
    if (std::find(methods.begin(), methods.end(), "covar") != methods.end()) {
      nlohmann::json rec;
      try {
        CovarOptions o = cfg.covar;
        o.target_component = cfg.event.target;
        o.sgd = cfg.sgd;
        o.sgd.batch.workers = cfg.workers;
        const CovarResult r = covar_bisection(
            model, link, FirstPassageBeforeT{cfg.event.conditioning, cfg.event.b0, cfg.event.T, Direction::below},
            o, RandomStreams(cfg.seed).child(ctx.point * 64 + 60));
        rec = {{"q", o.q},
               {"covar", r.covar},
               {"b", r.b},
               {"conditional_cdf", r.conditional_cdf},
               {"conditional_cdf_se", r.conditional_cdf_se},
               {"iterations", r.iterations},
               {"denominator", summary_json(r.denominator)}};
      } catch (const std::exception& e) {
        rec = {{"error", e.what()}};
        ++ctx.report.failed_jobs;
      }
      if (ctx.value) rec["point"] = {{"param", cfg.sweep->param}, {"value", *ctx.value}};
      ctx.report.jobs["covar"].push_back(rec);
    }
  }

  if (ctx.value) {
    const auto k = sweep_index();
    if (k && !results.empty() && results[0][*k]) {
      const auto& s = *results[0][*k];
      ctx.report.sweep.push_back({*ctx.value, s.mean, s.std_error, s.n, s.elapsed_seconds});
    }
  }
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunReport report;
  if (!cfg.sweep) {
    PointContext ctx{cfg, 0, std::nullopt, report, ""};
    run_point(cfg, ctx);
    return report;
  }
  for (std::size_t i = 0; i < cfg.sweep->values.size(); ++i) {
    ExperimentConfig pc = cfg;
    const double v = cfg.sweep->values[i];
    apply_param(pc, cfg.sweep->param, v);
    PointContext ctx{pc, i, v, report, "[" + cfg.sweep->param + "=" + fmt(v) + "]"};
    try {
      pc.validate();
      run_point(pc, ctx);
    } catch (const std::exception& e) {
      report.jobs["sweep"].push_back({{"value", v}, {"error", e.what()}});
      ++report.failed_jobs;
    }
  }
  return report;
}

std::string summary_csv(const RunReport& report) {
  std::string out = summary_csv_header();
  out += '\n';
  for (const auto& r : report.rows) out += summary_csv_row(r.summary, r.efficiency) + '\n';
  return out;
}

void write_report(const RunReport& report, const ExperimentConfig& cfg,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    f << text;
  };
  write("summary.csv", summary_csv(report));
  for (const auto& [method, jobs] : report.jobs.items()) write(method + ".json", jobs.dump(2) + "\n");
  for (const auto& [name, csv] : report.traces) write(name, csv);
  if (cfg.sweep) {
    std::ostringstream os;
    os.precision(17);
    os << "param,mean,std_error,n,elapsed_s\n";
    for (const auto& r : report.sweep)
      os << r.param << ',' << r.mean << ',' << r.std_error << ',' << r.n << ',' << r.elapsed_s << '\n';
    write("sweep.csv", os.str());
  }
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(cfg.source)));
  nlohmann::json m = {
      {"schema_version", cfg.schema_version},
      {"config_hash", hash},
      {"preset", cfg.preset},
      {"model", cfg.model},
      {"methods", cfg.methods},
      {"samples", cfg.samples},
      {"seed", cfg.seed},
      {"workers", cfg.workers},
      {"failed_jobs", report.failed_jobs},
      {"versions",
       {{"duotilt", "0.1.0"},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                      "." + std::to_string(EIGEN_MINOR_VERSION)},
        {"boost", BOOST_LIB_VERSION},
        {"compiler", __VERSION__}}}};
  write("manifest.json", m.dump(2) + "\n");
}

}  // namespace duotilt::harness
