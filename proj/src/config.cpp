#include "ldgan/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ldgan/errors.hpp"
#include "ldgan/rng.hpp"

namespace ldgan {

using nlohmann::json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seeds share the size_t reader");

namespace {

// Reads the keys of one JSON object into fields, then rejects whatever was not consumed.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + where() + "' must be an object");
  }

  template <typename T>
  void operator()(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      read(*it, out);
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for '" + name(key) + "': " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("config: bad value for '" + name(key) + "': " + e.what());
    }
  }

  const json& child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? empty() : *it;
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void done() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + name(k) + "'");
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  static void read(const json& v, std::size_t& out) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("expected a non-negative integer");
    out = v.get<std::size_t>();
  }
  static void read(const json& v, double& out) {
    if (!v.is_number()) throw ConfigError("expected a number");
    out = v.get<double>();
  }
  static void read(const json& v, bool& out) {
    if (!v.is_boolean()) throw ConfigError("expected true or false");
    out = v.get<bool>();
  }
  static void read(const json& v, std::string& out) { out = v.get<std::string>(); }
  static void read(const json& v, std::optional<double>& out) {
    if (v.is_null()) {
      out.reset();
      return;
    }
    double d = 0;
    read(v, d);
    out = d;
  }
  static void read(const json& v, GanTarget& out) { out = gan_target_from_string(v.get<std::string>()); }
  static void read(const json& v, RecoveryTask& out) { out = recovery_task_from_string(v.get<std::string>()); }
  static void read(const json& v, AugmentSource& out) { out = augment_source_from_string(v.get<std::string>()); }
  template <typename T>
  static void read(const json& v, std::vector<T>& out) {
    if (!v.is_array()) throw ConfigError("expected an array");
    out.clear();
    for (const auto& e : v) {
      T t{};
      read(e, t);
      out.push_back(t);
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_synth(const json& j, SynthSection& s) {
  Fields f(j, "synth");
  f("height", s.height);
  f("width", s.width);
  f("bands", s.bands);
  f("train_count", s.train_count);
  f("test_count", s.test_count);
  f("materials", s.materials);
  f("smoothness", s.smoothness);
  f.done();
}

void read_ae(const json& j, AESection& s) {
  Fields f(j, "ae");
  f("channels", s.channels);
  f("width_unit", s.width_unit);
  f("lr", s.lr);
  f("epochs", s.epochs);
  f("batch", s.batch);
  f("mu_ae", s.mu_ae);
  f("eval_limit", s.eval_limit);
  f.done();
}

void read_gan(const json& j, GanSection& s) {
  Fields f(j, "gan");
  f("target", s.target);
  f("epochs", s.epochs);
  f("lr", s.lr);
  f("batch", s.batch);
  f("mu_gan", s.mu_gan);
  f("base_width", s.base_width);
  f("eval_samples", s.eval_samples);
  f("samples", s.samples);
  f.done();
}

void read_task(const json& j, TaskSection& s) {
  Fields f(j, "task");
  f("task", s.task);
  f("epochs", s.epochs);
  f("lr", s.lr);
  f("rgb_lr_decay", s.rgb_lr_decay);
  f("decay_rate", s.decay_rate);
  f("batch", s.batch);
  f("source", s.source);
  f("fraction", s.fraction);
  f("geometric", s.geometric);
  f("snr_db", s.snr_db);
  f("eval_limit", s.eval_limit);
  f("base_width", s.base_width);
  f("stages", s.stages);
  f("initial_step", s.initial_step);
  f("transmittance", s.transmittance);
  f("spatial_factor", s.spatial_factor);
  f("spectral_factor", s.spectral_factor);
  f.done();
}

void read_analysis(const json& j, AnalysisSection& s) {
  Fields f(j, "analysis");
  f("vca_q", s.vca_q);
  f("pca_k", s.pca_k);
  f("pixel_cubes", s.pixel_cubes);
  f.done();
}

void read_experiment(const json& j, ExperimentSection& s) {
  Fields f(j, "experiment");
  f("seeds", s.seeds);
  f("fractions", s.fractions);
  f("mu_grid", s.mu_grid);
  f("channels", s.channels);
  f("tasks", s.tasks);
  f("pca_mu_gan", s.pca_mu_gan);
  f.done();
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Fields f(j, "");
  f("seed", cfg.seed);
  f("out", cfg.out);
  f("deterministic", cfg.deterministic);
  read_synth(f.child("synth"), cfg.synth);
  read_ae(f.child("ae"), cfg.ae);
  read_gan(f.child("gan"), cfg.gan);
  read_task(f.child("task"), cfg.task);
  read_analysis(f.child("analysis"), cfg.analysis);
  read_experiment(f.child("experiment"), cfg.experiment);
  f.done();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  json tasks = json::array();
  for (auto t : c.experiment.tasks) tasks.push_back(to_string(t));
  const json j = {
      {"seed", c.seed},
      {"out", c.out},
      {"deterministic", c.deterministic},
      {"synth",
       {{"height", c.synth.height},
        {"width", c.synth.width},
        {"bands", c.synth.bands},
        {"train_count", c.synth.train_count},
        {"test_count", c.synth.test_count},
        {"materials", c.synth.materials},
        {"smoothness", c.synth.smoothness}}},
      {"ae",
       {{"channels", c.ae.channels},
        {"width_unit", c.ae.width_unit},
        {"lr", c.ae.lr},
        {"epochs", c.ae.epochs},
        {"batch", c.ae.batch},
        {"mu_ae", c.ae.mu_ae},
        {"eval_limit", c.ae.eval_limit}}},
      {"gan",
       {{"target", to_string(c.gan.target)},
        {"epochs", c.gan.epochs},
        {"lr", c.gan.lr},
        {"batch", c.gan.batch},
        {"mu_gan", c.gan.mu_gan},
        {"base_width", c.gan.base_width},
        {"eval_samples", c.gan.eval_samples},
        {"samples", c.gan.samples}}},
      {"task",
       {{"task", to_string(c.task.task)},
        {"epochs", c.task.epochs},
        {"lr", c.task.lr},
        {"rgb_lr_decay", c.task.rgb_lr_decay},
        {"decay_rate", c.task.decay_rate},
        {"batch", c.task.batch},
        {"source", to_string(c.task.source)},
        {"fraction", c.task.fraction},
        {"geometric", c.task.geometric},
        {"snr_db", c.task.snr_db ? json(*c.task.snr_db) : json(nullptr)},
        {"eval_limit", c.task.eval_limit},
        {"base_width", c.task.base_width},
        {"stages", c.task.stages},
        {"initial_step", c.task.initial_step},
        {"transmittance", c.task.transmittance},
        {"spatial_factor", c.task.spatial_factor},
        {"spectral_factor", c.task.spectral_factor}}},
      {"analysis",
       {{"vca_q", c.analysis.vca_q}, {"pca_k", c.analysis.pca_k}, {"pixel_cubes", c.analysis.pixel_cubes}}},
      {"experiment",
       {{"seeds", c.experiment.seeds},
        {"fractions", c.experiment.fractions},
        {"mu_grid", c.experiment.mu_grid},
        {"channels", c.experiment.channels},
        {"tasks", tasks},
        {"pca_mu_gan", c.experiment.pca_mu_gan}}},
  };
  return j.dump(2) + "\n";
}

void validate(const RunConfig& c) {
  validate(synth_config(c, Split::train));
  if (c.synth.test_count == 0) throw ConfigError("synth.test_count must be >= 1");
  validate(ae_arch(c));
  validate(ae_train_config(c));
  validate(gan_train_config(c, c.gan.target));
  if (c.gan.samples < 2) throw ConfigError("gan.samples must be >= 2");
  validate(task_train_config(c, c.task.task, c.task.source, c.task.fraction));
  if (c.task.epochs == 0) throw ConfigError("task.epochs must be >= 1");
  if (c.task.batch == 0) throw ConfigError("task.batch must be >= 1");
  if (c.task.source == AugmentSource::none && c.task.fraction != 0.0)
    throw ConfigError("task.fraction must be 0 when task.source is none");
  if (c.task.transmittance <= 0.0 || c.task.transmittance > 1.0)
    throw ConfigError("task.transmittance must lie in (0, 1]");
  if (c.task.spatial_factor == 0 || c.task.spectral_factor == 0)
    throw ConfigError("task.spatial_factor and task.spectral_factor must be >= 1");
  if (c.analysis.vca_q == 0 || c.analysis.vca_q > c.synth.bands)
    throw ConfigError("analysis.vca_q must lie in [1, synth.bands]");
  if (c.analysis.pca_k == 0) throw ConfigError("analysis.pca_k must be >= 1");
  if (c.experiment.seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  for (double f : c.experiment.fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("experiment.fractions must lie in [0, 1]");
  for (double m : c.experiment.mu_grid)
    if (!(m >= 0.0)) throw ConfigError("experiment.mu_grid values must be >= 0");
  for (auto ch : c.experiment.channels)
    if (ch == 0 || ch >= c.synth.bands) throw ConfigError("experiment.channels values must lie in [1, synth.bands)");
}

std::uint64_t stage_seed(const RunConfig& cfg, const std::string& stage) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : stage) h = (h ^ ch) * 1099511628211ull;
  return mix_seed(cfg.seed ^ mix_seed(h));
}

SynthConfig synth_config(const RunConfig& cfg, Split split) {
  SynthConfig s;
  s.height = cfg.synth.height;
  s.width = cfg.synth.width;
  s.bands = cfg.synth.bands;
  s.count = split == Split::train ? cfg.synth.train_count : cfg.synth.test_count;
  s.materials = cfg.synth.materials;
  s.smoothness = cfg.synth.smoothness;
  s.seed = stage_seed(cfg, "synth");
  return s;
}

AEArch ae_arch(const RunConfig& cfg) { return AEArch{cfg.synth.bands, cfg.ae.channels, cfg.ae.width_unit}; }

AETrainConfig ae_train_config(const RunConfig& cfg) {
  AETrainConfig a;
  a.lr = cfg.ae.lr;
  a.epochs = cfg.ae.epochs;
  a.batch = cfg.ae.batch;
  a.mu_ae = cfg.ae.mu_ae;
  a.seed = stage_seed(cfg, "train-ae");
  a.eval_limit = cfg.ae.eval_limit;
  return a;
}

GanTrainConfig gan_train_config(const RunConfig& cfg, GanTarget target) {
  GanTrainConfig g;
  g.epochs = cfg.gan.epochs;
  g.lr = cfg.gan.lr;
  g.batch = cfg.gan.batch;
  g.mu_gan = cfg.gan.mu_gan;
  g.seed = stage_seed(cfg, "train-gan-" + to_string(target));
  g.target = target;
  g.base_width = cfg.gan.base_width;
  g.eval_samples = cfg.gan.eval_samples;
  return g;
}

TaskSetup task_setup(const RunConfig& cfg, RecoveryTask task) {
  TaskOperatorConfig op;
  op.transmittance = cfg.task.transmittance;
  op.aperture_seed = stage_seed(cfg, "aperture");
  op.spatial_factor = cfg.task.spatial_factor;
  op.spectral_factor = cfg.task.spectral_factor;
  return make_task(task, CubeDims{cfg.synth.height, cfg.synth.width, cfg.synth.bands}, op);
}

RecoveryArch recovery_arch(const RunConfig& cfg) {
  return RecoveryArch{cfg.task.base_width, cfg.task.stages, cfg.task.initial_step};
}

TaskTrainConfig task_train_config(const RunConfig& cfg, RecoveryTask task, AugmentSource source, double fraction) {
  TaskTrainConfig t;
  t.epochs = cfg.task.epochs;
  t.lr = cfg.task.lr;
  t.lr_decay = cfg.task.rgb_lr_decay && task == RecoveryTask::rgb;
  t.decay_rate = cfg.task.decay_rate;
  t.batch = cfg.task.batch;
  t.seed = stage_seed(cfg, "train-task-" + to_string(task));
  t.source = source;
  t.fraction = fraction;
  t.snr_db = cfg.task.snr_db.value_or(std::numeric_limits<double>::infinity());
  t.eval_limit = cfg.task.eval_limit;
  return t;
}

}  // namespace ldgan
