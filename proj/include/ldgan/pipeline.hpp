#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ldgan/config.hpp"

namespace ldgan {

/// Lower-case hex SHA-256.
std::string sha256_hex(const void* data, std::size_t size);
std::string file_sha256(const std::string& path);
/// Hash over the sorted relative paths and file hashes below `dir`.
std::string dir_sha256(const std::string& dir);
/// file_sha256 or dir_sha256; "" when the path does not exist.
std::string path_sha256(const std::string& path);

struct StageRecord {
  std::string status;  // "running" or "done"
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // run-relative path -> hash
  std::map<std::string, std::string> outputs;  // run-relative path -> hash
  double seconds = 0.0;
};

/// <run>/manifest.json: one record per stage.
class RunManifest {
 public:
  explicit RunManifest(std::string run_dir);
  const std::string& run_dir() const { return dir_; }
  const StageRecord* find(const std::string& stage) const;
  void put(const std::string& stage, StageRecord rec);
  void save() const;
  const std::map<std::string, StageRecord>& stages() const { return stages_; }

 private:
  std::string dir_;
  std::map<std::string, StageRecord> stages_;
};

struct StageResult {
  std::string stage;
  bool skipped = false;
  double seconds = 0.0;
};

/// Selects one recovery training run inside a run directory.
struct TaskRunKey {
  RecoveryTask task = RecoveryTask::csi;
  AugmentSource source = AugmentSource::none;
  double fraction = 0.0;
  bool geometric = false;
};
std::string task_run_name(const TaskRunKey& key);

/// Stages of one run directory. Each stage checks that its upstream artifacts exist
/// (DependencyError otherwise) and is a no-op when its config and input hashes match the
/// manifest and its outputs are intact, unless `force` is set.
class Pipeline {
 public:
  Pipeline(RunConfig cfg, bool force = false, std::ostream* log = nullptr);

  const RunConfig& config() const { return cfg_; }
  const std::string& run_dir() const { return cfg_.out; }
  std::string path(const std::string& rel) const;
  const RunManifest& manifest() const { return manifest_; }

  StageResult synth();
  StageResult train_ae();
  StageResult encode();
  StageResult train_gan(GanTarget target);
  StageResult sample(GanTarget target);
  StageResult train_task(const TaskRunKey& key);
  StageResult evaluate(const TaskRunKey& key);
  StageResult analyze();

  /// Runs every stage `key` needs, in order; already-current stages are skipped.
  void build_task(const TaskRunKey& key);
  void build_samples(GanTarget target);

  Dataset load_split(Split split) const;
  TaskReport load_task_report(const TaskRunKey& key) const;
  std::vector<GanEpochRecord> load_gan_history(GanTarget target) const;

  static std::string gan_dir(GanTarget t) { return "gan-" + to_string(t); }
  static std::string samples_dir(GanTarget t) { return "samples-" + to_string(t); }

 private:
  template <typename Body>
  StageResult run_stage(const std::string& stage, const std::string& stage_config, std::vector<std::string> inputs,
                        std::vector<std::string> outputs, Body body);
  void require(const std::string& rel, const std::string& stage, const std::string& needs) const;
  void note(const std::string& msg) const;

  RunConfig cfg_;
  bool force_;
  std::ostream* log_;
  RunManifest manifest_;
};

/// Applies the threading policy: LDGAN_THREADS caps the thread count; deterministic mode runs
/// single-threaded.
void configure_parallelism(const RunConfig& cfg);

enum class Suite { convergence, da_sweep, reg_sweep, endmembers, pca, geo_compare };
std::string to_string(Suite s);
/// Throws ConfigError listing the valid names.
Suite suite_from_string(const std::string& s);

/// Long-format results: one observation per row.
struct ResultRow {
  std::string suite;
  std::string task;
  std::string method;
  std::string param;
  double param_value = 0.0;
  std::uint64_t seed = 0;
  long step = -1;  // epoch, component or endmember index; -1 when not applicable
  std::string metric;
  double value = 0.0;
};
std::string result_header();
std::string result_row(const ResultRow& r);

/// Runs the suite over cfg.experiment.seeds in <out>/<suite>/seed<k>/... and writes
/// <out>/experiments/<suite>.csv. Returns the rows written.
std::vector<ResultRow> run_experiment(Suite suite, const RunConfig& cfg, bool force = false,
                                      std::ostream* log = nullptr);

}  // namespace ldgan
