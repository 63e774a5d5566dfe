#include "ldgan/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <omp.h>
#include <openssl/evp.h>

#include "ldgan/analysis.hpp"
#include "ldgan/errors.hpp"
#include "ldgan/kernels.hpp"

namespace ldgan {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes.data(), bytes.size());
}

std::string dir_sha256(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& f : files) listing += f + '\0' + file_sha256((fs::path(dir) / f).string()) + '\n';
  return sha256_hex(listing.data(), listing.size());
}

std::string path_sha256(const std::string& path) {
  if (fs::is_directory(path)) return dir_sha256(path);
  if (fs::is_regular_file(path)) return file_sha256(path);
  return "";
}

// --- manifest ------------------------------------------------------------------

RunManifest::RunManifest(std::string run_dir) : dir_(std::move(run_dir)) {
  const auto file = fs::path(dir_) / "manifest.json";
  if (!fs::exists(file)) return;
  std::ifstream in(file);
  json j;
  try {
    in >> j;
    for (const auto& [name, s] : j.at("stages").items()) {
      StageRecord r;
      r.status = s.at("status").get<std::string>();
      r.config_hash = s.at("config_hash").get<std::string>();
      r.inputs = s.at("inputs").get<std::map<std::string, std::string>>();
      r.outputs = s.at("outputs").get<std::map<std::string, std::string>>();
      r.seconds = s.at("seconds").get<double>();
      stages_[name] = std::move(r);
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + file.string() + ": " + e.what());
  }
}

const StageRecord* RunManifest::find(const std::string& stage) const {
  const auto it = stages_.find(stage);
  return it == stages_.end() ? nullptr : &it->second;
}

void RunManifest::put(const std::string& stage, StageRecord rec) { stages_[stage] = std::move(rec); }

void RunManifest::save() const {
  json stages = json::object();
  for (const auto& [name, r] : stages_)
    stages[name] = {{"status", r.status},
                    {"config_hash", r.config_hash},
                    {"inputs", r.inputs},
                    {"outputs", r.outputs},
                    {"seconds", r.seconds}};
  fs::create_directories(dir_);
  const auto tmp = fs::path(dir_) / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << json{{"stages", stages}}.dump(2) << "\n";
  }
  fs::rename(tmp, fs::path(dir_) / "manifest.json");
}

// --- helpers -------------------------------------------------------------------

namespace {

void write_text(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

std::string fraction_str(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", f);
  return buf;
}

json section(const RunConfig& cfg, const char* name) { return json::parse(config_to_json(cfg)).at(name); }

std::string stage_config(const RunConfig& cfg, json extra) {
  extra["seed"] = cfg.seed;
  return extra.dump();
}

std::vector<SpectralCube> first_cubes(const Dataset& d, std::size_t n) {
  const std::size_t k = n == 0 ? d.size() : std::min(n, d.size());
  return {d.cubes.begin(), d.cubes.begin() + static_cast<long>(k)};
}

}  // namespace

std::string task_run_name(const TaskRunKey& key) {
  std::string name = "task-" + to_string(key.task) + "-" + to_string(key.source);
  if (key.source != AugmentSource::none) name += "-" + fraction_str(key.fraction);
  if (key.geometric) name += "-geo";
  return name;
}

void configure_parallelism(const RunConfig& cfg) {
  configure_threads_from_env();
  if (cfg.deterministic) omp_set_num_threads(1);
}

// --- pipeline ------------------------------------------------------------------

Pipeline::Pipeline(RunConfig cfg, bool force, std::ostream* log)
    : cfg_(std::move(cfg)), force_(force), log_(log), manifest_(cfg_.out) {
  validate(cfg_);
  fs::create_directories(cfg_.out);
  write_text(path("config.json"), config_to_json(cfg_));
}

std::string Pipeline::path(const std::string& rel) const { return (fs::path(cfg_.out) / rel).string(); }

void Pipeline::note(const std::string& msg) const {
  if (log_) *log_ << msg << "\n" << std::flush;
}

void Pipeline::require(const std::string& rel, const std::string& stage, const std::string& needs) const {
  if (!fs::exists(path(rel)))
    throw DependencyError(stage + " needs stage '" + needs + "' to run first (missing " + path(rel) + ")");
}

template <typename Body>
StageResult Pipeline::run_stage(const std::string& stage, const std::string& stage_cfg, std::vector<std::string> inputs,
                                std::vector<std::string> outputs, Body body) {
  StageResult res{stage, false, 0.0};
  const auto t0 = std::chrono::steady_clock::now();
  StageRecord rec;
  rec.config_hash = sha256_hex(stage_cfg.data(), stage_cfg.size());
  for (const auto& in : inputs) rec.inputs[in] = path_sha256(path(in));
  const StageRecord* prev = manifest_.find(stage);
  const bool same_inputs = prev && prev->config_hash == rec.config_hash && prev->inputs == rec.inputs;
  if (!force_ && same_inputs && prev->status == "done") {
    bool intact = true;
    for (const auto& [out, h] : prev->outputs) intact = intact && path_sha256(path(out)) == h;
    if (intact) {
      note(stage + ": up to date");
      res.skipped = true;
      return res;
    }
  }
  const bool resume = !force_ && same_inputs && prev->status == "running";
  rec.status = "running";
  manifest_.put(stage, rec);
  manifest_.save();
  note(stage + (resume ? ": resuming" : ": running"));
  body(resume);
  for (const auto& out : outputs) rec.outputs[out] = path_sha256(path(out));
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.seconds = res.seconds;
  rec.status = "done";
  manifest_.put(stage, rec);
  manifest_.save();
  note(stage + ": done in " + fraction_str(res.seconds) + " s");
  return res;
}

Dataset Pipeline::load_split(Split split) const {
  require("data/" + to_string(split), "loading data", "synth");
  return load_dataset(path("data"), split);
}

StageResult Pipeline::synth() {
  return run_stage("synth", stage_config(cfg_, {{"synth", section(cfg_, "synth")}}), {}, {"data"}, [&](bool) {
    fs::remove_all(path("data"));
    save_dataset(path("data"), synth_dataset(synth_config(cfg_, Split::train), Split::train));
    save_dataset(path("data"), synth_dataset(synth_config(cfg_, Split::test), Split::test));
  });
}

StageResult Pipeline::train_ae() {
  require("data", "train-ae", "synth");
  return run_stage("train-ae", stage_config(cfg_, {{"ae", section(cfg_, "ae")}}), {"data"},
                   {"ae/ae.ckpt", "ae/history.csv"}, [&](bool resume) {
                     const auto train = load_split(Split::train), test = load_split(Split::test);
                     const auto ckpt = path("ae/ae.ckpt");
                     fs::create_directories(path("ae"));
                     const auto ac = ae_train_config(cfg_);
                     auto state = resume && fs::exists(ckpt) ? load_ae(ckpt) : init_ae_training(ae_arch(cfg_), ac.seed);
                     ldgan::train_ae(state, train, test, ac, [&](const AETrainState& s) {
                       save_ae(ckpt, s);
                       write_ae_history(path("ae/history.csv"), s.history);
                     });
                     save_ae(ckpt, state);
                     write_ae_history(path("ae/history.csv"), state.history);
                   });
}

StageResult Pipeline::encode() {
  require("ae/ae.ckpt", "encode", "train-ae");
  return run_stage("encode", stage_config(cfg_, json::object()), {"data", "ae/ae.ckpt"}, {"latents"}, [&](bool) {
    auto ae = load_ae(path("ae/ae.ckpt"));
    fs::remove_all(path("latents"));
    save_dataset(path("latents"), encode_dataset(load_split(Split::train), ae.params));
  });
}

StageResult Pipeline::train_gan(GanTarget target) {
  const std::string stage = "train-gan-" + to_string(target);
  std::string input = "data";
  if (target == GanTarget::latent) {
    require("ae/ae.ckpt", stage, "train-ae");
    require("latents", stage, "encode");
    input = "latents";
  } else {
    require("data", stage, "synth");
  }
  auto gan_cfg = section(cfg_, "gan");
  gan_cfg.erase("samples");
  gan_cfg["target"] = to_string(target);
  const std::string dir = gan_dir(target);
  return run_stage(stage, stage_config(cfg_, {{"gan", gan_cfg}}), {input}, {dir + "/gan.ckpt", dir + "/history.csv"},
                   [&](bool resume) {
                     const auto data = load_dataset(path(input), Split::train);
                     const auto gc = gan_train_config(cfg_, target);
                     const auto ckpt = path(dir + "/gan.ckpt");
                     fs::create_directories(path(dir));
                     const CubeDims d = data.dims();
                     const GanArch arch{d.bands, d.height, d.width, gc.base_width, target};
                     auto state = resume && fs::exists(ckpt) ? load_gan(ckpt) : init_gan_training(arch, gc.seed);
                     ldgan::train_gan(state, data, gc, [&](const GanTrainState& s) {
                       save_gan(ckpt, s);
                       write_gan_history(path(dir + "/history.csv"), s.history);
                     });
                     save_gan(ckpt, state);
                     write_gan_history(path(dir + "/history.csv"), state.history);
                   });
}

StageResult Pipeline::sample(GanTarget target) {
  const std::string stage = "sample-" + to_string(target);
  const std::string dir = gan_dir(target), out = samples_dir(target);
  require(dir + "/gan.ckpt", stage, "train-gan (--target " + to_string(target) + ")");
  std::vector<std::string> inputs{dir + "/gan.ckpt"};
  if (target == GanTarget::latent) {
    require("ae/ae.ckpt", stage, "train-ae");
    inputs.push_back("ae/ae.ckpt");
  }
  return run_stage(stage, stage_config(cfg_, {{"samples", cfg_.gan.samples}}), inputs, {out}, [&](bool) {
    auto gan = load_gan(path(dir + "/gan.ckpt"));
    const auto seed = stage_seed(cfg_, stage);
    fs::remove_all(path(out));
    Dataset spectral;
    if (target == GanTarget::latent) {
      auto ae = load_ae(path("ae/ae.ckpt"));
      Dataset latent;
      for (auto& c : generate_cubes(gan.params, cfg_.gan.samples, seed)) latent.add(std::move(c), Provenance::gan_generated);
      for (auto& c : decode_cubes(latent.cubes, ae.params)) spectral.add(std::move(c), Provenance::gan_generated);
      save_dataset(path(out + "/latent"), latent);
    } else {
      for (auto& c : sample_cubes(cfg_.gan.samples, gan.params, nullptr, seed))
        spectral.add(std::move(c), Provenance::gan_generated);
    }
    save_dataset(path(out + "/spectral"), spectral);
  });
}

StageResult Pipeline::train_task(const TaskRunKey& key) {
  const std::string name = task_run_name(key);
  require("data", name, "synth");
  std::vector<std::string> inputs{"data"};
  const bool gan_source = key.source == AugmentSource::ld_gan || key.source == AugmentSource::s_gan;
  const GanTarget target = key.source == AugmentSource::ld_gan ? GanTarget::latent : GanTarget::full;
  if (gan_source && key.fraction > 0) {
    require(samples_dir(target), name, "sample (--target " + to_string(target) + ")");
    inputs.push_back(samples_dir(target) + "/spectral");
  }
  auto task_cfg = section(cfg_, "task");
  for (const char* k : {"task", "source", "fraction", "geometric"}) task_cfg.erase(k);
  const json key_json = {{"task", to_string(key.task)},
                         {"source", to_string(key.source)},
                         {"fraction", key.fraction},
                         {"geometric", key.geometric}};
  return run_stage(
      name, stage_config(cfg_, {{"task", task_cfg}, {"key", key_json}}), inputs,
      {name + "/recovery.ckpt", name + "/history.csv", name + "/report.csv"}, [&](bool resume) {
        const auto base = load_split(Split::train), test = load_split(Split::test);
        Dataset train = base;
        Rng rng(stage_seed(cfg_, "geometric-" + to_string(key.task)));
        if (key.source == AugmentSource::geometric) {
          const auto pool = geometric_pool(base, base.size(), rng);
          train = assemble_augmented(base, pool, key.fraction, Provenance::geometric);
        } else if (gan_source) {
          const auto pool = key.fraction > 0 ? load_dataset(path(samples_dir(target) + "/spectral"), Split::train)
                                             : Dataset{};
          train = assemble_augmented(base, pool.cubes, key.fraction, Provenance::gan_generated);
        }
        if (key.geometric)
          for (auto& c : geometric_pool(base, base.size(), rng)) train.add(std::move(c), Provenance::geometric);
        const auto tc = task_train_config(cfg_, key.task, key.source, key.fraction);
        const auto ckpt = path(name + "/recovery.ckpt");
        fs::create_directories(path(name));
        auto state = resume && fs::exists(ckpt) ? load_recovery(ckpt)
                                                : init_task_training(task_setup(cfg_, key.task), recovery_arch(cfg_), tc);
        const auto flush = [&](const TaskTrainState& s) {
          save_recovery(ckpt, s);
          write_task_history(path(name + "/history.csv"), s.report.history);
        };
        ldgan::train_task(state, train, test, tc, flush);
        flush(state);
        auto report = state.report;
        report.seed = cfg_.seed;
        write_text(path(name + "/report.csv"), task_report_header() + "\n" + task_report_row(report) + "\n");
      });
}

StageResult Pipeline::evaluate(const TaskRunKey& key) {
  const std::string name = task_run_name(key);
  require(name + "/recovery.ckpt", "evaluate", name);
  return run_stage("evaluate-" + name.substr(5), stage_config(cfg_, {{"snr_db", section(cfg_, "task").at("snr_db")}}),
                   {"data", name + "/recovery.ckpt"}, {name + "/evaluation.csv"}, [&](bool) {
                     auto state = load_recovery(path(name + "/recovery.ckpt"));
                     const auto test = load_split(Split::test);
                     const auto& op = *state.net.setup.op;
                     std::ostringstream csv;
                     csv << "cube,psnr,ssim,baseline_psnr\n";
                     double mp = 0, ms = 0, mb = 0;
                     for (std::size_t i = 0; i < test.size(); ++i) {
                       auto y = op.measure(test.cubes[i]);
                       if (cfg_.task.snr_db) y = add_noise(y, *cfg_.task.snr_db, stage_seed(cfg_, "noise") + i);
                       const auto x = recover(y, state.net);
                       const double p = psnr_capped(psnr(test.cubes[i], x));
                       const double s = ssim(test.cubes[i], x);
                       const double b = psnr_capped(psnr(test.cubes[i], adjoint_baseline(y, op)));
                       mp += p;
                       ms += s;
                       mb += b;
                       csv << i << "," << p << "," << s << "," << b << "\n";
                     }
                     write_text(path(name + "/evaluation.csv"), csv.str());
                     const double n = static_cast<double>(test.size());
                     note("evaluate " + name + ": psnr " + std::to_string(mp / n) + " dB, ssim " +
                          std::to_string(ms / n) + ", adjoint baseline " + std::to_string(mb / n) + " dB");
                   });
}

StageResult Pipeline::analyze() {
  require("data", "analyze", "synth");
  std::vector<std::string> inputs{"data"};
  std::vector<GanTarget> present;
  for (auto t : {GanTarget::latent, GanTarget::full})
    if (fs::exists(path(samples_dir(t)))) {
      present.push_back(t);
      inputs.push_back(samples_dir(t));
    }
  return run_stage(
      "analyze", stage_config(cfg_, {{"analysis", section(cfg_, "analysis")}}), inputs,
      {"analysis"}, [&](bool) {
        fs::remove_all(path("analysis"));
        const auto& a = cfg_.analysis;
        const auto seed = stage_seed(cfg_, "analyze");
        const auto vca = [&](const Dataset& d) {
          const auto cubes = first_cubes(d, a.pixel_cubes);
          return vca_endmembers(collect_pixels(cubes), a.vca_q, seed);
        };
        std::vector<std::pair<std::string, EndmemberSet>> sets;
        sets.emplace_back("original", vca(load_split(Split::train)));
        for (auto t : present)
          sets.emplace_back(t == GanTarget::latent ? "ld-gan" : "s-gan",
                            vca(load_dataset(path(samples_dir(t) + "/spectral"), Split::train)));
        std::ostringstream em, ang;
        em << "dataset,endmember,band,value\n";
        ang << "dataset,endmember,angle\n";
        for (const auto& [name, set] : sets) {
          for (std::size_t k = 0; k < set.spectra.size(); ++k)
            for (std::size_t l = 0; l < set.spectra[k].size(); ++l)
              em << name << "," << k << "," << l << "," << set.spectra[k][l] << "\n";
          const auto m = match_endmembers(set.spectra, sets.front().second.spectra);
          for (std::size_t k = 0; k < m.angles.size(); ++k) ang << name << "," << k << "," << m.angles[k] << "\n";
        }
        write_text(path("analysis/endmembers.csv"), em.str());
        write_text(path("analysis/endmember_angles.csv"), ang.str());
        if (std::find(present.begin(), present.end(), GanTarget::latent) != present.end()) {
          const auto lat = load_dataset(path(samples_dir(GanTarget::latent) + "/latent"), Split::train);
          std::vector<std::vector<double>> samples;
          for (const auto& c : lat.cubes) samples.push_back(c.values());
          const auto rep = pca_report(samples, a.pca_k);
          std::ostringstream pca, proj;
          pca << "component,variance\n";
          for (std::size_t k = 0; k < rep.variances.size(); ++k) pca << k << "," << rep.variances[k] << "\n";
          proj << "sample";
          for (std::size_t k = 0; k < rep.variances.size(); ++k) proj << ",pc" << k + 1;
          proj << "\n";
          for (std::size_t i = 0; i < rep.projections.size(); ++i) {
            proj << i;
            for (double v : rep.projections[i]) proj << "," << v;
            proj << "\n";
          }
          write_text(path("analysis/pca.csv"), pca.str());
          write_text(path("analysis/pca_projections.csv"), proj.str());
        }
      });
}

void Pipeline::build_samples(GanTarget target) {
  synth();
  if (target == GanTarget::latent) {
    train_ae();
    encode();
  }
  train_gan(target);
  sample(target);
}

void Pipeline::build_task(const TaskRunKey& key) {
  synth();
  if (key.fraction > 0 && key.source == AugmentSource::ld_gan) build_samples(GanTarget::latent);
  if (key.fraction > 0 && key.source == AugmentSource::s_gan) build_samples(GanTarget::full);
  train_task(key);
}

TaskReport Pipeline::load_task_report(const TaskRunKey& key) const {
  const auto st = load_recovery(path(task_run_name(key) + "/recovery.ckpt"));
  auto r = st.report;
  r.seed = cfg_.seed;
  return r;
}

std::vector<GanEpochRecord> Pipeline::load_gan_history(GanTarget target) const {
  return load_gan(path(gan_dir(target) + "/gan.ckpt")).history;
}

}  // namespace ldgan
