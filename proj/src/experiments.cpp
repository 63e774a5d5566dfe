#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ldgan/analysis.hpp"
#include "ldgan/errors.hpp"
#include "ldgan/pipeline.hpp"

namespace ldgan {

namespace fs = std::filesystem;

std::string to_string(Suite s) {
  switch (s) {
    case Suite::convergence: return "convergence";
    case Suite::da_sweep: return "da-sweep";
    case Suite::reg_sweep: return "reg-sweep";
    case Suite::endmembers: return "endmembers";
    case Suite::pca: return "pca";
    case Suite::geo_compare: return "geo-compare";
  }
  return "?";
}

Suite suite_from_string(const std::string& s) {
  for (auto v : {Suite::convergence, Suite::da_sweep, Suite::reg_sweep, Suite::endmembers, Suite::pca,
                 Suite::geo_compare})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown suite '" + s + "' (expected convergence, da-sweep, reg-sweep, endmembers, pca or geo-compare)");
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

RunConfig seed_config(const RunConfig& cfg, Suite suite, std::uint64_t seed, const std::string& variant = "") {
  RunConfig c = cfg;
  c.seed = seed;
  fs::path out = fs::path(cfg.out) / to_string(suite) / ("seed" + std::to_string(seed));
  if (!variant.empty()) out /= variant;
  c.out = out.string();
  return c;
}

double heldout_latent_variance(const Pipeline& p) {
  auto ae = load_ae(p.path("ae/ae.ckpt"));
  const auto test = p.load_split(Split::test);
  if (test.size() < 2) throw ConfigError("held-out latent variance needs synth.test_count >= 2");
  return variance_reg(encode(ae.params, to_batch<float>(std::span<const SpectralCube>(test.cubes))));
}

PcaReport latent_pca(const Pipeline& p) {
  const auto lat = load_dataset(p.path(Pipeline::samples_dir(GanTarget::latent) + "/latent"), Split::train);
  std::vector<std::vector<double>> samples;
  for (const auto& c : lat.cubes) samples.push_back(c.values());
  return pca_report(samples, p.config().analysis.pca_k);
}

struct Rows {
  Suite suite;
  std::vector<ResultRow> rows;
  void add(const std::string& task, const std::string& method, const std::string& param, double pv, std::uint64_t seed,
           long step, const std::string& metric, double value) {
    rows.push_back({to_string(suite), task, method, param, pv, seed, step, metric, value});
  }
  void add_report(const TaskReport& r, const std::string& method, const std::string& param, double pv) {
    const auto t = to_string(r.task);
    add(t, method, param, pv, r.seed, -1, "best_psnr", psnr_capped(r.best_psnr));
    add(t, method, param, pv, r.seed, -1, "best_ssim", r.best_ssim);
    add(t, method, param, pv, r.seed, -1, "epoch_of_best", static_cast<double>(r.epoch_of_best));
  }
};

TaskReport train_report(Pipeline& p, const TaskRunKey& key) {
  p.build_task(key);
  return p.load_task_report(key);
}

void convergence(const RunConfig& cfg, bool force, std::ostream* log, Rows& out) {
  const auto add_history = [&](const std::vector<GanEpochRecord>& h, const std::string& method, double ch,
                               std::uint64_t seed) {
    for (const auto& e : h) {
      const long step = static_cast<long>(e.epoch);
      out.add("", method, "channels", ch, seed, step, "value_v", e.value_v);
      out.add("", method, "channels", ch, seed, step, "loss_d", e.loss_d);
      out.add("", method, "channels", ch, seed, step, "loss_g", e.loss_g);
      out.add("", method, "channels", ch, seed, step, "variance", e.reg_value);
    }
  };
  for (auto seed : cfg.experiment.seeds) {
    for (auto ch : cfg.experiment.channels) {
      auto c = seed_config(cfg, Suite::convergence, seed, "c" + std::to_string(ch));
      c.ae.channels = ch;
      Pipeline p(c, force, log);
      p.synth();
      p.train_ae();
      p.encode();
      p.train_gan(GanTarget::latent);
      add_history(p.load_gan_history(GanTarget::latent), "ld-gan", static_cast<double>(ch), seed);
    }
    Pipeline p(seed_config(cfg, Suite::convergence, seed, "full"), force, log);
    p.synth();
    p.train_gan(GanTarget::full);
    add_history(p.load_gan_history(GanTarget::full), "s-gan", static_cast<double>(cfg.synth.bands), seed);
  }
}

void da_sweep(const RunConfig& cfg, bool force, std::ostream* log, Rows& out) {
  for (auto seed : cfg.experiment.seeds) {
    Pipeline p(seed_config(cfg, Suite::da_sweep, seed), force, log);
    for (auto task : cfg.experiment.tasks) {
      out.add_report(train_report(p, {task, AugmentSource::none, 0.0, false}), "baseline", "fraction", 0.0);
      for (auto src : {AugmentSource::ld_gan, AugmentSource::s_gan})
        for (double f : cfg.experiment.fractions)
          out.add_report(train_report(p, {task, src, f, false}), to_string(src), "fraction", f);
    }
  }
}

void reg_sweep(const RunConfig& cfg, bool force, std::ostream* log, Rows& out) {
  for (auto seed : cfg.experiment.seeds)
    for (double mu_ae : cfg.experiment.mu_grid)
      for (double mu_gan : cfg.experiment.mu_grid) {
        auto c = seed_config(cfg, Suite::reg_sweep, seed, "ae" + num(mu_ae) + "_gan" + num(mu_gan));
        c.ae.mu_ae = mu_ae;
        c.gan.mu_gan = mu_gan;
        Pipeline p(c, force, log);
        p.build_samples(GanTarget::latent);
        const std::string method = "mu_gan=" + num(mu_gan);
        out.add("", method, "mu_ae", mu_ae, seed, -1, "heldout_latent_variance", heldout_latent_variance(p));
        const auto pca = latent_pca(p);
        double top = 0;
        for (double v : pca.variances) top += v;
        out.add("", method, "mu_ae", mu_ae, seed, -1, "generated_topk_variance", top);
        for (auto task : cfg.experiment.tasks) {
          const auto r = train_report(p, {task, AugmentSource::ld_gan, 1.0, false});
          out.add(to_string(task), method, "mu_ae", mu_ae, seed, -1, "best_psnr", psnr_capped(r.best_psnr));
          out.add(to_string(task), method, "mu_ae", mu_ae, seed, -1, "best_ssim", r.best_ssim);
        }
      }
}

void endmembers(const RunConfig& cfg, bool force, std::ostream* log, Rows& out) {
  for (auto seed : cfg.experiment.seeds) {
    Pipeline p(seed_config(cfg, Suite::endmembers, seed), force, log);
    p.build_samples(GanTarget::latent);
    p.build_samples(GanTarget::full);
    p.analyze();
    std::ifstream em(p.path("analysis/endmembers.csv")), ang(p.path("analysis/endmember_angles.csv"));
    std::string line;
    std::getline(em, line);
    while (std::getline(em, line)) {
      char name[32];
      long k = 0, l = 0;
      double v = 0;
      if (std::sscanf(line.c_str(), "%31[^,],%ld,%ld,%lf", name, &k, &l, &v) == 4)
        out.add("", name, "band", static_cast<double>(l), seed, k, "reflectance", v);
    }
    std::getline(ang, line);
    while (std::getline(ang, line)) {
      char name[32];
      long k = 0;
      double v = 0;
      if (std::sscanf(line.c_str(), "%31[^,],%ld,%lf", name, &k, &v) == 3)
        out.add("", name, "", 0.0, seed, k, "angle_to_original", v);
    }
  }
}

void pca(const RunConfig& cfg, bool force, std::ostream* log, Rows& out) {
  for (auto seed : cfg.experiment.seeds)
    for (double mu : {0.0, cfg.experiment.pca_mu_gan}) {
      auto c = seed_config(cfg, Suite::pca, seed, "mu_gan" + num(mu));
      c.gan.mu_gan = mu;
      Pipeline p(c, force, log);
      p.build_samples(GanTarget::latent);
      const auto rep = latent_pca(p);
      double top = 0;
      for (std::size_t k = 0; k < rep.variances.size(); ++k) {
        out.add("", "ld-gan", "mu_gan", mu, seed, static_cast<long>(k), "variance", rep.variances[k]);
        top += rep.variances[k];
      }
      out.add("", "ld-gan", "mu_gan", mu, seed, -1, "topk_variance", top);
      out.add("", "ld-gan", "mu_gan", mu, seed, -1, "total_variance", rep.total_variance);
      for (std::size_t i = 0; i < rep.projections.size(); ++i)
        for (std::size_t k = 0; k < rep.projections[i].size(); ++k)
          out.add("", "ld-gan", "mu_gan", mu, seed, static_cast<long>(i), "pc" + std::to_string(k + 1),
                  rep.projections[i][k]);
    }
}

void geo_compare(const RunConfig& cfg, bool force, std::ostream* log, Rows& out) {
  for (auto seed : cfg.experiment.seeds) {
    Pipeline p(seed_config(cfg, Suite::geo_compare, seed), force, log);
    for (auto task : cfg.experiment.tasks)
      for (bool geo : {false, true})
        for (auto src : {AugmentSource::none, AugmentSource::s_gan, AugmentSource::ld_gan}) {
          const double f = src == AugmentSource::none ? 0.0 : 1.0;
          out.add_report(train_report(p, {task, src, f, geo}), src == AugmentSource::none ? "baseline" : to_string(src),
                         "geometric", geo ? 1.0 : 0.0);
        }
  }
}

}  // namespace

std::string result_header() { return "suite,task,method,param,param_value,seed,step,metric,value"; }

std::string result_row(const ResultRow& r) {
  return r.suite + "," + r.task + "," + r.method + "," + r.param + "," + num(r.param_value) + "," +
         std::to_string(r.seed) + "," + (r.step < 0 ? std::string() : std::to_string(r.step)) + "," + r.metric + "," +
         num(r.value);
}

std::vector<ResultRow> run_experiment(Suite suite, const RunConfig& cfg, bool force, std::ostream* log) {
  validate(cfg);
  Rows rows{suite, {}};
  switch (suite) {
    case Suite::convergence: convergence(cfg, force, log, rows); break;
    case Suite::da_sweep: da_sweep(cfg, force, log, rows); break;
    case Suite::reg_sweep: reg_sweep(cfg, force, log, rows); break;
    case Suite::endmembers: endmembers(cfg, force, log, rows); break;
    case Suite::pca: pca(cfg, force, log, rows); break;
    case Suite::geo_compare: geo_compare(cfg, force, log, rows); break;
  }
  const auto dir = fs::path(cfg.out) / "experiments";
  fs::create_directories(dir);
  std::ofstream csv(dir / (to_string(suite) + ".csv"));
  if (!csv) throw ConfigError("cannot write " + (dir / (to_string(suite) + ".csv")).string());
  csv << result_header() << "\n";
  for (const auto& r : rows.rows) csv << result_row(r) << "\n";
  return rows.rows;
}

}  // namespace ldgan
