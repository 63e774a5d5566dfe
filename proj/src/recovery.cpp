#include "ldgan/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ldgan/analysis.hpp"

namespace ldgan {

namespace {

constexpr std::size_t kUnetLevels = 4;

std::string stage_name(std::size_t k, const char* part) { return "stage" + std::to_string(k) + "." + part; }

/// Channels the network consumes after input conditioning.
std::size_t input_channels(const TaskSetup& s) {
  switch (s.task) {
    case RecoveryTask::csi:
      return s.dims.bands;
    case RecoveryTask::rgb:
      return 3;
    case RecoveryTask::sisr:
      return s.op->output_shape().channels;
  }
  return 0;
}

template <typename T>
Var unet_forward(Graph<T>& g, ParamSet<T>& P, Var x) {
  std::vector<Var> skips;
  Var h = g.relu(conv(g, P, "inc", x, 1, 1));
  skips.push_back(h);
  for (std::size_t l = 1; l <= kUnetLevels; ++l) {
    h = g.relu(conv(g, P, "down" + std::to_string(l), h, 2, 1));
    if (l < kUnetLevels) skips.push_back(h);
  }
  for (std::size_t l = 1; l <= kUnetLevels; ++l) {
    h = g.relu(conv_transpose(g, P, "up" + std::to_string(l), h, 2, 1));
    h = g.concat_channels(h, skips[kUnetLevels - l]);
    h = g.relu(conv(g, P, "fuse" + std::to_string(l), h, 1, 1));
  }
  return g.sigmoid(conv(g, P, "head", h, 1, 1));
}

template <typename T>
void init_unet(ParamSet<T>& P, std::size_t in_ch, std::size_t out_ch, std::size_t w, Rng& rng) {
  // Encoder widths per level: w, 2w, 4w, 8w, 8w (bottleneck).
  const std::size_t widths[kUnetLevels + 1] = {w, 2 * w, 4 * w, 8 * w, 8 * w};
  add_conv(P, "inc", widths[0], in_ch, 3, Init::he, rng);
  for (std::size_t l = 1; l <= kUnetLevels; ++l) {
    add_conv(P, "down" + std::to_string(l), widths[l], widths[l - 1], 4, Init::he, rng);
  }
  std::size_t cur = widths[kUnetLevels];
  for (std::size_t l = 1; l <= kUnetLevels; ++l) {
    const std::size_t skip = widths[kUnetLevels - l];
    const std::size_t out = kUnetLevels - l == 0 ? w : widths[kUnetLevels - l - 1];
    add_conv_transpose(P, "up" + std::to_string(l), cur, cur, 4, Init::he, rng);
    add_conv(P, "fuse" + std::to_string(l), out, cur + skip, 3, Init::he, rng);
    cur = out;
  }
  add_conv(P, "head", out_ch, cur, 3, Init::he, rng);
}

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, std::size_t factor) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<T> out({B, C, H * factor, W * factor});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H * factor; ++i)
        for (std::size_t j = 0; j < W * factor; ++j) out.at(n, c, i, j) = x.at(n, c, i / factor, j / factor);
  return out;
}

template <typename T>
Tensor<T> measurements_tensor(std::span<const Measurement> ys, const MeasurementShape& shape) {
  Tensor<T> t({ys.size(), shape.channels, shape.rows, shape.cols});
  for (std::size_t n = 0; n < ys.size(); ++n)
    for (std::size_t i = 0; i < shape.size(); ++i) t[n * shape.size() + i] = static_cast<T>(ys[n].values[i]);
  return t;
}

SpectralCube clamp_unit(SpectralCube c) {
  for (auto& v : c.values()) v = std::clamp(v, 0.0, 1.0);
  return c;
}

}  // namespace

std::string to_string(RecoveryTask t) {
  switch (t) {
    case RecoveryTask::csi:
      return "csi";
    case RecoveryTask::rgb:
      return "rgb";
    case RecoveryTask::sisr:
      return "sisr";
  }
  return "?";
}

RecoveryTask recovery_task_from_string(const std::string& s) {
  if (s == "csi") return RecoveryTask::csi;
  if (s == "rgb") return RecoveryTask::rgb;
  if (s == "sisr") return RecoveryTask::sisr;
  throw ConfigError("unknown task '" + s + "' (expected csi, rgb or sisr)");
}

OperatorKind operator_kind(RecoveryTask t) {
  switch (t) {
    case RecoveryTask::csi:
      return OperatorKind::cassi;
    case RecoveryTask::rgb:
      return OperatorKind::rgb;
    case RecoveryTask::sisr:
      return OperatorKind::decimation;
  }
  return OperatorKind::cassi;
}

TaskSetup make_task(RecoveryTask task, CubeDims dims, const TaskOperatorConfig& cfg) {
  TaskSetup s{task, dims, cfg, nullptr};
  switch (task) {
    case RecoveryTask::csi:
      s.op = std::make_shared<CassiOperator>(
          dims, random_coded_aperture(dims.height, dims.width, cfg.transmittance, cfg.aperture_seed));
      break;
    case RecoveryTask::rgb:
      s.op = std::make_shared<RgbOperator>(dims, default_spectral_response(dims.bands));
      break;
    case RecoveryTask::sisr:
      s.op = std::make_shared<DecimationOperator>(dims, cfg.spatial_factor, cfg.spectral_factor);
      break;
  }
  return s;
}

template <typename T>
RecoveryNet<T> init_recovery(const TaskSetup& setup, const RecoveryArch& arch, std::uint64_t seed) {
  if (!setup.op) throw ConfigError("recovery: task has no forward operator");
  if (arch.base_width == 0) throw ConfigError("recovery: base_width must be >= 1");
  RecoveryNet<T> net;
  net.setup = setup;
  net.arch = arch;
  Rng rng(seed);
  const std::size_t L = setup.dims.bands, w = arch.base_width;
  if (net.unrolled()) {
    if (arch.stages == 0) throw ConfigError("recovery: unrolled network needs at least one stage");
    net.lipschitz = setup.op->lipschitz();
    for (std::size_t k = 0; k < arch.stages; ++k) {
      net.params.add(stage_name(k, "alpha"), Tensor<T>({1}, static_cast<T>(arch.initial_step)));
      add_conv(net.params, stage_name(k, "p0"), w, L, 3, Init::he, rng);
      add_conv(net.params, stage_name(k, "p1"), w, w, 3, Init::he, rng);
      // Small last layer so each prior starts close to the identity map.
      net.params.add(stage_name(k, "p2") + ".w", gaussian_tensor<T>({L, w, 3, 3}, 1e-3, rng));
      net.params.add(stage_name(k, "p2") + ".b", Tensor<T>({L}, T{0}));
    }
  } else {
    const std::size_t f = std::size_t{1} << kUnetLevels;
    if (setup.dims.height % f || setup.dims.width % f) {
      throw ConfigError("recovery: UNET needs height and width divisible by " + std::to_string(f) + ", got " +
                        dims_str(setup.dims));
    }
    init_unet(net.params, input_channels(setup), L, w, rng);
  }
  return net;
}

template <typename T>
RecoveryInput<T> prepare_input(const RecoveryNet<T>& net, std::span<const Measurement> ys) {
  const auto& op = *net.setup.op;
  const auto shape = op.output_shape();
  for (const auto& y : ys) {
    if (y.kind != op.kind()) {
      throw ConfigError("recovery: " + to_string(y.kind) + " measurement given to a " + to_string(net.setup.task) +
                        " network");
    }
    if (y.shape != shape) throw DimensionError("recovery: measurement shape does not match the task operator");
  }
  RecoveryInput<T> in;
  switch (net.setup.task) {
    case RecoveryTask::csi: {
      std::vector<SpectralCube> starts;
      starts.reserve(ys.size());
      for (const auto& y : ys) starts.push_back(op.normalized_adjoint(y));
      in.start = to_batch<T>(std::span<const SpectralCube>(starts));
      in.y = measurements_tensor<T>(ys, shape);
      break;
    }
    case RecoveryTask::rgb:
      in.start = measurements_tensor<T>(ys, shape);
      break;
    case RecoveryTask::sisr:
      in.start = nearest_upsample(measurements_tensor<T>(ys, shape), net.setup.op_config.spatial_factor);
      break;
  }
  return in;
}

template <typename T>
RecoveryInput<T> simulate_input(const RecoveryNet<T>& net, std::span<const SpectralCube> cubes, double snr_db,
                                std::uint64_t noise_seed) {
  std::vector<Measurement> ys;
  ys.reserve(cubes.size());
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    Measurement y = net.setup.op->measure(cubes[i]);
    if (!std::isinf(snr_db)) y = add_noise(y, snr_db, mix_seed(noise_seed + i));
    ys.push_back(std::move(y));
  }
  return prepare_input(net, std::span<const Measurement>(ys));
}

template <typename T>
Var unrolled_csi_stage(Graph<T>& g, RecoveryNet<T>& net, std::size_t stage, Var x, Var y) {
  if (stage >= net.arch.stages) throw ConfigError("unrolled_csi_stage: stage index out of range");
  const auto op = net.setup.op;
  const auto mshape = op->output_shape();
  const auto& d = net.setup.dims;
  SampleMap<T> fwd = [op](std::span<const T> a, std::span<T> b) { op->apply(a, b); };
  SampleMap<T> adj = [op](std::span<const T> a, std::span<T> b) { op->adjoint(a, b); };
  const Var ax = g.apply_linear(x, {mshape.channels, mshape.rows, mshape.cols}, fwd, adj);
  const Var grad = g.apply_linear(g.sub(ax, y), {d.bands, d.height, d.width}, adj, fwd);
  const Var step = g.scale(g.scale_by(grad, g.param(net.params.param(stage_name(stage, "alpha")))),
                           static_cast<T>(1.0 / net.lipschitz));
  const Var z = g.sub(x, step);
  Var h = g.relu(conv(g, net.params, stage_name(stage, "p0"), z, 1, 1));
  h = g.relu(conv(g, net.params, stage_name(stage, "p1"), h, 1, 1));
  return g.add(z, conv(g, net.params, stage_name(stage, "p2"), h, 1, 1));
}

template <typename T>
Var recovery_forward(Graph<T>& g, RecoveryNet<T>& net, const RecoveryInput<T>& in) {
  Var x = g.constant(in.start);
  if (!net.unrolled()) return unet_forward(g, net.params, x);
  const Var y = g.constant(in.y);
  for (std::size_t k = 0; k < net.arch.stages; ++k) x = unrolled_csi_stage(g, net, k, x, y);
  return x;
}

template <typename T>
Var recovery_objective(Graph<T>& g, RecoveryNet<T>& net, const RecoveryInput<T>& in, const Tensor<T>& truth) {
  return g.batch_sse(recovery_forward(g, net, in), g.constant(truth));
}

std::vector<SpectralCube> recover_batch(std::span<const Measurement> ys, RecoveryNet<float>& net, std::size_t chunk) {
  std::vector<SpectralCube> out;
  out.reserve(ys.size());
  for (std::size_t first = 0; first < ys.size(); first += chunk) {
    const std::size_t cnt = std::min(chunk, ys.size() - first);
    const auto in = prepare_input(net, ys.subspan(first, cnt));
    Graph<float> g;
    for (auto& c : from_batch(g.value(recovery_forward(g, net, in)))) out.push_back(clamp_unit(std::move(c)));
  }
  return out;
}

SpectralCube recover(const Measurement& y, RecoveryNet<float>& net) {
  return std::move(recover_batch(std::span<const Measurement>(&y, 1), net).front());
}

SpectralCube adjoint_baseline(const Measurement& y, const ForwardOperator& op) {
  return clamp_unit(op.normalized_adjoint(y));
}

std::string to_string(AugmentSource s) {
  switch (s) {
    case AugmentSource::none:
      return "none";
    case AugmentSource::geometric:
      return "geometric";
    case AugmentSource::s_gan:
      return "s-gan";
    case AugmentSource::ld_gan:
      return "ld-gan";
  }
  return "?";
}

AugmentSource augment_source_from_string(const std::string& s) {
  if (s == "none") return AugmentSource::none;
  if (s == "geometric") return AugmentSource::geometric;
  if (s == "s-gan") return AugmentSource::s_gan;
  if (s == "ld-gan") return AugmentSource::ld_gan;
  throw ConfigError("unknown augmentation source '" + s + "' (expected none, geometric, s-gan or ld-gan)");
}

Provenance provenance_of(AugmentSource s) {
  switch (s) {
    case AugmentSource::geometric:
      return Provenance::geometric;
    case AugmentSource::s_gan:
    case AugmentSource::ld_gan:
      return Provenance::gan_generated;
    case AugmentSource::none:
      break;
  }
  return Provenance::original;
}

void validate(const TaskTrainConfig& cfg) {
  if (!(cfg.lr > 0)) throw ConfigError("task.lr must be > 0");
  if (cfg.batch == 0) throw ConfigError("task.batch must be >= 1");
  if (!(cfg.fraction >= 0 && cfg.fraction <= 1)) throw ConfigError("task.fraction must lie in [0, 1]");
  if (!(cfg.decay_rate > 0 && cfg.decay_rate <= 1)) throw ConfigError("task.decay_rate must lie in (0, 1]");
}

std::pair<double, double> evaluate_recovery(RecoveryNet<float>& net, const Dataset& test, std::size_t limit) {
  const std::size_t n = limit ? std::min(limit, test.size()) : test.size();
  if (n == 0) return {std::nan(""), std::nan("")};
  std::vector<Measurement> ys;
  ys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ys.push_back(net.setup.op->measure(test.cubes[i]));
  const auto est = recover_batch(std::span<const Measurement>(ys), net);
  double ps = 0, ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ps += psnr_capped(psnr(test.cubes[i], est[i]));
    ss += ssim(test.cubes[i], est[i]);
  }
  return {ps / static_cast<double>(n), ss / static_cast<double>(n)};
}

double adjoint_baseline_psnr(const TaskSetup& setup, const Dataset& test, std::size_t limit) {
  const std::size_t n = limit ? std::min(limit, test.size()) : test.size();
  if (n == 0) return std::nan("");
  double ps = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ps += psnr_capped(psnr(test.cubes[i], adjoint_baseline(setup.op->measure(test.cubes[i]), *setup.op)));
  }
  return ps / static_cast<double>(n);
}

TaskTrainState init_task_training(const TaskSetup& setup, const RecoveryArch& arch, const TaskTrainConfig& cfg) {
  TaskTrainState s;
  s.net = init_recovery<float>(setup, arch, cfg.seed);
  s.report.task = setup.task;
  s.report.source = cfg.source;
  s.report.fraction = cfg.fraction;
  s.report.seed = cfg.seed;
  return s;
}

void train_task(TaskTrainState& state, const Dataset& train, const Dataset& test, const TaskTrainConfig& cfg,
                const TaskEpochHook& on_epoch) {
  validate(cfg);
  if (train.empty()) throw ConfigError("train_task: training set is empty");
  if (train.dims() != state.net.setup.dims || (!test.empty() && test.dims() != state.net.setup.dims)) {
    throw DimensionError("train_task: datasets must share the task's cube dims " + dims_str(state.net.setup.dims));
  }
  auto& rep = state.report;
  if (rep.history.empty()) rep.baseline_psnr = adjoint_baseline_psnr(state.net.setup, test, cfg.eval_limit);
  auto params = state.net.params.pointers();
  const Rng root(cfg.seed);
  for (std::size_t epoch = rep.history.size(); epoch < cfg.epochs; ++epoch) {
    AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
    if (cfg.lr_decay) adam.lr *= std::pow(cfg.decay_rate, static_cast<double>(epoch));
    Rng rng = root.split(3000 + epoch);
    const auto batches = epoch_batches(train.size(), cfg.batch, rng);
    double loss_sum = 0;
    for (const auto& idx : batches) {
      std::vector<SpectralCube> cubes;
      cubes.reserve(idx.size());
      for (auto i : idx) cubes.push_back(train.cubes[i]);
      const std::span<const SpectralCube> cs(cubes);
      const auto in = simulate_input(state.net, cs, cfg.snr_db, rng.engine()());
      Graph<float> g;
      const Var loss = recovery_objective(g, state.net, in, to_batch<float>(cs));
      require_finite_loss(g.value(loss)[0], static_cast<int>(epoch), "recovery loss");
      loss_sum += g.value(loss)[0];
      zero_grads<float>(params);
      g.backward(loss);
      adam_step<float>(params, state.adam, adam);
    }
    TaskEpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(batches.size());
    std::tie(rec.psnr, rec.ssim) = evaluate_recovery(state.net, test, cfg.eval_limit);
    rep.history.push_back(rec);
    if (rec.psnr > rep.best_psnr) {
      rep.best_psnr = rec.psnr;
      rep.best_ssim = rec.ssim;
      rep.epoch_of_best = epoch;
    }
    if (on_epoch) on_epoch(state);
  }
}

TaskTrainState train_task(const Dataset& train, const Dataset& test, const TaskSetup& setup, const RecoveryArch& arch,
                          const TaskTrainConfig& cfg) {
  TaskTrainState s = init_task_training(setup, arch, cfg);
  train_task(s, train, test, cfg);
  return s;
}

Checkpoint recovery_checkpoint(const TaskTrainState& state, bool with_optimizer) {
  const auto& net = state.net;
  const auto& r = state.report;
  Checkpoint ck;
  ck.magic = kRecoveryMagic;
  ck.info_a = static_cast<std::uint32_t>(net.setup.task);
  ck.info_b = static_cast<std::uint32_t>(net.setup.dims.bands);
  for (auto& [n, t] : to_float_tensors(net.params)) ck.tensors.emplace_back("net/" + n, std::move(t));
  auto& m = ck.meta;
  m["task"] = to_string(net.setup.task);
  m["dims"] = {net.setup.dims.height, net.setup.dims.width, net.setup.dims.bands};
  m["operator"] = {{"transmittance", net.setup.op_config.transmittance},
                   {"aperture_seed", net.setup.op_config.aperture_seed},
                   {"spatial_factor", net.setup.op_config.spatial_factor},
                   {"spectral_factor", net.setup.op_config.spectral_factor}};
  m["arch"] = {{"base_width", net.arch.base_width}, {"stages", net.arch.stages}, {"initial_step", net.arch.initial_step}};
  m["lipschitz"] = net.lipschitz;
  m["report"] = {{"source", to_string(r.source)},     {"fraction", r.fraction},
                 {"seed", r.seed},                    {"best_psnr", r.best_psnr},
                 {"best_ssim", r.best_ssim},          {"epoch_of_best", r.epoch_of_best},
                 {"baseline_psnr", r.baseline_psnr}};
  auto& h = m["history"] = nlohmann::json::array();
  for (const auto& e : r.history) h.push_back({e.epoch, e.loss, e.psnr, e.ssim});
  if (with_optimizer) store_adam(ck, "net", state.adam);
  return ck;
}

TaskTrainState recovery_state_from_checkpoint(const Checkpoint& ck) {
  if (ck.magic != kRecoveryMagic) throw FormatError("not a recovery checkpoint");
  const auto& m = ck.meta;
  const auto task = recovery_task_from_string(m.at("task").get<std::string>());
  const auto& dv = m.at("dims");
  const CubeDims dims{dv[0].get<std::size_t>(), dv[1].get<std::size_t>(), dv[2].get<std::size_t>()};
  TaskOperatorConfig oc;
  oc.transmittance = m.at("operator").at("transmittance").get<double>();
  oc.aperture_seed = m.at("operator").at("aperture_seed").get<std::uint64_t>();
  oc.spatial_factor = m.at("operator").at("spatial_factor").get<std::size_t>();
  oc.spectral_factor = m.at("operator").at("spectral_factor").get<std::size_t>();
  RecoveryArch arch;
  arch.base_width = m.at("arch").at("base_width").get<std::size_t>();
  arch.stages = m.at("arch").at("stages").get<std::size_t>();
  arch.initial_step = m.at("arch").at("initial_step").get<double>();
  const auto& r = m.at("report");
  TaskTrainConfig cfg;
  cfg.source = augment_source_from_string(r.at("source").get<std::string>());
  cfg.fraction = r.at("fraction").get<double>();
  cfg.seed = r.at("seed").get<std::uint64_t>();
  TaskTrainState s = init_task_training(make_task(task, dims, oc), arch, cfg);
  assign_from_float(s.net.params, network_tensors(ck, "net"));
  s.adam = restore_adam(ck, "net");
  s.report.best_psnr = r.at("best_psnr").is_number() ? r.at("best_psnr").get<double>()
                                                      : -std::numeric_limits<double>::infinity();
  s.report.best_ssim = r.at("best_ssim").get<double>();
  s.report.epoch_of_best = r.at("epoch_of_best").get<std::size_t>();
  s.report.baseline_psnr = r.at("baseline_psnr").is_number() ? r.at("baseline_psnr").get<double>() : std::nan("");
  for (const auto& e : m.at("history")) {
    s.report.history.push_back(
        {e[0].get<std::size_t>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>()});
  }
  return s;
}

void save_recovery(const std::string& path, const TaskTrainState& state) {
  save_checkpoint(path, recovery_checkpoint(state));
}

TaskTrainState load_recovery(const std::string& path) {
  return recovery_state_from_checkpoint(load_checkpoint(path, kRecoveryMagic));
}

std::string task_report_header() { return "task,source,fraction,seed,best_psnr,best_ssim,epoch_of_best"; }

std::string task_report_row(const TaskReport& r) {
  std::ostringstream os;
  os.precision(8);
  os << to_string(r.task) << ',' << to_string(r.source) << ',' << r.fraction << ',' << r.seed << ','
     << psnr_capped(r.best_psnr) << ',' << r.best_ssim << ',' << r.epoch_of_best;
  return os.str();
}

void write_task_history(const std::string& path, const std::vector<TaskEpochRecord>& history) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  f.precision(10);
  f << "epoch,loss,psnr,ssim\n";
  for (const auto& e : history) f << e.epoch << ',' << e.loss << ',' << e.psnr << ',' << e.ssim << '\n';
}

#define LDGAN_RECOVERY_INSTANTIATE(T)                                                                             \
  template struct RecoveryNet<T>;                                                                                 \
  template RecoveryNet<T> init_recovery(const TaskSetup&, const RecoveryArch&, std::uint64_t);                    \
  template RecoveryInput<T> prepare_input(const RecoveryNet<T>&, std::span<const Measurement>);                   \
  template RecoveryInput<T> simulate_input(const RecoveryNet<T>&, std::span<const SpectralCube>, double,          \
                                           std::uint64_t);                                                        \
  template Var unrolled_csi_stage(Graph<T>&, RecoveryNet<T>&, std::size_t, Var, Var);                             \
  template Var recovery_forward(Graph<T>&, RecoveryNet<T>&, const RecoveryInput<T>&);                             \
  template Var recovery_objective(Graph<T>&, RecoveryNet<T>&, const RecoveryInput<T>&, const Tensor<T>&);

LDGAN_RECOVERY_INSTANTIATE(float)
LDGAN_RECOVERY_INSTANTIATE(double)

}  // namespace ldgan
