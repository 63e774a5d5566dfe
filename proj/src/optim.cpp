#include "ldgan/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ldgan/rng.hpp"

namespace ldgan {

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    require_same_shape(p.value, state.m[k], "adam moments");
    require_same_shape(p.value, p.grad, "adam gradient");
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T{1} - b1) * g;
      v[i] = b2 * v[i] + (T{1} - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= static_cast<T>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template void adam_step(std::span<Parameter<float>* const>, AdamState<float>&, const AdamConfig&);
template void adam_step(std::span<Parameter<double>* const>, AdamState<double>&, const AdamConfig&);

namespace {

// Ridders' polynomial extrapolation of central differences. Steps whose stencil crosses a kink
// end or restart the table; returns false when every step down to min_step crossed one.
template <typename Central>
bool ridders_derivative(const Central& central, double h0, double min_step, bool skip_kinks, double& out) {
  constexpr int kTab = 10;
  constexpr double kCon = 1.4, kCon2 = kCon * kCon, kSafe = 2.0;
  double a[kTab][kTab];
  double err = std::numeric_limits<double>::max();
  int rows = 0;
  bool found = false;
  for (double h = h0; rows < kTab && h >= min_step * (1 - 1e-9); h /= kCon) {
    bool crossed = false;
    const double d = central(h, crossed);
    if (crossed && skip_kinks) {
      // A short table extrapolates poorly; restart it below the kink.
      if (rows >= 3) break;
      rows = 0;
      found = false;
      err = std::numeric_limits<double>::max();
      continue;
    }
    const int i = rows++;
    a[0][i] = d;
    if (i == 0) {
      out = d;
      found = true;
      continue;
    }
    double fac = kCon2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kCon2;
      const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        out = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
  }
  return found;
}

}  // namespace

GradCheckResult finite_diff_check(const LossBuilder& build, std::span<Parameter<double>* const> params,
                                  const GradCheckOptions& opts) {
  zero_grads(params);
  std::uint64_t pattern = 0;
  {
    Graph<double> g;
    g.backward(build(g));
    pattern = g.activation_pattern();
  }
  const auto eval = [&](bool& crossed) {
    Graph<double> g;
    const double v = g.value(build(g))[0];
    crossed = crossed || g.activation_pattern() != pattern;
    return v;
  };
  GradCheckResult res;
  Rng rng(opts.seed);
  for (auto* p : params) {
    std::vector<std::size_t> coords(p->value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords_per_param && coords.size() > opts.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng.engine());
      coords.resize(opts.max_coords_per_param);
    }
    for (auto i : coords) {
      const double orig = p->value[i];
      const auto at = [&](double offset, bool& crossed) {
        p->value[i] = orig + offset;
        return eval(crossed);
      };
      const auto central = [&](double h, bool& crossed) { return (at(h, crossed) - at(-h, crossed)) / (2.0 * h); };
      bool crossed = false;
      double cd = 0.0;
      if (opts.ridders) {
        crossed = !ridders_derivative(central, opts.eps, opts.min_eps, opts.skip_kink_crossings, cd);
      } else {
        for (double h = opts.eps;; h /= 10.0) {
          crossed = false;
          cd = central(h, crossed);
          if (!crossed || !opts.skip_kink_crossings || h / 10.0 < opts.min_eps * (1 - 1e-9)) break;
        }
      }
      p->value[i] = orig;
      if (crossed && opts.skip_kink_crossings) {
        ++res.coords_skipped;
        continue;
      }
      const double an = p->grad[i];
      const double diff = std::abs(an - cd);
      const double err = diff <= opts.abs_tol ? 0.0 : diff / std::max({std::abs(an), std::abs(cd), 1e-8});
      ++res.coords_checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace ldgan
