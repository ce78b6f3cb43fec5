#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "intrinsic/image.hpp"
#include "intrinsic/layers.hpp"
#include "intrinsic/metrics.hpp"
#include "intrinsic/networks.hpp"
#include "intrinsic/rng.hpp"
#include "intrinsic/tensor.hpp"

namespace intrinsic {

struct CheckResult {
  std::string name;
  bool pass = false;
  double max_err = 0.0;
  std::uint64_t seed = 0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 1234;
  int trials = 20;
  std::string sabotage;  // op name whose analytic backward gets perturbed (negative control)
};

namespace verify_detail {

// Central-difference check of a scalar graph against its analytic backward.
// The builder must construct a fresh graph from the leaf tensors each call;
// leaf values are perturbed in place between calls.
inline double grad_check(const std::function<Tensor<double>(std::vector<Tensor<double>>&)>& build,
                         std::vector<Tensor<double>> leaves, bool sabotage,
                         double h = 1e-5) {
  Tensor<double> loss = build(leaves);
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) {
    analytic.push_back(leaf.grad());
    leaf.zero_grad();
  }
  if (sabotage && !analytic.empty() && !analytic[0].empty())
    analytic[0][0] += std::abs(analytic[0][0]) * 0.05 + 0.05;

  double max_err = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto& values = leaves[l].values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double keep = values[i];
      values[i] = keep + h;
      const double plus = build(leaves).item();
      values[i] = keep - h;
      const double minus = build(leaves).item();
      values[i] = keep;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[l][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

inline Tensor<double> random_leaf(TensorShape s, Rng& rng, bool requires_grad = true) {
  Tensor<double> t(s, requires_grad);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

inline Tensor<double> random_positive(TensorShape s, Rng& rng, bool requires_grad = false) {
  Tensor<double> t(s, requires_grad);
  for (double& v : t.values()) v = rng.uniform(0.05, 1.0);
  return t;
}

inline std::vector<double> random_weights(std::int64_t n, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (double& v : w) v = rng.normal();
  return w;
}

}  // namespace verify_detail

/// Finite-difference checks for every differentiable operation and loss
/// composition. Each op runs `trials` seeded instances; the report carries
/// the worst seed and error.
inline std::vector<CheckResult> run_gradient_checks(const VerifyOptions& opt) {
  namespace vd = verify_detail;
  std::vector<CheckResult> results;
  constexpr double kTol = 1e-4;

  struct OpCheck {
    std::string name;
    std::function<double(Rng&, bool)> run;  // returns max rel error
  };

  std::vector<OpCheck> ops;

  ops.push_back({"conv3x3_s1", [](Rng& rng, bool sab) {
    const int n = rng.uniform_int(1, 2), ic = rng.uniform_int(1, 3), oc = rng.uniform_int(1, 3);
    const int h = rng.uniform_int(3, 6), w = rng.uniform_int(3, 6);
    auto x = vd::random_leaf({n, ic, h, w}, rng);
    auto wt = vd::random_leaf({oc, ic, 3, 3}, rng);
    auto b = vd::random_leaf({1, oc, 1, 1}, rng);
    auto proj = vd::random_weights(static_cast<std::int64_t>(n) * oc * h * w, rng);
    return vd::grad_check(
        [proj](std::vector<Tensor<double>>& L) {
          return weighted_sum(conv3x3(L[0], L[1], L[2], 1), proj);
        },
        {x, wt, b}, sab);
  }});

  ops.push_back({"conv3x3_s2", [](Rng& rng, bool sab) {
    const int n = rng.uniform_int(1, 2), ic = rng.uniform_int(1, 3), oc = rng.uniform_int(1, 3);
    const int h = 2 * rng.uniform_int(2, 3), w = 2 * rng.uniform_int(2, 3);
    auto x = vd::random_leaf({n, ic, h, w}, rng);
    auto wt = vd::random_leaf({oc, ic, 3, 3}, rng);
    auto b = vd::random_leaf({1, oc, 1, 1}, rng);
    auto proj = vd::random_weights(static_cast<std::int64_t>(n) * oc * (h / 2) * (w / 2), rng);
    return vd::grad_check(
        [proj](std::vector<Tensor<double>>& L) {
          return weighted_sum(conv3x3(L[0], L[1], L[2], 2), proj);
        },
        {x, wt, b}, sab);
  }});

  ops.push_back({"deconv4x4_s2", [](Rng& rng, bool sab) {
    const int n = rng.uniform_int(1, 2), ic = rng.uniform_int(1, 3), oc = rng.uniform_int(1, 3);
    const int h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
    auto x = vd::random_leaf({n, ic, h, w}, rng);
    auto wt = vd::random_leaf({ic, oc, 4, 4}, rng);
    auto b = vd::random_leaf({1, oc, 1, 1}, rng);
    auto proj = vd::random_weights(static_cast<std::int64_t>(n) * oc * 2 * h * 2 * w, rng);
    return vd::grad_check(
        [proj](std::vector<Tensor<double>>& L) {
          return weighted_sum(deconv4x4_s2(L[0], L[1], L[2]), proj);
        },
        {x, wt, b}, sab);
  }});

  ops.push_back({"batchnorm_train", [](Rng& rng, bool sab) {
    const int n = rng.uniform_int(2, 4), c = rng.uniform_int(1, 3);
    const int h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
    auto x = vd::random_leaf({n, c, h, w}, rng);
    auto gamma = vd::random_leaf({1, c, 1, 1}, rng);
    auto beta = vd::random_leaf({1, c, 1, 1}, rng);
    auto proj = vd::random_weights(static_cast<std::int64_t>(n) * c * h * w, rng);
    return vd::grad_check(
        [proj, c](std::vector<Tensor<double>>& L) {
          BnState<double> state(c);  // fresh per evaluation: forward stays pure
          return weighted_sum(batchnorm(L[0], L[1], L[2], state, BnMode::Train), proj);
        },
        {x, gamma, beta}, sab);
  }});

  ops.push_back({"batchnorm_eval", [](Rng& rng, bool sab) {
    const int n = rng.uniform_int(1, 2), c = rng.uniform_int(1, 3);
    const int h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
    auto x = vd::random_leaf({n, c, h, w}, rng);
    auto gamma = vd::random_leaf({1, c, 1, 1}, rng);
    auto beta = vd::random_leaf({1, c, 1, 1}, rng);
    std::vector<double> rm(c), rv(c);
    for (double& v : rm) v = rng.normal();
    for (double& v : rv) v = rng.uniform(0.5, 2.0);
    auto proj = vd::random_weights(static_cast<std::int64_t>(n) * c * h * w, rng);
    return vd::grad_check(
        [proj, c, rm, rv](std::vector<Tensor<double>>& L) {
          BnState<double> state(c);
          state.running_mean = rm;
          state.running_var = rv;
          return weighted_sum(batchnorm(L[0], L[1], L[2], state, BnMode::Eval), proj);
        },
        {x, gamma, beta}, sab);
  }});

  ops.push_back({"relu", [](Rng& rng, bool sab) {
    const int n = rng.uniform_int(1, 2), c = rng.uniform_int(1, 3);
    const int h = rng.uniform_int(2, 5), w = rng.uniform_int(2, 5);
    auto x = vd::random_leaf({n, c, h, w}, rng);
    for (double& v : x.values())  // keep clear of the kink at 0
      if (std::abs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
    auto proj = vd::random_weights(x.numel(), rng);
    return vd::grad_check(
        [proj](std::vector<Tensor<double>>& L) { return weighted_sum(relu(L[0]), proj); },
        {x}, sab);
  }});

  ops.push_back({"concat_c", [](Rng& rng, bool sab) {
    const int n = rng.uniform_int(1, 2), h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
    const int c1 = rng.uniform_int(1, 3), c2 = rng.uniform_int(1, 3);
    auto a = vd::random_leaf({n, c1, h, w}, rng);
    auto b = vd::random_leaf({n, c2, h, w}, rng);
    auto proj = vd::random_weights(static_cast<std::int64_t>(n) * (c1 + c2) * h * w, rng);
    return vd::grad_check(
        [proj](std::vector<Tensor<double>>& L) {
          return weighted_sum(concat_c<double>({L[0], L[1]}), proj);
        },
        {a, b}, sab);
  }});

  ops.push_back({"mul_elem", [](Rng& rng, bool sab) {
    const int n = rng.uniform_int(1, 2), c = rng.uniform_int(1, 3);
    const int h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
    auto a = vd::random_leaf({n, c, h, w}, rng);
    auto b = vd::random_leaf({n, c, h, w}, rng);
    auto proj = vd::random_weights(a.numel(), rng);
    return vd::grad_check(
        [proj](std::vector<Tensor<double>>& L) {
          return weighted_sum(mul_elem(L[0], L[1]), proj);
        },
        {a, b}, sab);
  }});

  ops.push_back({"mul_elem_broadcast", [](Rng& rng, bool sab) {
    const int n = rng.uniform_int(1, 2), c = 3;
    const int h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
    auto a = vd::random_leaf({n, c, h, w}, rng);
    auto b = vd::random_leaf({n, 1, h, w}, rng);       // channel broadcast
    auto e = vd::random_leaf({1, c, 1, 1}, rng);       // global triple broadcast
    auto proj = vd::random_weights(a.numel(), rng);
    return vd::grad_check(
        [proj](std::vector<Tensor<double>>& L) {
          return weighted_sum(mul_elem(mul_elem(L[0], L[1]), L[2]), proj);
        },
        {a, b, e}, sab);
  }});

  ops.push_back({"mse_loss", [](Rng& rng, bool sab) {
    const int n = rng.uniform_int(1, 2), c = rng.uniform_int(1, 3);
    const int h = rng.uniform_int(2, 4), w = rng.uniform_int(2, 4);
    auto pred = vd::random_leaf({n, c, h, w}, rng);
    auto target = vd::random_leaf({n, c, h, w}, rng, false);
    return vd::grad_check(
        [target](std::vector<Tensor<double>>& L) { return mse_loss(L[0], target); },
        {pred}, sab);
  }});

  ops.push_back({"loss_cl", [](Rng& rng, bool sab) {
    const TensorShape s{1, 3, 4, 4};
    auto r_hat = vd::random_leaf(s, rng);
    auto s_hat = vd::random_leaf(s, rng);
    auto r = vd::random_positive(s, rng);
    auto sh = vd::random_positive(s, rng);
    LossWeights w;
    w.gamma_r = rng.uniform(0.5, 2.0);
    w.gamma_s = rng.uniform(0.5, 2.0);
    return vd::grad_check(
        [r, sh, w](std::vector<Tensor<double>>& L) {
          return combined_loss(L[0], r, L[1], sh, w);
        },
        {r_hat, s_hat}, sab);
  }});

  ops.push_back({"loss_imf", [](Rng& rng, bool sab) {
    const TensorShape s{1, 3, 4, 4};
    auto r_hat = vd::random_leaf(s, rng);
    auto s_hat = vd::random_leaf(s, rng);
    auto image = vd::random_positive(s, rng);
    const double gamma = rng.uniform(0.5, 2.0);
    return vd::grad_check(
        [image, gamma](std::vector<Tensor<double>>& L) {
          return image_formation_loss(L[0], L[1], image, gamma);
        },
        {r_hat, s_hat}, sab);
  }});

  ops.push_back({"loss_fl", [](Rng& rng, bool sab) {
    const TensorShape s{1, 3, 4, 4};
    auto r_hat = vd::random_leaf(s, rng);
    auto s_hat = vd::random_leaf(s, rng);
    auto r = vd::random_positive(s, rng);
    auto sh = vd::random_positive(s, rng);
    auto image = vd::random_positive(s, rng);
    LossWeights w;
    return vd::grad_check(
        [r, sh, image, w](std::vector<Tensor<double>>& L) {
          return final_loss(L[0], r, L[1], sh, image, w);
        },
        {r_hat, s_hat}, sab);
  }});

  ops.push_back({"loss_frm", [](Rng& rng, bool sab) {
    const TensorShape s{1, 3, 4, 4};
    auto r_hat = vd::random_leaf(s, rng);
    auto s_hat = vd::random_leaf(s, rng);
    auto h_hat = vd::random_leaf(s, rng);
    auto e_hat = vd::random_leaf(s, rng);
    auto r = vd::random_positive(s, rng);
    auto sh = vd::random_positive(s, rng);
    auto hh = vd::random_positive(s, rng);
    auto ee = vd::random_positive(s, rng);
    auto image = vd::random_positive(s, rng);
    LossWeights w;
    return vd::grad_check(
        [r, sh, hh, ee, image, w](std::vector<Tensor<double>>& L) {
          return full_reflection_loss(L[0], r, L[1], sh, L[2], hh, L[3], ee, image, w);
        },
        {r_hat, s_hat, h_hat, e_hat}, sab);
  }});

  ops.push_back({"loss_s1", [](Rng& rng, bool sab) {
    const TensorShape s{1, 3, 4, 4};
    auto gr_hat = vd::random_leaf(s, rng);
    auto gs_hat = vd::random_leaf(s, rng);
    auto gr = vd::random_positive(s, rng);
    auto gs = vd::random_positive(s, rng);
    LossWeights w;
    return vd::grad_check(
        [gr, gs, w](std::vector<Tensor<double>>& L) {
          return gradient_stage_loss(L[0], gr, L[1], gs, w);
        },
        {gr_hat, gs_hat}, sab);
  }});

  for (const OpCheck& op : ops) {
    CheckResult res;
    res.name = op.name;
    res.pass = true;
    for (int t = 0; t < opt.trials; ++t) {
      const std::uint64_t seed = derive_seed(opt.seed, op.name, static_cast<std::uint64_t>(t));
      Rng rng(seed);
      const double err = op.run(rng, opt.sabotage == op.name);
      if (err > res.max_err) {
        res.max_err = err;
        res.seed = seed;
      }
      if (err >= kTol) res.pass = false;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "max_rel_err=%.3e (seed %llu, %d trials)", res.max_err,
                  static_cast<unsigned long long>(res.seed), opt.trials);
    res.detail = buf;
    results.push_back(std::move(res));
  }
  return results;
}

namespace detail {

/// Brute-force oracle: dense scan over the brightness factor with a refined
/// second pass, bounded via Cauchy-Schwarz (alpha* <= sqrt(sum g^2 / sum p^2)).
inline double scaled_mse_grid_oracle(const Image& pred, const Image& gt) {
  double pp = 0, gg = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    pp += static_cast<double>(pred.data[i]) * pred.data[i];
    gg += static_cast<double>(gt.data[i]) * gt.data[i];
  }
  auto mse_at = [&](double alpha) {
    double e = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      const double d = alpha * pred.data[i] - gt.data[i];
      e += d * d;
    }
    return e / static_cast<double>(pred.data.size());
  };
  if (pp == 0.0) return mse_at(0.0);
  const double hi = std::sqrt(gg / pp) + 1.0;
  const int steps = 2000;
  double best_alpha = 0.0, best = mse_at(0.0);
  for (int i = 0; i <= steps; ++i) {
    const double a = hi * i / steps;
    const double v = mse_at(a);
    if (v < best) {
      best = v;
      best_alpha = a;
    }
  }
  const double step = hi / steps;
  for (int i = 0; i <= steps; ++i) {
    const double a = best_alpha - step + 2.0 * step * i / steps;
    const double v = mse_at(a);
    if (v < best) best = v;
  }
  return best;
}

}  // namespace detail

/// Composition round-trips and metric oracles.
inline std::vector<CheckResult> run_invariant_checks(const VerifyOptions& opt) {
  std::vector<CheckResult> results;

  auto add = [&](const std::string& name, bool pass, double err, std::uint64_t seed,
                 const std::string& detail = "") {
    results.push_back(CheckResult{name, pass, err, seed, detail});
  };

  {  // derive_shading(compose_diffuse(R,S), R) == S within 1e-6 relative
    double max_err = 0;
    std::uint64_t worst = 0;
    for (int t = 0; t < opt.trials; ++t) {
      const std::uint64_t seed = derive_seed(opt.seed, "roundtrip", t);
      Rng rng(seed);
      Image r(5, 7, 3), s(5, 7, 3);
      for (float& v : r.data) v = static_cast<float>(rng.uniform(1e-4, 1.0));
      for (float& v : s.data) v = static_cast<float>(rng.uniform(0.0, 2.0));
      const Image back = derive_shading(compose_diffuse(r, s), r, 1e-4f);
      for (std::size_t i = 0; i < s.data.size(); ++i) {
        const double err = std::abs(back.data[i] - s.data[i]) /
                           std::max(1e-6, static_cast<double>(s.data[i]));
        if (err > max_err) {
          max_err = err;
          worst = seed;
        }
      }
    }
    add("compose_roundtrip", max_err < 1e-6, max_err, worst);
  }

  {  // compose_specular with zero highlight equals compose_with_light exactly
    bool pass = true;
    std::uint64_t worst = 0;
    for (int t = 0; t < opt.trials; ++t) {
      const std::uint64_t seed = derive_seed(opt.seed, "consistency", t);
      Rng rng(seed);
      Image r(4, 5, 3), s(4, 5, 3), h(4, 5, 3, 0.0f);
      for (float& v : r.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
      for (float& v : s.data) v = static_cast<float>(rng.uniform(0.0, 2.0));
      const Illuminant e = std::array<float, 3>{
          static_cast<float>(rng.uniform(0.1, 1.0)), static_cast<float>(rng.uniform(0.1, 1.0)),
          static_cast<float>(rng.uniform(0.1, 1.0))};
      const Image a = compose_specular(r, s, h, e);
      const Image b = compose_with_light(r, s, e);
      for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) {
          pass = false;
          worst = seed;
        }
    }
    add("compose_consistency", pass, pass ? 0.0 : 1.0, worst);
  }

  {  // scaled_mse against a dense alpha-grid search
    double max_err = 0;
    std::uint64_t worst = 0;
    for (int t = 0; t < opt.trials; ++t) {
      const std::uint64_t seed = derive_seed(opt.seed, "alpha_grid", t);
      Rng rng(seed);
      Image pred(4, 4, 3), gt(4, 4, 3);
      for (float& v : pred.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
      for (float& v : gt.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
      const double grid = detail::scaled_mse_grid_oracle(pred, gt);
      const double err = std::abs(scaled_mse(pred, gt) - grid);
      if (err > max_err) {
        max_err = err;
        worst = seed;
      }
    }
    add("metric_alpha_grid", max_err < 1e-6, max_err, worst);
  }

  {  // zero predictor scores exactly 1 under the LMSE normalization
    Rng rng(derive_seed(opt.seed, "lmse_zero"));
    Image gt(24, 30, 3), zero(24, 30, 3, 0.0f);
    for (float& v : gt.data) v = static_cast<float>(rng.uniform(0.1, 1.0));
    const double score = lmse(zero, gt, WindowSpec{10});
    add("lmse_zero_pred", std::abs(score - 1.0) < 1e-9, std::abs(score - 1.0),
        derive_seed(opt.seed, "lmse_zero"));
  }

  {  // dssim(x, x) == 0
    Rng rng(derive_seed(opt.seed, "dssim_self"));
    Image x(16, 16, 3);
    for (float& v : x.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
    const double d = dssim(x, x);
    add("dssim_self", d == 0.0, std::abs(d), derive_seed(opt.seed, "dssim_self"));
  }

  {  // window layout on the reference extent
    const std::size_t n = lmse_window_count(120, 160, 20);
    add("lmse_window_count", n == 165, static_cast<double>(n), 0,
        "120x160 k=20 -> " + std::to_string(n) + " windows");
  }

  return results;
}

inline std::vector<CheckResult> run_verification(const VerifyOptions& opt) {
  std::vector<CheckResult> results = run_gradient_checks(opt);
  std::vector<CheckResult> inv = run_invariant_checks(opt);
  results.insert(results.end(), inv.begin(), inv.end());
  return results;
}

}  // namespace intrinsic
