#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fsca/gradcheck.hpp"
#include "fsca/mibounds.hpp"
#include "fsca/netblocks.hpp"
#include "fsca/ops.hpp"
#include "fsca/rng.hpp"
#include "fsca/xattn.hpp"

namespace fsca {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v), grad);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

// Scalar root: the output itself if scalar, else a fixed random weighting of
// its entries (a plain sum cancels for row-normalised ops).
Tensor weighted_root(const Tensor& out, const Tensor& weights) {
  if (out.numel() == 1) return sum(out);
  return sum(mul(out, weights));
}

struct Case {
  std::vector<Tensor> inputs;
  std::function<Tensor(const std::vector<Tensor>&)> op;
};

using CaseFactory = std::function<Case(Rng&)>;

struct OpEntry {
  std::string name;
  CaseFactory make;
};

Case unary(Rng& rng, Tensor (*fn)(const Tensor&)) {
  const Shape s = {pick(rng, 1, 4), pick(rng, 1, 4)};
  return {{random_tensor(s, rng)}, [fn](const auto& in) { return fn(in[0]); }};
}

Case binary(Rng& rng, Tensor (*fn)(const Tensor&, const Tensor&)) {
  const Shape s = {pick(rng, 1, 4), pick(rng, 1, 4)};
  return {{random_tensor(s, rng), random_tensor(s, rng)}, [fn](const auto& in) { return fn(in[0], in[1]); }};
}

std::vector<OpEntry> op_table() {
  std::vector<OpEntry> ops;
  ops.push_back({"add", [](Rng& r) { return binary(r, add); }});
  ops.push_back({"sub", [](Rng& r) { return binary(r, sub); }});
  ops.push_back({"mul", [](Rng& r) { return binary(r, mul); }});
  ops.push_back({"mse", [](Rng& r) { return binary(r, mse); }});
  ops.push_back({"scale", [](Rng& r) {
                   const double f = r.uniform(-2.0, 2.0);
                   Case c = unary(r, relu);
                   c.op = [f](const auto& in) { return scale(in[0], f); };
                   return c;
                 }});
  ops.push_back({"add_scalar", [](Rng& r) {
                   const double v = r.uniform(-2.0, 2.0);
                   Case c = unary(r, relu);
                   c.op = [v](const auto& in) { return add_scalar(in[0], v); };
                   return c;
                 }});
  ops.push_back({"relu", [](Rng& r) { return unary(r, relu); }});
  ops.push_back({"clamp", [](Rng& r) {
                   Case c = unary(r, relu);
                   c.op = [](const auto& in) { return clamp(in[0], -0.5, 0.5); };
                   return c;
                 }});
  ops.push_back({"sum", [](Rng& r) { return unary(r, sum); }});
  ops.push_back({"mean", [](Rng& r) { return unary(r, mean); }});
  ops.push_back({"reshape", [](Rng& r) {
                   const std::size_t a = pick(r, 1, 4), b = pick(r, 1, 4);
                   return Case{{random_tensor({a, b}, r)},
                               [a, b](const auto& in) { return reshape(in[0], {b, a}); }};
                 }});
  ops.push_back({"transpose", [](Rng& r) { return unary(r, transpose); }});
  ops.push_back({"concat", [](Rng& r) {
                   const std::size_t m = pick(r, 1, 3);
                   return Case{{random_tensor({pick(r, 1, 3), m}, r), random_tensor({pick(r, 1, 3), m}, r)},
                               [](const auto& in) { return concat({in[0], in[1]}); }};
                 }});
  ops.push_back({"slice", [](Rng& r) {
                   const std::size_t n = pick(r, 2, 5);
                   const std::size_t b = pick(r, 0, n - 1), e = pick(r, b + 1, n);
                   return Case{{random_tensor({n, pick(r, 1, 3)}, r)},
                               [b, e](const auto& in) { return slice(in[0], b, e); }};
                 }});
  ops.push_back({"stack", [](Rng& r) {
                   const Shape s = {pick(r, 1, 3), pick(r, 1, 3)};
                   return Case{{random_tensor(s, r), random_tensor(s, r), random_tensor(s, r)},
                               [](const auto& in) { return stack({in[0], in[1], in[2]}); }};
                 }});
  ops.push_back({"diagonal", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 4);
                   return Case{{random_tensor({n, n}, r)}, [](const auto& in) { return diagonal(in[0]); }};
                 }});
  ops.push_back({"matmul", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 4), k = pick(r, 1, 4), m = pick(r, 1, 4);
                   return Case{{random_tensor({n, k}, r), random_tensor({k, m}, r)},
                               [](const auto& in) { return matmul(in[0], in[1]); }};
                 }});
  ops.push_back({"add_row_bias", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 4), m = pick(r, 1, 4);
                   return Case{{random_tensor({n, m}, r), random_tensor({m}, r)},
                               [](const auto& in) { return add_row_bias(in[0], in[1]); }};
                 }});
  ops.push_back({"normalize_rows", [](Rng& r) {
                   Case c = unary(r, relu);
                   c.op = [](const auto& in) { return normalize_rows(in[0]); };
                   return c;
                 }});
  ops.push_back({"conv2d", [](Rng& r) {
                   const std::size_t cin = pick(r, 1, 3), cout = pick(r, 1, 3), k = 2 * pick(r, 0, 1) + 1;
                   const std::size_t stride = pick(r, 1, 2), pad = pick(r, 0, 1);
                   const std::size_t h = k + stride * pick(r, 1, 3) - 2 * pad, w = k + stride * pick(r, 1, 3) - 2 * pad;
                   return Case{{random_tensor({cin, h, w}, r), random_tensor({cout, cin, k, k}, r),
                                random_tensor({cout}, r)},
                               [stride, pad](const auto& in) { return conv2d(in[0], in[1], in[2], stride, pad); }};
                 }});
  ops.push_back({"sum_pool2d", [](Rng& r) {
                   const std::size_t f = pick(r, 1, 3);
                   return Case{{random_tensor({pick(r, 1, 2), f * pick(r, 1, 3), f * pick(r, 1, 3)}, r)},
                               [f](const auto& in) { return sum_pool2d(in[0], f); }};
                 }});
  ops.push_back({"mean_spatial", [](Rng& r) {
                   return Case{{random_tensor({pick(r, 1, 3), pick(r, 1, 4), pick(r, 1, 4)}, r)},
                               [](const auto& in) { return mean_spatial(in[0]); }};
                 }});
  ops.push_back({"softmax_rows", [](Rng& r) { return unary(r, softmax_rows); }});
  ops.push_back({"log_softmax_rows", [](Rng& r) { return unary(r, log_softmax_rows); }});
  ops.push_back({"gaussian_logprob_pairs", [](Rng& r) {
                   const Shape s = {pick(r, 1, 4), pick(r, 1, 3)};
                   return Case{{random_tensor(s, r), random_tensor(s, r), random_tensor(s, r)},
                               [](const auto& in) { return gaussian_logprob_pairs(in[0], in[1], in[2]); }};
                 }});
  ops.push_back({"gaussian_logprob_matrix", [](Rng& r) {
                   const Shape s = {pick(r, 1, 4), pick(r, 1, 3)};
                   return Case{{random_tensor(s, r), random_tensor(s, r), random_tensor(s, r)},
                               [](const auto& in) { return gaussian_logprob_matrix(in[0], in[1], in[2]); }};
                 }});
  ops.push_back({"cross_attend", [](Rng& r) {
                   const std::size_t c = pick(r, 1, 3);
                   return Case{{random_tensor({c, pick(r, 1, 3), pick(r, 1, 3)}, r),
                                random_tensor({c, pick(r, 1, 3), pick(r, 1, 3)}, r)},
                               [](const auto& in) {
                                 const TokenGrid q = to_tokens(in[0], FeatureKind::ds);
                                 return from_tokens(fuse_residual(q, cross_attend(q, to_tokens(in[1], FeatureKind::ds))));
                               }};
                 }});
  ops.push_back({"cross_attend_projected", [](Rng& r) {
                   const std::size_t c = pick(r, 1, 3);
                   return Case{{random_tensor({c, pick(r, 1, 3), pick(r, 1, 3)}, r),
                                random_tensor({c, pick(r, 1, 3), pick(r, 1, 3)}, r), random_tensor({c, c}, r),
                                random_tensor({c, c}, r), random_tensor({c, c}, r)},
                               [](const auto& in) {
                                 const AttentionProjections p{in[2], in[3], in[4]};
                                 const TokenGrid q = to_tokens(in[0], FeatureKind::di);
                                 return cross_attend(q, to_tokens(in[1], FeatureKind::di), &p).tokens;
                               }};
                 }});
  ops.push_back({"infonce_lower_bound", [](Rng& r) {
                   const Shape s = {pick(r, 2, 5), pick(r, 2, 4)};
                   const double tau = r.uniform(0.1, 1.0);
                   return Case{{random_tensor(s, r), random_tensor(s, r)},
                               [tau](const auto& in) { return infonce_lower_bound({in[0], in[1]}, tau); }};
                 }});
  ops.push_back({"club_upper_bound", [](Rng& r) {
                   const std::size_t n = pick(r, 2, 5), d = pick(r, 1, 3);
                   const VariationalQ q = init_variational_q(d, r.next());
                   for (auto& p : q.parameters()) p.set_requires_grad(false);
                   return Case{{random_tensor({n, d}, r), random_tensor({n, d}, r)},
                               [q](const auto& in) { return club_upper_bound({in[0], in[1]}, q); }};
                 }});
  ops.push_back({"q_nll_loss", [](Rng& r) {
                   const std::size_t n = pick(r, 1, 5), d = pick(r, 1, 3);
                   const VariationalQ q = init_variational_q(d, r.next());
                   const LatentPair pair{random_tensor({n, d}, r, false), random_tensor({n, d}, r, false)};
                   return Case{q.parameters(), [q, pair](const auto&) { return q_nll_loss(pair, q); }};
                 }});
  ops.push_back({"embed_latents", [](Rng& r) {
                   const std::size_t c = pick(r, 1, 3), d = pick(r, 1, 3);
                   const Linear lin = make_linear(c, d, r.next());
                   return Case{{random_tensor({c, 2, 2}, r), random_tensor({c, 2, 2}, r), lin.weight, lin.bias},
                               [](const auto& in) {
                                 return embed_latents({in[0], in[1]}, Linear{in[2], in[3]});
                               }};
                 }});
  return ops;
}

// Two-batch training objective on a tiny network, assembled from the same
// public blocks the trainer uses: L_c − β1·I_LB + β1·CLUB. The β2·L_Δ2 term
// sees detached latents, so it is a constant for the main network and left out.
GradCheckResult check_composed(std::size_t cases, std::uint64_t seed, GradCheckOptions opt) {
  GradCheckResult total;
  total.name = "composed_fsca";
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    NetConfig cfg;
    cfg.backbone_channels = {2, 3, 3, 3};
    cfg.feature_channels = 2;
    cfg.latent_dim = 3;
    cfg.attention_projections = (c % 2) == 1;
    cfg.density_scale = 1.0;
    const NetParams params = init_net_params(cfg, rng.next());
    const VariationalQ q = init_variational_q(cfg.latent_dim, rng.next());
    const bool ds_di = (c % 3) == 2;
    const double tau = 0.5, beta1 = 1.0;
    const std::size_t n = 2;

    std::vector<Tensor> inputs = params.parameters();
    const std::size_t n_params = inputs.size();
    std::vector<Tensor> gt;
    for (std::size_t i = 0; i < 2 * n; ++i) inputs.push_back(random_tensor({1, 8, 8}, rng, true, 0.0, 1.0));
    for (std::size_t i = 0; i < n; ++i) gt.push_back(random_tensor({1, 2, 2}, rng, false, 0.0, 0.5));

    auto objective = [&](const std::vector<Tensor>& in) {
      // Parameter handles alias the checked inputs, so perturbations are seen here.
      const NetParams& p = params;
      std::vector<FeatureBundle> own(n), other(n);
      auto fill = [&](FeatureBundle& b, const Tensor& image) {
        b.f_base = backbone_forward(p, image);
        auto sep = separate(p, b.f_base);
        b.f_di = sep.di;
        b.f_ds = sep.ds;
      };
      for (std::size_t i = 0; i < n; ++i) {
        fill(own[i], in[n_params + i]);
        fill(other[i], in[n_params + n + i]);
      }
      std::vector<Tensor> di_own, di_other, ds_own, ds_other;
      for (std::size_t i = 0; i < n; ++i) {
        di_own.push_back(own[i].f_di);
        di_other.push_back(other[i].f_di);
        ds_own.push_back(own[i].f_ds);
        ds_other.push_back(other[i].f_ds);
      }
      const LatentPair di_pair{embed_latents(di_own, p.embed_di), embed_latents(di_other, p.embed_di)};
      const Tensor z_ds = embed_latents(ds_own, p.embed_ds);
      const LatentPair club_pair{z_ds, ds_di ? di_pair.z : embed_latents(ds_other, p.embed_ds)};
      std::vector<Tensor> losses;
      for (std::size_t i = 0; i < n; ++i) {
        fuse_features(p, own[i], &other[i]);
        const Tensor density = counter_forward(p, decoder_forward(p, own[i].f_dsdi));
        losses.push_back(reshape(mse(scale(density, cfg.density_scale), scale(gt[i], cfg.density_scale)), {1}));
      }
      const Tensor l_c = mean(concat(losses));
      return add(sub(l_c, scale(infonce_lower_bound(di_pair, tau), beta1)),
                 scale(club_upper_bound(club_pair, q), beta1));
    };
    opt.seed = rng.next();
    if (opt.max_elements_per_input == 0) opt.max_elements_per_input = 3;
    total.merge(check_gradients(objective, inputs, opt));
  }
  return total;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(const GradSuiteOptions& options) {
  std::vector<GradCheckResult> results;
  Rng rng(options.seed);
  for (const auto& entry : op_table()) {
    GradCheckResult total;
    total.name = entry.name;
    for (std::size_t i = 0; i < options.cases_per_op; ++i) {
      Case c = entry.make(rng);
      const Tensor probe = c.op(c.inputs);
      const Tensor weights = random_tensor(probe.shape(), rng, false, 0.5, 1.5);
      auto op = c.op;
      auto f = [op, weights](const std::vector<Tensor>& in) { return weighted_root(op(in), weights); };
      GradCheckOptions opt = options.check;
      opt.seed = rng.next();
      total.merge(check_gradients(f, c.inputs, opt));
    }
    results.push_back(std::move(total));
  }
  results.push_back(check_composed(options.composed_cases, rng.next(), options.check));
  return results;
}

}  // namespace fsca
