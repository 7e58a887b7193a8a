#include "fsca/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fsca/errors.hpp"
#include "fsca/ops.hpp"
#include "fsca/rng.hpp"
#include "fsca/xattn.hpp"

namespace fsca {

const char* club_pairing_name(ClubPairing p) { return p == ClubPairing::ds_ds ? "ds_ds" : "ds_di"; }

ClubPairing parse_club_pairing(const std::string& s) {
  if (s == "ds_ds") return ClubPairing::ds_ds;
  if (s == "ds_di") return ClubPairing::ds_di;
  throw ConfigError("unknown club_pairing '" + s + "' (expected ds_ds or ds_di)");
}

const char* train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::single: return "single";
    case TrainMode::joint_naive: return "joint_naive";
    case TrainMode::joint_fsca: return "joint_fsca";
  }
  return "?";
}

const char* mi_pairing_name(MiPairing p) { return p == MiPairing::position ? "position" : "count"; }

MiPairing parse_mi_pairing(const std::string& s) {
  if (s == "position") return MiPairing::position;
  if (s == "count") return MiPairing::count;
  throw ConfigError("unknown mi_pairing '" + s + "' (expected position or count)");
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "single") return TrainMode::single;
  if (s == "joint_naive") return TrainMode::joint_naive;
  if (s == "joint_fsca") return TrainMode::joint_fsca;
  throw ConfigError("unknown mode '" + s + "' (expected single, joint_naive or joint_fsca)");
}

void TrainConfig::validate() const {
  if (!(beta1 >= 0.0) || !(beta2 >= 0.0)) throw ConfigError("train: beta1 and beta2 must be >= 0");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (!(lr_main > 0.0) || !(lr_q > 0.0)) throw ConfigError("train: learning rates must be > 0");
  if (!(tau > 0.0)) throw ConfigError("train: tau must be > 0");
  if (!(gt_sigma > 0.0)) throw ConfigError("train: gt_sigma must be > 0");
  if (density_stride != 4) throw ConfigError("train: density_stride must equal the backbone stride (4)");
  net.validate();
}

LabeledSample make_labeled_sample(const Scene& scene, const std::string& id, double gt_sigma,
                                  std::size_t stride) {
  if (scene.channels != 1) throw InputError("sample '" + id + "': only single-channel scenes are supported");
  LabeledSample s;
  s.id = id;
  s.domain = scene.domain_id;
  s.image = Tensor::from_data({1, scene.height, scene.width},
                              std::vector<double>(scene.image.begin(), scene.image.end()));
  const DensityMap gt = render_density_gt(scene.points, gt_sigma, scene.height, scene.width);
  s.density = sum_pool2d(Tensor::from_data({1, gt.height, gt.width}, gt.grid), stride);
  s.count = static_cast<double>(scene.points.size());
  return s;
}

std::vector<DomainData> prepare_domains(const Dataset& dataset, double gt_sigma,
                                        std::size_t stride) {
  std::map<int, DomainData> by_domain;
  for (const auto& spec : dataset.manifest.domains) by_domain[spec.domain_id].domain = spec.domain_id;
  for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
    const auto& entry = dataset.manifest.samples[i];
    auto& bucket = by_domain[entry.domain];
    bucket.domain = entry.domain;
    auto sample = make_labeled_sample(dataset.scenes[i], entry.id, gt_sigma, stride);
    (entry.split == Split::train ? bucket.train : bucket.test).push_back(std::move(sample));
  }
  std::vector<DomainData> out;
  for (auto& [id, d] : by_domain) out.push_back(std::move(d));
  return out;
}

Tensor counting_loss(const Tensor& predicted, const Tensor& ground_truth) {
  if (predicted.shape() != ground_truth.shape()) {
    throw DimensionError("counting_loss: prediction " + shape_str(predicted.shape()) +
                         " vs ground truth " + shape_str(ground_truth.shape()));
  }
  return mse(predicted, ground_truth);
}

double total_loss(double l_counter, double i_lb, double i_club, double l_delta2,
                  const TrainConfig& cfg) {
  const std::pair<const char*, double> parts[] = {
      {"L_counter", l_counter}, {"I_LB", i_lb}, {"I_CLUB", i_club}, {"L_delta2", l_delta2}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw NumericError(std::string("total_loss: component ") + name + " is not finite");
  }
  return l_counter - cfg.beta1 * i_lb + cfg.beta1 * i_club + cfg.beta2 * l_delta2;
}

namespace {

Tensor naive_features(const NetParams& params, const Tensor& f_base) {
  const Tensor shared = conv_forward(params.di_head.pointwise,
                                     relu(conv_forward(params.di_head.spatial, f_base)));
  return concat({shared, shared});
}

FeatureBundle extract(const NetParams& params, const LabeledSample& sample) {
  FeatureBundle b;
  b.domain_id = sample.domain;
  b.f_base = backbone_forward(params, sample.image);
  auto sep = separate(params, b.f_base);
  b.f_di = std::move(sep.di);
  b.f_ds = std::move(sep.ds);
  return b;
}

// Compared in the counter's native units (density × density_scale).
Tensor batch_counting_loss(const std::vector<Tensor>& predicted, const Batch& batch,
                           double density_scale) {
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    losses.push_back(reshape(counting_loss(scale(predicted[i], density_scale),
                                           scale(batch[i]->density, density_scale)),
                             {1}));
  }
  return mean(concat(losses));
}

}  // namespace

Tensor predict_density(const NetParams& params, const Tensor& image, TrainMode mode) {
  const Tensor f_base = backbone_forward(params, image);
  Tensor f_dsdi;
  if (mode == TrainMode::joint_naive) {
    f_dsdi = naive_features(params, f_base);
  } else {
    FeatureBundle b;
    b.f_base = f_base;
    auto sep = separate(params, f_base);
    b.f_di = sep.di;
    b.f_ds = sep.ds;
    fuse_features(params, b, nullptr);
    f_dsdi = b.f_dsdi;
  }
  return counter_forward(params, decoder_forward(params, f_dsdi));
}

Tensor predict_density_attended(const NetParams& params, const Tensor& image,
                                const Batch& partners) {
  if (partners.empty()) throw ContractError("predict_density_attended: no partners");
  const Tensor f_base = backbone_forward(params, image);
  const auto sep = separate(params, f_base);
  Tensor total;
  for (const auto* p : partners) {
    if (p->image.shape() != image.shape()) {
      throw ContractError("predict_density_attended: partner resolution differs from target");
    }
    FeatureBundle own;
    own.f_base = f_base;
    own.f_di = sep.di;
    own.f_ds = sep.ds;
    const FeatureBundle other = extract(params, *p);
    fuse_features(params, own, &other);
    const Tensor d = counter_forward(params, decoder_forward(params, own.f_dsdi));
    total = total.defined() ? add(total, d) : d;
  }
  return scale(total, 1.0 / static_cast<double>(partners.size()));
}

std::vector<double> predict_counts(const NetParams& params,
                                   const std::vector<LabeledSample>& samples, TrainMode mode,
                                   const Batch& partner_pool, std::size_t partners_per_sample) {
  const bool attended = !partner_pool.empty();
  if (attended && mode != TrainMode::joint_fsca) {
    throw ContractError("predict_counts: partner attention needs a joint_fsca model");
  }
  if (attended && partners_per_sample == 0) throw ContractError("predict_counts: partners_per_sample is 0");
  std::vector<double> out(samples.size());
  NoGradScope no_grad(params.parameters());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) {
    Tensor density;
    if (attended) {
      Batch partners;
      for (std::size_t j = 0; j < partners_per_sample; ++j) {
        partners.push_back(partner_pool[(static_cast<std::size_t>(i) * partners_per_sample + j) %
                                        partner_pool.size()]);
      }
      density = predict_density_attended(params, samples[i].image, partners);
    } else {
      density = predict_density(params, samples[i].image, mode);
    }
    out[i] = count_from_density(density);
  }
  return out;
}

NoGradScope::NoGradScope(std::vector<Tensor> leaves) : leaves_(std::move(leaves)) {
  previous_.reserve(leaves_.size());
  for (auto& t : leaves_) {
    previous_.push_back(t.requires_grad());
    t.set_requires_grad(false);
  }
}

NoGradScope::~NoGradScope() {
  for (std::size_t i = 0; i < leaves_.size(); ++i) leaves_[i].set_requires_grad(previous_[i]);
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  params_ = init_net_params(cfg_.net, derive_seed(cfg_.seed, 1));
  q_ = init_variational_q(cfg_.net.latent_dim, derive_seed(cfg_.seed, 2));
  main_params_ = params_.parameters();
  q_params_ = q_.parameters();
  opt_main_ = make_optimizer_state(main_params_, {cfg_.lr_main});
  opt_q_ = make_optimizer_state(q_params_, {cfg_.lr_q});
}

NamedTensors Trainer::checkpoint_tensors() const {
  NamedTensors out = params_.named_parameters();
  for (auto& entry : q_.named_parameters()) out.push_back(entry);
  return out;
}

StepRecord Trainer::train_step(const Batch& target_in, const Batch& partner_in) {
  Batch target = target_in, partner = partner_in;
  if (cfg_.mi_pairing == MiPairing::count) {
    const auto by_count = [](const LabeledSample* a, const LabeledSample* b) { return a->count < b->count; };
    std::stable_sort(target.begin(), target.end(), by_count);
    std::stable_sort(partner.begin(), partner.end(), by_count);
  }
  if (target.empty() || target.size() != partner.size()) {
    throw ContractError("train_step: target and partner batches must be non-empty and equal in size");
  }
  const int target_domain = target[0]->domain;
  const int partner_domain = partner[0]->domain;
  for (const auto* s : target) {
    if (s->domain != target_domain) throw ContractError("train_step: mixed domains in target batch");
  }
  for (const auto* s : partner) {
    if (s->domain != partner_domain) throw ContractError("train_step: mixed domains in partner batch");
    if (s->image.shape() != target[0]->image.shape()) {
      throw ContractError("train_step: partner resolution differs from target");
    }
  }
  if (target_domain == partner_domain) {
    throw ContractError("train_step: target and partner come from the same domain " +
                        std::to_string(target_domain));
  }

  const std::size_t n = target.size();
  zero_grads(main_params_);
  zero_grads(q_params_);

  // Main-network forward; reused by both phases because phase 1 does not touch
  // the main parameters.
  std::vector<FeatureBundle> own(n), other(n);
  for (std::size_t i = 0; i < n; ++i) {
    own[i] = extract(params_, *target[i]);
    other[i] = extract(params_, *partner[i]);
  }
  std::vector<Tensor> di_own, di_other, ds_own, ds_other;
  for (std::size_t i = 0; i < n; ++i) {
    di_own.push_back(own[i].f_di);
    di_other.push_back(other[i].f_di);
    ds_own.push_back(own[i].f_ds);
    ds_other.push_back(other[i].f_ds);
  }
  const LatentPair di_pair{embed_latents(di_own, params_.embed_di),
                           embed_latents(di_other, params_.embed_di)};
  const Tensor z_ds = embed_latents(ds_own, params_.embed_ds);
  const LatentPair club_pair{z_ds, cfg_.club_pairing == ClubPairing::ds_ds
                                       ? embed_latents(ds_other, params_.embed_ds)
                                       : di_pair.z};

  // Phase 1: fit q on detached latents.
  const LatentPair detached{club_pair.z.detach(), club_pair.z_plus.detach()};
  for (std::size_t s = 0; s < cfg_.q_steps; ++s) {
    zero_grads(q_params_);
    backward(q_nll_loss(detached, q_));
    adam_step(q_params_, opt_q_);
  }
  for (const auto& p : main_params_) {
    if (p.has_grad()) throw ContractError("train_step: gradient leaked into main network during q phase");
  }
  zero_grads(q_params_);

  // Phase 2: composite loss, q frozen.
  std::vector<Tensor> predicted;
  predicted.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    fuse_features(params_, own[i], &other[i]);
    predicted.push_back(counter_forward(params_, decoder_forward(params_, own[i].f_dsdi)));
  }
  const Tensor l_counter = batch_counting_loss(predicted, target, cfg_.net.density_scale);
  const Tensor i_lb = infonce_lower_bound(di_pair, cfg_.tau);
  const Tensor i_club = club_upper_bound(club_pair, q_);
  // q is frozen and the latents detached here, so this term carries no gradient.
  const double l_delta2 = q_nll_loss(detached, q_).item();

  const Tensor loss = add_scalar(
      add(sub(l_counter, scale(i_lb, cfg_.beta1)), scale(i_club, cfg_.beta1)),
      cfg_.beta2 * l_delta2);
  backward(loss);
  for (const auto& p : q_params_) {
    if (p.has_grad()) throw ContractError("train_step: gradient leaked into q during main phase");
  }
  adam_step(main_params_, opt_main_);

  StepRecord rec;
  rec.step = step_++;
  rec.l_counter = l_counter.item();
  rec.i_lb = i_lb.item();
  rec.i_club = i_club.item();
  rec.l_delta2 = l_delta2;
  rec.total = total_loss(rec.l_counter, rec.i_lb, rec.i_club, rec.l_delta2, cfg_);
  rec.target_domain = target_domain;
  rec.partner_domain = partner_domain;
  return rec;
}

StepRecord Trainer::supervised_step(const Batch& batch, TrainMode mode) {
  if (batch.empty()) throw ContractError("supervised_step: empty batch");
  zero_grads(main_params_);
  std::vector<Tensor> predicted;
  predicted.reserve(batch.size());
  for (const auto* s : batch) predicted.push_back(predict_density(params_, s->image, mode));
  const Tensor l_counter = batch_counting_loss(predicted, batch, cfg_.net.density_scale);
  backward(l_counter);
  adam_step(main_params_, opt_main_);

  StepRecord rec;
  rec.step = step_++;
  rec.l_counter = l_counter.item();
  rec.total = total_loss(rec.l_counter, 0.0, 0.0, 0.0, cfg_);
  rec.target_domain = batch[0]->domain;
  for (const auto* s : batch) {
    if (s->domain != rec.target_domain) {
      rec.target_domain = -1;  // pooled batch
      break;
    }
  }
  return rec;
}

TrainResult train_run(const std::vector<DomainData>& domains, const TrainConfig& cfg,
                      TrainMode mode) {
  cfg.validate();
  const std::size_t needed = mode == TrainMode::single ? 1 : 2;
  if (domains.size() < needed) {
    throw ConfigError(std::string("train_run: mode ") + train_mode_name(mode) + " needs at least " +
                      std::to_string(needed) + " domains, got " + std::to_string(domains.size()));
  }
  const std::size_t used = mode == TrainMode::single ? 1 : domains.size();
  for (std::size_t d = 0; d < used; ++d) {
    if (domains[d].train.empty()) {
      throw ConfigError("train_run: domain " + std::to_string(domains[d].domain) + " has no training samples");
    }
  }

  Trainer trainer(cfg);
  Rng rng(derive_seed(cfg.seed, 3));
  TrainResult result;
  result.trace.reserve(cfg.steps);

  auto draw = [&](const DomainData& d) {
    Batch b;
    for (std::size_t i = 0; i < cfg.batch_size; ++i) b.push_back(&d.train[rng.index(d.train.size())]);
    return b;
  };

  std::vector<const LabeledSample*> pooled;
  if (mode == TrainMode::joint_naive) {
    for (const auto& d : domains) {
      for (const auto& s : d.train) pooled.push_back(&s);
    }
  }

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    switch (mode) {
      case TrainMode::single:
        result.trace.push_back(trainer.supervised_step(draw(domains[0]), mode));
        break;
      case TrainMode::joint_naive: {
        Batch b;
        for (std::size_t i = 0; i < cfg.batch_size; ++i) b.push_back(pooled[rng.index(pooled.size())]);
        result.trace.push_back(trainer.supervised_step(b, mode));
        break;
      }
      case TrainMode::joint_fsca: {
        const std::size_t t = step % domains.size();
        std::size_t p = rng.index(domains.size() - 1);
        if (p >= t) ++p;
        const Batch target = draw(domains[t]);
        const Batch partner = draw(domains[p]);
        result.trace.push_back(trainer.train_step(target, partner));
        break;
      }
    }
  }
  result.params = trainer.params();
  result.q = trainer.q();
  result.checkpoint = trainer.checkpoint_tensors();
  return result;
}

}  // namespace fsca
