#include "lll/trainer.hpp"

#include <cmath>
#include <numbers>

namespace lll {

Schedule Schedule::from_config(const OptimConfig& optim) {
  return Schedule{optim.base_lr, optim.warmup_epochs, optim.schedule, optim.milestones,
                  optim.factors, optim.epochs};
}

double lr_at(const Schedule& s, std::size_t epoch) {
  if (epoch >= s.total_epochs) {
    throw Error("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                std::to_string(s.total_epochs) + ")");
  }
  if (epoch < s.warmup_epochs) {
    return s.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(s.warmup_epochs);
  }
  if (s.kind == ScheduleKind::step) {
    double lr = s.base_lr;
    for (std::size_t i = 0; i < s.milestones.size(); ++i) {
      if (epoch >= s.milestones[i]) lr *= s.factors.empty() ? 0.1 : s.factors[i];
    }
    return lr;
  }
  const double span = static_cast<double>(s.total_epochs - s.warmup_epochs);
  const double progress = static_cast<double>(epoch - s.warmup_epochs) / span;
  return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState OptimizerState::for_params(const ModelParams& params, double momentum,
                                          double weight_decay) {
  return OptimizerState{zeros_like(params), momentum, weight_decay};
}

void sgd_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr) {
  check_same_shapes(params, grads);
  check_same_shapes(params, state.velocity);
  auto p = parameter_tensors(params);
  const auto g = parameter_tensors(grads);
  auto v = parameter_tensors(state.velocity);
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (!all_finite(g[t])) {
      throw NumericalError("sgd_step: non-finite gradient in parameter tensor " + std::to_string(t));
    }
  }
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      v[t][i] = state.momentum * v[t][i] + g[t][i] + state.weight_decay * p[t][i];
      p[t][i] -= lr * v[t][i];
    }
  }
  ++params.generation;
}

ModelParams backward(const ModelParams& params, const LossResult& loss, const ForwardCache& cache) {
  const std::size_t batch = cache.projected.rows();
  const Mat gx = loss.grad_features.empty() ? Mat(batch, params.feature_dim()) : loss.grad_features;
  const Mat gt = loss.grad_theta.empty() ? Mat(params.classifier.rows(), params.classifier.cols())
                                         : loss.grad_theta;
  const Mat gz = loss.grad_embeddings.empty() ? Mat(batch, cache.projected.cols()) : loss.grad_embeddings;
  return backward(params, gx, gt, gz, cache);
}

Vec evaluate(const ModelParams& params, const Dataset& dataset, HeadKind head, double gamma_t) {
  const std::size_t classes = params.num_classes();
  Vec correct(classes, 0.0);
  Vec total(classes, 0.0);
  if (dataset.size() == 0) return correct;
  const Mat scores = classifier_scores(encode(params.encoder, dataset.features), params.classifier,
                                       head, gamma_t);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto row = scores.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    const auto y = static_cast<std::size_t>(dataset.labels[i]);
    if (y >= classes) throw Error("evaluate: label outside the classifier's classes");
    total[y] += 1.0;
    if (best == y) correct[y] += 1.0;
  }
  for (std::size_t c = 0; c < classes; ++c) correct[c] = total[c] > 0.0 ? correct[c] / total[c] : 0.0;
  return correct;
}

LossResult compute_loss(const Config& config, const ClassProfile& profile, const BatchInputs& inputs,
                        const Mat& theta, const KeyBank& bank) {
  const LossWeights w = config.weights();
  const HeadKind head = config.effective_head();
  switch (config.loss.kind) {
    case LossKind::ce:
      return head == HeadKind::linear ? balanced_ce(inputs.features, theta, inputs.labels, profile)
                                      : nce_loss(inputs.features, theta, inputs.labels, profile, w.gamma_t);
    case LossKind::summed:
      return summed_loss(inputs, theta, bank, profile, w, head);
    case LossKind::paco:
      return paco_loss(inputs, theta, bank, profile, w);
    case LossKind::cibl:
    case LossKind::ncibl:
      return cibl_loss(inputs, theta, bank, profile, w, head);
  }
  throw Error("unknown loss kind");
}

std::pair<Dataset, Dataset> make_datasets(const Config& config) {
  const DataConfig& d = config.data;
  const ClassProfile profile = d.profile == ProfileKind::exponential
                                   ? exponential_profile(d.num_classes, d.n_max, d.imbalance)
                                   : pareto_profile(d.num_classes, d.n_max, d.n_min);
  const std::uint64_t seed = d.seed.value_or(config.run.seed);
  if (d.csv.empty()) {
    return gaussian_mixture(profile, MixtureOptions{d.dim, d.separation, d.test_per_class}, seed);
  }
  const Dataset pool = load_csv(d.csv, Split::train);
  Dataset train_set = subsample(pool, profile, seed);
  Dataset test_set = load_csv(d.test_csv, Split::test);
  if (test_set.dim() != train_set.dim()) throw Error("test CSV feature dimension differs from training CSV");
  test_set.profile.counts.resize(profile.num_classes(), 0);
  return {std::move(train_set), std::move(test_set)};
}

ModelParams initial_params(const Config& config, std::size_t input_dim, std::size_t num_classes) {
  const std::uint64_t seed = config.run.seed;
  std::seed_seq init_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 1u};
  std::mt19937_64 init_rng(init_seq);
  return init_model(ModelShape{input_dim, config.model.encoder_widths, config.model.embedding_dim, num_classes},
                    init_rng);
}

TrainResult train_on(const Config& config, const Dataset& train_set, const Dataset& test_set,
                     const EpochCallback& on_epoch) {
  validate(config);
  const ClassProfile& profile = train_set.profile;
  profile.validate();
  const std::size_t classes = profile.num_classes();
  const HeadKind head = config.effective_head();
  const double gamma_t = config.model.gamma_t;
  const std::uint64_t seed = config.run.seed;

  TrainResult out;
  out.params = initial_params(config, train_set.dim(), classes);
  out.shadow = MomentumParams::copy_of(out.params, config.bank.momentum_m);
  KeyQueue queue(config.bank.queue_capacity, config.model.embedding_dim);
  OptimizerState opt = OptimizerState::for_params(out.params, config.optim.momentum, config.optim.weight_decay);
  const Schedule schedule = Schedule::from_config(config.optim);

  std::seed_seq view_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 2u};
  std::mt19937_64 view_rng(view_seq);

  TrainingLog& log = out.log;
  log.profile = profile;
  log.config_echo = describe(config);
  log.many_threshold = config.report.many_threshold;
  log.few_threshold = config.report.few_threshold;

  const std::size_t dim = train_set.dim();
  for (std::size_t epoch = 0; epoch < config.optim.epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    double loss_sum = 0.0;
    double ce_sum = 0.0;
    double scl_sum = 0.0;
    std::size_t seen = 0;
    const auto batches = batch_iterator(train_set.size(), config.optim.batch_size, seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      Mat view_main(idx.size(), dim);
      Mat view_momentum(idx.size(), dim);
      std::vector<int> labels(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        ViewPair views = make_views(train_set.features.row(idx[r]), config.data.noise_sigma, view_rng);
        std::copy(views.view_main.begin(), views.view_main.end(), view_main.row(r).begin());
        std::copy(views.view_momentum.begin(), views.view_momentum.end(), view_momentum.row(r).begin());
        labels[r] = train_set.labels[idx[r]];
      }

      try {
        ForwardOutput fwd = forward(out.params, view_main, head, gamma_t);
        Mat keys = embed(out.shadow.encoder, out.shadow.projection, view_momentum);
        const KeyBank bank(keys, labels, queue);
        const BatchInputs inputs{std::move(fwd.features), labels, std::move(fwd.embeddings)};
        const LossResult loss = compute_loss(config, profile, inputs, out.params.classifier, bank);
        const ModelParams grads = backward(out.params, loss, fwd.cache);
        sgd_step(out.params, grads, opt, lr);
        ema_update(out.params, out.shadow);
        queue.enqueue(keys, labels);

        const double n = static_cast<double>(idx.size());
        loss_sum += loss.total * n;
        for (double v : loss.ce_component) ce_sum += v;
        for (double v : loss.scl_component) scl_sum += v;
        seen += idx.size();
        ++log.steps;
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " +
                             e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    const double denom = seen == 0 ? 1.0 : static_cast<double>(seen);
    rec.loss = loss_sum / denom;
    rec.ce_component = ce_sum / denom;
    rec.scl_component = scl_sum / denom;
    rec.train_acc = evaluate(out.params, train_set, head, gamma_t);
    rec.test_acc = evaluate(out.params, test_set, head, gamma_t);
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(log.epochs.back());
  }
  log.keys_enqueued = queue.total_pushed();
  out.queue_size = queue.size();
  return out;
}

TrainingLog train(const Config& config, const EpochCallback& on_epoch) {
  validate(config);
  const auto [train_set, test_set] = make_datasets(config);
  return train_on(config, train_set, test_set, on_epoch).log;
}

}  // namespace lll
