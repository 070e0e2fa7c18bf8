#include "lll/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lll/config.hpp"
#include "lll/trainer.hpp"

namespace lll {

namespace {

std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Mat random_mat(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return m;
}

Mat random_unit_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Mat m = random_mat(rows, cols, rng);
  for (std::size_t r = 0; r < rows; ++r) {
    const Vec u = l2_normalize(m.row(r));
    std::copy(u.begin(), u.end(), m.row(r).begin());
  }
  return m;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, static_cast<int>(classes) - 1);
  std::vector<int> out(n);
  for (int& y : out) y = dist(rng);
  return out;
}

// Finite-difference check of `f` over one flattened tensor.
double tensor_rel_err(Mat probe_source, const Mat& analytic, double h,
                      const std::function<double(const Mat&)>& f) {
  Mat probe = std::move(probe_source);
  const Vec numeric = finite_diff_grad(
      [&](std::span<const double> x) {
        std::copy(x.begin(), x.end(), probe.values().begin());
        return f(probe);
      },
      Vec(probe.values().begin(), probe.values().end()), h);
  return relative_error(analytic.values(), numeric);
}

void record(GradCheckOutcome& out, std::string tensor, double err) {
  if (std::isnan(err) || std::isnan(out.max_rel_err)) {
    out.max_rel_err = std::numeric_limits<double>::quiet_NaN();
  } else {
    out.max_rel_err = std::max(out.max_rel_err, err);
  }
  out.tensors.push_back({std::move(tensor), err});
}

void assign_flat(ModelParams& params, std::span<const double> flat) {
  std::size_t offset = 0;
  for (auto t : parameter_tensors(params)) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.begin());
    offset += t.size();
  }
}

Vec flatten(const ModelParams& params) {
  Vec flat;
  for (auto t : parameter_tensors(params)) flat.insert(flat.end(), t.begin(), t.end());
  return flat;
}

GradCheckOutcome check_chain(LossKind kind, std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  Config config;
  config.loss.kind = kind;
  config.loss.lambda_ce = 1.0;
  config.loss.lambda_scl = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
  config.loss.tau = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
  config.model.gamma_t = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
  config.model.head_kind = HeadKind::linear;

  const std::size_t batch = uniform_size(rng, 1, 4);
  const std::size_t classes = uniform_size(rng, 2, 5);
  const std::size_t input_dim = uniform_size(rng, 2, 6);
  const std::size_t embed_dim = uniform_size(rng, 2, 6);
  ModelShape shape{input_dim, {uniform_size(rng, 2, 6), uniform_size(rng, 2, 6)}, embed_dim, classes};
  ModelParams params = init_model(shape, rng);
  // Non-trivial biases and classifier so every path carries signal.
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto* stack : {&params.encoder, &params.projection}) {
    for (auto& layer : *stack) {
      for (double& b : layer.bias) b = 0.1 + normal(rng);
    }
  }
  for (double& w : params.classifier.values()) w = normal(rng);

  ClassProfile profile;
  for (std::size_t c = 0; c < classes; ++c) profile.counts.push_back(static_cast<std::int64_t>(uniform_size(rng, 1, 100)));
  const Mat batch_x = random_mat(batch, input_dim, rng);
  const std::vector<int> labels = random_labels(batch, classes, rng);
  const std::size_t queue_n = uniform_size(rng, 0, 8 - batch);
  const KeyBank bank(random_unit_rows(batch, embed_dim, rng), labels, random_unit_rows(queue_n, embed_dim, rng),
                     random_labels(queue_n, classes, rng));

  const HeadKind head = config.effective_head();
  auto loss_at = [&](const ModelParams& p) {
    ForwardOutput fwd = forward(p, batch_x, head, config.model.gamma_t);
    const BatchInputs inputs{fwd.features, labels, fwd.embeddings};
    return std::pair{compute_loss(config, profile, inputs, p.classifier, bank), std::move(fwd.cache)};
  };
  const auto [loss, cache] = loss_at(params);
  const ModelParams grads = backward(params, loss, cache);

  ModelParams probe = params;
  const Vec numeric = finite_diff_grad(
      [&](std::span<const double> x) {
        assign_flat(probe, x);
        return loss_at(probe).first.total;
      },
      flatten(params), h);

  GradCheckOutcome out;
  out.name = "encoder_chain[" + std::string(to_string(kind)) + "]";
  out.seed = seed;
  record(out, "parameters", relative_error(flatten(grads), numeric));
  return out;
}

}  // namespace

LossInstance random_loss_instance(std::mt19937_64& rng) {
  LossInstance inst;
  const std::size_t batch = uniform_size(rng, 1, 4);
  const std::size_t classes = uniform_size(rng, 2, 5);
  const std::size_t dim = uniform_size(rng, 2, 6);
  const std::size_t embed_dim = uniform_size(rng, 2, 6);
  inst.features = random_mat(batch, dim, rng);
  inst.theta = random_mat(dim, classes, rng);
  inst.embeddings = random_unit_rows(batch, embed_dim, rng);
  inst.labels = random_labels(batch, classes, rng);
  for (std::size_t c = 0; c < classes; ++c) {
    inst.profile.counts.push_back(static_cast<std::int64_t>(uniform_size(rng, 1, 100)));
  }
  const std::size_t queue_n = uniform_size(rng, 0, 8 - batch);
  inst.bank = KeyBank(random_unit_rows(batch, embed_dim, rng), inst.labels,
                      random_unit_rows(queue_n, embed_dim, rng), random_labels(queue_n, classes, rng));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  inst.weights.lambda_ce = 0.1 + unit(rng);
  inst.weights.lambda_scl = 0.01 + unit(rng);
  inst.weights.alpha = unit(rng);
  inst.weights.beta = 0.1 + unit(rng);
  inst.weights.tau = 0.05 + 0.95 * unit(rng);
  inst.weights.gamma_t = 0.05 + 0.95 * unit(rng);
  return inst;
}

GradCheckOutcome check_loss_gradients(const std::string& name, const LossFn& loss, std::uint64_t seed,
                                      double h) {
  std::mt19937_64 rng(seed);
  const LossInstance inst = random_loss_instance(rng);
  const LossResult analytic = loss(inst);

  GradCheckOutcome out;
  out.name = name;
  out.seed = seed;
  if (!analytic.grad_features.empty()) {
    record(out, "features", tensor_rel_err(inst.features, analytic.grad_features, h, [&](const Mat& m) {
             LossInstance p = inst;
             p.features = m;
             return loss(p).total;
           }));
  }
  if (!analytic.grad_theta.empty()) {
    record(out, "theta", tensor_rel_err(inst.theta, analytic.grad_theta, h, [&](const Mat& m) {
             LossInstance p = inst;
             p.theta = m;
             return loss(p).total;
           }));
  }
  if (!analytic.grad_embeddings.empty()) {
    record(out, "embeddings", tensor_rel_err(inst.embeddings, analytic.grad_embeddings, h, [&](const Mat& m) {
             LossInstance p = inst;
             p.embeddings = m;
             return loss(p).total;
           }));
  }
  return out;
}

std::vector<GradCheckCase> standard_gradchecks() {
  auto loss_case = [](std::string name, LossFn fn) {
    return GradCheckCase{name, [name, fn](std::uint64_t seed, double h) {
                           return check_loss_gradients(name, fn, seed, h);
                         }};
  };
  std::vector<GradCheckCase> cases{
      loss_case("balanced_ce",
                [](const LossInstance& i) { return balanced_ce(i.features, i.theta, i.labels, i.profile); }),
      loss_case("supcon", [](const LossInstance& i) { return supcon(i.embeddings, i.bank, i.labels, i.weights.tau); }),
      loss_case("summed", [](const LossInstance& i) {
        return summed_loss(i.inputs(), i.theta, i.bank, i.profile, i.weights);
      }),
      loss_case("paco",
                [](const LossInstance& i) { return paco_loss(i.inputs(), i.theta, i.bank, i.profile, i.weights); }),
      loss_case("cibl", [](const LossInstance& i) {
        return cibl_loss(i.inputs(), i.theta, i.bank, i.profile, i.weights, HeadKind::linear);
      }),
      loss_case("nce", [](const LossInstance& i) {
        return nce_loss(i.features, i.theta, i.labels, i.profile, i.weights.gamma_t);
      }),
      loss_case("nce_margin", [](const LossInstance& i) {
        return nce_margin_form(i.features, i.theta, i.labels, i.profile, i.weights.gamma_t);
      }),
  };
  for (LossKind kind : {LossKind::ce, LossKind::summed, LossKind::paco, LossKind::cibl, LossKind::ncibl}) {
    cases.push_back({"encoder_chain[" + std::string(to_string(kind)) + "]",
                     [kind](std::uint64_t seed, double h) { return check_chain(kind, seed, h); }});
  }
  return cases;
}

GradCheckReport run_gradchecks(const std::vector<GradCheckCase>& cases, std::size_t trials, double tolerance,
                               double h, std::uint64_t base_seed) {
  GradCheckReport report;
  report.trials = trials;
  report.tolerance = tolerance;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    for (std::size_t t = 0; t < trials; ++t) {
      const std::uint64_t seed = base_seed + 7919 * c + t;
      GradCheckOutcome outcome = cases[c].run(seed, h);
      if (!(outcome.max_rel_err < tolerance)) report.failures.push_back(outcome);
      report.outcomes.push_back(std::move(outcome));
    }
  }
  return report;
}

}  // namespace lll
