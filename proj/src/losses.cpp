#include "lll/losses.hpp"

#include <algorithm>
#include <cmath>

namespace lll {

namespace {

// How the count adjustment enters the classifier softmax. Both give the same loss;
// they are kept as separate arithmetic routes so one can check the other.
enum class CountRoute { log_margin, weighted_exp };

struct CeParts {
  Vec loss;
  Mat dscores;  // dL_i / dscore_{i,c}, unscaled by batch size
};

struct SclParts {
  Vec loss;                                // mean over positives of -log p_j (0 when |P| = 0)
  Mat dsims;                               // dL_i / ds_{i,k}
  std::vector<std::size_t> num_positives;  // |P_i^-|
  Mat softmax;                             // p_{i,k} over A^-
  Mat positive_mask;                       // 1 where k in P_i^-
};

void check_labels(std::span<const int> labels, std::size_t num_classes) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw Error("label " + std::to_string(labels[i]) + " of instance " + std::to_string(i) +
                  " out of range [0, " + std::to_string(num_classes) + ")");
    }
  }
}

void check_classifier(const Mat& features, const Mat& theta, std::span<const int> labels,
                      const ClassProfile& profile) {
  profile.validate();
  if (features.rows() != labels.size()) {
    throw Error("features have " + std::to_string(features.rows()) + " rows but " +
                std::to_string(labels.size()) + " labels were given");
  }
  if (theta.rows() != features.cols()) {
    throw Error("classifier is " + shape_str(theta) + " but features are " + shape_str(features));
  }
  if (theta.cols() != profile.num_classes()) {
    throw Error("classifier has " + std::to_string(theta.cols()) + " classes but profile has " +
                std::to_string(profile.num_classes()));
  }
  check_labels(labels, profile.num_classes());
}

void check_bank(const Mat& queries, const KeyBank& bank, std::span<const int> labels, double tau) {
  if (!(tau > 0.0)) throw Error("contrastive temperature tau must be positive");
  if (bank.empty()) throw Error("key bank is empty (A^- would be empty)");
  if (queries.rows() != labels.size()) {
    throw Error("embeddings have " + std::to_string(queries.rows()) + " rows but " +
                std::to_string(labels.size()) + " labels were given");
  }
  if (bank.key_dim() != queries.cols()) {
    throw Error("bank keys have dimension " + std::to_string(bank.key_dim()) +
                " but embeddings are " + shape_str(queries));
  }
}

CeParts ce_parts(const Mat& scores, std::span<const int> labels, const ClassProfile& profile,
                 CountRoute route) {
  if (!all_finite(scores.values())) throw NumericalError("non-finite logits");
  const std::size_t batch = scores.rows();
  const std::size_t classes = scores.cols();
  const Vec log_n = profile.log_counts();
  CeParts out{Vec(batch), Mat(batch, classes)};
  Vec adjusted(classes);
  for (std::size_t i = 0; i < batch; ++i) {
    auto s = scores.row(i);
    const auto y = static_cast<std::size_t>(labels[i]);
    auto d = out.dscores.row(i);
    if (route == CountRoute::log_margin) {
      for (std::size_t c = 0; c < classes; ++c) adjusted[c] = s[c] + log_n[c];
      const double lse = logsumexp(adjusted);
      out.loss[i] = lse - adjusted[y];
      for (std::size_t c = 0; c < classes; ++c) d[c] = std::exp(adjusted[c] - lse);
    } else {
      const double m = *std::max_element(s.begin(), s.end());
      double denom = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        adjusted[c] = static_cast<double>(profile.counts[c]) * std::exp(s[c] - m);
        denom += adjusted[c];
      }
      out.loss[i] = -std::log(adjusted[y] / denom);
      for (std::size_t c = 0; c < classes; ++c) d[c] = adjusted[c] / denom;
    }
    d[y] -= 1.0;
  }
  return out;
}

SclParts scl_parts(const Mat& queries, const KeyBank& bank, std::span<const int> labels, double tau) {
  const std::size_t batch = queries.rows();
  const std::size_t n = bank.size();
  Mat sims = matmul_a_bt(queries, bank.keys());
  for (double& v : sims.values()) v /= tau;
  if (!all_finite(sims.values())) throw NumericalError("non-finite contrastive similarities");

  SclParts out{Vec(batch, 0.0), Mat(batch, n), std::vector<std::size_t>(batch, 0), Mat(batch, n),
               Mat(batch, n)};
  for (std::size_t i = 0; i < batch; ++i) {
    const IndexSets sets = positive_and_all_sets(bank, i, labels[i]);
    auto s = sims.row(i);
    const Vec p = softmax(s);
    std::copy(p.begin(), p.end(), out.softmax.row(i).begin());
    for (std::size_t k : sets.positives) out.positive_mask(i, k) = 1.0;
    const std::size_t np = sets.positives.size();
    out.num_positives[i] = np;
    if (np == 0) continue;
    const double lse = logsumexp(s);
    double pos_sum = 0.0;
    for (std::size_t k : sets.positives) pos_sum += s[k];
    const double inv = 1.0 / static_cast<double>(np);
    out.loss[i] = lse - pos_sum * inv;
    auto d = out.dsims.row(i);
    for (std::size_t k = 0; k < n; ++k) d[k] = p[k] - out.positive_mask(i, k) * inv;
  }
  return out;
}

Mat scores_for(const Mat& features, const Mat& theta, HeadKind head, double gamma_t) {
  return classifier_scores(features, theta, head, gamma_t);
}

// Pulls dL/dscores back to the features and the classifier.
void head_backward(const Mat& features, const Mat& theta, HeadKind head, double gamma_t,
                   const Mat& dscores, Mat& grad_features, Mat& grad_theta) {
  if (head == HeadKind::linear) {
    grad_features = matmul_a_bt(dscores, theta);
    grad_theta = matmul_at_b(features, dscores);
    return;
  }
  const std::size_t batch = features.rows();
  const std::size_t dim = features.cols();
  const std::size_t classes = theta.cols();
  Mat xhat(batch, dim);
  for (std::size_t i = 0; i < batch; ++i) {
    const Vec u = l2_normalize(features.row(i));
    std::copy(u.begin(), u.end(), xhat.row(i).begin());
  }
  // Columns of theta as rows for normalization.
  Mat theta_t(classes, dim);
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t c = 0; c < classes; ++c) theta_t(c, d) = theta(d, c);
  }
  Mat that(classes, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    const Vec u = l2_normalize(theta_t.row(c));
    std::copy(u.begin(), u.end(), that.row(c).begin());
  }
  Mat g = dscores;
  for (double& v : g.values()) v /= gamma_t;
  const Mat g_xhat = matmul(g, that);       // B x D
  const Mat g_that = matmul_at_b(g, xhat);  // C x D
  grad_features = Mat(batch, dim);
  for (std::size_t i = 0; i < batch; ++i) {
    const Vec gx = l2_normalize_backward(features.row(i), g_xhat.row(i));
    std::copy(gx.begin(), gx.end(), grad_features.row(i).begin());
  }
  grad_theta = Mat(dim, classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const Vec gt = l2_normalize_backward(theta_t.row(c), g_that.row(c));
    for (std::size_t d = 0; d < dim; ++d) grad_theta(d, c) = gt[d];
  }
}

void scale_rows(Mat& m, std::span<const double> w) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (double& v : m.row(i)) v *= w[i];
  }
}

void finish(LossResult& r) {
  const std::size_t batch = r.per_instance_loss.size();
  double sum = 0.0;
  for (double v : r.per_instance_loss) sum += v;
  r.total = batch == 0 ? 0.0 : sum / static_cast<double>(batch);
  if (!std::isfinite(r.total)) throw NumericalError("non-finite loss");
  if (r.ce_component.empty()) r.ce_component.assign(batch, 0.0);
  if (r.scl_component.empty()) r.scl_component.assign(batch, 0.0);
}

LossResult classifier_only(const Mat& features, const Mat& theta, std::span<const int> labels,
                           const ClassProfile& profile, HeadKind head, double gamma_t,
                           CountRoute route) {
  check_classifier(features, theta, labels, profile);
  const std::size_t batch = features.rows();
  CeParts ce = ce_parts(scores_for(features, theta, head, gamma_t), labels, profile, route);
  LossResult r;
  r.per_instance_loss = ce.loss;
  r.ce_component = ce.loss;
  const Vec inv_b(batch, batch == 0 ? 0.0 : 1.0 / static_cast<double>(batch));
  scale_rows(ce.dscores, inv_b);
  head_backward(features, theta, head, gamma_t, ce.dscores, r.grad_features, r.grad_theta);
  r.grad_embeddings = Mat();
  finish(r);
  return r;
}

CountRoute route_for(HeadKind head) {
  return head == HeadKind::linear ? CountRoute::log_margin : CountRoute::weighted_exp;
}

void check_batch(const BatchInputs& in) {
  if (in.embeddings.rows() != in.features.rows() || in.labels.size() != in.features.rows()) {
    throw Error("batch inputs disagree on batch size: features " + shape_str(in.features) +
                ", embeddings " + shape_str(in.embeddings) + ", " +
                std::to_string(in.labels.size()) + " labels");
  }
}

// Gradient of the mean loss w.r.t. queries, given per-instance dL_i/ds_{i,k}.
Mat embeddings_grad(const Mat& dsims, const KeyBank& bank, double tau, std::size_t batch) {
  Mat g = matmul(dsims, bank.keys());
  const double scale = 1.0 / (tau * static_cast<double>(batch));
  for (double& v : g.values()) v *= scale;
  return g;
}

}  // namespace

LossResult balanced_ce(const Mat& features, const Mat& theta, std::span<const int> labels,
                       const ClassProfile& profile) {
  return classifier_only(features, theta, labels, profile, HeadKind::linear, 1.0,
                         CountRoute::log_margin);
}

LossResult nce_loss(const Mat& features, const Mat& theta, std::span<const int> labels,
                    const ClassProfile& profile, double gamma_t) {
  if (!(gamma_t > 0.0)) throw Error("cosine temperature gamma must be positive");
  return classifier_only(features, theta, labels, profile, HeadKind::cosine, gamma_t,
                         CountRoute::weighted_exp);
}

LossResult nce_margin_form(const Mat& features, const Mat& theta, std::span<const int> labels,
                           const ClassProfile& profile, double gamma_t) {
  if (!(gamma_t > 0.0)) throw Error("cosine temperature gamma must be positive");
  return classifier_only(features, theta, labels, profile, HeadKind::cosine, gamma_t,
                         CountRoute::log_margin);
}

LossResult supcon(const Mat& query_embeddings, const KeyBank& bank, std::span<const int> labels,
                  double tau) {
  check_bank(query_embeddings, bank, labels, tau);
  const std::size_t batch = query_embeddings.rows();
  SclParts scl = scl_parts(query_embeddings, bank, labels, tau);
  LossResult r;
  r.per_instance_loss = scl.loss;
  r.scl_component = scl.loss;
  r.grad_embeddings = embeddings_grad(scl.dsims, bank, tau, batch);
  finish(r);
  return r;
}

LossResult summed_loss(const BatchInputs& inputs, const Mat& theta, const KeyBank& bank,
                       const ClassProfile& profile, const LossWeights& weights, HeadKind head) {
  check_batch(inputs);
  if (weights.lambda_ce < 0.0 || weights.lambda_scl < 0.0 ||
      !(weights.lambda_ce + weights.lambda_scl > 0.0)) {
    throw Error("summed loss needs non-negative weights with a positive sum");
  }
  const LossResult ce = head == HeadKind::linear
                            ? balanced_ce(inputs.features, theta, inputs.labels, profile)
                            : nce_loss(inputs.features, theta, inputs.labels, profile, weights.gamma_t);
  const LossResult scl = supcon(inputs.embeddings, bank, inputs.labels, weights.tau);

  LossResult r;
  const std::size_t batch = inputs.labels.size();
  r.per_instance_loss.resize(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    r.per_instance_loss[i] = weights.lambda_ce * ce.per_instance_loss[i] +
                             weights.lambda_scl * scl.per_instance_loss[i];
  }
  r.ce_component = ce.per_instance_loss;
  r.scl_component = scl.per_instance_loss;
  r.grad_features = ce.grad_features;
  for (double& v : r.grad_features.values()) v *= weights.lambda_ce;
  r.grad_theta = ce.grad_theta;
  for (double& v : r.grad_theta.values()) v *= weights.lambda_ce;
  r.grad_embeddings = scl.grad_embeddings;
  for (double& v : r.grad_embeddings.values()) v *= weights.lambda_scl;
  finish(r);
  return r;
}

LossResult paco_loss(const BatchInputs& inputs, const Mat& theta, const KeyBank& bank,
                     const ClassProfile& profile, const LossWeights& weights) {
  check_batch(inputs);
  check_classifier(inputs.features, theta, inputs.labels, profile);
  check_bank(inputs.embeddings, bank, inputs.labels, weights.tau);
  if (!(weights.beta > 0.0)) throw Error("PaCo beta must be positive");
  if (weights.alpha < 0.0) throw Error("PaCo alpha must be non-negative");

  const std::size_t batch = inputs.labels.size();
  const std::size_t n = bank.size();
  const std::size_t classes = profile.num_classes();
  const Vec log_n = profile.log_counts();
  const Mat scores = matmul(inputs.features, theta);
  if (!all_finite(scores.values())) throw NumericalError("non-finite logits");
  Mat sims = matmul_a_bt(inputs.embeddings, bank.keys());
  for (double& v : sims.values()) v /= weights.tau;
  if (!all_finite(sims.values())) throw NumericalError("non-finite contrastive similarities");

  LossResult r;
  r.per_instance_loss.resize(batch);
  r.ce_component.resize(batch);
  r.scl_component.assign(batch, 0.0);
  Mat dsims(batch, n);
  Mat dscores(batch, classes);
  Vec exponents(n + classes);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto y = static_cast<std::size_t>(inputs.labels[i]);
    const IndexSets sets = positive_and_all_sets(bank, i, inputs.labels[i]);
    auto s = sims.row(i);
    std::copy(s.begin(), s.end(), exponents.begin());
    for (std::size_t c = 0; c < classes; ++c) exponents[n + c] = scores(i, c) + log_n[c];
    const double lse = logsumexp(exponents);
    const double np = static_cast<double>(sets.positives.size());
    const double norm = 1.0 / (weights.alpha * np + weights.beta);

    double pos_sum = 0.0;
    for (std::size_t k : sets.positives) pos_sum += s[k] - lse;
    const double ce_term = exponents[n + y] - lse;
    r.per_instance_loss[i] = -norm * (weights.alpha * pos_sum + weights.beta * ce_term);
    r.ce_component[i] = -ce_term;
    if (np > 0) r.scl_component[i] = -pos_sum / np;

    // dL/de_m = softmax_m - norm * (alpha [m in P] + beta [m = y])
    auto ds = dsims.row(i);
    auto dc = dscores.row(i);
    for (std::size_t k = 0; k < n; ++k) ds[k] = std::exp(exponents[k] - lse);
    for (std::size_t k : sets.positives) ds[k] -= norm * weights.alpha;
    for (std::size_t c = 0; c < classes; ++c) dc[c] = std::exp(exponents[n + c] - lse);
    dc[y] -= norm * weights.beta;
  }
  const Vec inv_b(batch, 1.0 / static_cast<double>(batch));
  scale_rows(dscores, inv_b);
  head_backward(inputs.features, theta, HeadKind::linear, 1.0, dscores, r.grad_features, r.grad_theta);
  r.grad_embeddings = embeddings_grad(dsims, bank, weights.tau, batch);
  finish(r);
  return r;
}

double cibl_contrastive_fraction(double lambda_ce, double lambda_scl, std::size_t num_positives) {
  const double scl = lambda_scl * static_cast<double>(num_positives);
  const double denom = lambda_ce + scl;
  return denom > 0.0 ? scl / denom : 0.0;
}

LossResult cibl_loss(const BatchInputs& inputs, const Mat& theta, const KeyBank& bank,
                     const ClassProfile& profile, const LossWeights& weights, HeadKind head) {
  check_batch(inputs);
  check_classifier(inputs.features, theta, inputs.labels, profile);
  check_bank(inputs.embeddings, bank, inputs.labels, weights.tau);
  if (weights.lambda_ce < 0.0 || weights.lambda_scl < 0.0) {
    throw Error("CIBL weights must be non-negative");
  }
  if (weights.lambda_ce == 0.0 && weights.lambda_scl == 0.0) {
    throw Error("CIBL needs lambda_ce or lambda_scl to be positive");
  }
  if (head == HeadKind::cosine && !(weights.gamma_t > 0.0)) {
    throw Error("cosine temperature gamma must be positive");
  }

  const std::size_t batch = inputs.labels.size();
  CeParts ce = ce_parts(scores_for(inputs.features, theta, head, weights.gamma_t), inputs.labels,
                        profile, route_for(head));
  SclParts scl = scl_parts(inputs.embeddings, bank, inputs.labels, weights.tau);

  LossResult r;
  r.per_instance_loss.resize(batch);
  r.ce_component = ce.loss;
  r.scl_component = scl.loss;
  Vec w_ce(batch);
  Vec w_scl(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const double np = static_cast<double>(scl.num_positives[i]);
    const double denom = weights.lambda_ce + weights.lambda_scl * np;
    if (!(denom > 0.0)) {
      throw Error("CIBL normalizer is zero for instance " + std::to_string(i) +
                  ": lambda_ce is 0 and the instance has no positives in the bank");
    }
    // sum_{j in P} -log p_j == |P| * scl.loss[i], so the contrastive share is
    // lambda_scl |P| / denom applied to the positive-averaged term.
    w_ce[i] = weights.lambda_ce / denom;
    w_scl[i] = weights.lambda_scl * np / denom;
    r.per_instance_loss[i] = w_ce[i] * ce.loss[i] + w_scl[i] * scl.loss[i];
  }
  Vec ce_rows(batch);
  for (std::size_t i = 0; i < batch; ++i) ce_rows[i] = w_ce[i] / static_cast<double>(batch);
  scale_rows(ce.dscores, ce_rows);
  head_backward(inputs.features, theta, head, weights.gamma_t, ce.dscores, r.grad_features, r.grad_theta);
  scale_rows(scl.dsims, w_scl);
  r.grad_embeddings = embeddings_grad(scl.dsims, bank, weights.tau, batch);
  finish(r);
  return r;
}

}  // namespace lll
