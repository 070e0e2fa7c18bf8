#pragma once

#include <span>
#include <vector>

#include "lll/class_profile.hpp"
#include "lll/contrastive_bank.hpp"
#include "lll/model.hpp"
#include "lll/numerics.hpp"

namespace lll {

struct BatchInputs {
  Mat features;             // x_i, B x D
  std::vector<int> labels;  // c_i
  Mat embeddings;           // z_i, B x E, unit rows
};

/// Per-instance losses plus gradients of `total` (the batch mean) with respect to
/// every differentiable input. Inputs a loss does not touch get zero-filled gradients.
struct LossResult {
  Vec per_instance_loss;
  double total = 0.0;
  Mat grad_features;
  Mat grad_theta;
  Mat grad_embeddings;
  /// Cross-entropy and contrastive constituents per instance (zeros when absent).
  Vec ce_component;
  Vec scl_component;
};

struct LossWeights {
  double lambda_ce = 1.0;
  double lambda_scl = 0.03;
  double alpha = 1.0;
  double beta = 1.0;
  double tau = 0.05;     // contrastive temperature
  double gamma_t = 0.05; // cosine classifier temperature
};

/// Balanced-Softmax cross-entropy: softmax over x_i.theta_c + ln n_c.
LossResult balanced_ce(const Mat& features, const Mat& theta, std::span<const int> labels,
                       const ClassProfile& profile);

/// Supervised contrastive loss against the key bank. Keys are constants. Instances
/// without positives contribute zero loss and zero gradient.
LossResult supcon(const Mat& query_embeddings, const KeyBank& bank, std::span<const int> labels,
                  double tau);

/// lambda_ce * CE + lambda_scl * SCL per instance. `head` selects the CE form.
LossResult summed_loss(const BatchInputs& inputs, const Mat& theta, const KeyBank& bank,
                       const ClassProfile& profile, const LossWeights& weights,
                       HeadKind head = HeadKind::linear);

/// Parametric contrastive loss: classifier terms n_c exp(x.theta_c) join the contrastive
/// softmax under one shared denominator; weights alpha (contrastive positives) and beta
/// (classifier positive), normalized by 1 / (alpha |P| + beta).
LossResult paco_loss(const BatchInputs& inputs, const Mat& theta, const KeyBank& bank,
                     const ClassProfile& profile, const LossWeights& weights);

/// Class-instance balanced loss:
///   (lambda_ce L_CE + lambda_scl sum_{j in P} -log p_j) / (lambda_ce + lambda_scl |P|).
/// With head == cosine the CE term is the normalized (cosine) cross-entropy.
LossResult cibl_loss(const BatchInputs& inputs, const Mat& theta, const KeyBank& bank,
                     const ClassProfile& profile, const LossWeights& weights,
                     HeadKind head = HeadKind::linear);

/// Cosine-classifier cross-entropy with count weights n_c on exp(sim / gamma).
LossResult nce_loss(const Mat& features, const Mat& theta, std::span<const int> labels,
                    const ClassProfile& profile, double gamma_t);

/// Same loss with ln n_c moved inside the exponent as an additive margin.
LossResult nce_margin_form(const Mat& features, const Mat& theta, std::span<const int> labels,
                           const ClassProfile& profile, double gamma_t);

/// lambda_scl |P| / (lambda_ce + lambda_scl |P|): the share of an instance's loss given to
/// the contrastive term. 0 when |P| = 0.
double cibl_contrastive_fraction(double lambda_ce, double lambda_scl, std::size_t num_positives);

}  // namespace lll
