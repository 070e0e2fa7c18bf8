#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lll/class_profile.hpp"
#include "lll/contrastive_bank.hpp"
#include "lll/losses.hpp"

namespace lll {

/// A small random loss instance: B <= 4, C <= 5, D, E <= 6, at most 8 bank keys.
struct LossInstance {
  Mat features;
  Mat theta;
  Mat embeddings;
  std::vector<int> labels;
  ClassProfile profile;
  KeyBank bank;
  LossWeights weights;

  BatchInputs inputs() const { return {features, labels, embeddings}; }
};

LossInstance random_loss_instance(std::mt19937_64& rng);

struct TensorError {
  std::string tensor;
  double rel_err = 0.0;
};

struct GradCheckOutcome {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<TensorError> tensors;
  double max_rel_err = 0.0;
};

/// One named check; `run` builds its own instance from the seed and compares analytic
/// gradients against central differences with step h.
struct GradCheckCase {
  std::string name;
  std::function<GradCheckOutcome(std::uint64_t seed, double h)> run;
};

using LossFn = std::function<LossResult(const LossInstance&)>;

/// Compares every non-empty gradient of `loss` on a random instance against finite differences
/// of the batch-mean loss.
GradCheckOutcome check_loss_gradients(const std::string& name, const LossFn& loss, std::uint64_t seed,
                                      double h);

/// The seven losses plus the full encoder -> projection -> classifier chain under each
/// training loss kind.
std::vector<GradCheckCase> standard_gradchecks();

struct GradCheckReport {
  std::size_t trials = 0;
  double tolerance = 0.0;
  std::vector<GradCheckOutcome> outcomes;
  std::vector<GradCheckOutcome> failures;

  bool passed() const { return failures.empty(); }
};

GradCheckReport run_gradchecks(const std::vector<GradCheckCase>& cases, std::size_t trials, double tolerance,
                               double h = 1e-5, std::uint64_t base_seed = 1000);

}  // namespace lll
