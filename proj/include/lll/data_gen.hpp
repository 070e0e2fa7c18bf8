#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "lll/class_profile.hpp"
#include "lll/numerics.hpp"

namespace lll {

enum class Split { train, test };

/// Labeled feature vectors, one row per instance.
struct Dataset {
  Mat features;
  std::vector<int> labels;
  ClassProfile profile;  // per-class counts actually present
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Counts of each label in [0, num_classes).
std::vector<std::int64_t> count_labels(std::span<const int> labels, std::size_t num_classes);

/// n_c = round_half_even(n_max * imbalance^(-c / (C - 1))), clamped to >= 1.
ClassProfile exponential_profile(std::size_t num_classes, std::int64_t n_max, double imbalance);

/// n_c = round_half_even(n_max * (c + 1)^(-a)), a = ln(n_max / n_min) / ln(C); the tail is
/// clamped to n_min so both endpoints are pinned.
ClassProfile pareto_profile(std::size_t num_classes, std::int64_t n_max, std::int64_t n_min);

struct MixtureOptions {
  std::size_t dim = 16;
  double separation = 3.0;
  std::int64_t test_per_class = 100;
};

/// Class means at separation * (random unit direction); unit-variance isotropic samples.
/// Train counts follow `profile`, test is balanced. Deterministic in `seed`.
std::pair<Dataset, Dataset> gaussian_mixture(const ClassProfile& profile, const MixtureOptions& opts,
                                             std::uint64_t seed);

/// Reads header-less `label,f_1,...,f_D` rows.
Dataset load_csv(const std::filesystem::path& path, Split split = Split::train);
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// Keeps profile.counts[c] instances of each class, drawn without replacement.
/// Members keep their relative order from `data`.
Dataset subsample(const Dataset& data, const ClassProfile& profile, std::uint64_t seed);

struct ViewPair {
  Vec view_main;
  Vec view_momentum;
};

/// Two independently noised copies of `feature`.
ViewPair make_views(std::span<const double> feature, double noise_sigma, std::mt19937_64& rng);

/// Shuffled index batches for one epoch, keyed by (seed, epoch). The last batch may be short.
std::vector<std::vector<std::size_t>> batch_iterator(std::size_t dataset_size, std::size_t batch_size,
                                                     std::uint64_t seed, std::uint64_t epoch);

/// Rounds half to even; the rule profile generators use.
std::int64_t round_half_even(double v);

}  // namespace lll
