#include "lll/data_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lll {

std::int64_t round_half_even(double v) { return static_cast<std::int64_t>(std::nearbyint(v)); }

std::vector<std::int64_t> count_labels(std::span<const int> labels, std::size_t num_classes) {
  std::vector<std::int64_t> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

ClassProfile exponential_profile(std::size_t num_classes, std::int64_t n_max, double imbalance) {
  if (num_classes < 2) throw Error("exponential_profile: need at least 2 classes");
  if (!(imbalance >= 1.0)) throw Error("exponential_profile: imbalance factor must be >= 1");
  if (static_cast<double>(n_max) < imbalance) {
    throw Error("exponential_profile: n_max must be at least the imbalance factor");
  }
  ClassProfile p;
  p.counts.resize(num_classes);
  const double last = static_cast<double>(num_classes - 1);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double n = static_cast<double>(n_max) * std::pow(imbalance, -static_cast<double>(c) / last);
    p.counts[c] = std::max<std::int64_t>(1, round_half_even(n));
  }
  return p;
}

ClassProfile pareto_profile(std::size_t num_classes, std::int64_t n_max, std::int64_t n_min) {
  if (num_classes < 2) throw Error("pareto_profile: need at least 2 classes");
  if (n_min < 1 || n_max <= n_min) throw Error("pareto_profile: need n_max > n_min >= 1");
  const double a = std::log(static_cast<double>(n_max) / static_cast<double>(n_min)) /
                   std::log(static_cast<double>(num_classes));
  ClassProfile p;
  p.counts.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double n = static_cast<double>(n_max) * std::pow(static_cast<double>(c + 1), -a);
    p.counts[c] = std::max(n_min, round_half_even(n));
  }
  return p;
}

std::pair<Dataset, Dataset> gaussian_mixture(const ClassProfile& profile, const MixtureOptions& opts,
                                             std::uint64_t seed) {
  profile.validate();
  if (opts.dim < 2) throw Error("gaussian_mixture: dim must be at least 2");
  if (opts.separation < 0.0) throw Error("gaussian_mixture: separation must be non-negative");
  if (opts.test_per_class < 1) throw Error("gaussian_mixture: test_per_class must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t classes = profile.num_classes();

  Mat means(classes, opts.dim);
  for (std::size_t c = 0; c < classes; ++c) {
    Vec dir(opts.dim);
    for (double& v : dir) v = normal(rng);
    const Vec unit = l2_normalize(dir);
    for (std::size_t d = 0; d < opts.dim; ++d) means(c, d) = opts.separation * unit[d];
  }

  auto sample = [&](Dataset& out, std::size_t c, std::int64_t count) {
    Vec row(opts.dim);
    for (std::int64_t k = 0; k < count; ++k) {
      for (std::size_t d = 0; d < opts.dim; ++d) row[d] = means(c, d) + normal(rng);
      out.features.append_row(row);
      out.labels.push_back(static_cast<int>(c));
    }
  };

  Dataset train;
  train.split = Split::train;
  train.profile = profile;
  train.features = Mat(0, opts.dim);
  for (std::size_t c = 0; c < classes; ++c) sample(train, c, profile.counts[c]);

  Dataset test;
  test.split = Split::test;
  test.profile.counts.assign(classes, opts.test_per_class);
  test.features = Mat(0, opts.dim);
  for (std::size_t c = 0; c < classes; ++c) sample(test, c, opts.test_per_class);
  return {std::move(train), std::move(test)};
}

Dataset load_csv(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open CSV file " + path.string());
  Dataset data;
  data.split = split;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    auto fail = [&](const std::string& why) {
      return Error(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (cells.size() < 2) throw fail("expected label followed by at least one feature");
    int label = 0;
    try {
      std::size_t used = 0;
      const long v = std::stol(cells[0], &used);
      if (cells[0].find_first_not_of(" \t", used) != std::string::npos || v < 0) throw std::invalid_argument("");
      label = static_cast<int>(v);
    } catch (const std::exception&) {
      throw fail("label '" + cells[0] + "' is not a non-negative integer");
    }
    Vec row(cells.size() - 1);
    for (std::size_t k = 1; k < cells.size(); ++k) {
      try {
        std::size_t used = 0;
        row[k - 1] = std::stod(cells[k], &used);
        if (cells[k].find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw fail("feature '" + cells[k] + "' is not a decimal number");
      }
      if (!std::isfinite(row[k - 1])) throw fail("non-finite feature");
    }
    if (!data.features.empty() && row.size() != data.features.cols()) {
      throw fail("row has " + std::to_string(row.size()) + " features, expected " +
                 std::to_string(data.features.cols()));
    }
    data.features.append_row(row);
    data.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (data.labels.empty()) throw Error("CSV file " + path.string() + " has no rows");
  data.profile.counts = count_labels(data.labels, static_cast<std::size_t>(max_label) + 1);
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write CSV file " + path.string());
  out.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (double v : data.features.row(i)) out << ',' << v;
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

Dataset subsample(const Dataset& data, const ClassProfile& profile, std::uint64_t seed) {
  profile.validate();
  const std::size_t classes = profile.num_classes();
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto y = static_cast<std::size_t>(data.labels[i]);
    if (y < classes) members[y].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < classes; ++c) {
    const auto want = static_cast<std::size_t>(profile.counts[c]);
    if (members[c].size() < want) {
      throw Error("subsample: class " + std::to_string(c) + " has " + std::to_string(members[c].size()) +
                  " instances, profile asks for " + std::to_string(want));
    }
    std::shuffle(members[c].begin(), members[c].end(), rng);
    keep.insert(keep.end(), members[c].begin(), members[c].begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(keep.begin(), keep.end());
  Dataset out;
  out.split = data.split;
  out.profile = profile;
  out.features = Mat(0, data.dim());
  for (std::size_t i : keep) {
    out.features.append_row(data.features.row(i));
    out.labels.push_back(data.labels[i]);
  }
  return out;
}

ViewPair make_views(std::span<const double> feature, double noise_sigma, std::mt19937_64& rng) {
  if (noise_sigma < 0.0) throw Error("make_views: noise_sigma must be non-negative");
  ViewPair views{Vec(feature.begin(), feature.end()), Vec(feature.begin(), feature.end())};
  if (noise_sigma == 0.0) return views;
  std::normal_distribution<double> noise(0.0, noise_sigma);
  for (double& v : views.view_main) v += noise(rng);
  for (double& v : views.view_momentum) v += noise(rng);
  return views;
}

std::vector<std::vector<std::size_t>> batch_iterator(std::size_t dataset_size, std::size_t batch_size,
                                                     std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw Error("batch_iterator: batch_size must be at least 1");
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < dataset_size; start += batch_size) {
    const std::size_t end = std::min(dataset_size, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace lll
