#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lll/class_profile.hpp"
#include "lll/trainer.hpp"

namespace lll {

enum class Group { many, medium, few };

struct GroupThresholds {
  std::int64_t many = 100;  // Many: n > many
  std::int64_t few = 20;    // Few: n <= few; Medium in between
};

Group group_of(std::int64_t count, const GroupThresholds& t);

/// Group means; a group with no member classes is absent rather than zero.
struct GroupReport {
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  double all = 0.0;
  std::vector<Group> membership;  // per class
};

GroupReport group_accuracy(std::span<const double> per_class_acc, const ClassProfile& profile,
                           const GroupThresholds& thresholds = {});

struct OverfitFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y = slope x + intercept via the normal equations.
OverfitFit fit_line(std::span<const double> x, std::span<const double> y);

/// Classes ordered by descending training count (ties by index), rank 0 first.
std::vector<std::size_t> frequency_order(const ClassProfile& profile);

/// Fit of the final-epoch train - test accuracy gap against frequency rank.
OverfitFit overfit_fit(const TrainingLog& log, const ClassProfile& profile);

/// Final-epoch results as written to summary.json.
struct Summary {
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  double all = 0.0;
  double train_acc = 0.0;
  double fit_slope = 0.0;
  double fit_intercept = 0.0;
  std::size_t epochs = 0;
  std::vector<std::pair<std::string, std::string>> config;

  friend bool operator==(const Summary&, const Summary&) = default;
};

Summary make_summary(const TrainingLog& log, const GroupReport& groups, const OverfitFit& fit);
std::string summary_to_json(const Summary& summary);
Summary summary_from_json(const std::string& text);

std::string log_to_json(const TrainingLog& log);
TrainingLog log_from_json(const std::string& text);

std::string read_file(const std::filesystem::path& path);

/// Writes epochs.csv, per_class.csv, summary.json, log.json and (optionally) gap.svg.
void emit_report(const TrainingLog& log, const GroupReport& groups, const OverfitFit& fit,
                 const std::filesystem::path& output_dir, bool write_svg = true);

/// Group report + fit for the final epoch of `log`, then emit_report. Returns the summary.
Summary report_from_log(const TrainingLog& log, const std::filesystem::path& output_dir,
                        bool write_svg = true);

}  // namespace lll
