#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lll/config.hpp"
#include "lll/gradcheck.hpp"
#include "lll/metrics_report.hpp"

namespace lll {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int numerical = 2;
inline constexpr int gradcheck_failed = 3;
}  // namespace exit_code

/// Runs the cases, prints one line per failure plus a summary. 0 when all pass, 3 otherwise.
int cmd_gradcheck(const std::vector<GradCheckCase>& cases, std::size_t trials, double tolerance,
                  std::ostream& out, std::ostream& err);

struct TrainOptions {
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;  // beats LLL_SEED, which beats the config
  std::optional<std::filesystem::path> output_dir;
  bool dry_run = false;
  bool quiet = false;
};

/// Config file + overrides as train would resolve them. Throws Error on bad input.
Config resolve_train_config(const TrainOptions& options);
std::filesystem::path resolve_output_dir(const Config& config, const std::optional<std::filesystem::path>& flag);

/// Trains, writes the report into `output_dir`, returns the final summary.
Summary run_training(const Config& config, const std::filesystem::path& output_dir, std::ostream* progress = nullptr);

int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err);

struct SweepSpec {
  std::filesystem::path base_config;
  std::string parameter;           // dotted path such as loss.lambda_scl
  toml::array values;
  std::vector<std::uint64_t> seeds;
  toml::table overrides;           // dotted keys applied to the base config first
  std::filesystem::path output_dir;
};

SweepSpec load_sweep_spec(const std::filesystem::path& path);

struct SweepCell {
  std::string value;
  double numeric_value = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string message;
  Summary summary;
};

struct SweepRow {
  std::string value;
  double numeric_value = 0.0;
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  std::optional<double> all;
  std::optional<double> train_acc;
  std::size_t succeeded = 0;
};

/// Resolved config for one sweep cell.
Config sweep_cell_config(const SweepSpec& spec, const toml::node& value, std::uint64_t seed);

/// Runs every value x seed cell (up to `jobs` at once), aggregates medians per value and
/// writes sweep.csv and cells.csv. Failed cells are recorded and skipped in the medians.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, std::size_t jobs, std::vector<SweepCell>* cells = nullptr,
                                std::ostream* progress = nullptr);

int cmd_sweep(const std::filesystem::path& spec_path, std::size_t jobs, std::ostream& out, std::ostream& err);

int cmd_report(const std::filesystem::path& log_dir, std::ostream& out, std::ostream& err);

/// Median; mean of the middle pair for even sizes. Empty input gives nullopt.
std::optional<double> median(std::vector<double> values);

/// Many / Medium / Few / All / Train table in percent.
void print_group_table(std::ostream& out, const std::string& label_header,
                       const std::vector<std::pair<std::string, Summary>>& rows);

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace lll
