#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <toml++/toml.hpp>

#include "lll/losses.hpp"
#include "lll/model.hpp"


namespace lll {

enum class LossKind { ce, summed, paco, cibl, ncibl };
enum class ProfileKind { exponential, pareto };
enum class ScheduleKind { step, cosine };

std::string_view to_string(LossKind kind);
std::string_view to_string(ProfileKind kind);
std::string_view to_string(ScheduleKind kind);

struct DataConfig {
  ProfileKind profile = ProfileKind::exponential;
  std::size_t num_classes = 10;
  std::int64_t n_max = 500;
  double imbalance = 100.0;
  std::int64_t n_min = 5;
  std::size_t dim = 16;
  double separation = 3.0;
  double noise_sigma = 0.1;
  std::int64_t test_per_class = 100;
  std::optional<std::uint64_t> seed;  // defaults to run.seed
  std::string csv;       // optional training pool, subsampled to the profile
  std::string test_csv;  // required with csv
};

struct ModelConfig {
  std::vector<std::size_t> encoder_widths{64, 64};
  std::size_t embedding_dim = 32;
  HeadKind head_kind = HeadKind::linear;
  double gamma_t = 0.05;
};

struct LossConfig {
  LossKind kind = LossKind::cibl;
  double lambda_ce = 1.0;
  double lambda_scl = 0.03;
  double alpha = 1.0;
  double beta = 1.0;
  double tau = 0.05;
};

struct BankConfig {
  std::size_t queue_capacity = 1024;
  double momentum_m = kDefaultMomentum;
};

struct OptimConfig {
  double base_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 128;
  std::size_t epochs = 50;
  ScheduleKind schedule = ScheduleKind::cosine;
  std::size_t warmup_epochs = 0;
  std::vector<std::size_t> milestones;
  std::vector<double> factors;  // one per milestone; empty means 0.1 each
};

struct ReportConfig {
  std::int64_t many_threshold = 100;
  std::int64_t few_threshold = 20;
  bool svg = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
};

struct Config {
  DataConfig data;
  ModelConfig model;
  LossConfig loss;
  BankConfig bank;
  OptimConfig optim;
  ReportConfig report;
  RunConfig run;

  /// Head actually used: ncibl always trains a cosine classifier.
  HeadKind effective_head() const {
    return loss.kind == LossKind::ncibl ? HeadKind::cosine : model.head_kind;
  }
  LossWeights weights() const {
    return {loss.lambda_ce, loss.lambda_scl, loss.alpha, loss.beta, loss.tau, model.gamma_t};
  }
};

/// Parses TOML text. Errors carry `origin:line:column`.
Config parse_config(std::string_view toml_text, std::string_view origin = "<config>");
Config load_config(const std::filesystem::path& path);

/// Reads a TOML file into a table, with line diagnostics on failure.
toml::table load_toml_table(const std::filesystem::path& path);
Config config_from_table(const toml::table& table, std::string_view origin);

/// Sets `dotted_key` (e.g. "loss.lambda_scl") in `table`, replacing any existing value.
void set_table_value(toml::table& table, std::string_view dotted_key, const toml::node& value);

/// Throws Error naming the offending field when a setting is out of range.
void validate(const Config& config);

/// Flat, ordered `section.key` -> value rendering of every setting.
std::vector<std::pair<std::string, std::string>> describe(const Config& config);

}  // namespace lll
