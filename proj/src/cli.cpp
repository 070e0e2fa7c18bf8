#include "lll/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "lll/trainer.hpp"

namespace lll {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string percent(const std::optional<double>& v) { return v ? fmt("%.2f", 100.0 * *v) : "-"; }

std::string csv_cell(const std::optional<double>& v) { return v ? fmt("%.6f", *v) : ""; }

std::optional<std::uint64_t> parse_seed(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text.front() == '-') throw std::invalid_argument("negative");
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw Error(what + ": not a non-negative integer: '" + text + "'");
  return v;
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

// Sweep values as they appear in directory names and sweep.csv.
std::string render_value(const toml::node& node) {
  if (const auto* v = node.as_floating_point()) return fmt("%.10g", v->get());
  if (const auto* v = node.as_integer()) return std::to_string(v->get());
  if (const auto* v = node.as_boolean()) return v->get() ? "true" : "false";
  if (const auto* v = node.as_string()) return v->get();
  throw Error("sweep values must be numbers, booleans or strings");
}

double numeric_value(const toml::node& node) {
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_integer()) return static_cast<double>(v->get());
  if (const auto* v = node.as_boolean()) return v->get() ? 1.0 : 0.0;
  return 0.0;
}

std::string safe_dir_name(std::string s) {
  for (char& c : s) {
    if (c == '/' || c == '\\' || c == ' ' || c == ':') c = '_';
  }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

Summary summary_of(const SweepRow& row) {
  Summary s;
  s.many = row.many;
  s.medium = row.medium;
  s.few = row.few;
  s.all = row.all.value_or(0.0);
  s.train_acc = row.train_acc.value_or(0.0);
  return s;
}

}  // namespace

std::optional<double> median(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

void print_group_table(std::ostream& out, const std::string& label_header,
                       const std::vector<std::pair<std::string, Summary>>& rows) {
  std::size_t width = label_header.size();
  for (const auto& [label, _] : rows) width = std::max(width, label.size());
  auto line = [&](const std::string& label, const std::vector<std::string>& cells) {
    out << std::left << std::setw(static_cast<int>(width)) << label;
    for (const auto& c : cells) out << "  " << std::right << std::setw(7) << c;
    out << '\n';
  };
  line(label_header, {"Many", "Medium", "Few", "All", "Train"});
  for (const auto& [label, s] : rows) {
    line(label, {percent(s.many), percent(s.medium), percent(s.few), percent(s.all), percent(s.train_acc)});
  }
}

int cmd_gradcheck(const std::vector<GradCheckCase>& cases, std::size_t trials, double tolerance,
                  std::ostream& out, std::ostream& err) {
  if (!(tolerance > 0.0)) {
    err << "gradcheck: tolerance must be positive\n";
    return exit_code::usage;
  }
  if (trials == 0) {
    err << "warning: gradcheck with 0 trials checks nothing\n";
    out << "gradcheck: 0 trials, nothing to check: PASS\n";
    return exit_code::ok;
  }
  GradCheckReport report;
  try {
    report = run_gradchecks(cases, trials, tolerance);
  } catch (const NumericalError& e) {
    err << "gradcheck: " << e.what() << '\n';
    return exit_code::numerical;
  }

  std::map<std::string, double> worst;
  for (const auto& o : report.outcomes) {
    auto [it, fresh] = worst.emplace(o.name, o.max_rel_err);
    if (!fresh && (std::isnan(o.max_rel_err) || o.max_rel_err > it->second)) it->second = o.max_rel_err;
  }
  for (const auto& c : cases) {
    const double w = worst.at(c.name);
    out << std::left << std::setw(24) << c.name << " max rel err " << fmt("%.3e", w)
        << (w < tolerance ? "  ok" : "  FAIL") << '\n';
  }
  for (const auto& f : report.failures) {
    err << "FAIL " << f.name << " seed=" << f.seed << " max_rel_err=" << fmt("%.3e", f.max_rel_err);
    for (const auto& t : f.tensors) err << ' ' << t.tensor << '=' << fmt("%.3e", t.rel_err);
    err << '\n';
  }
  out << "gradcheck: " << report.outcomes.size() << " trials over " << cases.size() << " checks, tol "
      << fmt("%.1e", tolerance) << ": " << (report.passed() ? "PASS" : "FAIL") << '\n';
  return report.passed() ? exit_code::ok : exit_code::gradcheck_failed;
}

Config resolve_train_config(const TrainOptions& options) {
  if (!fs::exists(options.config_path)) throw Error("config file not found: " + options.config_path.string());
  Config config = load_config(options.config_path);
  if (const char* env = std::getenv("LLL_SEED"); env != nullptr && *env != '\0') {
    config.run.seed = *parse_seed(env, "LLL_SEED");
  }
  if (options.seed) config.run.seed = *options.seed;
  validate(config);
  return config;
}

fs::path resolve_output_dir(const Config& config, const std::optional<fs::path>& flag) {
  if (flag) return *flag;
  if (!config.run.output_dir.empty()) return config.run.output_dir;
  return fs::path("runs") / timestamp();
}

Summary run_training(const Config& config, const fs::path& output_dir, std::ostream* progress) {
  EpochCallback on_epoch;
  if (progress != nullptr) {
    const std::size_t total = config.optim.epochs;
    on_epoch = [progress, total](const EpochRecord& r) {
      double acc = 0.0;
      for (double a : r.test_acc) acc += a;
      if (!r.test_acc.empty()) acc /= static_cast<double>(r.test_acc.size());
      *progress << "epoch " << r.epoch + 1 << '/' << total << "  lr " << fmt("%.4g", r.lr) << "  loss "
                << fmt("%.5f", r.loss) << "  test " << fmt("%.4f", acc) << '\n';
    };
  }
  const TrainingLog log = train(config, on_epoch);
  return report_from_log(log, output_dir, config.report.svg);
}

int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err) {
  Config config;
  fs::path output_dir;
  try {
    config = resolve_train_config(options);
    output_dir = resolve_output_dir(config, options.output_dir);
  } catch (const Error& e) {
    err << "train: " << e.what() << '\n';
    return exit_code::usage;
  }

  if (options.dry_run) {
    for (const auto& [key, value] : describe(config)) out << key << " = " << value << '\n';
    out << "output_dir = " << output_dir.string() << '\n';
    return exit_code::ok;
  }

  try {
    const Summary summary = run_training(config, output_dir, options.quiet ? nullptr : &err);
    print_group_table(out, "loss", {{std::string(to_string(config.loss.kind)), summary}});
    out << "report written to " << output_dir.string() << '\n';
  } catch (const NumericalError& e) {
    err << "train: " << e.what() << '\n';
    return exit_code::numerical;
  } catch (const std::exception& e) {
    err << "train: " << e.what() << '\n';
    return exit_code::usage;
  }
  return exit_code::ok;
}

SweepSpec load_sweep_spec(const fs::path& path) {
  if (!fs::exists(path)) throw Error("sweep spec not found: " + path.string());
  const toml::table table = load_toml_table(path);
  const fs::path base = path.parent_path();
  auto relative = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  SweepSpec spec;
  for (const auto& [key, _] : table) {
    const std::string_view k = key.str();
    if (k != "base_config" && k != "parameter" && k != "values" && k != "seeds" && k != "output_dir" &&
        k != "overrides") {
      throw Error(path.string() + ": unknown sweep key '" + std::string(k) + "'");
    }
  }
  const auto base_config = table["base_config"].value<std::string>();
  const auto parameter = table["parameter"].value<std::string>();
  const auto* values = table["values"].as_array();
  const auto* seeds = table["seeds"].as_array();
  if (!base_config) throw Error(path.string() + ": base_config (string) is required");
  if (!parameter) throw Error(path.string() + ": parameter (string) is required");
  if (values == nullptr || values->empty()) throw Error(path.string() + ": values must be a non-empty array");
  if (seeds == nullptr || seeds->empty()) throw Error(path.string() + ": seeds must be a non-empty array");

  spec.base_config = relative(*base_config);
  spec.parameter = *parameter;
  spec.values = *values;
  for (const auto& s : *seeds) {
    const auto v = s.value<std::int64_t>();
    if (!v || *v < 0) throw Error(path.string() + ": seeds must be non-negative integers");
    spec.seeds.push_back(static_cast<std::uint64_t>(*v));
  }
  for (const auto& v : spec.values) render_value(v);
  if (const auto* o = table["overrides"].as_table()) spec.overrides = *o;
  spec.output_dir = relative(table["output_dir"].value_or(std::string("runs/sweep-") + timestamp()));
  return spec;
}

Config sweep_cell_config(const SweepSpec& spec, const toml::node& value, std::uint64_t seed) {
  toml::table table = load_toml_table(spec.base_config);
  for (const auto& [key, node] : spec.overrides) set_table_value(table, key.str(), node);
  set_table_value(table, spec.parameter, value);
  Config config = config_from_table(table, spec.base_config.string());
  config.run.seed = seed;
  validate(config);
  return config;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, std::size_t jobs, std::vector<SweepCell>* cells_out,
                                std::ostream* progress) {
  // Resolve every cell up front so config mistakes surface before any training.
  struct Pending {
    SweepCell cell;
    Config config;
    fs::path dir;
    bool resolved = false;
  };
  std::vector<Pending> pending;
  for (const auto& value : spec.values) {
    for (std::uint64_t seed : spec.seeds) {
      Pending p;
      p.cell.value = render_value(value);
      p.cell.numeric_value = numeric_value(value);
      p.cell.seed = seed;
      p.dir = spec.output_dir / safe_dir_name(spec.parameter + "=" + p.cell.value) / ("seed_" + std::to_string(seed));
      try {
        p.config = sweep_cell_config(spec, value, seed);
        p.resolved = true;
      } catch (const std::exception& e) {
        p.cell.message = e.what();
      }
      pending.push_back(std::move(p));
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < pending.size(); i = next++) {
      Pending& p = pending[i];
      if (!p.resolved) continue;
      try {
        p.cell.summary = run_training(p.config, p.dir);
        p.cell.ok = true;
      } catch (const std::exception& e) {
        p.cell.message = e.what();
      }
      if (progress != nullptr) {
        const std::lock_guard lock(log_mutex);
        *progress << spec.parameter << '=' << p.cell.value << " seed " << p.cell.seed << ": "
                  << (p.cell.ok ? "ok" : "failed: " + p.cell.message) << '\n';
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, pending.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Aggregate in value order; the stable sort keeps the listed order for equal values.
  std::vector<SweepRow> rows;
  std::map<std::string, std::size_t> row_of;
  for (const auto& p : pending) {
    if (row_of.emplace(p.cell.value, rows.size()).second) {
      rows.push_back({p.cell.value, p.cell.numeric_value, {}, {}, {}, {}, {}, 0});
    }
  }
  for (auto& row : rows) {
    std::vector<double> many, medium, few, all, train_acc;
    for (const auto& p : pending) {
      if (p.cell.value != row.value || !p.cell.ok) continue;
      const Summary& s = p.cell.summary;
      if (s.many) many.push_back(*s.many);
      if (s.medium) medium.push_back(*s.medium);
      if (s.few) few.push_back(*s.few);
      all.push_back(s.all);
      train_acc.push_back(s.train_acc);
      ++row.succeeded;
    }
    row.many = median(many);
    row.medium = median(medium);
    row.few = median(few);
    row.all = median(all);
    row.train_acc = median(train_acc);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.numeric_value < b.numeric_value; });

  fs::create_directories(spec.output_dir);
  std::ostringstream csv;
  csv << "value,many,medium,few,all,train_acc\n";
  for (const auto& r : rows) {
    csv << r.value << ',' << csv_cell(r.many) << ',' << csv_cell(r.medium) << ',' << csv_cell(r.few) << ','
        << csv_cell(r.all) << ',' << csv_cell(r.train_acc) << '\n';
  }
  write_text(spec.output_dir / "sweep.csv", csv.str());

  std::ostringstream cells_csv;
  cells_csv << "value,seed,status,many,medium,few,all,train_acc,message\n";
  for (const auto& p : pending) {
    const Summary& s = p.cell.summary;
    std::string message = p.cell.message;
    std::replace(message.begin(), message.end(), ',', ';');
    std::replace(message.begin(), message.end(), '\n', ' ');
    cells_csv << p.cell.value << ',' << p.cell.seed << ',' << (p.cell.ok ? "ok" : "failed") << ','
              << (p.cell.ok ? csv_cell(s.many) + ',' + csv_cell(s.medium) + ',' + csv_cell(s.few) + ',' +
                                  csv_cell(s.all) + ',' + csv_cell(s.train_acc)
                            : std::string(",,,,"))
              << ',' << message << '\n';
  }
  write_text(spec.output_dir / "cells.csv", cells_csv.str());

  if (cells_out != nullptr) {
    cells_out->clear();
    for (auto& p : pending) cells_out->push_back(std::move(p.cell));
  }
  return rows;
}

int cmd_sweep(const fs::path& spec_path, std::size_t jobs, std::ostream& out, std::ostream& err) {
  SweepSpec spec;
  try {
    spec = load_sweep_spec(spec_path);
  } catch (const std::exception& e) {
    err << "sweep: " << e.what() << '\n';
    return exit_code::usage;
  }
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;
  try {
    rows = run_sweep(spec, jobs, &cells, &err);
  } catch (const std::exception& e) {
    err << "sweep: " << e.what() << '\n';
    return exit_code::usage;
  }
  std::vector<std::pair<std::string, Summary>> table;
  for (const auto& r : rows) table.emplace_back(r.value, summary_of(r));
  print_group_table(out, spec.parameter, table);

  const auto failed = std::count_if(cells.begin(), cells.end(), [](const SweepCell& c) { return !c.ok; });
  if (failed > 0) err << "sweep: " << failed << " of " << cells.size() << " cells failed, see cells.csv\n";
  out << "sweep written to " << spec.output_dir.string() << '\n';
  return failed == static_cast<std::ptrdiff_t>(cells.size()) ? exit_code::numerical : exit_code::ok;
}

int cmd_report(const fs::path& log_dir, std::ostream& out, std::ostream& err) {
  try {
    const fs::path log_path = log_dir / "log.json";
    if (!fs::exists(log_path)) throw Error("no training log at " + log_path.string());
    const TrainingLog log = log_from_json(read_file(log_path));
    const Summary summary = report_from_log(log, log_dir, fs::exists(log_dir / "gap.svg"));
    std::string label = "run";
    for (const auto& [k, v] : summary.config) {
      if (k == "loss.kind") label = v;
    }
    print_group_table(out, "loss", {{label, summary}});
    out << "slope " << fmt("%.6f", summary.fit_slope) << "  intercept " << fmt("%.6f", summary.fit_intercept)
        << '\n';
  } catch (const std::exception& e) {
    err << "report: " << e.what() << '\n';
    return exit_code::usage;
  }
  return exit_code::ok;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Long-tailed loss lab: losses, gradient checks, training runs and sweeps."};
  app.require_subcommand(1);

  std::size_t trials = 20;
  double tolerance = 1e-4;
  std::vector<std::string> only;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  gradcheck->add_option("--trials", trials, "Random instances per check")->capture_default_str();
  gradcheck->add_option("--tol", tolerance, "Relative error tolerance")->capture_default_str();
  gradcheck->add_option("--loss", only, "Restrict to the named checks (repeatable)");

  TrainOptions train_opts;
  std::string seed_text;
  std::string out_dir;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration and write its report");
  train_cmd->add_option("--config", train_opts.config_path, "TOML config")->required();
  train_cmd->add_option("--seed", seed_text, "Override run.seed (beats LLL_SEED)");
  train_cmd->add_option("--out", out_dir, "Output directory (default runs/<timestamp>)");
  train_cmd->add_flag("--dry-run", train_opts.dry_run, "Validate and print settings without training");
  train_cmd->add_flag("-q,--quiet", train_opts.quiet, "No per-epoch progress");

  std::string spec_path;
  std::size_t jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Run a value x seed grid and aggregate medians");
  sweep->add_option("--spec", spec_path, "Sweep spec (TOML)")->required();
  sweep->add_option("--jobs", jobs, "Cells run concurrently")->capture_default_str();

  std::string log_dir;
  auto* report = app.add_subcommand("report", "Regenerate report files from a run directory");
  report->add_option("--log", log_dir, "Run directory containing log.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::ok : exit_code::usage;
  }

  if (*gradcheck) {
    std::vector<GradCheckCase> cases = standard_gradchecks();
    if (!only.empty()) {
      for (const auto& name : only) {
        if (std::none_of(cases.begin(), cases.end(), [&](const GradCheckCase& c) { return c.name == name; })) {
          err << "gradcheck: unknown check '" << name << "'\n";
          return exit_code::usage;
        }
      }
      std::erase_if(cases, [&](const GradCheckCase& c) {
        return std::find(only.begin(), only.end(), c.name) == only.end();
      });
    }
    return cmd_gradcheck(cases, trials, tolerance, out, err);
  }
  if (*train_cmd) {
    try {
      if (!seed_text.empty()) train_opts.seed = parse_seed(seed_text, "--seed");
    } catch (const Error& e) {
      err << "train: " << e.what() << '\n';
      return exit_code::usage;
    }
    if (!out_dir.empty()) train_opts.output_dir = fs::path(out_dir);
    return cmd_train(train_opts, out, err);
  }
  if (*sweep) return cmd_sweep(spec_path, jobs, out, err);
  return cmd_report(log_dir, out, err);
}

}  // namespace lll
