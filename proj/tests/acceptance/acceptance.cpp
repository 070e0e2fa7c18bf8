// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lll/cli.hpp"
#include "lll/contrastive_bank.hpp"
#include "lll/data_gen.hpp"
#include "lll/gradcheck.hpp"
#include "lll/losses.hpp"
#include "lll/metrics_report.hpp"

namespace fs = std::filesystem;
using namespace lll;

namespace {

using Clock = std::chrono::steady_clock;

const fs::path kConfig = fs::path(LLL_CONFIG_DIR) / "synthetic_lt.toml";
const fs::path kWork = fs::absolute("acceptance_runs");
const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

struct Verdict {
  enum Kind { pass, fail, not_applicable } kind = fail;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v, const char* pattern = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string pct(double v) { return num(100.0 * v, "%.1f"); }

double max_abs(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Sweep helpers ------------------------------------------------------------------------

struct SweepRun {
  std::vector<SweepRow> rows;
  std::vector<SweepCell> cells;
  double seconds = 0.0;
};

SweepRun sweep(const std::string& name, const std::string& parameter, toml::array values,
               toml::table overrides = {}) {
  SweepSpec spec;
  spec.base_config = kConfig;
  spec.parameter = parameter;
  spec.values = std::move(values);
  spec.seeds = kSeeds;
  spec.overrides = std::move(overrides);
  spec.output_dir = kWork / name;
  SweepRun run;
  const auto start = Clock::now();
  run.rows = run_sweep(spec, 1, &run.cells);
  run.seconds = seconds_since(start);
  return run;
}

std::map<std::uint64_t, Summary> cells_at(const SweepRun& run, double value) {
  std::map<std::uint64_t, Summary> out;
  for (const auto& c : run.cells) {
    if (c.ok && std::abs(c.numeric_value - value) < 1e-12) out[c.seed] = c.summary;
  }
  return out;
}

std::string cell_failures(const SweepRun& run) {
  std::string out;
  for (const auto& c : run.cells) {
    if (!c.ok) out += " [" + c.value + "/seed " + std::to_string(c.seed) + ": " + c.message + "]";
  }
  return out;
}

// At most one step against `direction` (+1 up, -1 down), and that step no larger than `slack`.
bool monotone_with_slack(const std::vector<double>& v, int direction, double slack) {
  int inversions = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double step = direction * (v[i] - v[i - 1]);
    if (step < 0.0) {
      ++inversions;
      if (-step > slack + 1e-12) return false;
    }
  }
  return inversions <= 1;
}

std::string series(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " -> " : "") + pct(v[i]);
  return s;
}

std::optional<double> median_of(const std::map<std::uint64_t, Summary>& cells,
                                const std::function<double(const Summary&)>& field) {
  std::vector<double> v;
  for (const auto& [seed, s] : cells) v.push_back(field(s));
  return median(v);
}

// Criteria -----------------------------------------------------------------------------

Verdict gradient_suite() {
  const auto start = Clock::now();
  const GradCheckReport report = run_gradchecks(standard_gradchecks(), 20, 1e-4, 1e-5);
  const double secs = seconds_since(start);
  double worst = 0.0;
  for (const auto& o : report.outcomes) worst = std::isnan(o.max_rel_err) ? NAN : std::max(worst, o.max_rel_err);
  Verdict v;
  v.kind = report.passed() && secs < 10.0 ? Verdict::pass : Verdict::fail;
  v.detail = std::to_string(report.outcomes.size()) + " trials, worst rel err " + num(worst, "%.2e") + ", " +
             num(secs, "%.2f") + " s";
  for (const auto& f : report.failures) v.detail += "; " + f.name + " seed " + std::to_string(f.seed);
  return v;
}

Verdict algebraic_identities() {
  std::mt19937_64 rng(2024);
  double nce_margin = 0.0, to_ce = 0.0, to_scl = 0.0, shift = 0.0, rescale = 0.0;
  for (int t = 0; t < 100; ++t) {
    const LossInstance i = random_loss_instance(rng);
    const LossResult a = nce_loss(i.features, i.theta, i.labels, i.profile, i.weights.gamma_t);
    const LossResult b = nce_margin_form(i.features, i.theta, i.labels, i.profile, i.weights.gamma_t);
    nce_margin = std::max(nce_margin, max_abs(a.per_instance_loss, b.per_instance_loss));

    const LossResult ce = balanced_ce(i.features, i.theta, i.labels, i.profile);
    LossWeights w = i.weights;
    w.lambda_scl = 0.0;
    to_ce = std::max(to_ce, max_abs(cibl_loss(i.inputs(), i.theta, i.bank, i.profile, w).per_instance_loss,
                                    ce.per_instance_loss));
    w = i.weights;
    w.lambda_ce = 0.0;  // every instance has its own key as a positive
    to_scl = std::max(to_scl, max_abs(cibl_loss(i.inputs(), i.theta, i.bank, i.profile, w).per_instance_loss,
                                      supcon(i.embeddings, i.bank, i.labels, w.tau).per_instance_loss));

    // Per-instance logit shift through an extra feature paired with a classifier row of ones.
    Mat xs(i.features.rows(), i.features.cols() + 1);
    Mat ts(i.theta.rows() + 1, i.theta.cols(), 1.0);
    std::normal_distribution<double> n(0.0, 20.0);
    for (std::size_t r = 0; r < xs.rows(); ++r) {
      for (std::size_t d = 0; d < i.features.cols(); ++d) xs(r, d) = i.features(r, d);
      xs(r, i.features.cols()) = n(rng);
    }
    for (std::size_t d = 0; d < i.theta.rows(); ++d) {
      for (std::size_t c = 0; c < i.theta.cols(); ++c) ts(d, c) = i.theta(d, c);
    }
    shift = std::max(shift, max_abs(balanced_ce(xs, ts, i.labels, i.profile).per_instance_loss,
                                    ce.per_instance_loss));
    ClassProfile scaled = i.profile;
    for (auto& c : scaled.counts) c *= 13;
    rescale = std::max(rescale, max_abs(balanced_ce(i.features, i.theta, i.labels, scaled).per_instance_loss,
                                        ce.per_instance_loss));
  }
  const double worst = std::max({nce_margin, to_ce, to_scl, shift, rescale});
  Verdict v;
  v.kind = worst <= 1e-12 ? Verdict::pass : Verdict::fail;
  v.detail = "max |diff|: nce vs margin form " + num(nce_margin, "%.1e") + ", cibl->ce " + num(to_ce, "%.1e") + ", cibl->scl " +
             num(to_scl, "%.1e") + ", shift " + num(shift, "%.1e") + ", rescale " + num(rescale, "%.1e");
  return v;
}

Verdict bank_semantics() {
  std::mt19937_64 rng(77);
  bool fifo_ok = true;
  for (int trial = 0; trial < 200 && fifo_ok; ++trial) {
    const std::size_t capacity = 1 + rng() % 16;
    KeyQueue q(capacity);
    std::deque<int> reference;
    int next = 0;
    for (int push = 0; push < 40; ++push) {
      const std::size_t n = rng() % 9;
      Mat keys(n, 2);
      std::vector<int> labels(n);
      for (std::size_t k = 0; k < n; ++k, ++next) {
        keys(k, 0) = std::cos(next);
        keys(k, 1) = std::sin(next);
        labels[k] = next;
        reference.push_back(next);
        if (reference.size() > capacity) reference.pop_front();
      }
      q.enqueue(keys, labels);
      const Mat held = q.keys();
      fifo_ok = fifo_ok && q.labels() == std::vector<int>(reference.begin(), reference.end()) &&
                q.total_pushed() == q.total_evicted() + q.size();
      for (std::size_t r = 0; r < held.rows() && fifo_ok; ++r) fifo_ok = held(r, 0) == std::cos(reference[r]);
    }
  }

  bool ema_ok = true;
  {
    std::mt19937_64 init(5);
    const ModelParams main = init_model({6, {8}, 4, 3}, init);
    MomentumParams shadow = MomentumParams::copy_of(init_model({6, {8}, 4, 3}, init), 0.95);
    auto gap = [&] {
      double g = 0.0;
      for (std::size_t l = 0; l < main.encoder.size(); ++l) {
        g = std::max(g, max_abs(main.encoder[l].weight.values(), shadow.encoder[l].weight.values()));
      }
      for (std::size_t l = 0; l < main.projection.size(); ++l) {
        g = std::max(g, max_abs(main.projection[l].weight.values(), shadow.projection[l].weight.values()));
      }
      return g;
    };
    double prev = gap();
    for (int step = 0; step < 100; ++step) {
      ema_update(main, shadow);
      const double now = gap();
      ema_ok = ema_ok && std::abs(now - 0.95 * prev) <= 1e-9 * prev;
      prev = now;
    }
  }

  bool sets_ok = true;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t batch = 1 + rng() % 8;
    const std::size_t queued = rng() % 12;
    const int classes = 1 + static_cast<int>(rng() % 5);
    std::vector<int> bl(batch), ql(queued);
    for (int& y : bl) y = static_cast<int>(rng() % classes);
    for (int& y : ql) y = static_cast<int>(rng() % classes);
    const KeyBank bank(Mat(batch, 2, 0.5), bl, Mat(queued, 2, 0.5), ql);
    for (std::size_t i = 0; i < batch; ++i) {
      const IndexSets s = positive_and_all_sets(bank, i, bl[i]);
      std::set<std::size_t> all, pos;
      for (std::size_t k = 0; k < batch + queued; ++k) {
        all.insert(k);
        if ((k < batch ? bl[k] : ql[k - batch]) == bl[i]) pos.insert(k);
      }
      sets_ok = sets_ok && std::set<std::size_t>(s.all.begin(), s.all.end()) == all &&
                std::set<std::size_t>(s.positives.begin(), s.positives.end()) == pos &&
                s.all.size() == batch + queued;
    }
  }
  Verdict v;
  v.kind = fifo_ok && ema_ok && sets_ok ? Verdict::pass : Verdict::fail;
  v.detail = std::string("fifo ") + (fifo_ok ? "ok" : "MISMATCH") + ", ema " + (ema_ok ? "ok" : "MISMATCH") +
             ", index sets " + (sets_ok ? "ok" : "MISMATCH");
  return v;
}

Verdict profile_generators() {
  const ClassProfile e = exponential_profile(100, 500, 100.0);
  const ClassProfile p = pareto_profile(1000, 1280, 5);
  const bool mono_e = std::is_sorted(e.counts.rbegin(), e.counts.rend());
  const bool mono_p = std::is_sorted(p.counts.rbegin(), p.counts.rend());
  Verdict v;
  v.kind = e.counts.front() == 500 && e.counts.back() == 5 && p.counts.front() == 1280 && p.counts.back() == 5 &&
                   mono_e && mono_p
               ? Verdict::pass
               : Verdict::fail;
  v.detail = "exponential " + std::to_string(e.counts.front()) + ".." + std::to_string(e.counts.back()) +
             ", pareto " + std::to_string(p.counts.front()) + ".." + std::to_string(p.counts.back()) +
             (mono_e && mono_p ? ", both non-increasing" : ", NOT monotone");
  return v;
}

Verdict determinism() {
  auto run = [](const fs::path& out) {
    const std::string cmd = std::string("\"") + LLL_CLI_PATH + "\" train --config \"" + kConfig.string() +
                            "\" --out \"" + out.string() + "\" -q > /dev/null";
    return std::system(cmd.c_str());
  };
  const fs::path a = kWork / "det_a";
  const fs::path b = kWork / "det_b";
  Verdict v;
  if (run(a) != 0 || run(b) != 0) {
    v.detail = "train invocation failed";
    return v;
  }
  const bool epochs_same = read_file(a / "epochs.csv") == read_file(b / "epochs.csv");
  const bool summary_same = read_file(a / "summary.json") == read_file(b / "summary.json");
  v.kind = epochs_same && summary_same ? Verdict::pass : Verdict::fail;
  v.detail = std::string("epochs.csv ") + (epochs_same ? "identical" : "DIFFERS") + ", summary.json " +
             (summary_same ? "identical" : "DIFFERS");
  return v;
}

void report(int id, const std::string& title, const Verdict& v, int& failures) {
  const char* tag = v.kind == Verdict::pass ? "PASS" : v.kind == Verdict::fail ? "FAIL" : "N/A ";
  if (v.kind == Verdict::fail) ++failures;
  std::cout << "criterion " << id << ": " << tag << "  " << title << "  (" << v.detail << ")" << std::endl;
}

}  // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  int failures = 0;

  report(1, "gradient suite", gradient_suite(), failures);
  report(2, "algebraic identities", algebraic_identities(), failures);
  report(3, "bank semantics", bank_semantics(), failures);
  report(4, "profile generators", profile_generators(), failures);
  report(5, "absolute benchmark accuracies",
         {Verdict::not_applicable,
          "not reproducible at desk scale; substituted by criteria 6-9"},
         failures);

  // Criterion 6: lambda_scl sweep on the CIBL base config.
  const SweepRun lam = sweep("lambda_scl", "loss.lambda_scl", toml::array{0.0, 0.01, 0.05, 0.10});
  {
    std::vector<double> few, many;
    bool complete = true;
    for (const auto& r : lam.rows) {
      complete = complete && r.few && r.many && r.succeeded == kSeeds.size();
      few.push_back(r.few.value_or(NAN));
      many.push_back(r.many.value_or(NAN));
    }
    Verdict v;
    const bool few_ok = complete && monotone_with_slack(few, +1, 0.01);
    const bool many_ok = complete && monotone_with_slack(many, -1, 0.01);
    v.kind = few_ok && many_ok && lam.seconds < 600.0 ? Verdict::pass : Verdict::fail;
    v.detail = "lambda 0, .01, .05, .10: median Few " + series(few) + ", Many " + series(many) + "; " +
               num(lam.seconds, "%.0f") + " s" + cell_failures(lam);
    report(6, "head-to-tail tradeoff", v, failures);
  }

  // Criterion 7: CIBL (lambda_scl 0.05, cells shared with criterion 6) against balanced CE.
  {
    const SweepRun ce = sweep("ce", "loss.kind", toml::array{"ce"});
    std::map<std::uint64_t, Summary> ce_cells;
    for (const auto& c : ce.cells) {
      if (c.ok) ce_cells[c.seed] = c.summary;
    }
    const auto cibl = cells_at(lam, 0.05);
    int wins = 0;
    std::string per_seed;
    for (std::uint64_t s : kSeeds) {
      if (!cibl.count(s) || !ce_cells.count(s)) continue;
      const double a = cibl.at(s).few.value_or(NAN), b = ce_cells.at(s).few.value_or(NAN);
      wins += a >= b ? 1 : 0;
      per_seed += (per_seed.empty() ? "" : ", ") + pct(a) + " vs " + pct(b);
    }
    Verdict v;
    v.kind = wins >= 3 ? Verdict::pass : Verdict::fail;
    v.detail = "CIBL Few >= CE Few in " + std::to_string(wins) + "/5 seeds (" + per_seed + ")" + cell_failures(ce);
    report(7, "CIBL vs balanced CE on Few", v, failures);
  }

  // Criterion 8: NCIBL temperature.
  {
    toml::table overrides;
    overrides.insert("loss.kind", "ncibl");
    const SweepRun gam = sweep("gamma", "model.gamma_t", toml::array{0.05, 1.0}, overrides);
    const auto all = [](const Summary& s) { return s.all; };
    const auto low = median_of(cells_at(gam, 0.05), all);
    const auto high = median_of(cells_at(gam, 1.0), all);
    Verdict v;
    v.kind = low && high && *high < *low ? Verdict::pass : Verdict::fail;
    v.detail = "median All gamma=1 " + (high ? pct(*high) : "-") + " vs gamma=0.05 " + (low ? pct(*low) : "-") +
               cell_failures(gam);
    report(8, "NCIBL temperature ablation", v, failures);
  }

  // Criterion 9: overfit gap fit, 150 vs 50 epochs (50-epoch cells shared with criterion 6).
  {
    const SweepRun longer = sweep("epochs150", "optim.epochs", toml::array{150});
    const auto at50 = cells_at(lam, 0.05);
    const auto at150 = cells_at(longer, 150.0);
    const auto slope = [](const Summary& s) { return s.fit_slope; };
    const auto icpt = [](const Summary& s) { return s.fit_intercept; };
    const auto s50 = median_of(at50, slope), s150 = median_of(at150, slope);
    const auto i50 = median_of(at50, icpt), i150 = median_of(at150, icpt);
    Verdict v;
    v.kind = at50.size() == kSeeds.size() && at150.size() == kSeeds.size() && *s150 >= *s50 && *i150 >= *i50
                 ? Verdict::pass
                 : Verdict::fail;
    v.detail = "median slope " + num(s50.value_or(NAN), "%.5f") + " -> " + num(s150.value_or(NAN), "%.5f") +
               ", intercept " + num(i50.value_or(NAN), "%.5f") + " -> " + num(i150.value_or(NAN), "%.5f") +
               cell_failures(longer);
    report(9, "overfit gap grows with epochs", v, failures);
  }

  report(10, "determinism", determinism(), failures);

  std::cout << (failures == 0 ? "all criteria met" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
