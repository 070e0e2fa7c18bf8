#include "lll/metrics_report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lll {

using json = nlohmann::ordered_json;

Group group_of(std::int64_t count, const GroupThresholds& t) {
  if (count > t.many) return Group::many;
  if (count > t.few) return Group::medium;
  return Group::few;
}

GroupReport group_accuracy(std::span<const double> per_class_acc, const ClassProfile& profile,
                           const GroupThresholds& thresholds) {
  if (per_class_acc.size() != profile.num_classes()) {
    throw Error("group_accuracy: " + std::to_string(per_class_acc.size()) + " accuracies for " +
                std::to_string(profile.num_classes()) + " classes");
  }
  GroupReport report;
  double sums[3] = {0.0, 0.0, 0.0};
  std::size_t counts[3] = {0, 0, 0};
  double total = 0.0;
  for (std::size_t c = 0; c < per_class_acc.size(); ++c) {
    const Group g = group_of(profile.counts[c], thresholds);
    report.membership.push_back(g);
    sums[static_cast<int>(g)] += per_class_acc[c];
    ++counts[static_cast<int>(g)];
    total += per_class_acc[c];
  }
  auto mean = [&](Group g) -> std::optional<double> {
    const int k = static_cast<int>(g);
    if (counts[k] == 0) return std::nullopt;
    return sums[k] / static_cast<double>(counts[k]);
  };
  report.many = mean(Group::many);
  report.medium = mean(Group::medium);
  report.few = mean(Group::few);
  report.all = per_class_acc.empty() ? 0.0 : total / static_cast<double>(per_class_acc.size());
  return report;
}

OverfitFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("fit_line: length mismatch");
  if (x.size() < 2) throw Error("fit_line: need at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error("fit_line: regressor is constant");
  OverfitFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

std::vector<std::size_t> frequency_order(const ClassProfile& profile) {
  std::vector<std::size_t> order(profile.num_classes());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return profile.counts[a] > profile.counts[b];
  });
  return order;
}

OverfitFit overfit_fit(const TrainingLog& log, const ClassProfile& profile) {
  if (profile.num_classes() < 2) throw Error("overfit_fit: need at least 2 classes");
  if (log.epochs.empty()) throw Error("overfit_fit: training log has no epochs");
  const EpochRecord& last = log.epochs.back();
  if (last.train_acc.size() != profile.num_classes() || last.test_acc.size() != profile.num_classes()) {
    throw Error("overfit_fit: final epoch lacks per-class train/test accuracies");
  }
  const auto order = frequency_order(profile);
  Vec x(order.size());
  Vec y(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    x[r] = static_cast<double>(r);
    y[r] = last.train_acc[order[r]] - last.test_acc[order[r]];
  }
  return fit_line(x, y);
}

Summary make_summary(const TrainingLog& log, const GroupReport& groups, const OverfitFit& fit) {
  Summary s;
  s.many = groups.many;
  s.medium = groups.medium;
  s.few = groups.few;
  s.all = groups.all;
  if (!log.epochs.empty()) {
    const Vec& tr = log.epochs.back().train_acc;
    s.train_acc = tr.empty() ? 0.0 : std::accumulate(tr.begin(), tr.end(), 0.0) / static_cast<double>(tr.size());
  }
  s.fit_slope = fit.slope;
  s.fit_intercept = fit.intercept;
  s.epochs = log.epochs.size();
  s.config = log.config_echo;
  return s;
}

std::string summary_to_json(const Summary& s) {
  json j = json::object();
  j["all"] = s.all;
  if (s.many) j["many"] = *s.many;
  if (s.medium) j["medium"] = *s.medium;
  if (s.few) j["few"] = *s.few;
  j["train_acc"] = s.train_acc;
  j["fit_slope"] = s.fit_slope;
  j["fit_intercept"] = s.fit_intercept;
  j["epochs"] = s.epochs;
  for (const auto& [k, v] : s.config) j["config." + k] = v;
  return j.dump(2) + "\n";
}

Summary summary_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("summary.json: ") + e.what());
  }
  Summary s;
  s.all = j.at("all").get<double>();
  if (j.contains("many")) s.many = j["many"].get<double>();
  if (j.contains("medium")) s.medium = j["medium"].get<double>();
  if (j.contains("few")) s.few = j["few"].get<double>();
  s.train_acc = j.at("train_acc").get<double>();
  s.fit_slope = j.at("fit_slope").get<double>();
  s.fit_intercept = j.at("fit_intercept").get<double>();
  s.epochs = j.at("epochs").get<std::size_t>();
  std::vector<std::pair<std::string, std::string>> config;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key().rfind("config.", 0) == 0) config.emplace_back(it.key().substr(7), it.value().get<std::string>());
  }
  s.config = std::move(config);
  return s;
}

std::string log_to_json(const TrainingLog& log) {
  json j;
  j["counts"] = log.profile.counts;
  j["many_threshold"] = log.many_threshold;
  j["few_threshold"] = log.few_threshold;
  j["steps"] = log.steps;
  j["keys_enqueued"] = log.keys_enqueued;
  json echo = json::array();
  for (const auto& [k, v] : log.config_echo) echo.push_back(json::array({k, v}));
  j["config"] = echo;
  json epochs = json::array();
  for (const auto& e : log.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"loss", e.loss},
                      {"ce_component", e.ce_component},
                      {"scl_component", e.scl_component},
                      {"train_acc", e.train_acc},
                      {"test_acc", e.test_acc}});
  }
  j["epochs"] = epochs;
  return j.dump() + "\n";
}

TrainingLog log_from_json(const std::string& text) {
  TrainingLog log;
  try {
    const json j = json::parse(text);
    log.profile.counts = j.at("counts").get<std::vector<std::int64_t>>();
    log.many_threshold = j.at("many_threshold").get<std::int64_t>();
    log.few_threshold = j.at("few_threshold").get<std::int64_t>();
    log.steps = j.at("steps").get<std::uint64_t>();
    log.keys_enqueued = j.at("keys_enqueued").get<std::uint64_t>();
    for (const auto& kv : j.at("config")) {
      log.config_echo.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    }
    for (const auto& e : j.at("epochs")) {
      EpochRecord r;
      r.epoch = e.at("epoch").get<std::size_t>();
      r.lr = e.at("lr").get<double>();
      r.loss = e.at("loss").get<double>();
      r.ce_component = e.at("ce_component").get<double>();
      r.scl_component = e.at("scl_component").get<double>();
      r.train_acc = e.at("train_acc").get<Vec>();
      r.test_acc = e.at("test_acc").get<Vec>();
      log.epochs.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("training log: ") + e.what());
  }
  return log;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string opt6(const std::optional<double>& v) { return v ? fixed6(*v) : std::string(); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::string gap_svg(const TrainingLog& log, const ClassProfile& profile, const OverfitFit& fit) {
  const auto order = frequency_order(profile);
  const EpochRecord& last = log.epochs.back();
  constexpr double width = 640.0;
  constexpr double height = 400.0;
  constexpr double margin = 50.0;
  Vec gaps(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) gaps[r] = last.train_acc[order[r]] - last.test_acc[order[r]];
  double lo = std::min(0.0, *std::min_element(gaps.begin(), gaps.end()));
  double hi = std::max(0.0, *std::max_element(gaps.begin(), gaps.end()));
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double xmax = std::max<double>(1.0, static_cast<double>(order.size() - 1));
  auto px = [&](double x) { return margin + (width - 2 * margin) * x / xmax; };
  auto py = [&](double y) { return height - margin - (height - 2 * margin) * (y - lo) / (hi - lo); };

  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << margin << "\" y1=\"" << py(0.0) << "\" x2=\"" << width - margin << "\" y2=\"" << py(0.0)
     << "\" stroke=\"#999\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"" << height - 15
     << "\" text-anchor=\"middle\" font-size=\"12\">class rank (descending train frequency)</text>\n";
  os << "<text x=\"15\" y=\"" << height / 2 << "\" font-size=\"12\" transform=\"rotate(-90 15 " << height / 2
     << ")\" text-anchor=\"middle\">train - test accuracy</text>\n";
  os << "<g fill=\"#1f77b4\">\n";
  for (std::size_t r = 0; r < gaps.size(); ++r) {
    os << "<circle cx=\"" << px(static_cast<double>(r)) << "\" cy=\"" << py(gaps[r]) << "\" r=\"3\"/>\n";
  }
  os << "</g>\n";
  os << "<line x1=\"" << px(0.0) << "\" y1=\"" << py(fit.intercept) << "\" x2=\"" << px(xmax) << "\" y2=\""
     << py(fit.intercept + fit.slope * xmax) << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace

void emit_report(const TrainingLog& log, const GroupReport& groups, const OverfitFit& fit,
                 const std::filesystem::path& output_dir, bool write_svg) {
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) throw Error("cannot create output directory " + output_dir.string() + ": " + ec.message());
  const GroupThresholds thresholds{log.many_threshold, log.few_threshold};

  std::ostringstream epochs;
  epochs << "epoch,lr,loss,ce_component,scl_component,all,many,medium,few\n";
  for (const auto& e : log.epochs) {
    const GroupReport g = group_accuracy(e.test_acc, log.profile, thresholds);
    epochs << e.epoch << ',' << general(e.lr) << ',' << general(e.loss) << ',' << general(e.ce_component) << ','
           << general(e.scl_component) << ',' << fixed6(g.all) << ',' << opt6(g.many) << ',' << opt6(g.medium)
           << ',' << opt6(g.few) << '\n';
  }
  write_text(output_dir / "epochs.csv", epochs.str());

  std::ostringstream per_class;
  per_class << "class,n_c,train_acc,test_acc,gap\n";
  if (!log.epochs.empty()) {
    const auto& last = log.epochs.back();
    for (std::size_t c = 0; c < log.profile.num_classes(); ++c) {
      per_class << c << ',' << log.profile.counts[c] << ',' << fixed6(last.train_acc[c]) << ','
                << fixed6(last.test_acc[c]) << ',' << fixed6(last.train_acc[c] - last.test_acc[c]) << '\n';
    }
  }
  write_text(output_dir / "per_class.csv", per_class.str());

  write_text(output_dir / "summary.json", summary_to_json(make_summary(log, groups, fit)));
  write_text(output_dir / "log.json", log_to_json(log));
  if (write_svg && !log.epochs.empty()) write_text(output_dir / "gap.svg", gap_svg(log, log.profile, fit));
}

Summary report_from_log(const TrainingLog& log, const std::filesystem::path& output_dir, bool write_svg) {
  if (log.epochs.empty()) throw Error("training log has no epochs");
  const GroupReport groups =
      group_accuracy(log.epochs.back().test_acc, log.profile, {log.many_threshold, log.few_threshold});
  const OverfitFit fit = overfit_fit(log, log.profile);
  emit_report(log, groups, fit, output_dir, write_svg);
  return make_summary(log, groups, fit);
}

}  // namespace lll
