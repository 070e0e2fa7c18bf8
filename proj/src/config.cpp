#include "lll/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace lll {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::ce: return "ce";
    case LossKind::summed: return "summed";
    case LossKind::paco: return "paco";
    case LossKind::cibl: return "cibl";
    case LossKind::ncibl: return "ncibl";
  }
  return "?";
}

std::string_view to_string(ProfileKind kind) {
  return kind == ProfileKind::exponential ? "exponential" : "pareto";
}

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::step ? "step" : "cosine";
}

namespace {

std::string where(std::string_view origin, const toml::source_region& src) {
  std::ostringstream os;
  os << origin << ':' << src.begin.line << ':' << src.begin.column;
  return os.str();
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"data", {"profile", "num_classes", "n_max", "imbalance", "n_min", "dim", "separation",
                "noise_sigma", "test_per_class", "seed", "csv", "test_csv"}},
      {"model", {"encoder_widths", "embedding_dim", "head_kind", "gamma_t"}},
      {"loss", {"kind", "lambda_ce", "lambda_scl", "alpha", "beta", "tau"}},
      {"bank", {"queue_capacity", "momentum_m"}},
      {"optim", {"base_lr", "momentum", "weight_decay", "batch_size", "epochs", "schedule",
                 "warmup_epochs", "milestones", "factors"}},
      {"report", {"many_threshold", "few_threshold", "svg"}},
      {"run", {"seed", "output_dir"}},
  };
  return keys;
}

class Reader {
 public:
  Reader(const toml::table& root, std::string_view origin) : root_(root), origin_(origin) {
    for (const auto& [key, node] : root_) {
      const std::string name(key.str());
      const auto it = known_keys().find(name);
      if (it == known_keys().end()) fail(node, "unknown section '" + name + "'");
      const auto* sec = node.as_table();
      if (sec == nullptr) fail(node, "'" + name + "' must be a table");
      for (const auto& [sub_key, sub_node] : *sec) {
        if (it->second.count(std::string(sub_key.str())) == 0) {
          fail(sub_node, "unknown key '" + name + "." + std::string(sub_key.str()) + "'");
        }
      }
    }
  }

  [[noreturn]] void fail(const toml::node& node, const std::string& msg) const {
    throw Error(where(origin_, node.source()) + ": " + msg);
  }

  const toml::node* find(std::string_view section, std::string_view key) const {
    const auto* sec = root_[section].as_table();
    if (sec == nullptr) return nullptr;
    return sec->get(key);
  }

  void read(std::string_view s, std::string_view k, double& out) const {
    if (const auto* n = find(s, k)) {
      if (auto v = n->value<double>()) {
        out = *v;
      } else {
        fail(*n, full(s, k) + " must be a number");
      }
    }
  }

  void read(std::string_view s, std::string_view k, std::int64_t& out) const {
    if (const auto* n = find(s, k)) {
      if (const auto* v = n->as_integer()) {
        out = v->get();
      } else {
        fail(*n, full(s, k) + " must be an integer");
      }
    }
  }

  void read(std::string_view s, std::string_view k, std::size_t& out) const {
    std::int64_t v = static_cast<std::int64_t>(out);
    read(s, k, v);
    if (const auto* n = find(s, k); n != nullptr && v < 0) fail(*n, full(s, k) + " must be non-negative");
    out = static_cast<std::size_t>(v);
  }

  void read(std::string_view s, std::string_view k, bool& out) const {
    if (const auto* n = find(s, k)) {
      if (const auto* v = n->as_boolean()) {
        out = v->get();
      } else {
        fail(*n, full(s, k) + " must be true or false");
      }
    }
  }

  void read(std::string_view s, std::string_view k, std::string& out) const {
    if (const auto* n = find(s, k)) {
      if (const auto* v = n->as_string()) {
        out = v->get();
      } else {
        fail(*n, full(s, k) + " must be a string");
      }
    }
  }

  template <typename T>
  void read_array(std::string_view s, std::string_view k, std::vector<T>& out) const {
    const auto* n = find(s, k);
    if (n == nullptr) return;
    const auto* arr = n->as_array();
    if (arr == nullptr) fail(*n, full(s, k) + " must be an array");
    out.clear();
    for (const auto& el : *arr) {
      if constexpr (std::is_same_v<T, double>) {
        auto v = el.value<double>();
        if (!v) fail(el, full(s, k) + " entries must be numbers");
        out.push_back(*v);
      } else {
        const auto* v = el.as_integer();
        if (v == nullptr || v->get() < 0) fail(el, full(s, k) + " entries must be non-negative integers");
        out.push_back(static_cast<T>(v->get()));
      }
    }
  }

  template <typename Enum, typename Parse>
  void read_enum(std::string_view s, std::string_view k, Enum& out, Parse parse) const {
    const auto* n = find(s, k);
    if (n == nullptr) return;
    std::string name;
    read(s, k, name);
    try {
      out = parse(name);
    } catch (const Error& e) {
      fail(*n, e.what());
    }
  }

  const toml::node* node(std::string_view s, std::string_view k) const { return find(s, k); }

 private:
  static std::string full(std::string_view s, std::string_view k) {
    return std::string(s) + "." + std::string(k);
  }

  const toml::table& root_;
  std::string origin_;
};

LossKind parse_loss_kind(const std::string& name) {
  for (auto kind : {LossKind::ce, LossKind::summed, LossKind::paco, LossKind::cibl, LossKind::ncibl}) {
    if (name == to_string(kind)) return kind;
  }
  throw Error("unknown loss kind '" + name + "' (expected ce, summed, paco, cibl or ncibl)");
}

ProfileKind parse_profile_kind(const std::string& name) {
  if (name == "exponential") return ProfileKind::exponential;
  if (name == "pareto") return ProfileKind::pareto;
  throw Error("unknown profile '" + name + "' (expected exponential or pareto)");
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "step") return ScheduleKind::step;
  if (name == "cosine") return ScheduleKind::cosine;
  throw Error("unknown schedule '" + name + "' (expected step or cosine)");
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string fmt_list(const std::vector<T>& xs) {
  std::string out = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out + "]";
}

}  // namespace

toml::table load_toml_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return toml::parse(text, path.string());
  } catch (const toml::parse_error& e) {
    throw Error(where(path.string(), e.source()) + ": " + std::string(e.description()));
  }
}

Config config_from_table(const toml::table& table, std::string_view origin) {
  const Reader r(table, origin);
  Config c;

  r.read_enum("data", "profile", c.data.profile, parse_profile_kind);
  r.read("data", "num_classes", c.data.num_classes);
  r.read("data", "n_max", c.data.n_max);
  r.read("data", "imbalance", c.data.imbalance);
  r.read("data", "n_min", c.data.n_min);
  r.read("data", "dim", c.data.dim);
  r.read("data", "separation", c.data.separation);
  r.read("data", "noise_sigma", c.data.noise_sigma);
  r.read("data", "test_per_class", c.data.test_per_class);
  if (r.node("data", "seed") != nullptr) {
    std::uint64_t s = 0;
    r.read("data", "seed", s);
    c.data.seed = s;
  }
  r.read("data", "csv", c.data.csv);
  r.read("data", "test_csv", c.data.test_csv);

  r.read_array("model", "encoder_widths", c.model.encoder_widths);
  r.read("model", "embedding_dim", c.model.embedding_dim);
  r.read_enum("model", "head_kind", c.model.head_kind,
              [](const std::string& n) { return head_kind_from_string(n); });
  r.read("model", "gamma_t", c.model.gamma_t);

  r.read_enum("loss", "kind", c.loss.kind, parse_loss_kind);
  r.read("loss", "lambda_ce", c.loss.lambda_ce);
  r.read("loss", "lambda_scl", c.loss.lambda_scl);
  r.read("loss", "alpha", c.loss.alpha);
  r.read("loss", "beta", c.loss.beta);
  r.read("loss", "tau", c.loss.tau);

  r.read("bank", "queue_capacity", c.bank.queue_capacity);
  r.read("bank", "momentum_m", c.bank.momentum_m);

  r.read("optim", "base_lr", c.optim.base_lr);
  r.read("optim", "momentum", c.optim.momentum);
  r.read("optim", "weight_decay", c.optim.weight_decay);
  r.read("optim", "batch_size", c.optim.batch_size);
  r.read("optim", "epochs", c.optim.epochs);
  r.read_enum("optim", "schedule", c.optim.schedule, parse_schedule_kind);
  r.read("optim", "warmup_epochs", c.optim.warmup_epochs);
  r.read_array("optim", "milestones", c.optim.milestones);
  r.read_array("optim", "factors", c.optim.factors);

  r.read("report", "many_threshold", c.report.many_threshold);
  r.read("report", "few_threshold", c.report.few_threshold);
  r.read("report", "svg", c.report.svg);

  r.read("run", "seed", c.run.seed);
  r.read("run", "output_dir", c.run.output_dir);

  try {
    validate(c);
  } catch (const Error& e) {
    throw Error(std::string(origin) + ": " + e.what());
  }
  return c;
}

Config parse_config(std::string_view toml_text, std::string_view origin) {
  toml::table table;
  try {
    table = toml::parse(toml_text, origin);
  } catch (const toml::parse_error& e) {
    throw Error(where(origin, e.source()) + ": " + std::string(e.description()));
  }
  return config_from_table(table, origin);
}

Config load_config(const std::filesystem::path& path) {
  return config_from_table(load_toml_table(path), path.string());
}

void set_table_value(toml::table& table, std::string_view dotted_key, const toml::node& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == dotted_key.size()) {
    throw Error("parameter path '" + std::string(dotted_key) + "' must look like section.key");
  }
  const std::string section(dotted_key.substr(0, dot));
  const std::string key(dotted_key.substr(dot + 1));
  auto* sec = table[section].as_table();
  if (sec == nullptr) {
    table.insert_or_assign(section, toml::table{});
    sec = table[section].as_table();
  }
  value.visit([&](const auto& concrete) { sec->insert_or_assign(key, concrete); });
}

void validate(const Config& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(msg);
  };
  require(c.data.num_classes >= 2, "data.num_classes must be at least 2");
  require(c.data.n_max >= 1, "data.n_max must be positive");
  if (c.data.profile == ProfileKind::exponential) {
    require(c.data.imbalance >= 1.0, "data.imbalance must be >= 1");
    require(static_cast<double>(c.data.n_max) >= c.data.imbalance, "data.n_max must be >= data.imbalance");
  } else {
    require(c.data.n_min >= 1 && c.data.n_max > c.data.n_min, "data needs n_max > n_min >= 1");
  }
  require(c.data.dim >= 2, "data.dim must be at least 2");
  require(c.data.separation >= 0.0, "data.separation must be non-negative");
  require(c.data.noise_sigma >= 0.0, "data.noise_sigma must be non-negative");
  require(c.data.test_per_class >= 1, "data.test_per_class must be positive");
  require(c.data.csv.empty() || !c.data.test_csv.empty(), "data.test_csv is required when data.csv is set");

  for (std::size_t w : c.model.encoder_widths) require(w > 0, "model.encoder_widths entries must be positive");
  require(c.model.embedding_dim > 0, "model.embedding_dim must be positive");
  require(c.model.gamma_t > 0.0, "model.gamma_t must be positive");

  require(c.loss.lambda_ce >= 0.0 && c.loss.lambda_scl >= 0.0, "loss weights must be non-negative");
  require(c.loss.lambda_ce + c.loss.lambda_scl > 0.0, "loss.lambda_ce + loss.lambda_scl must be positive");
  require(c.loss.alpha >= 0.0, "loss.alpha must be non-negative");
  require(c.loss.tau > 0.0, "loss.tau must be positive");
  if (c.loss.kind == LossKind::paco) {
    require(c.loss.beta > 0.0, "loss.beta must be positive for paco");
    require(c.model.head_kind == HeadKind::linear, "paco uses the linear classifier (model.head_kind = \"linear\")");
  }

  require(c.bank.momentum_m >= 0.0 && c.bank.momentum_m <= 1.0, "bank.momentum_m must lie in [0, 1]");

  require(c.optim.base_lr >= 0.0, "optim.base_lr must be non-negative");
  require(c.optim.momentum >= 0.0, "optim.momentum must be non-negative");
  require(c.optim.weight_decay >= 0.0, "optim.weight_decay must be non-negative");
  require(c.optim.batch_size >= 1, "optim.batch_size must be at least 1");
  require(c.optim.epochs >= 1, "optim.epochs must be at least 1");
  require(c.optim.warmup_epochs <= c.optim.epochs, "optim.warmup_epochs must not exceed optim.epochs");
  for (std::size_t i = 0; i < c.optim.milestones.size(); ++i) {
    require(c.optim.milestones[i] < c.optim.epochs, "optim.milestones must be below optim.epochs");
    require(i == 0 || c.optim.milestones[i] > c.optim.milestones[i - 1],
            "optim.milestones must be strictly increasing");
  }
  require(c.optim.factors.empty() || c.optim.factors.size() == c.optim.milestones.size(),
          "optim.factors needs one entry per milestone");

  require(c.report.many_threshold >= c.report.few_threshold,
          "report.many_threshold must be >= report.few_threshold");
}

std::vector<std::pair<std::string, std::string>> describe(const Config& c) {
  std::vector<std::pair<std::string, std::string>> out;
  auto add = [&](std::string k, std::string v) { out.emplace_back(std::move(k), std::move(v)); };
  add("data.profile", std::string(to_string(c.data.profile)));
  add("data.num_classes", std::to_string(c.data.num_classes));
  add("data.n_max", std::to_string(c.data.n_max));
  if (c.data.profile == ProfileKind::exponential) {
    add("data.imbalance", fmt(c.data.imbalance));
  } else {
    add("data.n_min", std::to_string(c.data.n_min));
  }
  add("data.dim", std::to_string(c.data.dim));
  add("data.separation", fmt(c.data.separation));
  add("data.noise_sigma", fmt(c.data.noise_sigma));
  add("data.test_per_class", std::to_string(c.data.test_per_class));
  add("data.seed", std::to_string(c.data.seed.value_or(c.run.seed)));
  if (!c.data.csv.empty()) {
    add("data.csv", c.data.csv);
    add("data.test_csv", c.data.test_csv);
  }
  add("model.encoder_widths", fmt_list(c.model.encoder_widths));
  add("model.embedding_dim", std::to_string(c.model.embedding_dim));
  add("model.head_kind", std::string(to_string(c.effective_head())));
  add("model.gamma_t", fmt(c.model.gamma_t));
  add("loss.kind", std::string(to_string(c.loss.kind)));
  add("loss.lambda_ce", fmt(c.loss.lambda_ce));
  add("loss.lambda_scl", fmt(c.loss.lambda_scl));
  add("loss.alpha", fmt(c.loss.alpha));
  add("loss.beta", fmt(c.loss.beta));
  add("loss.tau", fmt(c.loss.tau));
  add("bank.queue_capacity", std::to_string(c.bank.queue_capacity));
  add("bank.momentum_m", fmt(c.bank.momentum_m));
  add("optim.base_lr", fmt(c.optim.base_lr));
  add("optim.momentum", fmt(c.optim.momentum));
  add("optim.weight_decay", fmt(c.optim.weight_decay));
  add("optim.batch_size", std::to_string(c.optim.batch_size));
  add("optim.epochs", std::to_string(c.optim.epochs));
  add("optim.schedule", std::string(to_string(c.optim.schedule)));
  add("optim.warmup_epochs", std::to_string(c.optim.warmup_epochs));
  add("optim.milestones", fmt_list(c.optim.milestones));
  add("optim.factors", fmt_list(c.optim.factors));
  add("report.many_threshold", std::to_string(c.report.many_threshold));
  add("report.few_threshold", std::to_string(c.report.few_threshold));
  add("run.seed", std::to_string(c.run.seed));
  return out;
}

}  // namespace lll
