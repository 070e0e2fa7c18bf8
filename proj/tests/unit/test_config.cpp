#include <doctest.h>

#include "lll/config.hpp"

using namespace lll;

TEST_CASE("empty config gives the defaults") {
  const Config c = parse_config("");
  CHECK(c.data.num_classes == 10);
  CHECK(c.data.n_max == 500);
  CHECK(c.model.encoder_widths == std::vector<std::size_t>{64, 64});
  CHECK(c.model.embedding_dim == 32);
  CHECK(c.model.gamma_t == 0.05);
  CHECK(c.loss.kind == LossKind::cibl);
  CHECK(c.loss.tau == 0.05);
  CHECK(c.bank.queue_capacity == 1024);
  CHECK(c.bank.momentum_m == 0.999);
  CHECK(c.optim.batch_size == 128);
  CHECK(c.optim.momentum == 0.9);
  CHECK(c.optim.weight_decay == 0.0);
  CHECK(c.report.many_threshold == 100);
  CHECK(c.report.few_threshold == 20);
  validate(c);
}

TEST_CASE("every section parses") {
  const Config c = parse_config(R"(
[data]
profile = "pareto"
num_classes = 20
n_max = 1280
n_min = 5
dim = 8
separation = 2.5
noise_sigma = 0.2
test_per_class = 30
seed = 11

[model]
encoder_widths = [32]
embedding_dim = 16
head_kind = "cosine"
gamma_t = 0.1

[loss]
kind = "summed"
lambda_ce = 0.5
lambda_scl = 1
alpha = 0.2
beta = 2.0
tau = 0.1

[bank]
queue_capacity = 64
momentum_m = 0.99

[optim]
base_lr = 0.05
momentum = 0.8
weight_decay = 5e-4
batch_size = 32
epochs = 400
schedule = "step"
warmup_epochs = 5
milestones = [320, 360]
factors = [0.1, 0.1]

[report]
many_threshold = 50
few_threshold = 10
svg = false

[run]
seed = 3
output_dir = "out/here"
)");
  CHECK(c.data.profile == ProfileKind::pareto);
  CHECK(c.data.n_min == 5);
  CHECK(c.data.seed == 11u);
  CHECK(c.model.head_kind == HeadKind::cosine);
  CHECK(c.loss.kind == LossKind::summed);
  CHECK(c.loss.lambda_scl == 1.0);
  CHECK(c.optim.schedule == ScheduleKind::step);
  CHECK(c.optim.milestones == std::vector<std::size_t>{320, 360});
  CHECK(c.report.svg == false);
  CHECK(c.run.output_dir == "out/here");
  validate(c);
}

TEST_CASE("errors carry line and column") {
  CHECK_THROWS_WITH_AS(parse_config("[loss]\nkind = \"focal\"\n", "x.toml"), doctest::Contains("x.toml:2:"), Error);
  CHECK_THROWS_WITH_AS(parse_config("[loss]\nlambda_scl = \"big\"\n", "x.toml"), doctest::Contains("x.toml:2:"),
                       Error);
  CHECK_THROWS_WITH_AS(parse_config("[loss]\nlambda = 1.0\n", "x.toml"), doctest::Contains("loss.lambda"), Error);
  CHECK_THROWS_WITH_AS(parse_config("[extra]\nx = 1\n", "x.toml"), doctest::Contains("x.toml:1:"), Error);
  CHECK_THROWS_WITH_AS(parse_config("[data\n", "x.toml"), doctest::Contains("x.toml:1:"), Error);
  CHECK_THROWS_AS(parse_config("[optim]\nepochs = -3\n"), Error);
  CHECK_THROWS_WITH_AS(load_config("/no/such/config.toml"), doctest::Contains("/no/such/config.toml"), Error);
}

TEST_CASE("validation") {
  auto rejects = [](const char* text) {
    CHECK_THROWS_AS(validate(parse_config(text)), Error);
  };
  rejects("[loss]\ntau = 0.0\n");
  rejects("[loss]\nlambda_ce = 0.0\nlambda_scl = 0.0\n");
  rejects("[loss]\nkind = \"paco\"\nbeta = 0.0\n");
  rejects("[loss]\nkind = \"paco\"\n[model]\nhead_kind = \"cosine\"\n");
  rejects("[model]\ngamma_t = 0.0\n");
  rejects("[bank]\nmomentum_m = 1.5\n");
  rejects("[optim]\nepochs = 10\nmilestones = [5, 3]\n");
  rejects("[optim]\nepochs = 10\nmilestones = [12]\n");
  rejects("[optim]\nmilestones = [3, 5]\nfactors = [0.1]\n");
  rejects("[data]\nnum_classes = 1\n");
  rejects("[data]\ncsv = \"train.csv\"\n");
  rejects("[data]\nn_max = 50\nimbalance = 100.0\n");
  rejects("[data]\nprofile = \"pareto\"\nn_max = 5\nn_min = 5\n");
}

TEST_CASE("ncibl always uses the cosine head") {
  Config c = parse_config("[loss]\nkind = \"ncibl\"\n[model]\nhead_kind = \"linear\"\n");
  CHECK(c.effective_head() == HeadKind::cosine);
  c.loss.kind = LossKind::cibl;
  CHECK(c.effective_head() == HeadKind::linear);
}

TEST_CASE("dotted overrides") {
  toml::table t = toml::parse("[loss]\nlambda_scl = 0.03\n");
  set_table_value(t, "loss.lambda_scl", toml::value<double>(0.1));
  set_table_value(t, "model.gamma_t", toml::value<double>(1.0));
  const Config c = config_from_table(t, "t");
  CHECK(c.loss.lambda_scl == 0.1);
  CHECK(c.model.gamma_t == 1.0);
  CHECK_THROWS_AS(set_table_value(t, "lambda", toml::value<double>(1.0)), Error);
  set_table_value(t, "loss.nonsense", toml::value<double>(1.0));
  CHECK_THROWS_AS(config_from_table(t, "t"), Error);
}

TEST_CASE("describe lists settings but not the output directory") {
  Config a = parse_config("[run]\nseed = 4\noutput_dir = \"a\"\n");
  Config b = parse_config("[run]\nseed = 4\noutput_dir = \"b\"\n");
  CHECK(describe(a) == describe(b));
  bool has_seed = false;
  for (const auto& [k, v] : describe(a)) {
    if (k == "run.seed") has_seed = v == "4";
    CHECK(k != "run.output_dir");
  }
  CHECK(has_seed);
  b.loss.lambda_scl = 0.07;
  CHECK_FALSE(describe(a) == describe(b));
}
