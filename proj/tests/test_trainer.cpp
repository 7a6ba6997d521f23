#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "ccnn/trainer.hpp"
#include "doctest.h"

using namespace ccnn;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.hidden_width = 6;
  c.max_layers = 3;
  c.max_epochs = 8;
  c.seed = 4;
  return c;
}

Dataset small_spirals() {
  SpiralSpec s = SpiralSpec::defaults(SpiralVariant::easy);
  s.points_per_class = 30;
  return generate_two_spirals(s);
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("ccnn_trainer_" + name); }

}  // namespace

TEST_CASE("schedule with a frozen metric") {
  ScheduleState s(20, {0.3, 0.1}, false);
  CHECK(s.update(1, 0.5) == ScheduleState::Event::improved);
  double last_factor = 1.0;
  int epoch = 2;
  for (; epoch < 200; ++epoch) {
    const auto e = s.update(epoch, 0.5);
    CHECK(s.lr_factor() <= last_factor);
    last_factor = s.lr_factor();
    if (e == ScheduleState::Event::stop) break;
  }
  CHECK(s.stage_change_epochs() == std::vector<int>{21, 41});
  CHECK(epoch == 61);
  CHECK(s.finished());
  CHECK(s.lr_factor() == 0.1);
}

TEST_CASE("schedule resets on improvement") {
  ScheduleState s(3, {0.3, 0.1}, false);
  s.update(1, 1.0);
  s.update(2, 1.0);
  s.update(3, 1.0);
  CHECK(s.epochs_since_best() == 2);
  CHECK(s.update(4, 0.9) == ScheduleState::Event::improved);
  CHECK(s.epochs_since_best() == 0);
  CHECK(s.best_epoch() == 4);
  CHECK(s.update(5, 0.9) == ScheduleState::Event::waiting);  // equal is not better

  ScheduleState up(2, {0.5}, true);
  up.update(1, 0.2);
  CHECK(up.update(2, 0.3) == ScheduleState::Event::improved);
  CHECK(up.update(3, 0.1) == ScheduleState::Event::waiting);
  CHECK(up.update(4, 0.1) == ScheduleState::Event::stage_changed);
  CHECK(up.lr_factor() == 0.5);
  up.update(5, 0.1);
  CHECK(up.update(6, 0.1) == ScheduleState::Event::stop);
}

TEST_CASE("config validation and json") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.base_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.dropout_p = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr_factors = {0.3, 0.5};
  CHECK_THROWS_AS(c.validate(), ConfigError);

  TrainConfig d = small_config();
  d.architecture = Architecture::budding;
  d.monitor = Monitor::loss;
  const TrainConfig back = config_from_json(to_json(d));
  CHECK(to_json(back) == to_json(d));
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"learning_rate", 0.1}}), ConfigError);
  CHECK(config_from_json(nlohmann::json{{"patience", 5}}, d).hidden_width == 6);

  CHECK(TrainConfig{}.resolved_monitor(TaskKind::multilabel) == Monitor::macro_f1);
  CHECK(TrainConfig{}.resolved_monitor(TaskKind::binary) == Monitor::error);
  TrainConfig f1;
  f1.monitor = Monitor::macro_f1;
  CHECK_THROWS_AS(f1.resolved_monitor(TaskKind::binary), ConfigError);
}

TEST_CASE("training is deterministic and logs every epoch") {
  const Dataset d = small_spirals();
  const TrainConfig c = small_config();
  const TrainResult a = train(c, d, d), b = train(c, d, d);
  REQUIRE(a.log.size() == 8);
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].epoch == static_cast<int>(i) + 1);
  CHECK(log_csv(a.log, 3) == log_csv(b.log, 3));
  CHECK(network_to_json(a.best).dump() == network_to_json(b.best).dump());
  CHECK(a.rng_state == b.rng_state);

  TrainConfig other = c;
  other.seed = 5;
  CHECK(log_csv(train(other, d, d).log, 3) != log_csv(a.log, 3));
}

TEST_CASE("best model matches the logged optimum") {
  const Dataset d = small_spirals();
  TrainConfig c = small_config();
  c.max_epochs = 15;
  for (Monitor m : {Monitor::error, Monitor::loss}) {
    c.monitor = m;
    const TrainResult r = train(c, d, d);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rec : r.log) best = std::min(best, m == Monitor::loss ? rec.val_loss : rec.val_error);
    CHECK(r.best_metric == best);
    const EpochRecord& at = r.log[static_cast<std::size_t>(r.best_epoch - 1)];
    CHECK((m == Monitor::loss ? at.val_loss : at.val_error) == best);

    const EvalMetrics e = evaluate(r.best, d);
    CHECK(std::fabs(e.error - at.train_error) <= 1e-12);
    CHECK(std::fabs(e.loss - at.train_loss) <= 1e-12);
    REQUIRE(e.soft_sizes.has_value());
    CHECK(std::fabs(e.soft_sizes->total - *at.total_soft_size) <= 1e-12);

    for (std::size_t i = 1; i < r.log.size(); ++i) CHECK(r.log[i].effective_lr <= r.log[i - 1].effective_lr);
  }
}

TEST_CASE("budding training and pruned evaluation") {
  const Dataset d = small_spirals();
  TrainConfig c = small_config();
  c.architecture = Architecture::budding;
  c.max_depth = 4;
  c.base_lr = 0.01;
  c.lambda_l1 = 0.0;
  c.max_epochs = 10;
  const TrainResult r = train(c, d, d);
  for (const auto& rec : r.log) {
    REQUIRE(rec.hard_size.has_value());
    CHECK(*rec.hard_size <= 15);
    CHECK(*rec.total_soft_size >= 1.0);
  }
  const EvalMetrics full = evaluate(r.final_model, d);
  const EvalMetrics pruned = evaluate(r.final_model.pruned(), d);
  CHECK(full.error == pruned.error);
  CHECK(full.loss == pruned.loss);
  CHECK(full.hard_size == pruned.hard_size);
}

TEST_CASE("evaluation errors") {
  const Dataset d = small_spirals();
  const TrainResult r = train(small_config(), d, d);
  CHECK_THROWS_AS(evaluate(r.best, Dataset(Matrix(0, 2), Matrix(0, 1), TaskKind::binary)), UsageError);
  CHECK_THROWS_AS(evaluate(r.best, Dataset(Matrix(3, 2), Matrix(3, 2), TaskKind::multilabel)), ConfigError);
  CHECK_THROWS_AS(evaluate(r.best, Dataset(Matrix(3, 5), Matrix(3, 1), TaskKind::binary)), ConfigError);
  CHECK_THROWS_AS(train(small_config(), d, Dataset(Matrix(3, 2), Matrix(3, 2), TaskKind::multilabel)), ConfigError);
}

TEST_CASE("multilabel training monitors macro F1") {
  const Dataset d = generate_synthetic_multilabel(200, 6, 3, 1);
  TrainConfig c = small_config();
  c.batch_size = 16;
  c.base_lr = 0.01;
  c.max_epochs = 6;
  const TrainResult r = train(c, d, d);
  double best = -1.0;
  for (const auto& rec : r.log) {
    REQUIRE(rec.macro_f1_val.has_value());
    best = std::max(best, *rec.macro_f1_val);
  }
  CHECK(r.best_metric == best);
}

TEST_CASE("divergence is reported") {
  const Dataset d = small_spirals();
  TrainConfig c = small_config();
  c.base_lr = 1e300;
  const TrainResult r = train(c, d, d);
  CHECK(r.diverged);
  CHECK_FALSE(r.divergence_message.empty());
  CHECK(r.log.size() < 8);
}

TEST_CASE("log csv layout") {
  CHECK(log_csv_header(2) ==
        "epoch,train_error,train_loss,val_error,val_loss,macro_f1_train,macro_f1_val,total_soft_size,hard_size,"
        "effective_lr,layer_s_0,layer_s_1");
  EpochRecord rec;
  rec.epoch = 3;
  rec.train_error = 0.25;
  rec.effective_lr = 0.003;
  rec.per_layer_soft_sizes = {0.5, 1.5};
  rec.total_soft_size = 2.0;
  const std::string csv = log_csv({rec}, 2);
  CHECK(csv.substr(csv.find('\n') + 1) == "3,0.25,0,0,0,,,2,,0.003,0.5,1.5\n");
}

TEST_CASE("checkpoint files") {
  const Dataset d = small_spirals();
  TrainConfig c = small_config();
  c.architecture = Architecture::budding;
  c.max_depth = 4;
  c.base_lr = 0.01;
  c.lambda_l1 = 0.0;
  const TrainResult r = train(c, d, d);
  const fs::path p1 = temp_path("a.json"), p2 = temp_path("b.json");
  save_checkpoint(Checkpoint{kCheckpointFormatVersion, c, r.final_model, r.rng_state, 8}, p1);
  const Checkpoint back = load_checkpoint(p1);
  CHECK(back.epoch == 8);
  CHECK(back.rng_state == r.rng_state);
  CHECK(back.network.logits(d.inputs()) == r.final_model.logits(d.inputs()));
  save_checkpoint(back, p2);
  std::ifstream f1(p1), f2(p2);
  const std::string s1{std::istreambuf_iterator<char>(f1), {}}, s2{std::istreambuf_iterator<char>(f2), {}};
  CHECK(s1 == s2);
  CHECK(checkpoint_to_json(load_checkpoint(p2)) == checkpoint_to_json(back));

  nlohmann::json j = checkpoint_to_json(back);
  j["format_version"] = 99;
  try {
    checkpoint_from_json(j);
    FAIL("expected refusal");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("format_version") != std::string::npos);
  }
  {
    std::ofstream bad(p2);
    bad << "{\"format_version\": 1, \"network\": [";
  }
  CHECK_THROWS_AS(load_checkpoint(p2), ParseError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.json")), ParseError);
  fs::remove(p1);
  fs::remove(p2);
}
