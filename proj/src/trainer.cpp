#include "ccnn/trainer.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace ccnn {

using nlohmann::json;

// ---------------------------------------------------------------------------
// TrainConfig

std::string_view to_string(Monitor m) {
  switch (m) {
    case Monitor::automatic: return "auto";
    case Monitor::error: return "error";
    case Monitor::loss: return "loss";
    case Monitor::macro_f1: return "macro_f1";
  }
  return "auto";
}

Monitor monitor_from_string(std::string_view s) {
  if (s == "auto") return Monitor::automatic;
  if (s == "error") return Monitor::error;
  if (s == "loss") return Monitor::loss;
  if (s == "macro_f1") return Monitor::macro_f1;
  throw ConfigError("unknown monitor '" + std::string(s) + "' (expected auto|error|loss|macro_f1)");
}

Monitor TrainConfig::resolved_monitor(TaskKind task) const {
  if (monitor == Monitor::automatic) return task == TaskKind::multilabel ? Monitor::macro_f1 : Monitor::error;
  if (monitor == Monitor::macro_f1 && task != TaskKind::multilabel) throw ConfigError("monitor macro_f1 needs a multilabel task");
  return monitor;
}

void TrainConfig::validate() const {
  if (hidden_width == 0) throw ConfigError("hidden_width must be positive");
  if (architecture != Architecture::budding && max_layers < 1) throw ConfigError("max_layers must be at least 1");
  if (architecture == Architecture::budding && max_depth < 1) throw ConfigError("max_depth must be at least 1");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
  if (!(lambda_l1 >= 0.0)) throw ConfigError("lambda_l1 must be non-negative");
  if (!(l2_coeff >= 0.0)) throw ConfigError("l2_coeff must be non-negative");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  double previous = 1.0;
  for (double f : lr_factors) {
    if (!(f > 0.0 && f <= previous)) throw ConfigError("lr_factors must be positive, at most 1 and non-increasing");
    previous = f;
  }
}

NetworkSpec TrainConfig::network_spec(const Dataset& d) const {
  NetworkSpec s;
  s.architecture = architecture;
  s.task = d.task();
  s.input_dim = d.input_dim();
  s.width = hidden_width;
  s.output_dim = d.output_dim();
  s.layers = architecture == Architecture::budding ? 0 : max_layers;
  s.max_depth = max_depth;
  s.activation = activation;
  s.highway_gate_bias = highway_gate_bias;
  return s;
}

json to_json(const TrainConfig& c) {
  return json{{"architecture", std::string(to_string(c.architecture))},
              {"hidden_width", c.hidden_width},
              {"max_layers", c.max_layers},
              {"max_depth", c.max_depth},
              {"activation", std::string(to_string(c.activation))},
              {"highway_gate_bias", c.highway_gate_bias},
              {"base_lr", c.base_lr},
              {"lambda_l1", c.lambda_l1},
              {"l2_coeff", c.l2_coeff},
              {"dropout_p", c.dropout_p},
              {"batch_size", c.batch_size},
              {"patience", c.patience},
              {"lr_factors", c.lr_factors},
              {"depth_decay", c.depth_decay},
              {"shuffle", c.shuffle},
              {"monitor", std::string(to_string(c.monitor))},
              {"max_epochs", c.max_epochs},
              {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::array<const char*, 18> known{"monitor", "architecture", "hidden_width", "max_layers", "max_depth", "activation",
                                                 "highway_gate_bias", "base_lr", "lambda_l1", "l2_coeff", "dropout_p",
                                                 "batch_size", "patience", "lr_factors", "depth_decay", "shuffle",
                                                 "max_epochs", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    if (j.contains("architecture")) c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    if (j.contains("monitor")) c.monitor = monitor_from_string(j.at("monitor").get<std::string>());
    if (j.contains("activation")) c.activation = activation_from_string(j.at("activation").get<std::string>());
    c.hidden_width = j.value("hidden_width", c.hidden_width);
    c.max_layers = j.value("max_layers", c.max_layers);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.highway_gate_bias = j.value("highway_gate_bias", c.highway_gate_bias);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.lambda_l1 = j.value("lambda_l1", c.lambda_l1);
    c.l2_coeff = j.value("l2_coeff", c.l2_coeff);
    c.dropout_p = j.value("dropout_p", c.dropout_p);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patience = j.value("patience", c.patience);
    c.lr_factors = j.value("lr_factors", c.lr_factors);
    c.depth_decay = j.value("depth_decay", c.depth_decay);
    c.shuffle = j.value("shuffle", c.shuffle);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// ScheduleState

ScheduleState::ScheduleState(int patience, std::vector<double> lr_factors, bool higher_is_better)
    : patience_(patience),
      lr_factors_(std::move(lr_factors)),
      higher_is_better_(higher_is_better),
      best_metric_(higher_is_better ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity()) {
  if (patience_ < 1) throw ConfigError("ScheduleState: patience must be at least 1");
}

ScheduleState::Event ScheduleState::update(int epoch, double metric) {
  if (finished_) throw UsageError("ScheduleState: update after the schedule stopped");
  const bool improved = higher_is_better_ ? metric > best_metric_ : metric < best_metric_;
  if (improved) {
    best_metric_ = metric;
    best_epoch_ = epoch;
    epochs_since_best_ = 0;
    return Event::improved;
  }
  if (++epochs_since_best_ < patience_) return Event::waiting;
  epochs_since_best_ = 0;
  if (static_cast<std::size_t>(stage_) < lr_factors_.size()) {
    ++stage_;
    stage_change_epochs_.push_back(epoch);
    return Event::stage_changed;
  }
  finished_ = true;
  return Event::stop;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalMetrics evaluate(const Network& net, const Dataset& d) {
  if (d.empty()) throw UsageError("evaluate: empty dataset");
  if (d.task() != net.task()) {
    throw ConfigError("evaluate: dataset task " + std::string(to_string(d.task())) + " does not match model task " +
                      std::string(to_string(net.task())));
  }
  if (d.input_dim() != net.spec().input_dim || d.output_dim() != net.spec().output_dim) {
    throw ConfigError("evaluate: dataset dimensions do not match the model");
  }
  constexpr std::size_t kChunk = 1024;
  EvalMetrics m;
  m.instances = d.size();
  const LossKind loss_kind = loss_for(d.task());
  ConfusionCounts counts(d.output_dim());
  double loss_sum = 0.0, wrong = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < d.size(); start += kChunk) {
    rows.resize(std::min(kChunk, d.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const Dataset chunk = d.subset(rows);
    const Matrix p = net.predict(chunk.inputs());
    loss_sum += batch_loss_and_grad(loss_kind, p, chunk.targets()).mean_loss * static_cast<double>(rows.size());
    for (std::size_t r = 0; r < p.rows(); ++r) wrong += instance_errors(d.task(), p.row(r), chunk.targets().row(r));
    if (d.task() == TaskKind::multilabel) counts.merge(confusion_counts(p, chunk.targets()));
  }
  const double n = static_cast<double>(d.size());
  m.loss = loss_sum / n;
  m.error = wrong / n;
  if (d.task() == TaskKind::multilabel) m.macro_f1 = macro_f1(counts);
  m.soft_sizes = net.soft_sizes(d.inputs());
  m.hard_size = net.hard_size();
  return m;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& dev_set, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty() || dev_set.empty()) throw UsageError("train: empty training or development set");
  if (train_set.task() != dev_set.task() || train_set.input_dim() != dev_set.input_dim() ||
      train_set.output_dim() != dev_set.output_dim()) {
    throw ConfigError("train: training and development sets disagree on task or dimensions");
  }

  Rng rng(config.seed);
  Network net(config.network_spec(train_set), rng);
  OptimizerConfig opt_cfg;
  opt_cfg.lambda_l1 = config.lambda_l1;
  opt_cfg.l2_coeff = config.l2_coeff;
  opt_cfg.depth_decay = config.depth_decay;
  const Optimizer optimizer(opt_cfg);

  const Monitor monitor = config.resolved_monitor(train_set.task());
  ScheduleState schedule(config.patience, config.lr_factors, monitor == Monitor::macro_f1);
  const double keep = 1.0 - config.dropout_p;

  TrainResult result{net, net, {}, 0, 0.0, {}, false, {}, 0};
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1;; ++epoch) {
    const double lr = config.base_lr * schedule.lr_factor();
    if (config.shuffle) rng.shuffle(order);
    int grew = 0;
    const int refused_before = net.refused_growths();
    std::string failure;
    for (std::size_t start = 0; start < order.size() && failure.empty(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const Dataset batch = train_set.subset(std::span<const std::size_t>(order).subspan(start, end - start));
      const std::vector<ParamPtr> params = net.parameters();
      for (const auto& p : params) p->zero_grad();
      const double loss = net.accumulate_gradients(batch.inputs(), batch.targets(), keep, rng);
      if (!std::isfinite(loss)) {
        failure = "non-finite training loss in epoch " + std::to_string(epoch);
        break;
      }
      try {
        optimizer.step(params, lr);
      } catch (const NumericalError& e) {
        failure = std::string(e.what()) + " in epoch " + std::to_string(epoch);
        break;
      }
      grew += net.after_step(rng);
    }

    EpochRecord rec;
    if (failure.empty()) {
      const EvalMetrics tr = evaluate(net, train_set);
      const EvalMetrics dv = evaluate(net, dev_set);
      if (!std::isfinite(tr.loss) || !std::isfinite(dv.loss)) failure = "non-finite evaluation loss in epoch " + std::to_string(epoch);
      rec.epoch = epoch;
      rec.train_error = tr.error;
      rec.train_loss = tr.loss;
      rec.val_error = dv.error;
      rec.val_loss = dv.loss;
      rec.macro_f1_train = tr.macro_f1;
      rec.macro_f1_val = dv.macro_f1;
      // Highway gate means are taken over the development set.
      if (dv.soft_sizes) {
        rec.per_layer_soft_sizes = dv.soft_sizes->per_layer;
        rec.total_soft_size = dv.soft_sizes->total;
      }
      rec.hard_size = dv.hard_size;
      rec.effective_lr = lr;
      rec.grew = grew;
      rec.refused = net.refused_growths() - refused_before;
    }
    if (!failure.empty()) {
      result.diverged = true;
      result.divergence_message = failure;
      break;
    }

    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double monitored = monitor == Monitor::macro_f1 ? *rec.macro_f1_val
                             : monitor == Monitor::loss   ? rec.val_loss
                                                          : rec.val_error;
    const auto event = schedule.update(epoch, monitored);
    if (event == ScheduleState::Event::improved) {
      result.best = net;
      result.best_epoch = epoch;
      result.best_metric = monitored;
    }
    if (event == ScheduleState::Event::stop) break;
    if (config.max_epochs > 0 && epoch >= config.max_epochs) break;
  }
  result.final_model = net;
  result.stage_change_epochs = schedule.stage_change_epochs();
  result.rng_state = rng.state();
  return result;
}

// ---------------------------------------------------------------------------
// CSV log

namespace {

void put_number(std::string& out, double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), ptr);
}

template <typename T>
void put_optional(std::string& out, const std::optional<T>& v) {
  if (v) put_number(out, static_cast<double>(*v));
}

}  // namespace

std::string log_csv_header(std::size_t layer_columns) {
  std::string h =
      "epoch,train_error,train_loss,val_error,val_loss,macro_f1_train,macro_f1_val,total_soft_size,hard_size,effective_lr";
  for (std::size_t l = 0; l < layer_columns; ++l) h += ",layer_s_" + std::to_string(l);
  return h;
}

std::string log_csv(const std::vector<EpochRecord>& log, std::size_t layer_columns) {
  std::string out = log_csv_header(layer_columns) + "\n";
  for (const EpochRecord& r : log) {
    out += std::to_string(r.epoch);
    for (double v : {r.train_error, r.train_loss, r.val_error, r.val_loss}) {
      out += ',';
      put_number(out, v);
    }
    out += ',';
    put_optional(out, r.macro_f1_train);
    out += ',';
    put_optional(out, r.macro_f1_val);
    out += ',';
    put_optional(out, r.total_soft_size);
    out += ',';
    put_optional(out, r.hard_size);
    out += ',';
    put_number(out, r.effective_lr);
    for (std::size_t l = 0; l < layer_columns; ++l) {
      out += ',';
      if (l < r.per_layer_soft_sizes.size()) put_number(out, r.per_layer_soft_sizes[l]);
    }
    out += '\n';
  }
  return out;
}

void write_log_csv(const std::vector<EpochRecord>& log, std::size_t layer_columns, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write log " + path.string());
  out << log_csv(log, layer_columns);
}

// ---------------------------------------------------------------------------
// Checkpoints

json checkpoint_to_json(const Checkpoint& c, bool include_optimizer_state) {
  return json{{"format_version", c.format_version},
              {"config", to_json(c.config)},
              {"epoch", c.epoch},
              {"rng_state", c.rng_state},
              {"network", network_to_json(c.network, include_optimizer_state)}};
}

Checkpoint checkpoint_from_json(const json& j) {
  if (!j.is_object() || !j.contains("format_version")) throw ParseError("checkpoint: missing format_version");
  int version = 0;
  try {
    version = j.at("format_version").get<int>();
  } catch (const json::exception&) {
    throw ParseError("checkpoint: format_version is not an integer");
  }
  if (version != kCheckpointFormatVersion) {
    throw ParseError("checkpoint: unsupported format_version " + std::to_string(version) + " (this build reads " +
                     std::to_string(kCheckpointFormatVersion) + ")");
  }
  try {
    TrainConfig cfg = config_from_json(j.at("config"));
    return Checkpoint{version, cfg, network_from_json(j.at("network")), j.at("rng_state").get<std::uint64_t>(),
                      j.at("epoch").get<int>()};
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint config: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path, bool include_optimizer_state) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(c, include_optimizer_state).dump();
    if (!out) throw ConfigError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open checkpoint");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return checkpoint_from_json(j);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace ccnn
