#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ccnn/data.hpp"
#include "ccnn/network.hpp"
#include "ccnn/optim.hpp"

namespace ccnn {

// Development-set quantity that drives early stopping and the schedule.
// automatic: error rate, or Macro-F1 for multilabel tasks.
enum class Monitor { automatic, error, loss, macro_f1 };

std::string_view to_string(Monitor m);
Monitor monitor_from_string(std::string_view s);

struct TrainConfig {
  Architecture architecture = Architecture::tunnel;
  std::size_t hidden_width = 10;
  int max_layers = 10;
  int max_depth = 20;
  Activation activation = Activation::relu;
  double highway_gate_bias = HighwayLayer::kDefaultGateBias;
  double base_lr = 0.003;
  double lambda_l1 = 0.001;
  double l2_coeff = 1e-5;
  double dropout_p = 0.0;  // probability of dropping an input feature
  std::size_t batch_size = 1;
  int patience = 20;
  std::vector<double> lr_factors{0.3, 0.1};
  bool depth_decay = true;
  bool shuffle = true;
  Monitor monitor = Monitor::automatic;
  int max_epochs = 0;  // 0: run until the schedule stops
  std::uint64_t seed = 1;

  // Throws ConfigError describing the first invalid field.
  void validate() const;
  NetworkSpec network_spec(const Dataset& d) const;
  // The concrete monitor for a task; throws ConfigError for macro_f1 on a non-multilabel task.
  Monitor resolved_monitor(TaskKind task) const;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep the values already in `base`.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

// Patience-driven learning-rate stages. After `patience` epochs without a strict
// improvement the stage advances (lr * lr_factors[stage - 1]); once the last
// stage runs out of patience, training stops.
class ScheduleState {
 public:
  enum class Event { improved, waiting, stage_changed, stop };

  ScheduleState(int patience, std::vector<double> lr_factors, bool higher_is_better);

  Event update(int epoch, double metric);

  double lr_factor() const { return stage_ == 0 ? 1.0 : lr_factors_[stage_ - 1]; }
  int stage() const { return stage_; }
  int epochs_since_best() const { return epochs_since_best_; }
  double best_metric() const { return best_metric_; }
  int best_epoch() const { return best_epoch_; }
  bool finished() const { return finished_; }
  const std::vector<int>& stage_change_epochs() const { return stage_change_epochs_; }
  bool higher_is_better() const { return higher_is_better_; }

 private:
  int patience_;
  std::vector<double> lr_factors_;
  bool higher_is_better_;
  int stage_ = 0;
  int epochs_since_best_ = 0;
  double best_metric_;
  int best_epoch_ = 0;
  bool finished_ = false;
  std::vector<int> stage_change_epochs_;
};

struct EpochRecord {
  int epoch = 0;
  double train_error = 0.0;
  double train_loss = 0.0;
  double val_error = 0.0;
  double val_loss = 0.0;
  std::optional<double> macro_f1_train;
  std::optional<double> macro_f1_val;
  std::vector<double> per_layer_soft_sizes;
  std::optional<double> total_soft_size;
  std::optional<int> hard_size;
  double effective_lr = 0.0;
  int grew = 0;
  int refused = 0;
};

struct EvalMetrics {
  std::size_t instances = 0;
  double error = 0.0;
  double loss = 0.0;
  std::optional<double> macro_f1;
  std::optional<SoftSizes> soft_sizes;
  std::optional<int> hard_size;
};

// Eval mode: no dropout; highway soft sizes are averaged over `d`.
EvalMetrics evaluate(const Network& net, const Dataset& d);

struct TrainResult {
  Network best;
  Network final_model;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_metric = 0.0;
  std::vector<int> stage_change_epochs;
  bool diverged = false;
  std::string divergence_message;
  std::uint64_t rng_state = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& dev_set,
                  const EpochCallback& on_epoch = {});

// Epoch log CSV with the fixed header followed by layer_s_0..layer_s_{L-1}.
std::string log_csv_header(std::size_t layer_columns);
std::string log_csv(const std::vector<EpochRecord>& log, std::size_t layer_columns);
void write_log_csv(const std::vector<EpochRecord>& log, std::size_t layer_columns, const std::filesystem::path& path);

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  TrainConfig config;
  Network network;
  std::uint64_t rng_state = 0;
  int epoch = 0;
};

nlohmann::json checkpoint_to_json(const Checkpoint& c, bool include_optimizer_state = false);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path, bool include_optimizer_state = false);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ccnn
