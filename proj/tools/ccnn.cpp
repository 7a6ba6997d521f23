#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ccnn/data.hpp"
#include "ccnn/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ccnn;

namespace {

// Train / dev / optional test triple resolved from a --data string.
struct DataBundle {
  std::string description;
  Dataset train;
  Dataset dev;
  std::optional<Dataset> test;
  bool mnist = false;
};

struct DataOptions {
  std::string spec;
  std::string mnist_dir = "data/mnist";
  std::size_t train_subset = 0;
  std::uint64_t data_seed = 1;
  double train_fraction = 5.0 / 6.0;
};

std::pair<Dataset, Dataset> load_mnist_pair(const std::string& dir) {
  const fs::path d(dir);
  Dataset train = load_mnist_idx(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte");
  Dataset test = load_mnist_idx(d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte");
  return {std::move(train), std::move(test)};
}

DataBundle resolve_data(const DataOptions& o) {
  const auto colon = o.spec.find(':');
  const std::string kind = o.spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : o.spec.substr(colon + 1);
  DataBundle b;
  b.description = o.spec;
  if (kind == "spirals") {
    // The development set is the training set for the spirals.
    b.train = generate_two_spirals(SpiralSpec::defaults(spiral_variant_from_string(arg), o.data_seed));
    b.dev = b.train;
  } else if (kind == "csv") {
    if (arg.empty()) throw UsageError("--data csv:PATH needs a path");
    b.train = load_binary_csv(arg);
    b.dev = b.train;
  } else if (kind == "multilabel") {
    if (arg.empty()) throw UsageError("--data multilabel:PATH needs a path");
    auto [tr, dv] = split_train_validation(load_multilabel_csv(arg, true), o.train_fraction, o.data_seed);
    b.train = std::move(tr);
    b.dev = std::move(dv);
  } else if (kind == "mnist" || kind == "mnist01") {
    auto [full, test] = load_mnist_pair(o.mnist_dir);
    if (kind == "mnist01") {
      full = filter_binary_mnist(full, 0, 1);
      test = filter_binary_mnist(test, 0, 1);
    }
    auto [tr, dv] = split_train_validation(full, o.train_fraction, o.data_seed);
    if (o.train_subset > 0 && o.train_subset < tr.size()) tr = sample_subset(tr, o.train_subset, o.data_seed);
    b.train = std::move(tr);
    b.dev = std::move(dv);
    b.test = std::move(test);
    b.mnist = true;
  } else {
    throw UsageError("unknown --data '" + o.spec + "' (expected spirals:easy|medium|difficult, mnist, mnist01, csv:PATH or multilabel:PATH)");
  }
  return b;
}

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--data", o.spec, "spirals:easy|medium|difficult, mnist, mnist01, csv:PATH or multilabel:PATH")->required();
  cmd->add_option("--mnist-dir", o.mnist_dir, "directory holding the four MNIST IDX files")->capture_default_str();
  cmd->add_option("--train-subset", o.train_subset, "keep a seeded random subset of this many training rows (0 keeps all)")
      ->capture_default_str();
  cmd->add_option("--data-seed", o.data_seed, "seed for data generation and splitting")->capture_default_str();
  cmd->add_option("--train-fraction", o.train_fraction, "training share of the train/validation split (5:1)")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

json metrics_json(const EvalMetrics& m) {
  json j{{"instances", m.instances}, {"error", m.error}, {"loss", m.loss}};
  if (m.macro_f1) j["macro_f1"] = *m.macro_f1;
  if (m.soft_sizes) j["total_soft_size"] = m.soft_sizes->total;
  if (m.hard_size) j["hard_size"] = *m.hard_size;
  return j;
}

std::string metrics_line(const EvalMetrics& m) {
  std::string s = "error=" + std::to_string(m.error) + " loss=" + std::to_string(m.loss);
  if (m.macro_f1) s += " macro_f1=" + std::to_string(*m.macro_f1);
  if (m.soft_sizes) s += " soft_size=" + std::to_string(m.soft_sizes->total);
  if (m.hard_size) s += " hard_size=" + std::to_string(*m.hard_size);
  return s;
}

// ---------------------------------------------------------------------------

struct SpiralOptions {
  std::string variant = "easy";
  std::uint64_t seed = 0;
  std::size_t points = 200;
  double noise = 0.0;
  std::string out;
};

int cmd_gen_spirals(const SpiralOptions& o) {
  SpiralSpec spec = SpiralSpec::defaults(spiral_variant_from_string(o.variant), o.seed);
  spec.points_per_class = o.points;
  spec.noise_sd = o.noise;
  const Dataset d = generate_two_spirals(spec);
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_binary_csv(d, out);
  json manifest{{"variant", std::string(to_string(spec.variant))},
                {"points_per_class", spec.points_per_class},
                {"theta0", spec.theta0},
                {"angle_span", spec.angle_span},
                {"r_min", spec.r_min},
                {"radius_slope", spec.radius_slope},
                {"noise_sd", spec.noise_sd},
                {"seed", spec.seed},
                {"standardize", spec.standardize},
                {"rows", d.size()}};
  write_text(out.string() + ".manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << d.size() << " rows to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  DataOptions data;
  std::string config_path;
  std::string out = "runs/latest";
  std::string arch, activation, monitor;
  double lr = 0, lambda = 0, l2 = 0, dropout = 0, gate_bias = 0;
  std::size_t hidden = 0, batch = 0;
  int layers = 0, max_depth = 0, patience = 0, max_epochs = 0;
  std::uint64_t seed = 0;
  std::vector<double> lr_factors;
  bool no_depth_decay = false, no_shuffle = false, quiet = false, optimizer_state = false;
};

// Built-in defaults for a data set and architecture, before the config file and flags.
TrainConfig preset(const std::string& data_kind, Architecture arch) {
  TrainConfig c;
  c.architecture = arch;
  if (data_kind == "mnist" || data_kind == "mnist01" || data_kind == "multilabel") {
    c.hidden_width = 100;
    c.base_lr = 0.0003;
    c.dropout_p = 0.25;
    c.batch_size = 32;
  } else {
    // Spirals: the development set is the training set, and its error rate
    // plateaus long before the loss does.
    c.monitor = Monitor::loss;
    if (arch == Architecture::budding) c.base_lr = 0.001;
  }
  return c;
}

int cmd_train(CLI::App* cmd, const TrainFlags& f) {
  const bool flag_set_arch = cmd->count("--arch") > 0;
  json file_cfg = json::object();
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw UsageError("cannot open config " + f.config_path);
    try {
      file_cfg = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(f.config_path + ": " + e.what());
    }
  }
  Architecture arch = Architecture::tunnel;
  if (flag_set_arch) {
    arch = architecture_from_string(f.arch);
  } else if (file_cfg.is_object() && file_cfg.contains("architecture")) {
    arch = architecture_from_string(file_cfg.at("architecture").get<std::string>());
  }
  const std::string data_kind = f.data.spec.substr(0, f.data.spec.find(':'));
  TrainConfig c = config_from_json(file_cfg, preset(data_kind, arch));
  c.architecture = arch;
  if (cmd->count("--activation")) c.activation = activation_from_string(f.activation);
  if (cmd->count("--monitor")) c.monitor = monitor_from_string(f.monitor);
  if (cmd->count("--lr")) c.base_lr = f.lr;
  if (cmd->count("--lambda")) c.lambda_l1 = f.lambda;
  if (cmd->count("--l2")) c.l2_coeff = f.l2;
  if (cmd->count("--dropout")) c.dropout_p = f.dropout;
  if (cmd->count("--gate-bias")) c.highway_gate_bias = f.gate_bias;
  if (cmd->count("--hidden")) c.hidden_width = f.hidden;
  if (cmd->count("--batch")) c.batch_size = f.batch;
  if (cmd->count("--layers")) c.max_layers = f.layers;
  if (cmd->count("--max-depth")) c.max_depth = f.max_depth;
  if (cmd->count("--patience")) c.patience = f.patience;
  if (cmd->count("--max-epochs")) c.max_epochs = f.max_epochs;
  if (cmd->count("--seed")) c.seed = f.seed;
  if (cmd->count("--lr-factors")) c.lr_factors = f.lr_factors;
  if (f.no_depth_decay) c.depth_decay = false;
  if (f.no_shuffle) c.shuffle = false;
  c.validate();

  const DataBundle data = resolve_data(f.data);

  const fs::path out(f.out);
  fs::create_directories(out);
  const fs::path config_path = out / "config.json";
  const fs::path log_path = out / "log.csv";
  const fs::path best_path = out / "best.json";
  const fs::path final_path = out / "final.json";
  const fs::path manifest_path = out / "manifest.json";
  for (const auto& p : {log_path, best_path, final_path, manifest_path}) fs::remove(p);
  write_text(config_path, to_json(c).dump(2) + "\n");

  const std::size_t layer_columns =
      (c.architecture == Architecture::tunnel || c.architecture == Architecture::highway) ? static_cast<std::size_t>(c.max_layers) : 0;

  if (!f.quiet) {
    std::cout << "training " << to_string(c.architecture) << " on " << data.description << ": " << data.train.size()
              << " train / " << data.dev.size() << " dev rows\n";
  }
  const TrainResult r = train(c, data.train, data.dev, [&](const EpochRecord& e) {
    if (f.quiet) return;
    std::cout << "epoch " << e.epoch << " train_error=" << e.train_error << " val_error=" << e.val_error
              << " lr=" << e.effective_lr;
    if (e.macro_f1_val) std::cout << " val_macro_f1=" << *e.macro_f1_val;
    if (e.total_soft_size) std::cout << " soft_size=" << *e.total_soft_size;
    if (e.hard_size) std::cout << " hard_size=" << *e.hard_size;
    std::cout << std::endl;
  });

  write_log_csv(r.log, layer_columns, log_path);
  const int last_epoch = r.log.empty() ? 0 : r.log.back().epoch;
  save_checkpoint(Checkpoint{kCheckpointFormatVersion, c, r.best, r.rng_state, r.best_epoch}, best_path, f.optimizer_state);
  if (!r.diverged) {
    save_checkpoint(Checkpoint{kCheckpointFormatVersion, c, r.final_model, r.rng_state, last_epoch}, final_path,
                    f.optimizer_state);
  }

  json manifest{{"config_file", f.config_path},
                {"config", to_json(c)},
                {"data", data.description},
                {"output_dir", out.string()},
                {"log", log_path.string()},
                {"best_checkpoint", best_path.string()},
                {"status", r.diverged ? "diverged" : "completed"},
                {"epochs", last_epoch},
                {"best_epoch", r.best_epoch},
                {"best_metric", r.best_metric},
                {"stage_change_epochs", r.stage_change_epochs}};
  if (!r.diverged) manifest["final_checkpoint"] = final_path.string();
  if (r.diverged) manifest["divergence"] = r.divergence_message;

  std::string summary = "best epoch " + std::to_string(r.best_epoch) + " dev metric " + std::to_string(r.best_metric);
  if (data.test && r.best_epoch > 0) {
    const EvalMetrics t = evaluate(r.best, *data.test);
    manifest["test"] = metrics_json(t);
    summary += " test error " + std::to_string(t.error);
    if (t.macro_f1) summary += " test macro_f1 " + std::to_string(*t.macro_f1);
  }
  write_text(manifest_path, manifest.dump(2) + "\n");
  if (r.diverged) {
    std::cerr << "diverged: " << r.divergence_message << " (best checkpoint kept at " << best_path.string() << ")\n";
    return 3;
  }
  std::cout << summary << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalFlags {
  DataOptions data;
  std::string checkpoint;
  std::string split = "auto";
  bool prune = false;
};

int cmd_eval(const EvalFlags& f) {
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  const DataBundle data = resolve_data(f.data);
  const Dataset* target = &data.dev;
  if (f.split == "train") {
    target = &data.train;
  } else if (f.split == "test" || (f.split == "auto" && data.test)) {
    if (!data.test) throw UsageError("--split test needs a data set with a test split");
    target = &*data.test;
  } else if (f.split != "dev" && f.split != "auto") {
    throw UsageError("--split must be auto, train, dev or test");
  }
  const EvalMetrics m = evaluate(ck.network, *target);
  std::cout << "checkpoint epoch " << ck.epoch << ": " << metrics_line(m) << "\n";
  if (f.prune) {
    const Network pruned = ck.network.pruned();
    const EvalMetrics p = evaluate(pruned, *target);
    std::cout << "pruned: " << metrics_line(p) << "\n";
    std::cout << "parameters " << ck.network.parameter_count() << " -> " << pruned.parameter_count() << "\n";
    if (ck.network.architecture() == Architecture::budding) {
      std::cout << "nodes " << ck.network.tree().node_count() << " -> " << pruned.tree().node_count() << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constructive networks: tunnel networks, highway networks and budding perceptrons"};
  app.require_subcommand(1);

  SpiralOptions so;
  auto* gen = app.add_subcommand("gen-spirals", "write a two-spirals data set as CSV (x0,x1,label) plus a manifest");
  gen->add_option("--variant", so.variant, "easy|medium|difficult")
      ->capture_default_str()
      ->check(CLI::IsMember({"easy", "medium", "difficult"}));
  gen->add_option("--seed", so.seed, "noise seed")->capture_default_str();
  gen->add_option("--points", so.points, "points per class")->capture_default_str();
  gen->add_option("--noise", so.noise, "Gaussian noise standard deviation before standardization")->capture_default_str();
  gen->add_option("--out", so.out, "output CSV path")->required();

  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "train a model; writes config.json, log.csv, best.json, final.json, manifest.json");
  add_data_options(tr, tf.data);
  tr->add_option("--config", tf.config_path, "JSON file with TrainConfig fields (flags take precedence)");
  tr->add_option("--out", tf.out, "output directory")->capture_default_str();
  tr->add_option("--arch", tf.arch, "tunnel|highway|budding|mlp-baseline (default tunnel)");
  tr->add_option("--activation", tf.activation, "relu|sigmoid|identity (default relu)");
  tr->add_option("--monitor", tf.monitor,
                 "auto|error|loss|macro_f1: dev quantity for early stopping (default auto; spirals and csv loss)");
  tr->add_option("--lr", tf.lr, "base learning rate (default 0.003; budding 0.001; MNIST 0.0003)");
  tr->add_option("--lambda", tf.lambda, "L1 coefficient on gates and leafness (default 0.001)");
  tr->add_option("--l2", tf.l2, "L2 coefficient on weights (default 1e-5)");
  tr->add_option("--dropout", tf.dropout, "input dropout probability (default 0; MNIST 0.25)");
  tr->add_option("--gate-bias", tf.gate_bias, "initial highway gate bias (default -2)");
  tr->add_option("--hidden", tf.hidden, "hidden width K (default 10; MNIST 100)");
  tr->add_option("--batch", tf.batch, "minibatch size, 1 is online (default 1; MNIST 32)");
  tr->add_option("--layers", tf.layers, "maximum layers for tunnel/highway/mlp (default 10)");
  tr->add_option("--max-depth", tf.max_depth, "budding tree levels (default 20)");
  tr->add_option("--patience", tf.patience, "epochs without improvement per stage (default 20)");
  tr->add_option("--lr-factors", tf.lr_factors, "learning-rate factors of the later stages (default 0.3 0.1)");
  tr->add_option("--max-epochs", tf.max_epochs, "hard epoch cap, 0 for none (default 0)");
  tr->add_option("--seed", tf.seed, "initialization and shuffling seed (default 1)");
  tr->add_flag("--no-depth-decay", tf.no_depth_decay, "disable the 0.75^depth learning-rate scale");
  tr->add_flag("--no-shuffle", tf.no_shuffle, "keep the data order fixed");
  tr->add_flag("--optimizer-state", tf.optimizer_state, "store Adam moments in checkpoints");
  tr->add_flag("--quiet", tf.quiet, "suppress per-epoch output");

  EvalFlags ef;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a data set");
  add_data_options(ev, ef.data);
  ev->add_option("--checkpoint", ef.checkpoint, "checkpoint JSON")->required();
  ev->add_option("--split", ef.split, "auto|train|dev|test (auto: test when available, else dev)")->capture_default_str();
  ev->add_flag("--prune", ef.prune, "also evaluate the pruned model and report the size reduction");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_spirals(so);
    if (*tr) return cmd_train(tr, tf);
    if (*ev) return cmd_eval(ef);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
