#include "axdelay/harness.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <json.hpp>

#include "axdelay/error.hpp"

namespace axdelay {

namespace fs = std::filesystem;

std::string_view to_string(RunStage stage) {
  switch (stage) {
    case RunStage::pretrain: return "pretrain";
    case RunStage::schedule: return "schedule";
    case RunStage::finetune: return "finetune";
    case RunStage::done: return "done";
  }
  return "?";
}

namespace {

RunStage parse_stage(const std::string& s) {
  if (s == "pretrain") return RunStage::pretrain;
  if (s == "schedule") return RunStage::schedule;
  if (s == "finetune") return RunStage::finetune;
  if (s == "done") return RunStage::done;
  throw Error(ErrorCode::CorruptPayload, "unknown run stage '" + s + "'");
}

NamedArray make_array(std::string name, std::uint64_t rows, std::uint64_t cols,
                      std::span<const double> data) {
  return {std::move(name), rows, cols, std::vector<double>(data.begin(), data.end())};
}

std::vector<double> to_doubles(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

std::string layer_key(const char* prefix, std::size_t l) { return prefix + std::to_string(l); }

std::uint64_t meta_u64(const Checkpoint& c, const std::string& key) {
  try {
    return std::stoull(c.meta_value(key));
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::CorruptPayload, "metadata '" + key + "' is not an integer");
  }
}

void copy_into(std::span<double> dst, const NamedArray& a) {
  if (a.data.size() != dst.size())
    throw Error(ErrorCode::ShapeMismatch, "array '" + a.name + "' has " +
                                              std::to_string(a.data.size()) + " values, expected " +
                                              std::to_string(dst.size()));
  std::copy(a.data.begin(), a.data.end(), dst.begin());
}

std::vector<double> delay_caps(const Network& net) {
  std::vector<double> caps;
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    if (net.layers[l].has_delay) caps.push_back(net.theta_d[l]);
  return caps;
}

// Config equality for resume, ignoring where output goes.
bool same_run(RunConfig a, RunConfig b) {
  a.output_dir = b.output_dir;
  a.keep_checkpoints = b.keep_checkpoints;
  return to_json(a) == to_json(b);
}

}  // namespace

RunState fresh_run_state(const RunConfig& config, const std::string& config_source) {
  config.validate();
  RunState st;
  st.config = config;
  st.config_source = config_source;
  st.rng.seed(config.seed);
  const std::uint64_t net_seed = st.rng();
  st.net = make_network(config.network_config(), net_seed, config.init_config());
  st.opt = OptimizerState::for_network(st.net);
  for (std::size_t l = 0; l < st.net.layers.size(); ++l)
    if (st.net.layers[l].has_delay) {
      st.schedule.layers.push_back(l);
      st.schedule.per_layer.push_back({config.initial_cap, 0, SchedulePhase::pretraining});
    }
  return st;
}

Checkpoint to_checkpoint(const RunState& st) {
  Checkpoint c;
  c.blobs["config.json"] = to_json(st.config);
  c.blobs["config.source"] = st.config_source;
  c.meta["stage"] = std::string(to_string(st.stage));
  c.meta["global_step"] = std::to_string(st.global_step);
  c.meta["stage_units"] = std::to_string(st.stage_units);
  c.meta["units_total"] = std::to_string(st.units_total);
  c.meta["optimizer_step"] = std::to_string(st.opt.step);
  c.meta["schedule_rounds"] = std::to_string(st.schedule.rounds);
  c.meta["schedule_pretrained"] = st.schedule.pretrained ? "1" : "0";
  std::ostringstream rng;
  rng << st.rng;
  c.meta["rng"] = rng.str();

  const Network& net = st.net;
  c.arrays.push_back(make_array("theta_d", net.theta_d.size(), 1, net.theta_d));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerParams& p = net.layers[l];
    const auto& o = st.opt.layers[l];
    c.arrays.push_back(make_array(layer_key("W", l), p.W.rows(), p.W.cols(), p.W.flat()));
    c.arrays.push_back(make_array(layer_key("b", l), p.b.size(), 1, p.b));
    c.arrays.push_back(make_array(layer_key("adam_mW", l), p.W.rows(), p.W.cols(), o.W.m));
    c.arrays.push_back(make_array(layer_key("adam_vW", l), p.W.rows(), p.W.cols(), o.W.v));
    c.arrays.push_back(make_array(layer_key("adam_mb", l), p.b.size(), 1, o.b.m));
    c.arrays.push_back(make_array(layer_key("adam_vb", l), p.b.size(), 1, o.b.v));
    if (p.has_delay) {
      c.arrays.push_back(make_array(layer_key("d", l), p.d.size(), 1, p.d));
      c.arrays.push_back(make_array(layer_key("adam_md", l), p.d.size(), 1, o.d.m));
      c.arrays.push_back(make_array(layer_key("adam_vd", l), p.d.size(), 1, o.d.v));
    }
  }
  std::vector<double> theta, anchor, phase;
  for (const auto& ls : st.schedule.per_layer) {
    theta.push_back(ls.theta_d);
    anchor.push_back(static_cast<double>(ls.anchor));
    phase.push_back(static_cast<double>(static_cast<int>(ls.phase)));
  }
  const auto n = st.schedule.layers.size();
  c.arrays.push_back(make_array("schedule_layers", n, 1, to_doubles(st.schedule.layers)));
  c.arrays.push_back(make_array("schedule_theta", n, 1, theta));
  c.arrays.push_back(make_array("schedule_anchor", n, 1, anchor));
  c.arrays.push_back(make_array("schedule_phase", n, 1, phase));
  return c;
}

Network network_from_checkpoint(const Checkpoint& ckpt, RunConfig* config_out) {
  const auto it = ckpt.blobs.find("config.json");
  if (it == ckpt.blobs.end()) throw Error(ErrorCode::CorruptPayload, "checkpoint lacks config");
  const RunConfig cfg = parse_run_config(it->second);
  if (config_out) *config_out = cfg;
  Network net = make_network(cfg.network_config(), 0, cfg.init_config());
  copy_into(net.theta_d, ckpt.array("theta_d"));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    LayerParams& p = net.layers[l];
    copy_into(p.W.flat(), ckpt.array(layer_key("W", l)));
    copy_into(p.b, ckpt.array(layer_key("b", l)));
    if (p.has_delay) copy_into(p.d, ckpt.array(layer_key("d", l)));
  }
  return net;
}

RunState from_checkpoint(const Checkpoint& ckpt) {
  RunState st;
  st.net = network_from_checkpoint(ckpt, &st.config);
  const auto src = ckpt.blobs.find("config.source");
  if (src != ckpt.blobs.end()) st.config_source = src->second;
  st.stage = parse_stage(ckpt.meta_value("stage"));
  st.global_step = meta_u64(ckpt, "global_step");
  st.stage_units = meta_u64(ckpt, "stage_units");
  st.units_total = meta_u64(ckpt, "units_total");
  std::istringstream rng(ckpt.meta_value("rng"));
  rng >> st.rng;
  if (rng.fail()) throw Error(ErrorCode::CorruptPayload, "unreadable RNG state");

  st.opt = OptimizerState::for_network(st.net);
  st.opt.step = meta_u64(ckpt, "optimizer_step");
  for (std::size_t l = 0; l < st.net.layers.size(); ++l) {
    auto& o = st.opt.layers[l];
    copy_into(o.W.m, ckpt.array(layer_key("adam_mW", l)));
    copy_into(o.W.v, ckpt.array(layer_key("adam_vW", l)));
    copy_into(o.b.m, ckpt.array(layer_key("adam_mb", l)));
    copy_into(o.b.v, ckpt.array(layer_key("adam_vb", l)));
    if (st.net.layers[l].has_delay) {
      copy_into(o.d.m, ckpt.array(layer_key("adam_md", l)));
      copy_into(o.d.v, ckpt.array(layer_key("adam_vd", l)));
    }
  }

  st.schedule.rounds = meta_u64(ckpt, "schedule_rounds");
  st.schedule.pretrained = ckpt.meta_value("schedule_pretrained") == "1";
  const auto& layers = ckpt.array("schedule_layers").data;
  const auto& theta = ckpt.array("schedule_theta").data;
  const auto& anchor = ckpt.array("schedule_anchor").data;
  const auto& phase = ckpt.array("schedule_phase").data;
  if (theta.size() != layers.size() || anchor.size() != layers.size() || phase.size() != layers.size())
    throw Error(ErrorCode::CorruptPayload, "schedule arrays disagree in length");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    st.schedule.layers.push_back(static_cast<std::size_t>(layers[i]));
    st.schedule.per_layer.push_back({theta[i], static_cast<std::size_t>(anchor[i]),
                                     static_cast<SchedulePhase>(static_cast<int>(phase[i]))});
  }
  return st;
}

MetricsWriter::MetricsWriter(const fs::path& path) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw Error(ErrorCode::IoError, "cannot open metrics file " + path.string());
  if (fresh) out_ << kHeader << '\n' << std::flush;
}

void MetricsWriter::row(std::uint64_t epoch, std::uint64_t step, const std::string& split,
                        double loss, double accuracy, const std::vector<double>& caps) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu,%llu,%s,%.9g,%.6f", static_cast<unsigned long long>(epoch),
                static_cast<unsigned long long>(step), split.c_str(), loss, accuracy);
  out_ << buf;
  for (std::size_t k = 0; k < 2; ++k) {
    out_ << ',';
    if (k < caps.size()) out_ << caps[k];
  }
  out_ << '\n' << std::flush;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : lock_path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw Error(ErrorCode::IoError, "output directory " + dir.string() +
                                        " is locked by another run (" + lock_path_.string() + ")");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(lock_path_, ec);
}

TrainerScheduleTarget::TrainerScheduleTarget(Trainer& trainer, TrainLogger on_train,
                                             DecisionLogger on_decision)
    : trainer_(trainer), on_train_(std::move(on_train)), on_decision_(std::move(on_decision)) {}

std::vector<std::size_t> TrainerScheduleTarget::delay_layers() const {
  std::vector<std::size_t> out;
  const Network& net = trainer_.network();
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    if (net.layers[l].has_delay) out.push_back(l);
  return out;
}

std::vector<double> TrainerScheduleTarget::delays(std::size_t layer) const {
  return trainer_.network().layers[layer].d;
}

void TrainerScheduleTarget::set_cap(std::size_t layer, double theta_d) {
  Network& net = trainer_.network();
  net.theta_d[layer] = theta_d;
  clip_delays_inplace(net.layers[layer].d, theta_d);
}

void TrainerScheduleTarget::pretrain(std::size_t epochs) {
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto m = trainer_.train_epochs(1);
    if (on_train_) on_train_(m);
  }
}

void TrainerScheduleTarget::train(std::size_t steps) {
  const auto m = trainer_.train_steps(steps);
  if (on_train_) on_train_(m);
}

void TrainerScheduleTarget::on_decision(const ScheduleLogEntry& entry) {
  if (on_decision_) on_decision_(entry);
}

TrainSummary run_train(const RunConfig& config, const std::string& config_source,
                       const std::optional<fs::path>& resume, std::ostream* progress,
                       std::optional<std::uint64_t> stop_after_units) {
  config.validate();
  RunState st;
  if (resume) {
    st = from_checkpoint(load_checkpoint(*resume));
    if (!same_run(st.config, config))
      throw Error(ErrorCode::ConfigInvalid, "config differs from the checkpoint being resumed");
    st.config.output_dir = config.output_dir;
    st.config.keep_checkpoints = config.keep_checkpoints;
  } else {
    st = fresh_run_state(config, config_source);
  }
  const RunConfig& cfg = st.config;
  const fs::path out_dir = cfg.output_dir;
  DirectoryLock lock(out_dir);
  MetricsWriter metrics(out_dir / "metrics.csv");

  // Data. Validation comes from its own manifest or a seeded split of train.
  DatasetManifest train_m = load_manifest(cfg.train_manifest);
  std::optional<DatasetManifest> val_m;
  if (!cfg.val_manifest.empty()) {
    val_m = load_manifest(cfg.val_manifest);
  } else if (cfg.val_fraction > 0) {
    auto [tr, va] = split_manifest(train_m, cfg.val_fraction, cfg.seed);
    train_m = std::move(tr);
    if (!va.entries.empty()) val_m = std::move(va);
  }
  auto check_shape = [&](const DatasetManifest& m, const std::string& what) {
    if (static_cast<std::size_t>(m.channel_count) != cfg.layer_sizes.front())
      throw Error(ErrorCode::ShapeMismatch, what + " has " + std::to_string(m.channel_count) +
                                                " channels, network expects " +
                                                std::to_string(cfg.layer_sizes.front()));
    if (static_cast<std::size_t>(m.num_classes) > cfg.layer_sizes.back())
      throw Error(ErrorCode::ShapeMismatch, what + " has more classes than output neurons");
  };
  check_shape(train_m, "train manifest");
  if (train_m.entries.empty()) throw Error(ErrorCode::DatasetMissing, "training set is empty");

  BatchIterator train_it(train_m, cfg.batch_size, true, cfg.seed, cfg.binning());
  std::optional<BatchIterator> val_it;
  if (val_m) {
    check_shape(*val_m, "validation manifest");
    val_it.emplace(*val_m, cfg.batch_size, false, 0, cfg.binning());
  }
  std::optional<BatchIterator> test_it;
  if (!cfg.test_manifest.empty()) {
    auto tm = load_manifest(cfg.test_manifest);
    check_shape(tm, "test manifest");
    test_it.emplace(std::move(tm), cfg.batch_size, false, 0, cfg.binning());
  }

  const TrainConfig tc = cfg.train_config();
  Trainer trainer(st.net, train_it, tc);
  trainer.optimizer() = st.opt;
  trainer.set_global_step(st.global_step);
  const std::uint64_t bpe = train_it.batches_per_epoch();

  auto epoch_now = [&] { return trainer.global_step() / bpe; };
  auto log_train = [&](const StepMetrics& m) {
    metrics.row(epoch_now(), trainer.global_step(), "train", m.mean_loss, m.accuracy,
                delay_caps(st.net));
    if (progress)
      *progress << "[" << to_string(st.stage) << "] step " << trainer.global_step() << " loss "
                << m.mean_loss << " acc " << m.accuracy << '\n';
  };
  TrainSummary summary;
  summary.output_dir = out_dir;
  auto log_eval = [&](BatchIterator& it, const std::string& split) {
    const auto r = evaluate(st.net, it, tc);
    metrics.row(epoch_now(), trainer.global_step(), split, r.mean_loss, r.accuracy,
                delay_caps(st.net));
    if (progress) *progress << "  " << split << " accuracy " << r.accuracy << '\n';
    return r.accuracy;
  };

  auto checkpoint = [&] {
    st.global_step = trainer.global_step();
    st.opt = trainer.optimizer();
    const Checkpoint c = to_checkpoint(st);
    save_checkpoint(c, out_dir / "checkpoint.bin");
    if (cfg.keep_checkpoints) {
      char name[48];
      std::snprintf(name, sizeof(name), "ckpt_%05llu.bin",
                    static_cast<unsigned long long>(st.units_total));
      save_checkpoint(c, out_dir / name);
    }
  };
  auto finish_unit = [&] {
    ++st.stage_units;
    ++st.units_total;
    checkpoint();
    return stop_after_units && st.units_total >= *stop_after_units;
  };

  if (!resume) checkpoint();

  const SchedulerConfig scfg = cfg.scheduler_config();
  TrainerScheduleTarget target(trainer, log_train, [&](const ScheduleLogEntry& e) {
    metrics.row(epoch_now(), trainer.global_step(), "schedule-layer" + std::to_string(e.layer + 1),
                e.alpha, e.decision == Decision::grow ? 1.0 : 0.0, delay_caps(st.net));
    if (progress)
      *progress << "  layer " << e.layer + 1 << " alpha " << e.alpha << " -> "
                << to_string(e.decision) << " theta_d " << e.theta_d << '\n';
  });

  bool halted = false;
  while (st.stage != RunStage::done && !halted) {
    switch (st.stage) {
      case RunStage::pretrain:
        if (st.stage_units < cfg.pretrain_epochs) {
          log_train(trainer.train_epochs(1));
          if (val_it) summary.val_accuracy = log_eval(*val_it, "val");
          halted = finish_unit();
        } else {
          st.stage = cfg.adaptive ? RunStage::schedule : RunStage::finetune;
          st.stage_units = 0;
          if (cfg.adaptive) {
            st.schedule.pretrained = true;
            for (auto& ls : st.schedule.per_layer) ls.phase = SchedulePhase::growing;
          }
        }
        break;
      case RunStage::schedule:
        if (!st.schedule.finished()) {
          schedule_round(st.schedule, target, scfg);
          halted = finish_unit();
        } else {
          st.stage = RunStage::finetune;
          st.stage_units = 0;
        }
        break;
      case RunStage::finetune:
        if (st.stage_units < cfg.finetune_epochs) {
          log_train(trainer.train_epochs(1));
          if (val_it) summary.val_accuracy = log_eval(*val_it, "val");
          halted = finish_unit();
        } else {
          st.stage = RunStage::done;
        }
        break;
      case RunStage::done:
        break;
    }
  }

  if (st.stage == RunStage::done) {
    if (test_it) summary.test_accuracy = log_eval(*test_it, "test");
    checkpoint();
    save_checkpoint(to_checkpoint(st), out_dir / "final.bin");
  }
  summary.caps = delay_caps(st.net);
  summary.steps = trainer.global_step();
  return summary;
}

EvalReport run_eval(const fs::path& checkpoint, const fs::path& manifest_path) {
  RunConfig cfg;
  const Network net = network_from_checkpoint(load_checkpoint(checkpoint), &cfg);
  const DatasetManifest manifest = load_manifest(manifest_path);
  if (static_cast<std::size_t>(manifest.channel_count) != net.config.layer_sizes.front())
    throw Error(ErrorCode::ShapeMismatch, "manifest has " + std::to_string(manifest.channel_count) +
                                              " channels, checkpoint expects " +
                                              std::to_string(net.config.layer_sizes.front()));
  if (static_cast<std::size_t>(manifest.num_classes) > net.layers.back().outputs())
    throw Error(ErrorCode::ShapeMismatch, "manifest has more classes than the network outputs");
  BatchIterator it(manifest, cfg.batch_size, false, 0, cfg.binning());
  const EvalResult r = evaluate(net, it, cfg.train_config());
  return {r.accuracy, r.samples, r.confusion};
}

std::vector<LayerDelayReport> inspect_delays(const Network& net) {
  std::vector<LayerDelayReport> out;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerParams& p = net.layers[l];
    if (!p.has_delay) continue;
    LayerDelayReport r;
    r.layer = l;
    r.theta_d = net.theta_d[l];
    r.histogram = delay_histogram(p.d);
    if (!p.d.empty()) {
      const auto [lo, hi] = std::minmax_element(p.d.begin(), p.d.end());
      r.min = *lo;
      r.max = *hi;
      double sum = 0.0;
      for (double v : p.d) sum += v;
      r.mean = sum / static_cast<double>(p.d.size());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LayerDelayReport> inspect_delays(const fs::path& checkpoint) {
  return inspect_delays(network_from_checkpoint(load_checkpoint(checkpoint)));
}

std::string format_delay_report(const std::vector<LayerDelayReport>& report) {
  std::ostringstream os;
  for (const auto& r : report) {
    os << "layer " << r.layer + 1 << ": theta_d=" << r.theta_d << " neurons=" << r.histogram.total
       << " min=" << r.min << " mean=" << r.mean << " max=" << r.max << '\n';
    os << "  histogram (delay:count):";
    for (std::size_t b = 0; b < r.histogram.counts.size(); ++b)
      if (r.histogram.counts[b]) os << ' ' << b << ':' << r.histogram.counts[b];
    os << '\n';
  }
  return os.str();
}

RunConfig synthetic_run_config(const SyntheticTemplate& layout, const fs::path& dir,
                               std::uint64_t seed) {
  RunConfig cfg = profile_defaults("synthetic");
  cfg.train_manifest = (dir / "train.tsv").string();
  cfg.test_manifest = (dir / "test.tsv").string();
  cfg.timesteps = static_cast<std::size_t>(std::ceil(layout.duration_ms / cfg.dt_ms)) + 20;
  cfg.seed = seed;
  cfg.output_dir = (dir / "run").string();
  return cfg;
}

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
}

}  // namespace axdelay
