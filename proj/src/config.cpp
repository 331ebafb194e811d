#include "axdelay/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "axdelay/error.hpp"

namespace axdelay {

using nlohmann::json;

namespace {

// Field table shared by the reader and the writer.
template <typename Visitor>
void visit_fields(RunConfig& c, Visitor&& v) {
  v("profile", c.profile);
  v("train_manifest", c.train_manifest);
  v("val_manifest", c.val_manifest);
  v("test_manifest", c.test_manifest);
  v("val_fraction", c.val_fraction);
  v("dt_ms", c.dt_ms);
  v("timesteps", c.timesteps);
  v("binary_bins", c.binary_bins);
  v("layer_sizes", c.layer_sizes);
  v("delay_on_layer", c.delay_on_layer);
  v("tau_s", c.tau_s);
  v("tau_r", c.tau_r);
  v("theta_u", c.theta_u);
  v("kernel_truncation", c.kernel_truncation);
  v("weight_init_scale", c.weight_init_scale);
  v("delay_init_max", c.delay_init_max);
  v("adaptive", c.adaptive);
  v("initial_cap", c.initial_cap);
  v("window", c.window);
  v("alpha_theta", c.alpha_theta);
  v("tsteps", c.tsteps);
  v("pretrain_epochs", c.pretrain_epochs);
  v("finetune_epochs", c.finetune_epochs);
  v("window_includes_anchor_minus_m", c.window_includes_anchor_minus_m);
  v("hard_ceiling", c.hard_ceiling);
  v("batch_size", c.batch_size);
  v("weight_lr", c.weight_lr);
  v("delay_lr", c.delay_lr);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("adam_eps", c.adam_eps);
  v("loss", c.loss);
  v("target_true", c.target_true);
  v("target_false", c.target_false);
  v("surrogate_width", c.surrogate_width);
  v("delay_mode", c.delay_mode);
  v("seed", c.seed);
  v("output_dir", c.output_dir);
  v("keep_checkpoints", c.keep_checkpoints);
}

void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); }

}  // namespace

std::vector<std::string> profile_names() { return {"paper-shd", "paper-ntidigits", "synthetic"}; }

RunConfig profile_defaults(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == "paper-shd") {
    // SHD column of the parameter table: tau_s = tau_r = 1 ms, theta_u = 10,
    // initial cap 64, Tsteps 150, 700-128-128-20.
    return c;
  }
  if (profile == "paper-ntidigits") {
    c.layer_sizes = {64, 256, 256, 11};
    c.tau_s = 5.0;
    c.tau_r = 5.0;
    c.initial_cap = 128.0;
    c.window = 4;
    c.alpha_theta = 0.10;
    return c;
  }
  if (profile == "synthetic") {
    c.layer_sizes = {10, 32, 32, 2};
    c.timesteps = 0;  // filled from the generated task
    c.batch_size = 32;
    c.weight_lr = 0.01;
    c.delay_lr = 0.1;
    c.target_true = 8.0;
    c.target_false = 1.0;
    c.initial_cap = 48.0;
    c.delay_init_max = 48.0;
    c.tsteps = 16;
    c.pretrain_epochs = 30;
    c.finetune_epochs = 0;
    c.val_fraction = 0.0;
    return c;
  }
  invalid("unknown profile '" + profile + "'");
  return c;
}

void RunConfig::validate() const {
  if (train_manifest.empty()) invalid("train_manifest is required");
  if (!(dt_ms > 0)) invalid("dt_ms must be positive");
  if (timesteps == 0) invalid("timesteps must be positive");
  if (val_fraction < 0 || val_fraction >= 1) invalid("val_fraction must lie in [0, 1)");
  if (batch_size == 0) invalid("batch_size must be >= 1");
  if (weight_lr < 0 || delay_lr < 0) invalid("learning rates must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) invalid("Adam betas in [0, 1)");
  if (!(adam_eps > 0)) invalid("adam_eps must be positive");
  if (loss != "count_mse" && loss != "count_softmax_ce") invalid("loss must be count_mse or count_softmax_ce");
  if (delay_mode != "round" && delay_mode != "interpolate") invalid("delay_mode must be round or interpolate");
  if (!(surrogate_width > 0)) invalid("surrogate_width must be positive");
  if (delay_init_max < 0) invalid("delay_init_max must be non-negative");
  if (!(weight_init_scale > 0)) invalid("weight_init_scale must be positive");
  network_config().validate();
  train_config().loss.validate();
  if (adaptive) scheduler_config().validate();
  bool any_delay = false;
  for (bool b : delay_on_layer) any_delay = any_delay || b;
  if (adaptive && !any_delay) invalid("adaptive scheduling needs at least one delay layer");
  // alpha is at least 1/N, so a narrower delay layer could never stop growing.
  if (adaptive)
    for (std::size_t l = 0; l < delay_on_layer.size() && l + 1 < layer_sizes.size(); ++l)
      if (delay_on_layer[l] && 1.0 / static_cast<double>(layer_sizes[l + 1]) > alpha_theta)
        invalid("delay layer " + std::to_string(l + 1) + " has " + std::to_string(layer_sizes[l + 1]) +
                " neurons, too few for alpha_theta (needs N >= 1/alpha_theta)");
}

NetworkConfig RunConfig::network_config() const {
  NetworkConfig n;
  n.layer_sizes = layer_sizes;
  n.delay_on_layer = delay_on_layer;
  n.kernel = make_kernel_config(tau_s, tau_r, theta_u, dt_ms);
  if (kernel_truncation > 0) n.kernel.truncation = kernel_truncation;
  n.initial_delay_cap = initial_cap;
  return n;
}

SchedulerConfig RunConfig::scheduler_config() const {
  SchedulerConfig s;
  s.m = window;
  s.alpha_theta = alpha_theta;
  s.tsteps = tsteps;
  s.pretrain_epochs = pretrain_epochs;
  s.initial_cap = initial_cap;
  s.window_includes_anchor_minus_m = window_includes_anchor_minus_m;
  s.hard_ceiling = hard_ceiling > 0 ? hard_ceiling : 10.0 * static_cast<double>(timesteps) * dt_ms;
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.loss.kind = loss == "count_softmax_ce" ? LossKind::count_softmax_ce : LossKind::count_mse;
  t.loss.target_true = target_true;
  t.loss.target_false = target_false;
  t.surrogate.width = surrogate_width;
  t.surrogate.mode = SpikeMode::spiking;
  t.adam = {weight_lr, delay_lr, beta1, beta2, adam_eps};
  t.delay_mode = delay_mode == "interpolate" ? DelayMode::interpolate : DelayMode::round;
  return t;
}

BinningConfig RunConfig::binning() const { return {dt_ms, timesteps, binary_bins}; }

InitConfig RunConfig::init_config() const { return {weight_init_scale, delay_init_max}; }

RunConfig parse_run_config(const std::string& json_text, const std::string& profile) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    invalid(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) invalid("config must be a JSON object");

  std::string chosen = profile;
  if (chosen.empty()) chosen = doc.value("profile", std::string("paper-shd"));
  RunConfig cfg = profile_defaults(chosen);

  std::size_t consumed = 0;
  visit_fields(cfg, [&](const char* key, auto& field) {
    auto it = doc.find(key);
    if (it == doc.end()) return;
    ++consumed;
    try {
      it->get_to(field);
    } catch (const json::exception& e) {
      invalid(std::string("bad value for '") + key + "': " + e.what());
    }
  });
  if (consumed != doc.size()) {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      bool known = false;
      visit_fields(cfg, [&](const char* key, auto&) { known = known || it.key() == key; });
      if (!known) invalid("unknown config key '" + it.key() + "'");
    }
  }
  cfg.profile = chosen;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::string& profile) {
  std::ifstream in(path);
  if (!in) invalid("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_run_config(ss.str(), profile);
  // Relative manifest paths are taken relative to the config file.
  const auto base = path.parent_path();
  for (std::string* p : {&cfg.train_manifest, &cfg.val_manifest, &cfg.test_manifest})
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
  return cfg;
}

std::string to_json(const RunConfig& cfg) {
  json doc = json::object();
  RunConfig copy = cfg;
  visit_fields(copy, [&](const char* key, auto& field) { doc[key] = field; });
  return doc.dump(2);
}

}  // namespace axdelay
