#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "axdelay/autograd.hpp"
#include "axdelay/layers.hpp"
#include "axdelay/scheduler.hpp"
#include "axdelay/spike_data.hpp"

namespace axdelay {

/// Everything a training run needs. Serialized as JSON; every key is optional
/// and falls back to the selected profile's value.
struct RunConfig {
  std::string profile = "paper-shd";

  // data
  std::string train_manifest;
  std::string val_manifest;   // empty: split val_fraction off the training set
  std::string test_manifest;  // empty: no final test evaluation
  double val_fraction = 0.05;
  double dt_ms = 1.0;
  std::size_t timesteps = 1000;
  bool binary_bins = false;

  // network
  std::vector<std::size_t> layer_sizes{700, 128, 128, 20};
  std::vector<bool> delay_on_layer{true, true, false};
  double tau_s = 1.0;
  double tau_r = 1.0;
  double theta_u = 10.0;
  std::size_t kernel_truncation = 0;  // 0: derived from the time constants
  double weight_init_scale = 4.0;
  double delay_init_max = 0.0;

  // delay cap scheduling
  bool adaptive = true;
  double initial_cap = 64.0;
  std::size_t window = 2;
  double alpha_theta = 0.05;
  std::size_t tsteps = 150;
  std::size_t pretrain_epochs = 40;
  std::size_t finetune_epochs = 0;
  bool window_includes_anchor_minus_m = false;
  double hard_ceiling = 0.0;  // 0: 10 * timesteps * dt_ms

  // optimization
  std::size_t batch_size = 128;
  double weight_lr = 0.1;
  double delay_lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::string loss = "count_mse";
  double target_true = 30.0;
  double target_false = 5.0;
  double surrogate_width = 5.0;
  std::string delay_mode = "round";

  std::uint64_t seed = 0;
  std::string output_dir = "run";
  bool keep_checkpoints = false;  // also write ckpt_<unit>.bin per epoch/round

  void validate() const;

  NetworkConfig network_config() const;
  SchedulerConfig scheduler_config() const;
  TrainConfig train_config() const;
  BinningConfig binning() const;
  InitConfig init_config() const;
};

/// Named defaults: "paper-shd", "paper-ntidigits", "synthetic".
RunConfig profile_defaults(const std::string& profile);
std::vector<std::string> profile_names();

/// Parses JSON text over the defaults of `profile` (or of the text's own
/// "profile" key when `profile` is empty). Unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text, const std::string& profile = "");
RunConfig load_run_config(const std::filesystem::path& path, const std::string& profile = "");

std::string to_json(const RunConfig& cfg);

}  // namespace axdelay
