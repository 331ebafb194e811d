#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "axdelay/error.hpp"
#include "axdelay/harness.hpp"
#include "axdelay/synthetic.hpp"

namespace fs = std::filesystem;
using namespace axdelay;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNonConvergence = 4 };

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid: return kConfig;
    case ErrorCode::NonConvergence: return kNonConvergence;
    case ErrorCode::IoError: return kOther;
    default: return kData;
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Spiking networks with learnable axonal delays and an adaptive delay cap"};
  app.require_subcommand(1);

  std::string config_path, resume_path, profile, out_dir;
  std::optional<std::uint64_t> stop_after;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Pre-train, run the delay-cap schedule, fine-tune");
  train->add_option("--config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", resume_path, "checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--profile", profile, "defaults to start from (overrides the file's profile)");
  train->add_option("--out", out_dir, "output directory (overrides output_dir)");
  train->add_option("--stop-after", stop_after, "halt after this many epochs/rounds");
  train->add_flag("--quiet", quiet, "no progress output");

  std::string ckpt_path, manifest_path;
  auto* eval = app.add_subcommand("eval", "Accuracy and confusion counts on a manifest");
  eval->add_option("--checkpoint", ckpt_path)->required();
  eval->add_option("--manifest", manifest_path)->required();

  auto* inspect = app.add_subcommand("inspect-delays", "Per-layer delay cap and histogram");
  inspect->add_option("--checkpoint", ckpt_path)->required();

  std::string gen_out;
  std::uint64_t gen_seed = 0;
  SyntheticTaskConfig syn;
  auto* gen = app.add_subcommand("gen-synthetic", "Write the lag-coded two-class task and a config");
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--seed", gen_seed)->required();
  gen->add_option("--train-samples", syn.train_samples);
  gen->add_option("--test-samples", syn.test_samples);
  gen->add_option("--channels", syn.channels);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*train) {
      RunConfig cfg = load_run_config(config_path, profile);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      std::optional<fs::path> resume;
      if (!resume_path.empty()) resume = resume_path;
      const auto summary = run_train(cfg, read_text(config_path), resume,
                                     quiet ? nullptr : &std::cerr, stop_after);
      std::cout << "steps " << summary.steps << "\ncaps";
      for (double c : summary.caps) std::cout << ' ' << c;
      std::cout << '\n';
      if (summary.val_accuracy) std::cout << "val_accuracy " << *summary.val_accuracy << '\n';
      if (summary.test_accuracy) std::cout << "test_accuracy " << *summary.test_accuracy << '\n';
      std::cout << "output " << summary.output_dir.string() << '\n';
    } else if (*eval) {
      const EvalReport r = run_eval(ckpt_path, manifest_path);
      std::cout << "accuracy " << r.accuracy << "\nsamples " << r.samples << "\nconfusion (row=true, col=predicted)\n";
      for (const auto& row : r.confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) std::cout << (j ? " " : "") << row[j];
        std::cout << '\n';
      }
    } else if (*inspect) {
      std::cout << format_delay_report(inspect_delays(fs::path(ckpt_path)));
    } else if (*gen) {
      const auto task = make_synthetic_task(syn, gen_seed);
      write_synthetic_task(task, gen_out);
      RunConfig cfg = synthetic_run_config(task.layout, gen_out, gen_seed);
      cfg.layer_sizes.front() = syn.channels;
      // Paths inside the written config are relative to it.
      cfg.train_manifest = "train.tsv";
      cfg.test_manifest = "test.tsv";
      cfg.output_dir = fs::absolute(fs::path(gen_out) / "run").string();
      std::ofstream(fs::path(gen_out) / "synthetic.json") << to_json(cfg) << '\n';
      std::cout << "wrote " << task.train.size() << " train / " << task.test.size()
                << " test samples, horizon " << cfg.timesteps << " steps, config "
                << (fs::path(gen_out) / "synthetic.json").string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
