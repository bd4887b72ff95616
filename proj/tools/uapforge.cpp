// uapforge: corpus generation, model training, patch training, evaluation
// and the self-test suite as subcommands of one binary.

#include <atomic>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uapforge/cli/config.hpp"
#include "uapforge/cli/pipeline.hpp"
#include "uapforge/cli/selftest.hpp"
#include "uapforge/error.hpp"
#include "uapforge/uaptrain/trainer.hpp"

namespace {

namespace cli = uapforge::cli;

enum Exit : int { kOk = 0, kTestFailure = 1, kConfig = 2, kIo = 3, kGate = 4, kInterrupted = 130 };

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> target_lufs;
  std::optional<std::string> loss;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "Config file ([section] key = value)");
  app->add_option("--set", c.sets, "Override one key, e.g. --set attack.epochs=50")
      ->type_name("SECTION.KEY=VALUE");
  app->add_option("--seed", c.seed, "Seed for corpus, model and patch");
  app->add_option("--target-lufs", c.target_lufs, "Loudness normalization target");
  app->add_option("--out", c.out, "Run directory");
}

cli::RunConfig resolve(const Common& c) {
  cli::RunConfig config;
  if (!c.config_path.empty()) config = cli::load_config(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw uapforge::ConfigError("--set expects key=value, got " + kv);
    cli::set_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) config.seed = *c.seed;
  if (c.target_lufs) config.preprocess.target_lufs = *c.target_lufs;
  if (c.loss) cli::set_value(config, "attack.loss", *c.loss);
  if (!c.out.empty()) config.out = c.out;
  cli::resolve(config);
  std::cout << "# resolved config\n" << cli::format_config(config) << "\n" << std::flush;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal adversarial audio patch trainer and evaluator"};
  app.require_subcommand(1);

  Common gen_opts, model_opts, uap_opts, eval_opts;
  bool model_resume = false, uap_resume = false, uap_override = false, eval_override = false;
  std::size_t stop_after = 0;
  std::string patch_path, baseline_path, sweep;

  auto* gen = app.add_subcommand("gen-data", "Generate or ingest the corpus manifest");
  add_common(gen, gen_opts);

  auto* train_model = app.add_subcommand("train-model", "Train the speaker embedding model");
  add_common(train_model, model_opts);
  train_model->add_flag("--resume", model_resume, "Continue from model/train_state.bin");

  auto* train_uap = app.add_subcommand("train-uap", "Train a universal patch");
  add_common(train_uap, uap_opts);
  train_uap->add_option("--loss", uap_opts.loss, "exp_tv or l2");
  train_uap->add_flag("--resume", uap_resume, "Continue from the patch checkpoint");
  train_uap->add_flag("--override-gate", uap_override, "Attack even below the accuracy gate");
  train_uap->add_option("--stop-after-batches", stop_after,
                        "Checkpoint and stop after this many batches (testing)");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a patch and write the report");
  add_common(evaluate, eval_opts);
  evaluate->add_option("--loss", eval_opts.loss, "Evaluate the patch trained with this loss");
  evaluate->add_option("--patch", patch_path, "Patch file (default: uap/patch_<loss>.bin)");
  evaluate->add_option("--baseline-patch", baseline_path, "Second patch for the A/B table");
  evaluate->add_option("--sweep", sweep, "Comma-separated evaluation lengths in seconds");
  evaluate->add_flag("--override-gate", eval_override, "Evaluate even below the accuracy gate");

  auto* selftest = app.add_subcommand("selftest", "Run the fast invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*selftest) {
      return cli::run_selftest(std::cout).ok() ? kOk : kTestFailure;
    }
    if (*gen) {
      cli::gen_data(resolve(gen_opts), std::cout);
    } else if (*train_model) {
      cli::train_model_stage(resolve(model_opts), model_resume, std::cout);
    } else if (*train_uap) {
      const auto config = resolve(uap_opts);
      std::signal(SIGINT, on_sigint);
      cli::TrainUapOptions o;
      o.resume = uap_resume;
      o.override_gate = uap_override;
      o.stop = &g_stop;
      o.stop_after_batches = stop_after;
      cli::train_uap_stage(config, o, std::cout);
    } else if (*evaluate) {
      if (!sweep.empty()) eval_opts.sets.push_back("eval.lengths=" + sweep);
      const auto config = resolve(eval_opts);
      cli::EvaluateOptions o;
      if (!patch_path.empty()) o.patch = patch_path;
      if (!baseline_path.empty()) o.baseline_patch = baseline_path;
      o.override_gate = eval_override;
      cli::evaluate_stage(config, o, std::cout);
    }
    return kOk;
  } catch (const uapforge::GateError& e) {
    std::cerr << "gate failure: " << e.what() << " (measured " << e.measured() << "%)\n";
    return kGate;
  } catch (const uapforge::uaptrain::Interrupted& e) {
    std::cerr << "interrupted: " << e.what() << "\n";
    return kInterrupted;
  } catch (const uapforge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const uapforge::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kTestFailure;
  }
}
