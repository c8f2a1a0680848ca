#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "severe/error.hpp"
#include "severe/log.hpp"
#include "severe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace severe;

namespace {

constexpr int kStageFailureExit = 2;
constexpr int kConfigErrorExit = 3;

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string stages = "all";
  std::optional<int> window;
  std::string day;
  std::string method;
  int members = 0;
  bool verbose = false;
};

// --config wins; otherwise the run directory's own config.ini, then defaults.
ExperimentConfig resolve_config(const Args& a) {
  ExperimentConfig cfg;
  if (!a.config.empty()) {
    cfg = ExperimentConfig::load(a.config);
  } else if (fs::exists(fs::path(a.out) / "config.ini")) {
    cfg = ExperimentConfig::load(fs::path(a.out) / "config.ini");
  }
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  return cfg;
}

void print_manifest(const RunManifest& m) {
  for (const auto& s : m.completed) {
    const auto it = m.timings.find(s);
    std::cout << s << ": " << (it == m.timings.end() ? 0.0 : it->second) << " s\n";
  }
  std::cout << m.files.size() << " files, config " << m.config_digest.substr(0, 12) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic severe weather ensemble pipeline"};
  app.require_subcommand(1);
  Args a;
  auto common = [&a](CLI::App* sub) {
    sub->add_option("--config", a.config, "Experiment config (INI)");
    sub->add_option("--seed", a.seed, "Override the global seed");
    sub->add_option("--out", a.out, "Existing run directory")->capture_default_str();
    sub->add_flag("-v,--verbose", a.verbose, "Progress messages on stderr");
  };

  struct Command {
    const char* name;
    const char* help;
    std::optional<Stage> stage;
  };
  const Command commands[] = {
      {"synth-data", "Synthesize the archive, normalizers and climatology", Stage::synth_data},
      {"train-cgan", "Train both CGAN groups", Stage::train_cgan},
      {"train-encoder", "Pretrain the patch encoder and extract features", Stage::train_encoder},
      {"train-classifier", "Train the per-window classifiers", Stage::train_classifier},
      {"train-mlp", "Train the MLP baseline", Stage::train_mlp},
      {"predict", "Ensemble forecasts for the verification days", Stage::predict},
      {"verify", "Verification metrics", Stage::verify},
      {"report", "Summary report from the metrics", Stage::report},
      {"run-all", "Run a list of stages (all by default)", std::nullopt},
  };
  std::map<CLI::App*, const Command*> by_app;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    common(sub);
    by_app[sub] = &c;
    if (!c.stage) sub->add_option("--stages", a.stages, "Comma-separated stages or 'all'")->capture_default_str();
    if (c.stage == Stage::train_classifier) sub->add_option("--window", a.window, "Only this window start (0-23)");
    if (c.stage == Stage::predict) {
      sub->add_option("--day", a.day, "Forecast one day (YYYY-MM-DD) instead of the verification block");
      sub->add_option("--method", a.method, "cgan, cnn or mlp (with --day)");
      sub->add_option("--members", a.members, "K or M (with --day; config value by default)");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigErrorExit;
  }
  verbose_flag() = a.verbose;

  try {
    const Command* cmd = nullptr;
    for (auto* sub : app.get_subcommands()) cmd = by_app.at(sub);
    const auto cfg = resolve_config(a);

    if (cmd->stage == Stage::predict && !a.day.empty()) {
      require(!a.method.empty(), Errc::config_error, "--day needs --method");
      const Date day = Date::parse(a.day);
      const auto run = load_trained_run(cfg, a.out);
      const int members = a.members > 0 ? a.members
                          : a.method == "cgan" ? cfg.ensemble.cgan_members
                                               : cfg.ensemble.dropout_members;
      const auto fc = predict_day(run, day, a.method, members, cfg.stage_seed("predict"));
      const auto path = fs::path(a.out) / "forecasts" / ("day_" + day.iso() + "_" + a.method + ".csv");
      fs::create_directories(path.parent_path());
      write_forecast_csv(path, fc);
      std::cout << path.string() << "\n";
      return 0;
    }

    RunOptions options;
    options.stages = cmd->stage ? std::vector<Stage>{*cmd->stage} : parse_stages(a.stages);
    options.classifier_window = a.window;
    print_manifest(run_experiment(cfg, a.out, options));
    return 0;
  } catch (const StageFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageFailureExit;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == Errc::config_error ? kConfigErrorExit : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
