// bima: command-line front end.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.
// Settings resolve as: command-line flag > --config file > built-in default.
// BIMA_SEED, when set, replaces the built-in default seed.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bima/checkpoint.hpp"
#include "bima/config.hpp"
#include "bima/data.hpp"
#include "bima/error.hpp"
#include "bima/functional.hpp"
#include "bima/kernels.hpp"
#include "bima/metrics.hpp"
#include "bima/pipeline.hpp"
#include "bima/report.hpp"
#include "bima/train.hpp"
#include "bima/verify.hpp"

namespace {

using namespace bima;

constexpr const char* kPrecedence =
    "Settings resolve as: flag > --config file > built-in default (BIMA_SEED env var sets the default seed).";

// Thrown for input the user can fix by changing the command line.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t default_seed() {
  const char* env = std::getenv("BIMA_SEED");
  if (env == nullptr || *env == '\0') return 0;
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return seed;
  } catch (const std::exception&) {
    throw UsageError(std::string("BIMA_SEED must be an unsigned integer, got '") + env + "'");
  }
}

std::vector<double> parse_frequencies(const std::string& list) {
  std::vector<double> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--classes: '" + item + "' is not a number");
    }
  }
  return out;
}

// Flags shared by the commands that train.
struct TrainFlags {
  std::string config;
  std::string data;
  double window_s = 0.0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  double dropout_p = 0.0;
  std::uint64_t seed = 0;
  std::string disable;

  CLI::Option* window_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* batch_opt = nullptr;
  CLI::Option* lr_opt = nullptr;
  CLI::Option* dropout_opt = nullptr;
  CLI::Option* seed_opt = nullptr;

  void add_to(CLI::App* cmd, bool data_required) {
    cmd->add_option("--config", config, "JSON config with sections data, spectral, bima, train, eval")
        ->check(CLI::ExistingFile);
    auto* d = cmd->add_option("--data", data, "Directory of .eegb files (overrides data.dir)");
    if (data_required) d->check(CLI::ExistingDirectory);
    window_opt = cmd->add_option("--window", window_s, "Crop every trial to this many seconds (data.window_s)");
    epochs_opt = cmd->add_option("--epochs", epochs, "Training epochs (train.epochs, default 100)");
    batch_opt = cmd->add_option("--batch-size", batch_size, "Mini-batch size (train.batch_size, default 64)");
    lr_opt = cmd->add_option("--lr", learning_rate, "Adam learning rate (train.learning_rate, default 0.001)");
    dropout_opt = cmd->add_option("--dropout", dropout_p, "Dropout probability (train.dropout_p, default 0.5)");
    seed_opt = cmd->add_option("--seed", seed, "Master seed (train.seed)");
  }

  config::RunConfig resolve() const {
    config::RunConfig base;
    base.train.seed = default_seed();
    config::RunConfig cfg = config.empty() ? base : config::load_run_config(config, base);
    if (!data.empty()) cfg.data.dir = data;
    if (window_opt->count() > 0) cfg.data.window_s = window_s;
    if (epochs_opt->count() > 0) cfg.train.epochs = epochs;
    if (batch_opt->count() > 0) cfg.train.batch_size = batch_size;
    if (lr_opt->count() > 0) cfg.train.learning_rate = learning_rate;
    if (dropout_opt->count() > 0) cfg.train.dropout_p = dropout_p;
    if (seed_opt->count() > 0) cfg.train.seed = seed;
    config::validate(cfg.data);
    train::validate(cfg.train);
    return cfg;
  }
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

void print_summary(const eval::EvalReport& report) {
  std::printf("mean accuracy %.4f (std %.4f) over %zu folds\n", report.mean_accuracy, report.std_accuracy,
              report.folds.size());
  std::printf("mean ITR %.2f bits/min (ITR of mean accuracy %.2f)\n", report.mean_itr_bits_per_min,
              report.itr_of_mean_accuracy);
}

std::string fold_log(const std::vector<eval::FoldReport>& folds) {
  std::string text;
  for (const auto& f : folds) {
    for (std::size_t e = 0; e < f.loss_trajectory.size(); ++e) {
      text += config::Json{{"fold", f.subject}, {"epoch", e + 1}, {"mean_loss", f.loss_trajectory[e]}}.dump() + "\n";
    }
  }
  return text;
}

int run_loso_command(const TrainFlags& flags, const std::string& disable, std::size_t jobs, const std::string& report,
                     const std::string& log) {
  const config::RunConfig cfg = flags.resolve();
  const auto disabled = eval::parse_disable_list(disable);
  const auto subjects = pipeline::load_subjects(cfg.data);
  std::fprintf(stderr, "loso: %zu subjects, %zu trials x %zu samples, backend %s, %zu job(s)\n", subjects.size(),
               subjects.empty() ? 0 : subjects.front().num_trials(),
               subjects.empty() ? 0 : subjects.front().num_samples(),
               std::string(kernels::active().name).c_str(), jobs);
  train::LosoOptions options;
  options.jobs = jobs;
  options.on_fold = [](const train::FoldResult& f) {
    std::fprintf(stderr, "fold %s: accuracy %.4f, final loss %.4f\n", f.held_out_subject.c_str(), f.accuracy,
                 f.final_train_loss);
  };
  const auto result = pipeline::run_loso(subjects, cfg, disabled, options);
  if (!report.empty()) eval::write_report(result, report, eval::format_for(report));
  if (!log.empty()) write_text(log, fold_log(result.folds));
  print_summary(result);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SSVEP classification with a bi-stream masking-attention transformer."};
  app.footer(kPrecedence);
  app.require_subcommand(1);
  std::string backend = "auto";
  app.add_option("--backend", backend, "Kernel backend: auto, scalar, avx2 or neon")
      ->check(CLI::IsMember({"auto", "scalar", "avx2", "neon"}));

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Write synthetic phase-locked SSVEP subjects as .eegb files");
  std::string synth_out, synth_classes;
  data::SynthConfig sc;
  sc.num_subjects = 6;
  sc.trials_per_class = 10;
  sc.snr_db = 0.0;
  std::uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "Output directory (created if missing)")->required();
  synth->add_option("--subjects", sc.num_subjects, "Number of subjects")->capture_default_str();
  synth->add_option("--classes", synth_classes, "Comma-separated stimulus frequencies in Hz (default: 9.25..14.75 Hz, 0.5 Hz steps)");
  synth->add_option("--trials-per-class", sc.trials_per_class, "Trials per class and subject")->capture_default_str();
  synth->add_option("--fs", sc.sampling_rate_hz, "Sampling rate in Hz")->capture_default_str();
  synth->add_option("--window", sc.window_s, "Trial length in seconds")->capture_default_str();
  synth->add_option("--channels", sc.num_channels, "Channels per trial")->capture_default_str();
  synth->add_option("--harmonics", sc.num_harmonics, "Harmonics per response")->capture_default_str();
  synth->add_option("--snr-db", sc.snr_db, "Signal-to-noise ratio in dB")->capture_default_str();
  auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "Generator seed (default: BIMA_SEED or 0)");

  // train ------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train one model on every subject in a directory");
  train_cmd->footer(kPrecedence);
  TrainFlags train_flags;
  std::string train_out, train_log, train_disable;
  train_flags.add_to(train_cmd, false);
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_cmd->add_option("--log", train_log, "Write per-epoch {epoch, mean_loss} JSON lines here");
  train_cmd->add_option("--disable", train_disable, "Components to switch off: any of sa,na,wmf,pe,mask");

  // eval -------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on every subject in a directory");
  eval_cmd->footer(kPrecedence);
  std::string eval_data, eval_model, eval_report, eval_config;
  double eval_window = 0.0, eval_gaze = 0.0;
  eval_cmd->add_option("--data", eval_data, "Directory of .eegb files (overrides data.dir)");
  eval_cmd->add_option("--model", eval_model, "Checkpoint written by 'train'")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--config", eval_config, "JSON config (data and eval sections are used)")
      ->check(CLI::ExistingFile);
  auto* eval_window_opt = eval_cmd->add_option("--window", eval_window, "Crop every trial to this many seconds");
  auto* eval_gaze_opt = eval_cmd->add_option("--gaze", eval_gaze, "Gaze-shift seconds added to the ITR selection time");
  eval_cmd->add_option("--report", eval_report, "Report path (.json or .csv)");

  // loso / ablate ------------------------------------------------------------
  auto* loso_cmd = app.add_subcommand("loso", "Leave-one-subject-out cross-validation");
  loso_cmd->footer(kPrecedence);
  TrainFlags loso_flags;
  std::string loso_report, loso_log, loso_disable;
  std::size_t loso_jobs = train::default_jobs();
  loso_flags.add_to(loso_cmd, false);
  loso_cmd->add_option("--report", loso_report, "Report path (.json or .csv)");
  loso_cmd->add_option("--log", loso_log, "Write per-fold, per-epoch loss JSON lines here");
  loso_cmd->add_option("--disable", loso_disable, "Components to switch off: any of sa,na,wmf,pe,mask");
  loso_cmd->add_option("--jobs", loso_jobs, "Folds trained in parallel (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  auto* ablate_cmd = app.add_subcommand("ablate", "LOSO with components switched off (loso --disable)");
  ablate_cmd->footer(kPrecedence);
  TrainFlags ablate_flags;
  std::string ablate_report, ablate_log, ablate_disable;
  std::size_t ablate_jobs = train::default_jobs();
  ablate_flags.add_to(ablate_cmd, false);
  ablate_cmd->add_option("--disable", ablate_disable, "Components to switch off: any of sa,na,wmf,pe,mask")->required();
  ablate_cmd->add_option("--report", ablate_report, "Report path (.json or .csv)");
  ablate_cmd->add_option("--log", ablate_log, "Write per-fold, per-epoch loss JSON lines here");
  ablate_cmd->add_option("--jobs", ablate_jobs, "Folds trained in parallel (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  // itr --------------------------------------------------------------------
  auto* itr_cmd = app.add_subcommand("itr", "Wolpaw information transfer rate in bits/min");
  double itr_acc = 0.0, itr_window = 0.0, itr_gaze = 0.0;
  std::size_t itr_classes = 0;
  itr_cmd->add_option("--acc", itr_acc, "Accuracy in [0, 1]")->required();
  itr_cmd->add_option("--classes", itr_classes, "Number of classes (>= 2)")->required();
  itr_cmd->add_option("--window", itr_window, "Selection window in seconds")->required();
  itr_cmd->add_option("--gaze", itr_gaze, "Gaze-shift seconds added to the window")->capture_default_str();

  // verify -----------------------------------------------------------------
  auto* verify_cmd = app.add_subcommand("verify", "Run the built-in invariant and oracle checks");
  bool inject_softmax_fault = false;
  verify_cmd->add_flag("--inject-softmax-fault", inject_softmax_fault,
                       "Test hook: mis-normalize every softmax row so the suite must fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (backend != "auto") kernels::set_backend(kernels::parse_backend(backend));

    if (synth->parsed()) {
      sc.classes_hz = synth_classes.empty() ? data::twelve_target_grid() : parse_frequencies(synth_classes);
      sc.seed = synth_seed_opt->count() > 0 ? synth_seed : default_seed();
      try {
        data::validate(sc);
      } catch (const ParameterError& e) {
        throw UsageError(e.what());
      }
      std::filesystem::create_directories(synth_out);
      const auto subjects = data::synthesize(sc);
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        const auto path = std::filesystem::path(synth_out) / ("subject_" + std::to_string(i + 1) + ".eegb");
        data::save_epochs(subjects[i], path);
      }
      std::printf("wrote %zu subjects to %s\n", subjects.size(), synth_out.c_str());
      return 0;
    }

    if (train_cmd->parsed()) {
      config::RunConfig cfg = train_flags.resolve();
      cfg.train.bima = eval::apply_disable(cfg.train.bima, eval::parse_disable_list(train_disable));
      const auto subjects = pipeline::load_subjects(cfg.data);
      std::vector<const data::EegEpochSet*> ptrs;
      for (const auto& s : subjects) ptrs.push_back(&s);
      const auto prepared = train::prepare(ptrs, cfg.train.spectral);
      std::string log;
      const auto result = train::train(prepared, cfg.train, [&](const train::EpochRecord& r) {
        std::fprintf(stderr, "epoch %zu mean loss %.6f\n", r.epoch, r.mean_loss);
        log += config::Json{{"epoch", r.epoch}, {"mean_loss", r.mean_loss}}.dump() + "\n";
      });
      for (const auto& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      model::save_checkpoint({result.params, cfg.train.spectral, prepared.sampling_rate_hz, cfg.train.seed}, train_out);
      if (!train_log.empty()) write_text(train_log, log);
      std::printf("trained on %zu trials, final mean loss %.6f, checkpoint %s\n", prepared.size(),
                  result.epoch_losses.back(), train_out.c_str());
      return 0;
    }

    if (eval_cmd->parsed()) {
      config::RunConfig cfg = eval_config.empty() ? config::RunConfig{} : config::load_run_config(eval_config);
      if (!eval_data.empty()) cfg.data.dir = eval_data;
      if (eval_window_opt->count() > 0) cfg.data.window_s = eval_window;
      if (eval_gaze_opt->count() > 0) cfg.eval.gaze_s = eval_gaze;
      config::validate(cfg.data);
      config::validate(cfg.eval);
      auto ckpt = model::load_checkpoint(eval_model);
      cfg.train.spectral = ckpt.spectral;
      cfg.train.bima = ckpt.params.config;
      const auto subjects = pipeline::load_subjects(cfg.data);
      if (subjects.empty()) throw ParameterError("eval: no .eegb files in " + cfg.data.dir);
      std::vector<train::FoldResult> folds;
      for (const auto& s : subjects) {
        const auto prepared = train::prepare(s, ckpt.spectral);
        if (prepared.num_samples != ckpt.params.native_tokens || prepared.num_classes != ckpt.params.config.num_classes ||
            prepared.num_channels != ckpt.params.config.num_channels) {
          throw ParameterError("eval: subject '" + s.subject_id() + "' does not match the checkpoint's input shape");
        }
        auto prediction = train::predict(ckpt.params, prepared);
        train::FoldResult f;
        f.held_out_subject = s.subject_id();
        f.predictions = prediction.classes;
        f.labels = prepared.labels;
        f.confusion = train::confusion_matrix(f.labels, f.predictions, prepared.num_classes);
        f.accuracy = eval::accuracy(f.predictions, f.labels);
        folds.push_back(std::move(f));
      }
      const auto report = eval::make_report(folds, subjects.front().num_classes(), subjects.front().duration_s(),
                                            cfg.eval.gaze_s, ckpt.params.config, config::to_json(cfg));
      if (!eval_report.empty()) eval::write_report(report, eval_report, eval::format_for(eval_report));
      print_summary(report);
      return 0;
    }

    if (loso_cmd->parsed()) return run_loso_command(loso_flags, loso_disable, loso_jobs, loso_report, loso_log);
    if (ablate_cmd->parsed()) {
      return run_loso_command(ablate_flags, ablate_disable, ablate_jobs, ablate_report, ablate_log);
    }

    if (itr_cmd->parsed()) {
      double bits = 0.0;
      try {
        bits = eval::itr_bits_per_min(itr_acc, itr_classes, itr_window, itr_gaze);
      } catch (const ParameterError& e) {
        throw UsageError(e.what());
      }
      std::printf("%.2f\n", bits);
      return 0;
    }

    if (verify_cmd->parsed()) {
      nn::set_softmax_fault(inject_softmax_fault);
      const auto checks = verify::run_suite();
      for (const auto& c : checks) {
        std::printf("%-24s %s  %s\n", c.name.c_str(), c.passed ? "PASS" : "FAIL", c.detail.c_str());
      }
      const bool ok = verify::all_passed(checks);
      std::printf("%s\n", ok ? "all checks passed" : "some checks FAILED");
      return ok ? 0 : 1;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
