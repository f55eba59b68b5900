#include "bima/pipeline.hpp"

#include "bima/error.hpp"

namespace bima::pipeline {

data::EegEpochSet preprocess(const data::EegEpochSet& set, const config::DataConfig& cfg) {
  config::validate(cfg);
  data::EegEpochSet out = set;
  if (!cfg.channels.empty()) out = data::select_channels(out, cfg.channels);
  if (cfg.bandpass_low_hz > 0.0) out = data::bandpass(out, cfg.bandpass_low_hz, cfg.bandpass_high_hz);
  if (cfg.decimate > 1) out = data::decimate(out, cfg.decimate);
  if (cfg.window_s > 0.0 || cfg.start_s > 0.0) {
    const double length = cfg.window_s > 0.0 ? cfg.window_s : out.duration_s() - cfg.start_s;
    out = data::crop_window(out, cfg.start_s, length);
  }
  return out;
}

std::vector<data::EegEpochSet> load_subjects(const config::DataConfig& cfg) {
  if (cfg.dir.empty()) throw ParameterError("data: no data directory given");
  std::vector<data::EegEpochSet> subjects;
  for (const auto& set : data::load_epoch_dir(cfg.dir)) subjects.push_back(preprocess(set, cfg));
  return subjects;
}

eval::EvalReport run_loso(const std::vector<data::EegEpochSet>& subjects, const config::RunConfig& cfg,
                          const std::vector<std::string>& disabled, const train::LosoOptions& options) {
  if (subjects.empty()) throw ParameterError("loso: no subjects");
  config::RunConfig effective = cfg;
  effective.train.bima = eval::apply_disable(cfg.train.bima, disabled);
  const auto folds = train::loso(subjects, effective.train, options);
  return eval::make_report(folds, subjects.front().num_classes(), subjects.front().duration_s(), cfg.eval.gaze_s,
                           effective.train.bima, config::to_json(effective));
}

eval::EvalReport ablate(const std::vector<data::EegEpochSet>& subjects, const config::RunConfig& cfg,
                        const std::string& disable_list, const train::LosoOptions& options) {
  return run_loso(subjects, cfg, eval::parse_disable_list(disable_list), options);
}

}  // namespace bima::pipeline
