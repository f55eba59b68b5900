#pragma once

#include <string>
#include <vector>

#include "bima/config.hpp"
#include "bima/data.hpp"
#include "bima/report.hpp"
#include "bima/train.hpp"

namespace bima::pipeline {

// Channel selection, band-pass, decimation and cropping as configured, in
// that order. Steps whose settings are zero/empty are skipped.
data::EegEpochSet preprocess(const data::EegEpochSet& set, const config::DataConfig& cfg);

// Every *.eegb file of cfg.dir, preprocessed.
std::vector<data::EegEpochSet> load_subjects(const config::DataConfig& cfg);

// LOSO with the named components switched off (empty list for the full
// model), summarized as an EvalReport whose config snapshot records the
// effective settings.
eval::EvalReport run_loso(const std::vector<data::EegEpochSet>& subjects, const config::RunConfig& cfg,
                          const std::vector<std::string>& disabled = {}, const train::LosoOptions& options = {});

// run_loso for a "sa,na,wmf,pe,mask" style list.
eval::EvalReport ablate(const std::vector<data::EegEpochSet>& subjects, const config::RunConfig& cfg,
                        const std::string& disable_list, const train::LosoOptions& options = {});

}  // namespace bima::pipeline
