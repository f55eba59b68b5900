#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bima/adam.hpp"
#include "bima/data.hpp"
#include "bima/model.hpp"
#include "bima/spectral.hpp"

namespace bima::train {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double dropout_p = 0.5;  // overrides bima.dropout_p
  std::uint64_t seed = 0;
  bool shuffle = true;
  model::BimaConfig bima;
  spectral::SpectralConfig spectral;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, eps_adam}; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& cfg);

// Trials of one or more subjects turned into network inputs once, up front.
struct PreparedSet {
  double sampling_rate_hz = 0.0;
  std::size_t num_channels = 0;
  std::size_t num_samples = 0;
  std::size_t num_classes = 0;
  std::vector<std::string> subject_ids;       // per trial
  std::vector<model::TrialFeatures> features;  // per trial
  std::vector<int> labels;                     // per trial

  std::size_t size() const { return labels.size(); }
  std::size_t spectral_tokens() const { return features.empty() ? 0 : features.front().spectral.dim(1); }
};

// Throws ParameterError when the sets disagree on rate, channels, samples or classes.
PreparedSet prepare(const std::vector<const data::EegEpochSet*>& sets, const spectral::SpectralConfig& cfg);
PreparedSet prepare(const data::EegEpochSet& set, const spectral::SpectralConfig& cfg);

// Trials at the given positions of an already prepared set.
PreparedSet subset(const PreparedSet& all, const std::vector<std::size_t>& indices);

// BimaConfig with channel/class counts taken from the data and dropout from cfg.
model::BimaConfig model_config_for(const PreparedSet& data, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  model::ModelParams params;
  std::vector<double> epoch_losses;
  std::vector<std::string> warnings;
};

TrainResult train(const PreparedSet& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct Prediction {
  std::vector<int> classes;
  std::vector<nn::Tensor> logits;  // [K] per trial
};

Prediction predict(model::ModelParams& params, const PreparedSet& data);

struct FoldResult {
  std::string held_out_subject;
  double accuracy = 0.0;
  std::vector<int> predictions;
  std::vector<int> labels;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  double final_train_loss = 0.0;
  std::size_t epochs_run = 0;
  std::vector<double> loss_trajectory;
  std::vector<std::string> training_subjects;

  friend bool operator==(const FoldResult&, const FoldResult&) = default;
};

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& labels,
                                                       const std::vector<int>& predictions, std::size_t classes);

// Trains on every subject except `held_out` and evaluates on it.
FoldResult run_fold(const std::vector<PreparedSet>& subjects, std::size_t held_out, const TrainConfig& cfg,
                    std::uint64_t fold_seed, const EpochCallback& on_epoch = {});

struct LosoOptions {
  std::size_t jobs = 1;
  std::function<void(const FoldResult&)> on_fold;  // called as folds finish (any order)
};

// Folds follow subject_id order, so the result does not depend on the order
// of `subjects`. Fold i uses seed cfg.seed ^ i.
std::vector<FoldResult> loso(const std::vector<data::EegEpochSet>& subjects, const TrainConfig& cfg,
                             const LosoOptions& options = {});

std::size_t default_jobs();

}  // namespace bima::train
