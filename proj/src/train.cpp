#include "bima/train.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "bima/error.hpp"
#include "bima/tape.hpp"

namespace bima::train {
namespace {

// Salts that split one seed into independent streams.
constexpr std::uint32_t kShuffleStream = 0x5348u;
constexpr std::uint32_t kDropoutStream = 0xD50Fu;

nn::Rng stream_rng(std::uint64_t seed, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), salt};
  return nn::Rng(seq);
}

// Fisher-Yates on the portable uniform01 so the order is the same with every
// standard library.
void shuffle_indices(std::vector<std::size_t>& order, nn::Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = std::min(static_cast<std::size_t>(nn::uniform01(rng) * static_cast<double>(i)), i - 1);
    std::swap(order[i - 1], order[j]);
  }
}

int argmax(const nn::Tensor& logits) {
  const auto values = logits.values();
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

void append(PreparedSet& into, const PreparedSet& from) {
  if (into.features.empty() && into.num_channels == 0) {
    into.sampling_rate_hz = from.sampling_rate_hz;
    into.num_channels = from.num_channels;
    into.num_samples = from.num_samples;
    into.num_classes = from.num_classes;
  }
  into.subject_ids.insert(into.subject_ids.end(), from.subject_ids.begin(), from.subject_ids.end());
  into.features.insert(into.features.end(), from.features.begin(), from.features.end());
  into.labels.insert(into.labels.end(), from.labels.begin(), from.labels.end());
}

// Keeps freed activation blocks in the heap between trials instead of
// returning them to the kernel.
void tune_allocator() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
  });
#endif
}

}  // namespace

void validate(const TrainConfig& cfg) {
  validate(cfg.adam());
  if (cfg.batch_size < 1) throw ParameterError("train: batch_size must be >= 1");
  if (cfg.epochs < 1) throw ParameterError("train: epochs must be >= 1");
  if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0)) throw ParameterError("train: dropout_p must lie in [0, 1)");
}

PreparedSet prepare(const std::vector<const data::EegEpochSet*>& sets, const spectral::SpectralConfig& cfg) {
  PreparedSet out;
  if (sets.empty()) return out;
  const data::EegEpochSet& first = *sets.front();
  out.sampling_rate_hz = first.sampling_rate_hz();
  out.num_channels = first.num_channels();
  out.num_samples = first.num_samples();
  out.num_classes = first.num_classes();
  spectral::validate(cfg, out.sampling_rate_hz, out.num_samples);
  for (const data::EegEpochSet* set : sets) {
    if (set->sampling_rate_hz() != out.sampling_rate_hz || set->num_channels() != out.num_channels ||
        set->num_samples() != out.num_samples || set->stimulus_frequencies_hz() != first.stimulus_frequencies_hz()) {
      throw ParameterError("subject '" + set->subject_id() + "' differs from '" + first.subject_id() +
                           "' in sampling rate, channel count, trial length or stimulus frequencies");
    }
    for (std::size_t i = 0; i < set->num_trials(); ++i) {
      const auto block = set->trial(i);
      nn::Tensor trial({out.num_channels, out.num_samples}, std::vector<double>(block.begin(), block.end()));
      out.features.push_back(model::prepare_features(trial, out.sampling_rate_hz, cfg));
      out.labels.push_back(set->labels()[i]);
      out.subject_ids.push_back(set->subject_id());
    }
  }
  return out;
}

PreparedSet prepare(const data::EegEpochSet& set, const spectral::SpectralConfig& cfg) {
  return prepare(std::vector<const data::EegEpochSet*>{&set}, cfg);
}

PreparedSet subset(const PreparedSet& all, const std::vector<std::size_t>& indices) {
  PreparedSet out;
  out.sampling_rate_hz = all.sampling_rate_hz;
  out.num_channels = all.num_channels;
  out.num_samples = all.num_samples;
  out.num_classes = all.num_classes;
  for (std::size_t i : indices) {
    if (i >= all.size()) throw IndexError("subset: trial index " + std::to_string(i) + " out of range");
    out.subject_ids.push_back(all.subject_ids[i]);
    out.features.push_back(all.features[i]);
    out.labels.push_back(all.labels[i]);
  }
  return out;
}

model::BimaConfig model_config_for(const PreparedSet& data, const TrainConfig& cfg) {
  model::BimaConfig b = cfg.bima;
  b.num_channels = data.num_channels;
  b.num_classes = data.num_classes;
  b.dropout_p = cfg.dropout_p;
  return model::resolve(b);
}

TrainResult train(const PreparedSet& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  if (data.size() == 0) throw ParameterError("train: empty training set");
  tune_allocator();

  TrainResult result;
  result.params = model::init_params(model_config_for(data, cfg), data.num_samples, data.spectral_tokens(), cfg.seed);
  std::vector<std::size_t> per_class(data.num_classes, 0);
  for (int label : data.labels) ++per_class[static_cast<std::size_t>(label)];
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    if (per_class[k] == 0) result.warnings.push_back("class " + std::to_string(k) + " has no training trials");
  }

  nn::ParamStore& store = result.params.store;
  AdamState state = AdamState::zeros_for(store);
  const AdamConfig adam = cfg.adam();
  nn::Rng shuffle_rng = stream_rng(cfg.seed, kShuffleStream);
  nn::Rng dropout_rng = stream_rng(cfg.seed, kDropoutStream);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  nn::Tape tape;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle_indices(order, shuffle_rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      store.zero_grad();
      // The batch loss is the mean of per-trial losses, so each trial's
      // backward pass is seeded with 1/B and the gradients accumulate.
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        tape.clear();
        nn::Var logits = model::forward(tape, result.params, data.features[i], true, dropout_rng);
        nn::Var loss = nn::cross_entropy(tape, logits, std::span<const int>(&data.labels[i], 1));
        total += tape.value(loss)[0];
        tape.backward(loss, inv_batch);
      }
      adam_step(store, state, ++step, adam);
    }
    const double mean_loss = total / static_cast<double>(data.size());
    result.epoch_losses.push_back(mean_loss);
    if (on_epoch) on_epoch({epoch, mean_loss});
  }
  return result;
}

Prediction predict(model::ModelParams& params, const PreparedSet& data) {
  Prediction out;
  nn::Tape tape;
  nn::Rng unused(0);
  for (const auto& features : data.features) {
    tape.clear();
    nn::Tensor logits = tape.value(model::forward(tape, params, features, false, unused));
    logits.reshape({logits.size()});
    out.classes.push_back(argmax(logits));
    out.logits.push_back(std::move(logits));
  }
  return out;
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& labels,
                                                       const std::vector<int>& predictions, std::size_t classes) {
  if (labels.size() != predictions.size()) throw ShapeError("confusion matrix: label/prediction length mismatch");
  std::vector<std::vector<std::size_t>> m(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto t = static_cast<std::size_t>(labels[i]), p = static_cast<std::size_t>(predictions[i]);
    if (labels[i] < 0 || predictions[i] < 0 || t >= classes || p >= classes) {
      throw IndexError("confusion matrix: class index out of range");
    }
    ++m[t][p];
  }
  return m;
}

FoldResult run_fold(const std::vector<PreparedSet>& subjects, std::size_t held_out, const TrainConfig& cfg,
                    std::uint64_t fold_seed, const EpochCallback& on_epoch) {
  if (held_out >= subjects.size()) throw IndexError("run_fold: held-out index out of range");
  PreparedSet training;
  FoldResult fold;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    if (s == held_out) continue;
    append(training, subjects[s]);
    if (!subjects[s].subject_ids.empty()) fold.training_subjects.push_back(subjects[s].subject_ids.front());
  }
  const PreparedSet& test = subjects[held_out];
  fold.held_out_subject = test.subject_ids.empty() ? std::string() : test.subject_ids.front();
  for (const std::string& id : training.subject_ids) {
    if (id == fold.held_out_subject) {
      throw StateError("fold for '" + id + "' would train on its own held-out trials");
    }
  }

  TrainConfig fold_cfg = cfg;
  fold_cfg.seed = fold_seed;
  TrainResult trained = train(training, fold_cfg, on_epoch);
  Prediction prediction = predict(trained.params, test);

  fold.predictions = std::move(prediction.classes);
  fold.labels = test.labels;
  fold.confusion = confusion_matrix(fold.labels, fold.predictions, test.num_classes);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < test.num_classes; ++k) correct += fold.confusion[k][k];
  fold.accuracy = static_cast<double>(correct) / static_cast<double>(fold.labels.size());
  fold.loss_trajectory = std::move(trained.epoch_losses);
  fold.final_train_loss = fold.loss_trajectory.back();
  fold.epochs_run = fold.loss_trajectory.size();
  return fold;
}

std::size_t default_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

std::vector<FoldResult> loso(const std::vector<data::EegEpochSet>& subjects, const TrainConfig& cfg,
                             const LosoOptions& options) {
  if (subjects.size() < 2) throw ParameterError("loso: at least 2 subjects are required");
  validate(cfg);
  std::vector<const data::EegEpochSet*> ordered;
  for (const auto& s : subjects) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->subject_id() < b->subject_id(); });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->subject_id() == ordered[i - 1]->subject_id()) {
      throw ParameterError("loso: duplicate subject id '" + ordered[i]->subject_id() + "'");
    }
  }

  std::vector<PreparedSet> prepared;
  for (const auto* s : ordered) prepared.push_back(prepare(std::vector<const data::EegEpochSet*>{s}, cfg.spectral));
  for (const auto& p : prepared) {
    if (p.sampling_rate_hz != prepared.front().sampling_rate_hz || p.num_channels != prepared.front().num_channels ||
        p.num_samples != prepared.front().num_samples || p.num_classes != prepared.front().num_classes) {
      throw ParameterError("loso: subjects differ in sampling rate, channel count, trial length or class count");
    }
  }

  std::vector<FoldResult> results(prepared.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t fold = next++; fold < prepared.size(); fold = next++) {
      try {
        results[fold] = run_fold(prepared, fold, cfg, cfg.seed ^ static_cast<std::uint64_t>(fold));
        if (options.on_fold) {
          std::lock_guard lock(report_mutex);
          options.on_fold(results[fold]);
        }
      } catch (...) {
        std::lock_guard lock(report_mutex);
        if (!failure) failure = std::current_exception();
        next = prepared.size();
      }
    }
  };

  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, prepared.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace bima::train
