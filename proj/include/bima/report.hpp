#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "bima/config.hpp"
#include "bima/train.hpp"

namespace bima::eval {

// Which parts of the network were active for a run, one flag per ablation
// column.
struct AblationFlags {
  bool sa = true;
  bool na = true;
  bool wmf = true;
  bool pe = true;
  bool mask = true;

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

AblationFlags flags_of(const model::BimaConfig& cfg);

// Parses "sa,na,wmf,pe,mask" style lists (any subset, any order, empty
// allowed). Throws ParameterError on unknown names or when both streams end
// up disabled.
std::vector<std::string> parse_disable_list(const std::string& list);

// Clears the BimaConfig switches named in `disabled`.
model::BimaConfig apply_disable(model::BimaConfig cfg, const std::vector<std::string>& disabled);

struct FoldReport {
  std::size_t fold = 0;  // 1-based
  std::string subject;
  double accuracy = 0.0;
  double itr_bits_per_min = 0.0;
  bool itr_clamped = false;
  std::size_t epochs = 0;
  double final_train_loss = 0.0;
  std::vector<double> loss_trajectory;
  std::vector<int> predictions;
  std::vector<int> labels;
  std::vector<std::vector<std::size_t>> confusion;

  friend bool operator==(const FoldReport&, const FoldReport&) = default;
};

struct TTestEntry {
  std::string baseline_name;
  double t = 0.0;
  double p = 1.0;
  std::size_t df = 0;
  bool degenerate = false;

  friend bool operator==(const TTestEntry&, const TTestEntry&) = default;
};

struct EvalReport {
  std::vector<FoldReport> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;             // sample standard deviation
  double mean_itr_bits_per_min = 0.0;    // mean of per-fold ITRs
  double itr_of_mean_accuracy = 0.0;     // ITR evaluated at mean_accuracy
  double window_s = 0.0;
  double gaze_s = 0.0;
  std::size_t num_classes = 0;
  AblationFlags ablation;
  std::vector<std::string> disabled;
  std::vector<TTestEntry> t_tests;
  config::Json config;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport make_report(const std::vector<train::FoldResult>& folds, std::size_t num_classes, double window_s,
                       double gaze_s, const model::BimaConfig& bima, const config::Json& config_snapshot);

// Pairs fold accuracies of `report` against `baseline` (matched by subject).
TTestEntry compare(const EvalReport& report, const EvalReport& baseline, const std::string& baseline_name);

enum class ReportFormat { json, csv };

ReportFormat format_for(const std::filesystem::path& path);  // by extension, json when unknown

config::Json to_json(const EvalReport& report);
EvalReport report_from_json(const config::Json& j);

void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);
EvalReport read_report(const std::filesystem::path& path);  // JSON only

// One row per report: the five component switches, then mean accuracy and
// mean ITR. Header: sa,na,wmf,pe,mask,accuracy,itr_bits_per_min.
std::string ablation_table_csv(const std::vector<EvalReport>& reports);

}  // namespace bima::eval
