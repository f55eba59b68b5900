#include "bima/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "bima/error.hpp"
#include "bima/metrics.hpp"

namespace bima::eval {
namespace {

// Shortest decimal text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string bit(bool b) { return b ? "1" : "0"; }

template <typename T>
T get(const config::Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("report: missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("report: field '") + key + "' has the wrong type");
  }
}

// JSON has no infinity; degenerate t values are stored as strings.
config::Json t_value(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

double t_from(const config::Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    throw FormatError("report: bad t value '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

AblationFlags flags_of(const model::BimaConfig& cfg) {
  return {cfg.sa_stream_enabled, cfg.na_stream_enabled, cfg.wmf_enabled, cfg.pe_enabled, cfg.mask_enabled};
}

std::vector<std::string> parse_disable_list(const std::string& list) {
  static const std::vector<std::string> kOrder = {"sa", "na", "wmf", "pe", "mask"};
  std::vector<bool> seen(kOrder.size(), false);
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    item = item.substr(first, item.find_last_not_of(" \t") - first + 1);
    const auto it = std::find(kOrder.begin(), kOrder.end(), item);
    if (it == kOrder.end()) {
      throw ParameterError("unknown component '" + item + "' (expected sa, na, wmf, pe, mask)");
    }
    seen[static_cast<std::size_t>(it - kOrder.begin())] = true;
  }
  if (seen[0] && seen[1]) throw ParameterError("cannot disable both the sa and na streams");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < kOrder.size(); ++i) {
    if (seen[i]) out.push_back(kOrder[i]);
  }
  return out;
}

model::BimaConfig apply_disable(model::BimaConfig cfg, const std::vector<std::string>& disabled) {
  for (const auto& name : disabled) {
    if (name == "sa") {
      cfg.sa_stream_enabled = false;
    } else if (name == "na") {
      cfg.na_stream_enabled = false;
    } else if (name == "wmf") {
      cfg.wmf_enabled = false;
    } else if (name == "pe") {
      cfg.pe_enabled = false;
    } else if (name == "mask") {
      cfg.mask_enabled = false;
    } else {
      throw ParameterError("unknown component '" + name + "'");
    }
  }
  if (!cfg.sa_stream_enabled && !cfg.na_stream_enabled) {
    throw ParameterError("cannot disable both the sa and na streams");
  }
  return cfg;
}

EvalReport make_report(const std::vector<train::FoldResult>& folds, std::size_t num_classes, double window_s,
                       double gaze_s, const model::BimaConfig& bima, const config::Json& config_snapshot) {
  if (folds.empty()) throw ParameterError("report: no folds");
  EvalReport r;
  r.window_s = window_s;
  r.gaze_s = gaze_s;
  r.num_classes = num_classes;
  r.ablation = flags_of(bima);
  if (!r.ablation.sa) r.disabled.push_back("sa");
  if (!r.ablation.na) r.disabled.push_back("na");
  if (!r.ablation.wmf) r.disabled.push_back("wmf");
  if (!r.ablation.pe) r.disabled.push_back("pe");
  if (!r.ablation.mask) r.disabled.push_back("mask");
  r.config = config_snapshot;

  double acc_sum = 0.0, itr_sum = 0.0;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto& f = folds[i];
    FoldReport fr;
    fr.fold = i + 1;
    fr.subject = f.held_out_subject;
    fr.accuracy = f.accuracy;
    fr.itr_bits_per_min = itr_bits_per_min(f.accuracy, num_classes, window_s, gaze_s);
    fr.itr_clamped = itr_clamped(f.accuracy, num_classes);
    fr.epochs = f.epochs_run;
    fr.final_train_loss = f.final_train_loss;
    fr.loss_trajectory = f.loss_trajectory;
    fr.predictions = f.predictions;
    fr.labels = f.labels;
    fr.confusion = f.confusion;
    acc_sum += fr.accuracy;
    itr_sum += fr.itr_bits_per_min;
    r.folds.push_back(std::move(fr));
  }
  const auto n = static_cast<double>(folds.size());
  r.mean_accuracy = acc_sum / n;
  r.mean_itr_bits_per_min = itr_sum / n;
  if (folds.size() > 1) {
    double ss = 0.0;
    for (const auto& f : r.folds) ss += (f.accuracy - r.mean_accuracy) * (f.accuracy - r.mean_accuracy);
    r.std_accuracy = std::sqrt(ss / (n - 1.0));
  }
  r.itr_of_mean_accuracy = itr_bits_per_min(r.mean_accuracy, num_classes, window_s, gaze_s);
  return r;
}

TTestEntry compare(const EvalReport& report, const EvalReport& baseline, const std::string& baseline_name) {
  std::map<std::string, double> base;
  for (const auto& f : baseline.folds) base[f.subject] = f.accuracy;
  std::vector<double> a, b;
  for (const auto& f : report.folds) {
    const auto it = base.find(f.subject);
    if (it == base.end()) throw ParameterError("compare: subject '" + f.subject + "' missing from " + baseline_name);
    a.push_back(f.accuracy);
    b.push_back(it->second);
  }
  const TTest t = paired_t_test(a, b);
  return {baseline_name, t.t, t.p, t.df, t.degenerate};
}

ReportFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? ReportFormat::csv : ReportFormat::json;
}

config::Json to_json(const EvalReport& r) {
  config::Json folds = config::Json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"fold", f.fold},
                     {"subject", f.subject},
                     {"accuracy", f.accuracy},
                     {"itr_bits_per_min", f.itr_bits_per_min},
                     {"itr_clamped", f.itr_clamped},
                     {"epochs", f.epochs},
                     {"final_train_loss", f.final_train_loss},
                     {"loss_trajectory", f.loss_trajectory},
                     {"predictions", f.predictions},
                     {"labels", f.labels},
                     {"confusion", f.confusion}});
  }
  config::Json tests = config::Json::array();
  for (const auto& t : r.t_tests) {
    tests.push_back(
        {{"baseline_name", t.baseline_name}, {"t", t_value(t.t)}, {"p", t.p}, {"df", t.df}, {"degenerate", t.degenerate}});
  }
  return {{"folds", std::move(folds)},
          {"mean_accuracy", r.mean_accuracy},
          {"std_accuracy", r.std_accuracy},
          {"mean_itr_bits_per_min", r.mean_itr_bits_per_min},
          {"itr_of_mean_accuracy", r.itr_of_mean_accuracy},
          {"window_s", r.window_s},
          {"gaze_s", r.gaze_s},
          {"num_classes", r.num_classes},
          {"ablation",
           {{"sa", r.ablation.sa}, {"na", r.ablation.na}, {"wmf", r.ablation.wmf}, {"pe", r.ablation.pe},
            {"mask", r.ablation.mask}}},
          {"disabled", r.disabled},
          {"t_tests", std::move(tests)},
          {"config", r.config}};
}

EvalReport report_from_json(const config::Json& j) {
  if (!j.is_object()) throw FormatError("report: top level must be a JSON object");
  EvalReport r;
  for (const auto& f : get<config::Json>(j, "folds")) {
    FoldReport fr;
    fr.fold = get<std::size_t>(f, "fold");
    fr.subject = get<std::string>(f, "subject");
    fr.accuracy = get<double>(f, "accuracy");
    fr.itr_bits_per_min = get<double>(f, "itr_bits_per_min");
    fr.itr_clamped = get<bool>(f, "itr_clamped");
    fr.epochs = get<std::size_t>(f, "epochs");
    fr.final_train_loss = get<double>(f, "final_train_loss");
    fr.loss_trajectory = get<std::vector<double>>(f, "loss_trajectory");
    fr.predictions = get<std::vector<int>>(f, "predictions");
    fr.labels = get<std::vector<int>>(f, "labels");
    fr.confusion = get<std::vector<std::vector<std::size_t>>>(f, "confusion");
    r.folds.push_back(std::move(fr));
  }
  r.mean_accuracy = get<double>(j, "mean_accuracy");
  r.std_accuracy = get<double>(j, "std_accuracy");
  r.mean_itr_bits_per_min = get<double>(j, "mean_itr_bits_per_min");
  r.itr_of_mean_accuracy = get<double>(j, "itr_of_mean_accuracy");
  r.window_s = get<double>(j, "window_s");
  r.gaze_s = get<double>(j, "gaze_s");
  r.num_classes = get<std::size_t>(j, "num_classes");
  const auto ab = get<config::Json>(j, "ablation");
  r.ablation = {get<bool>(ab, "sa"), get<bool>(ab, "na"), get<bool>(ab, "wmf"), get<bool>(ab, "pe"),
                get<bool>(ab, "mask")};
  r.disabled = get<std::vector<std::string>>(j, "disabled");
  for (const auto& t : get<config::Json>(j, "t_tests")) {
    TTestEntry e;
    e.baseline_name = get<std::string>(t, "baseline_name");
    e.t = t_from(t.at("t"));
    e.p = get<double>(t, "p");
    e.df = get<std::size_t>(t, "df");
    e.degenerate = get<bool>(t, "degenerate");
    r.t_tests.push_back(std::move(e));
  }
  r.config = get<config::Json>(j, "config");
  return r;
}

void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
  std::string text;
  if (format == ReportFormat::json) {
    text = to_json(report).dump(2) + "\n";
  } else {
    std::ostringstream out;
    out << "fold,subject,accuracy,itr_bits_per_min,epochs\n";
    std::size_t epochs = 0;
    for (const auto& f : report.folds) {
      out << f.fold << ',' << f.subject << ',' << num(f.accuracy) << ',' << num(f.itr_bits_per_min) << ','
          << f.epochs << '\n';
      epochs = std::max(epochs, f.epochs);
    }
    out << ",MEAN," << num(report.mean_accuracy) << ',' << num(report.mean_itr_bits_per_min) << ',' << epochs << '\n';
    text = out.str();
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write '" + path.string() + "'");
  file << text;
  if (!file) throw IoError("write failed for '" + path.string() + "'");
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return report_from_json(config::Json::parse(buffer.str()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report '" + path.string() + "': " + e.what());
  }
}

std::string ablation_table_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "sa,na,wmf,pe,mask,accuracy,itr_bits_per_min\n";
  for (const auto& r : reports) {
    out << bit(r.ablation.sa) << ',' << bit(r.ablation.na) << ',' << bit(r.ablation.wmf) << ','
        << bit(r.ablation.pe) << ',' << bit(r.ablation.mask) << ',' << num(r.mean_accuracy) << ','
        << num(r.mean_itr_bits_per_min) << '\n';
  }
  return out.str();
}

}  // namespace bima::eval
