#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"

#include "bima/error.hpp"
#include "bima/metrics.hpp"
#include "bima/report.hpp"
#include "oracles.hpp"

using namespace bima;

namespace {

train::FoldResult fold(const std::string& subject, std::vector<int> pred, std::vector<int> labels) {
  train::FoldResult f;
  f.held_out_subject = subject;
  f.predictions = std::move(pred);
  f.labels = std::move(labels);
  f.accuracy = eval::accuracy(f.predictions, f.labels);
  f.confusion = train::confusion_matrix(f.labels, f.predictions, 3);
  f.epochs_run = 4;
  f.loss_trajectory = {1.1, 0.9, 0.7, 0.61};
  f.final_train_loss = 0.61;
  return f;
}

eval::EvalReport sample_report() {
  model::BimaConfig bima;
  bima.pe_enabled = false;
  const std::vector<train::FoldResult> folds = {fold("s1", {0, 1, 2, 0}, {0, 1, 2, 1}),
                                                fold("s2", {0, 0, 0, 0}, {0, 1, 2, 1}),
                                                fold("s3", {0, 1, 2, 1}, {0, 1, 2, 1})};
  return eval::make_report(folds, 3, 1.0, 0.5, bima, config::Json{{"train", {{"epochs", 4}}}});
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("accuracy") {
  const std::vector<int> p = {1, 2, 3, 4}, l = {1, 0, 3, 0};
  CHECK(eval::accuracy(p, l) == 0.5);
  CHECK(eval::accuracy(std::vector<int>{7}, std::vector<int>{7}) == 1.0);
  CHECK_THROWS_AS(eval::accuracy(std::vector<int>{}, std::vector<int>{}), ParameterError);
  CHECK_THROWS_AS(eval::accuracy(p, std::vector<int>{1}), ShapeError);
}

TEST_CASE("information transfer rate closed forms") {
  CHECK(eval::itr_bits_per_min(1.0, 12, 1.0) == doctest::Approx(60.0 * std::log2(12.0)).epsilon(1e-15));
  CHECK(eval::itr_bits_per_min(1.0, 2, 0.5) == doctest::Approx(120.0).epsilon(1e-15));
  CHECK(eval::itr_bits_per_min(0.25, 4, 1.0) == 0.0);
  CHECK(eval::itr_bits_per_min(0.1, 4, 1.0) == 0.0);
  CHECK(eval::itr_clamped(0.1, 4));
  CHECK_FALSE(eval::itr_clamped(0.25, 4));
  CHECK(eval::itr_bits_per_min(0.9, 12, 1.0, 0.5) ==
        doctest::Approx(eval::itr_bits_per_min(0.9, 12, 1.5)).epsilon(1e-15));

  CHECK_THROWS_AS(eval::itr_bits_per_min(0.5, 1, 1.0), ParameterError);
  CHECK_THROWS_AS(eval::itr_bits_per_min(0.5, 12, 0.0), ParameterError);
  CHECK_THROWS_AS(eval::itr_bits_per_min(0.5, 12, 1.0, -0.1), ParameterError);
  CHECK_THROWS_AS(eval::itr_bits_per_min(1.2, 12, 1.0), ParameterError);
  CHECK_THROWS_AS(eval::itr_bits_per_min(std::nan(""), 12, 1.0), ParameterError);
}

TEST_CASE("information transfer rate over a grid") {
  for (int m : {2, 4, 12, 40}) {
    for (double w : {0.5, 1.0, 3.0}) {
      double prev = -1.0;
      for (int i = 0; i <= 1000; ++i) {
        const double p = i / 1000.0;
        const double itr = eval::itr_bits_per_min(p, static_cast<std::size_t>(m), w);
        CHECK(itr >= prev);
        prev = itr;
        if (p > 1.0 / m) CHECK(itr == doctest::Approx(oracle::itr(p, m, w)).epsilon(1e-12));
        CHECK(eval::itr_bits_per_min(p, static_cast<std::size_t>(m), 2.0 * w) == doctest::Approx(itr / 2.0));
      }
    }
  }
}

TEST_CASE("mean of per-fold rates exceeds the rate of the mean accuracy") {
  // Convex above chance, so averaging after the transform can only raise the value.
  const double a = 0.55, b = 0.95;
  const double mean_of = (eval::itr_bits_per_min(a, 12, 1.0) + eval::itr_bits_per_min(b, 12, 1.0)) / 2.0;
  CHECK(mean_of > eval::itr_bits_per_min((a + b) / 2.0, 12, 1.0));
}

TEST_CASE("paired t-test") {
  SUBCASE("three pairs against the closed form for two degrees of freedom") {
    const std::vector<double> a = {2.0, 1.0, 3.0}, b = {1.0, 1.0, 1.0};
    const auto r = eval::paired_t_test(a, b);
    CHECK(r.df == 2);
    CHECK(r.t == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));
    CHECK(r.p == doctest::Approx(1.0 - std::sqrt(3.0 / 5.0)).epsilon(1e-12));
    CHECK(r.p == doctest::Approx(0.2254).epsilon(1e-3));
    CHECK_FALSE(r.degenerate);
  }
  SUBCASE("two pairs against the Cauchy tail") {
    const std::vector<double> a = {1.0, 4.0}, b = {0.0, 0.0};
    const auto r = eval::paired_t_test(a, b);
    CHECK(r.t == doctest::Approx(5.0 / 3.0).epsilon(1e-14));
    CHECK(r.p == doctest::Approx(1.0 - 2.0 * std::atan(5.0 / 3.0) / 3.141592653589793).epsilon(1e-12));
  }
  SUBCASE("identical samples") {
    const std::vector<double> a = {0.5, 0.7, 0.9};
    const auto r = eval::paired_t_test(a, a);
    CHECK(r.t == 0.0);
    CHECK(r.p == 1.0);
    CHECK_FALSE(r.degenerate);
  }
  SUBCASE("constant nonzero difference") {
    const auto r = eval::paired_t_test(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 1.0});
    CHECK(r.degenerate);
    CHECK(r.t == std::numeric_limits<double>::infinity());
    CHECK(r.p == 0.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(eval::paired_t_test(std::vector<double>{1.0}, std::vector<double>{1.0}), ParameterError);
    CHECK_THROWS_AS(eval::paired_t_test(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}), ShapeError);
  }
}

TEST_CASE("decision fusion sums log-probabilities") {
  // NA is confident in class 0, SA mildly prefers class 1: fusion follows NA.
  const nn::Tensor na({3}, std::vector<double>{5.0, 0.0, 0.0}), sa({3}, std::vector<double>{0.0, 1.0, 0.0});
  CHECK(eval::decision_fusion(na, sa) == 0);
  // Adding a constant to either stream changes nothing.
  const nn::Tensor sa_shift({3}, std::vector<double>{100.0, 101.0, 100.0});
  CHECK(eval::decision_fusion(na, sa_shift) == 0);
  const nn::Tensor weak({3}, std::vector<double>{0.2, 0.0, 0.0}), strong({3}, std::vector<double>{0.0, 3.0, 0.0});
  CHECK(eval::decision_fusion(weak, strong) == 1);
  CHECK_THROWS_AS(eval::decision_fusion(na, nn::Tensor({2})), ShapeError);
}

TEST_CASE("disable lists") {
  CHECK(eval::parse_disable_list("").empty());
  CHECK(eval::parse_disable_list("mask,wmf") == std::vector<std::string>{"wmf", "mask"});
  CHECK_THROWS_AS(eval::parse_disable_list("mask,bogus"), ParameterError);
  CHECK_THROWS_AS(eval::parse_disable_list("sa,na"), ParameterError);
  const auto cfg = eval::apply_disable({}, {"pe", "sa"});
  CHECK_FALSE(cfg.pe_enabled);
  CHECK_FALSE(cfg.sa_stream_enabled);
  CHECK(cfg.mask_enabled);
  const auto flags = eval::flags_of(cfg);
  CHECK(flags == eval::AblationFlags{false, true, true, false, true});
}

TEST_CASE("report summary statistics") {
  const auto r = sample_report();
  REQUIRE(r.folds.size() == 3);
  CHECK(r.folds[0].fold == 1);
  CHECK(r.folds[1].subject == "s2");
  CHECK(r.mean_accuracy == doctest::Approx((0.75 + 0.25 + 1.0) / 3.0).epsilon(1e-15));
  const double m = r.mean_accuracy;
  const double var = ((0.75 - m) * (0.75 - m) + (0.25 - m) * (0.25 - m) + (1.0 - m) * (1.0 - m)) / 2.0;
  CHECK(r.std_accuracy == doctest::Approx(std::sqrt(var)).epsilon(1e-14));
  double itr_sum = 0.0;
  for (const auto& f : r.folds) {
    CHECK(f.itr_bits_per_min == doctest::Approx(eval::itr_bits_per_min(f.accuracy, 3, 1.0, 0.5)).epsilon(1e-15));
    itr_sum += f.itr_bits_per_min;
  }
  CHECK(r.folds[1].itr_clamped);
  CHECK(r.mean_itr_bits_per_min == doctest::Approx(itr_sum / 3.0).epsilon(1e-15));
  CHECK(r.itr_of_mean_accuracy == doctest::Approx(eval::itr_bits_per_min(m, 3, 1.0, 0.5)).epsilon(1e-15));
  CHECK_FALSE(r.ablation.pe);
  CHECK(r.config["train"]["epochs"] == 4);
}

TEST_CASE("paired comparison of two reports") {
  auto a = sample_report();
  auto b = sample_report();
  for (auto& f : b.folds) f.accuracy -= 0.1;
  b.folds[0].accuracy -= 0.05;
  const auto entry = eval::compare(a, b, "no-pe");
  CHECK(entry.baseline_name == "no-pe");
  CHECK(entry.df == 2);
  CHECK(entry.t > 0.0);
  std::reverse(b.folds.begin(), b.folds.end());
  CHECK(eval::compare(a, b, "no-pe") == entry);
}

TEST_CASE("report serialization") {
  const auto dir = std::filesystem::temp_directory_path() / "bima_test_report";
  std::filesystem::create_directories(dir);
  auto r = sample_report();
  r.t_tests.push_back({"base", std::numeric_limits<double>::infinity(), 0.0, 2, true});
  r.disabled = {"pe"};

  eval::write_report(r, dir / "r.json", eval::format_for(dir / "r.json"));
  const auto back = eval::read_report(dir / "r.json");
  CHECK(back == r);
  eval::write_report(back, dir / "r2.json", eval::ReportFormat::json);
  std::ifstream a(dir / "r.json"), b(dir / "r2.json");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());

  CHECK(eval::format_for("x.csv") == eval::ReportFormat::csv);
  CHECK(eval::format_for("x.out") == eval::ReportFormat::json);
  eval::write_report(r, dir / "r.csv", eval::ReportFormat::csv);
  std::ifstream c(dir / "r.csv");
  std::stringstream sc;
  sc << c.rdbuf();
  const std::string csv = sc.str();
  CHECK(csv.rfind("fold,subject,accuracy,itr_bits_per_min,epochs\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + r.folds.size() + 1);
  CHECK(csv.find(",MEAN,") != std::string::npos);

  const std::string table = eval::ablation_table_csv({r, r});
  CHECK(table.rfind("sa,na,wmf,pe,mask,accuracy,itr_bits_per_min\n", 0) == 0);
  CHECK(count_lines(table) == 3);

  CHECK_THROWS_AS(eval::read_report(dir / "missing.json"), IoError);
  std::filesystem::remove_all(dir);
}
