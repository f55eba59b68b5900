// Acceptance runner: one PASS/FAIL line per criterion, tolerances fixed below.
// Usage: bima_acceptance [--out DIR] [criterion numbers...]

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bima/adam.hpp"
#include "bima/checkpoint.hpp"
#include "bima/data.hpp"
#include "bima/grad_check.hpp"
#include "bima/kernels.hpp"
#include "bima/metrics.hpp"
#include "bima/model.hpp"
#include "bima/pipeline.hpp"
#include "bima/report.hpp"
#include "bima/spectral.hpp"
#include "oracles.hpp"

using namespace bima;
using nn::Tensor;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kRowSumTol = 1e-12;
constexpr double kMaskedWeightTol = 1e-6;
constexpr double kPlainAttentionTol = 1e-12;
constexpr double kDftTol = 1e-9;
constexpr double kParsevalTol = 1e-9;
constexpr double kToneTol = 1e-12;
constexpr double kAdamTol = 1e-12;
constexpr double kQuadraticTheta = 0.05;
constexpr double kItrPerfect = 215.08;
constexpr double kItrPerfectTol = 0.01;
constexpr double kItrTable = 167.9;
constexpr double kItrTableTol = 0.1;
constexpr double kLosoAccuracy = 0.60;
constexpr double kLosoSeconds = 15.0 * 60.0;
constexpr std::size_t kLosoEpochs = 50;
constexpr std::size_t kAblationEpochs = 5;

struct Line {
  bool passed = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& note) {
    passed = passed && ok;
    notes.push_back(std::string(ok ? "ok " : "FAILED ") + note);
  }
};

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << v;
  return s.str();
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// --- 1 ----------------------------------------------------------------------

Line gradients() {
  Line line;
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  model::BimaConfig cfg;
  cfg.num_channels = 3;
  cfg.num_classes = 3;
  cfg.wmf_kernels = 6;
  cfg.num_heads = 2;
  cfg.dropout_p = 0.0;
  const spectral::SpectralConfig sc{1.0, 8.0, 20.0, spectral::AmplitudeScale::two_over_n};
  std::vector<model::TrialFeatures> trials;
  for (int i = 0; i < 3; ++i) trials.push_back(model::prepare_features(oracle::random_tensor({3, 32}, rng), 128.0, sc));
  const std::vector<int> labels = {0, 1, 2};
  auto params = model::init_params(cfg, 32, trials[0].spectral.dim(1), 17);
  auto loss = [&](nn::ParamStore&, bool with_gradient) {
    double total = 0.0;
    for (std::size_t i = 0; i < trials.size(); ++i) {
      nn::Tape tape;
      nn::Rng unused(0);
      const nn::Var l = nn::cross_entropy(tape, model::forward(tape, params, trials[i], false, unused),
                                          std::span<const int>(&labels[i], 1));
      total += tape.value(l)[0];
      if (with_gradient) tape.backward(l);
    }
    return total;
  };
  const auto r = nn::grad_check(params.store, loss, 1e-5);
  const double elapsed = seconds_since(start);
  line.check(r.max_relative_error < kGradTol, "max rel err " + sci(r.max_relative_error) + " < " + sci(kGradTol) +
                                                   " over " + std::to_string(r.coordinates_checked) + " coords");
  line.check(elapsed < kGradSeconds, "runtime " + num(elapsed, 3) + " s < " + num(kGradSeconds) + " s");
  return line;
}

// --- 2 ----------------------------------------------------------------------

Line masking() {
  Line line;
  std::mt19937_64 rng(102);
  double worst_sum = 0.0, worst_masked = 0.0, worst_plain = 0.0;
  bool uniform_exact = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t t = 2 + static_cast<std::size_t>(trial) % 63, dk = 1 + static_cast<std::size_t>(trial) % 8;
    const Tensor q = oracle::random_tensor({t, dk}, rng, 1.5), k = oracle::random_tensor({t, dk}, rng, 1.5);
    const Tensor v = oracle::random_tensor({t, dk}, rng);
    const auto masked = model::masked_attention(q, k, v, true, -1e9);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (std::size_t r = 0; r < t; ++r) {
      std::vector<double> s(t, 0.0);
      double mean = 0.0, sum = 0.0;
      for (std::size_t c = 0; c < t; ++c) {
        for (std::size_t p = 0; p < dk; ++p) s[c] += q.at(r, p) * k.at(c, p);
        s[c] *= scale;
        mean += s[c];
      }
      mean /= static_cast<double>(t);
      for (std::size_t c = 0; c < t; ++c) {
        sum += masked.weights.at(r, c);
        if (s[c] < mean) worst_masked = std::max(worst_masked, masked.weights.at(r, c));
      }
      worst_sum = std::max(worst_sum, std::fabs(sum - 1.0));
    }
    const auto plain = model::masked_attention(q, k, v, false, -1e9);
    const auto ref = oracle::attention(q.storage(), k.storage(), v.storage(), t, dk, dk, false);
    for (std::size_t i = 0; i < t * t; ++i) worst_plain = std::max(worst_plain, std::fabs(plain.weights[i] - ref.weights[i]));
    for (std::size_t i = 0; i < t * dk; ++i) worst_plain = std::max(worst_plain, std::fabs(plain.output[i] - ref.output[i]));

    // Identical keys make every score in a row equal.
    Tensor same_k({t, dk});
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t p = 0; p < dk; ++p) same_k.at(r, p) = k.at(0, p);
    for (bool mask : {true, false}) {
      const auto u = model::masked_attention(q, same_k, v, mask, -1e9);
      for (double w : u.weights.values()) uniform_exact = uniform_exact && w == 1.0 / static_cast<double>(t);
    }
  }
  line.check(worst_sum <= kRowSumTol, "(a) max |row sum - 1| " + sci(worst_sum) + " <= " + sci(kRowSumTol));
  line.check(worst_masked < kMaskedWeightTol, "(b) max below-mean weight " + sci(worst_masked) + " < " + sci(kMaskedWeightTol));
  line.check(uniform_exact, "(c) equal rows give exactly 1/T");
  line.check(worst_plain <= kPlainAttentionTol, "(d) unmasked vs plain oracle " + sci(worst_plain) + " <= " + sci(kPlainAttentionTol));
  return line;
}

// --- 3 ----------------------------------------------------------------------

std::vector<std::complex<long double>> direct(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<long double> c(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long double a = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(i) / static_cast<long double>(n);
    c[i] = std::cos(a);
    s[i] = std::sin(a);
  }
  std::vector<std::complex<long double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    long double re = 0.0L, im = 0.0L;
    std::size_t idx = 0;
    for (std::size_t t = 0; t < n; ++t) {
      re += x[t] * c[idx];
      im += x[t] * s[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    out[k] = {re, im};
  }
  return out;
}

Line spectral_oracle() {
  Line line;
  std::mt19937_64 rng(103);
  std::uniform_int_distribution<std::size_t> len(1, 2048);
  double worst = 0.0, worst_parseval = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = i == 0 ? 2048 : len(rng);
    const Tensor x = oracle::random_tensor({n}, rng);
    const std::vector<double> xs(x.values().begin(), x.values().end());
    const auto fast = spectral::dft(x.values(), n);
    const auto slow = direct(xs);
    long double peak = 0.0L, err = 0.0L, energy_t = 0.0L, energy_f = 0.0L;
    for (std::size_t k = 0; k < n; ++k) {
      const std::complex<long double> f(fast[k].real(), fast[k].imag());
      peak = std::max(peak, std::abs(slow[k]));
      err = std::max(err, std::abs(slow[k] - f));
      energy_f += std::norm(f);
      energy_t += static_cast<long double>(xs[k]) * xs[k];
    }
    worst = std::max(worst, static_cast<double>(err / peak));
    worst_parseval = std::max(worst_parseval, static_cast<double>(std::fabs(energy_t - energy_f / n) / energy_t));
  }
  line.check(worst <= kDftTol, "dft vs direct max rel err " + sci(worst) + " <= " + sci(kDftTol) + " (50 signals, n <= 2048)");
  line.check(worst_parseval <= kParsevalTol, "Parseval max rel err " + sci(worst_parseval) + " <= " + sci(kParsevalTol));

  // Tones through the spectral stream input against the direct transform.
  const double fs = 256.0;
  const spectral::SpectralConfig cfg;
  const std::size_t bins = spectral::num_bins(cfg, fs), nfft = spectral::nfft_for(cfg, fs);
  const auto [first, last] = spectral::band_bins(cfg, fs);
  Tensor trial({4, 256});
  const double freqs[4] = {10.0, 10.0, 23.25, 47.5};
  for (std::size_t t = 0; t < 256; ++t) {
    for (std::size_t c = 0; c < 4; ++c) {
      const double ph = 2.0 * std::numbers::pi * freqs[c] * static_cast<double>(t) / fs;
      trial.at(c, t) = c % 2 == 0 ? std::cos(ph) : std::sin(ph);
    }
  }
  const auto feat = spectral::complex_spectrum(trial, fs, cfg);
  double tone_err = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<double> row(trial.data() + c * 256, trial.data() + (c + 1) * 256);
    const auto ref = oracle::direct_dft(row, nfft);
    for (std::size_t b = 0; b < bins; ++b) {
      const double scale = 2.0 / static_cast<double>(nfft);
      tone_err = std::max(tone_err, std::fabs(feat.values.at(c, b) - ref[first + b].real() * scale));
      tone_err = std::max(tone_err, std::fabs(feat.values.at(c, bins + b) - ref[first + b].imag() * scale));
    }
  }
  const std::size_t b10 = static_cast<std::size_t>(std::lround((10.0 - cfg.band_low_hz) / cfg.resolution_hz));
  const double amp = 256.0 / static_cast<double>(nfft);
  const bool halves = std::fabs(feat.values.at(0, b10) - amp) < kToneTol && std::fabs(feat.values.at(0, bins + b10)) < kToneTol &&
                      std::fabs(feat.values.at(1, b10)) < kToneTol && std::fabs(feat.values.at(1, bins + b10) + amp) < kToneTol;
  line.check(tone_err <= kToneTol, "tone spectra vs oracle max abs err " + sci(tone_err) + " <= " + sci(kToneTol) +
                                       " (" + std::to_string(last - first) + " bins)");
  line.check(halves, "cos lands in the real half, sin in the imaginary half");
  return line;
}

// --- 4 ----------------------------------------------------------------------

Line optimizer() {
  Line line;
  std::mt19937_64 rng(104);
  std::normal_distribution<double> g(0.0, 1.0);
  nn::ParamStore ps;
  ps.add("a", oracle::random_tensor({37}, rng));
  ps.add("b", oracle::random_tensor({5, 6}, rng));
  std::vector<double> flat;
  for (std::size_t i = 0; i < ps.size(); ++i) flat.insert(flat.end(), ps.value(i).values().begin(), ps.value(i).values().end());
  oracle::Adam ref(flat.size(), 1e-3);
  auto state = train::AdamState::zeros_for(ps);
  double worst = 0.0;
  for (std::size_t step = 1; step <= 1000; ++step) {
    std::vector<double> grad(flat.size());
    for (double& x : grad) x = g(rng);
    std::size_t off = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      for (double& x : ps.grad(i).values()) x = grad[off++];
    }
    ref.step(flat, grad);
    train::adam_step(ps, state, step, {1e-3});
    off = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      for (double x : ps.value(i).values()) worst = std::max(worst, std::fabs(x - flat[off++]));
    }
  }
  line.check(worst <= kAdamTol, "max |theta - reference| over 1000 random steps " + sci(worst) + " <= " + sci(kAdamTol));

  nn::ParamStore q;
  q.add("theta", Tensor({1}, 1.0));
  auto qs = train::AdamState::zeros_for(q);
  for (std::size_t step = 1; step <= 100; ++step) {
    q.grad(0)[0] = 2.0 * q.value(0)[0];
    train::adam_step(q, qs, step, {0.1});
  }
  const double theta = std::fabs(q.value(0)[0]);
  line.check(theta < kQuadraticTheta, "theta^2 from 1 at lr 0.1: |theta| after 100 steps " + num(theta) + " < " + num(kQuadraticTheta));
  return line;
}

// --- 5 ----------------------------------------------------------------------

Line itr() {
  Line line;
  const double perfect = eval::itr_bits_per_min(1.0, 12, 1.0);
  line.check(std::fabs(perfect - kItrPerfect) <= kItrPerfectTol,
             "itr(1, 12, 1 s) = " + num(perfect, 7) + ", expected " + num(kItrPerfect, 7) + " +/- " + num(kItrPerfectTol) +
                 " (60 log2 12 = " + num(60.0 * std::log2(12.0), 7) + ")");
  bool chance = true;
  for (std::size_t m : {2u, 5u, 12u}) {
    for (double w : {0.5, 1.0, 4.0}) chance = chance && eval::itr_bits_per_min(1.0 / static_cast<double>(m), m, w) == 0.0;
  }
  line.check(chance, "itr(1/M, M, T) == 0 exactly for M in {2, 5, 12}");
  bool monotone = true;
  for (std::size_t m : {2u, 5u, 12u}) {
    double prev = 0.0;
    for (int i = 0; i <= 10000; ++i) {
      const double p = 1.0 / static_cast<double>(m) + (1.0 - 1.0 / static_cast<double>(m)) * i / 10000.0;
      const double v = eval::itr_bits_per_min(std::min(p, 1.0), m, 1.0);
      monotone = monotone && v >= prev;
      prev = v;
    }
  }
  line.check(monotone, "non-decreasing in P on [1/M, 1]");
  const double table = eval::itr_bits_per_min(0.7866, 12, 0.75);
  line.check(std::fabs(table - kItrTable) <= kItrTableTol,
             "itr(0.7866, 12, 0.75 s) = " + num(table, 6) + " ~ " + num(kItrTable) + " +/- " + num(kItrTableTol));
  return line;
}

// --- 6 ----------------------------------------------------------------------

struct Ablation {
  const char* name;
  const char* disable;
};

Line synthetic_loso(const std::filesystem::path& out) {
  Line line;
  data::SynthConfig sc;
  sc.num_subjects = 6;
  sc.classes_hz = data::twelve_target_grid();
  sc.trials_per_class = 10;
  sc.snr_db = 0.0;
  sc.sampling_rate_hz = 256.0;
  sc.window_s = 1.0;
  const auto subjects = data::synthesize(sc);

  config::RunConfig cfg;
  cfg.train.epochs = kLosoEpochs;
  train::LosoOptions options;
  options.jobs = 1;
  options.on_fold = [](const train::FoldResult& f) {
    std::fprintf(stderr, "  fold %s accuracy %.4f\n", f.held_out_subject.c_str(), f.accuracy);
  };

  std::fprintf(stderr, "criterion 6: full model, %zu epochs, backend %s\n", kLosoEpochs,
               std::string(kernels::active().name).c_str());
  const auto start = Clock::now();
  auto full = pipeline::run_loso(subjects, cfg, {}, options);
  const double elapsed = seconds_since(start);
  line.check(full.mean_accuracy >= kLosoAccuracy,
             "mean LOSO accuracy " + num(full.mean_accuracy) + " >= " + num(kLosoAccuracy) + " (chance " + num(1.0 / 12.0, 3) + ")");
  line.check(elapsed < kLosoSeconds, "single-threaded runtime " + num(elapsed, 5) + " s < " + num(kLosoSeconds) + " s");

  const Ablation ablations[] = {{"no-mask", "mask"}, {"no-pe", "pe"}, {"no-wmf", "wmf"}, {"no-sa", "sa"}, {"no-na", "na"}};
  config::RunConfig short_cfg = cfg;
  short_cfg.train.epochs = kAblationEpochs;
  std::fprintf(stderr, "criterion 6: reference model, %zu epochs\n", kAblationEpochs);
  auto reference = pipeline::run_loso(subjects, short_cfg, {}, options);
  std::vector<eval::EvalReport> table = {reference};
  bool all_written = true;
  for (const auto& a : ablations) {
    std::fprintf(stderr, "criterion 6: %s, %zu epochs\n", a.name, kAblationEpochs);
    auto r = pipeline::ablate(subjects, short_cfg, a.disable, options);
    r.t_tests.push_back(eval::compare(r, reference, "full"));
    const auto path = out / (std::string("ablation_") + a.name + ".json");
    eval::write_report(r, path, eval::ReportFormat::json);
    all_written = all_written && eval::read_report(path) == r && r.folds.size() == subjects.size();
    table.push_back(std::move(r));
  }
  eval::write_report(full, out / "loso_full.json", eval::ReportFormat::json);
  eval::write_report(full, out / "loso_full.csv", eval::ReportFormat::csv);
  eval::write_report(reference, out / "ablation_reference.json", eval::ReportFormat::json);
  std::ofstream(out / "ablation_table.csv") << eval::ablation_table_csv(table);
  line.check(all_written, "5 ablations completed (" + std::to_string(kAblationEpochs) +
                              " epochs/fold) and wrote reports to " + out.string());
  return line;
}

// --- 7 ----------------------------------------------------------------------

Line determinism(const std::filesystem::path& out) {
  Line line;
  data::SynthConfig sc;
  sc.num_subjects = 3;
  sc.classes_hz = {9.25, 10.25, 11.25, 12.25};
  sc.trials_per_class = 3;
  sc.snr_db = 0.0;
  sc.seed = 7;
  const auto subjects = data::synthesize(sc);
  config::RunConfig cfg;
  cfg.train.epochs = 3;
  cfg.train.batch_size = 8;
  cfg.train.seed = 1234;

  train::LosoOptions serial;
  serial.jobs = 1;
  train::LosoOptions parallel;
  parallel.jobs = 3;
  const auto a = pipeline::run_loso(subjects, cfg, {}, serial);
  const auto b = pipeline::run_loso(subjects, cfg, {}, serial);
  const auto c = pipeline::run_loso(subjects, cfg, {}, parallel);
  bool same_traj = true, same_pred = true;
  for (std::size_t i = 0; i < a.folds.size(); ++i) {
    same_traj = same_traj && a.folds[i].loss_trajectory == b.folds[i].loss_trajectory;
    same_pred = same_pred && a.folds[i].predictions == b.folds[i].predictions;
  }
  line.check(same_traj, "loss trajectories bit-identical across runs");
  line.check(same_pred, "predictions identical across runs");
  for (const auto& [r, name] : {std::pair{&a, "det_a"}, std::pair{&b, "det_b"}, std::pair{&c, "det_jobs3"}}) {
    eval::write_report(*r, out / (std::string(name) + ".json"), eval::ReportFormat::json);
    eval::write_report(*r, out / (std::string(name) + ".csv"), eval::ReportFormat::csv);
  }
  line.check(slurp(out / "det_a.json") == slurp(out / "det_b.json") && slurp(out / "det_a.csv") == slurp(out / "det_b.csv"),
             "report files byte-identical");
  line.check(slurp(out / "det_a.json") == slurp(out / "det_jobs3.json"), "--jobs 3 report identical to --jobs 1");
  return line;
}

// --- 8 ----------------------------------------------------------------------

Line round_trips(const std::filesystem::path& out) {
  Line line;
  data::SynthConfig sc;
  sc.classes_hz = data::twelve_target_grid();
  sc.trials_per_class = 2;
  sc.snr_db = 0.0;
  sc.seed = 8;
  const auto set = data::synthesize(sc).front();
  data::save_epochs(set, out / "rt_a.eegb");
  data::save_epochs(data::load_epochs(out / "rt_a.eegb"), out / "rt_b.eegb");
  line.check(slurp(out / "rt_a.eegb") == slurp(out / "rt_b.eegb"), "EEGB save -> load -> save byte-identical");

  model::BimaConfig cfg;
  cfg.num_channels = 8;
  cfg.num_classes = 12;
  model::Checkpoint ckpt{model::init_params(cfg, 256, 450, 9), {}, 256.0, 9};
  model::save_checkpoint(ckpt, out / "rt_a.ckpt");
  model::save_checkpoint(model::load_checkpoint(out / "rt_a.ckpt"), out / "rt_b.ckpt");
  line.check(slurp(out / "rt_a.ckpt") == slurp(out / "rt_b.ckpt"), "checkpoint save -> load -> save byte-identical");
  return line;
}

}  // namespace

int main(int argc, char** argv) {
  std::filesystem::path out = "acceptance_out";
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else {
      selected.insert(std::stoi(arg));
    }
  }
  std::filesystem::create_directories(out);

  const std::map<int, std::pair<const char*, std::function<Line()>>> criteria = {
      {1, {"gradient correctness", gradients}},
      {2, {"masking attention properties", masking}},
      {3, {"spectral oracle", spectral_oracle}},
      {4, {"optimizer oracle", optimizer}},
      {5, {"ITR formula", itr}},
      {6, {"end-to-end synthetic LOSO", [&] { return synthetic_loso(out); }}},
      {7, {"determinism", [&] { return determinism(out); }}},
      {8, {"format round-trips", [&] { return round_trips(out); }}},
  };

  int failures = 0;
  for (const auto& [id, entry] : criteria) {
    if (!selected.empty() && !selected.contains(id)) continue;
    Line line;
    try {
      line = entry.second();
    } catch (const std::exception& e) {
      line.check(false, std::string("exception: ") + e.what());
    }
    std::printf("criterion %d %-30s %s\n", id, entry.first, line.passed ? "PASS" : "FAIL");
    for (const auto& n : line.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    failures += !line.passed;
  }
  return failures == 0 ? 0 : 1;
}
