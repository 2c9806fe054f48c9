// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.
//
//   acceptance <path-to-evsn-cli> <work-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "evsn/corpus_io.hpp"
#include "evsn/detector.hpp"
#include "evsn/error.hpp"
#include "evsn/evaluation.hpp"
#include "evsn/evidential.hpp"
#include "evsn/generator.hpp"
#include "evsn/sequence_model.hpp"
#include "evsn/training.hpp"
#include "gradient_check.hpp"
#include "json.hpp"

#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace evsn;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

BehaviorSequence random_sequence(std::size_t t, std::size_t d, SeededRng& rng) {
  BehaviorSequence s;
  s.user = "u";
  s.windows = Matrix(t, d);
  for (double& v : s.windows.values()) v = rng.normal();
  return s;
}

Verdict gradient_check() {
  const auto start = Clock::now();
  SeededRng rng(10);
  const ModelParams model = init_model(3, 4, 2, 3, rng);
  std::vector<BehaviorSequence> seqs = {random_sequence(5, 3, rng), random_sequence(5, 3, rng)};
  const std::vector<std::size_t> targets = {2, 0};
  const double lambda = 0.6;

  auto loss_of = [&](const ModelParams& m) {
    double total = 0.0;
    SeededRng unused(0);
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      const auto z = encode(m.encoder, seqs[b], DropoutSpec::inference(), unused);
      total += evidential_loss(head(m.head, z.values).alpha, one_hot(targets[b], 3), lambda).total;
    }
    return total / static_cast<double>(seqs.size());
  };

  Tape tape;
  const ModelVars vars = register_parameters(tape, model);
  std::vector<const BehaviorSequence*> ptrs = {&seqs[0], &seqs[1]};
  const Var z = encode_batch(tape, vars, ptrs, DropoutSpec::inference(), rng);
  const Var loss = evidential_loss_batch(tape, head_batch(tape, vars, z), targets, lambda);
  tape.backward(loss);
  const auto grads = collect_gradients(tape, vars);
  const auto flat = flatten(model);
  double worst = 0.0;
  for (std::size_t p = 0; p < flat.size(); ++p) {
    const Matrix fd = testing::finite_difference(
        [&](const Matrix& value) {
          ModelParams m = model;
          auto f = flatten(m);
          f[p] = value;
          unflatten(f, m);
          return loss_of(m);
        },
        flat[p]);
    worst = std::max(worst, testing::max_relative_error(grads[p], fd));
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-4 && secs < 10.0, fmt("max_rel_err=%.3g time=%.2fs", worst, secs)};
}

Verdict dirichlet_invariants() {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<int> classes(2, 12);
  std::uniform_real_distribution<double> evidence(0.0, 50.0);
  double worst_sum = 0.0;
  bool ok = true;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> alpha(static_cast<std::size_t>(classes(gen)));
    for (double& a : alpha) a = 1.0 + evidence(gen);
    const auto r = assess(alpha);
    double sum = 0.0;
    for (double p : r.expected) sum += p;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    double s = 0.0;
    for (double a : alpha) s += a;
    const double u = static_cast<double>(alpha.size()) / s;
    ok = ok && r.uncertainty == u && r.uncertainty > 0.0 && r.uncertainty <= 1.0;
  }
  return {ok && worst_sum <= 1e-9, fmt("max|sum p - 1|=%.3g u_exact=%s", worst_sum, ok ? "yes" : "no")};
}

double monte_carlo_kl(const std::vector<double>& alpha, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<std::gamma_distribution<double>> gammas;
  for (double a : alpha) gammas.emplace_back(a, 1.0);
  double s = 0.0;
  for (double a : alpha) s += a;
  double log_norm = std::lgamma(s);
  for (double a : alpha) log_norm -= std::lgamma(a);
  const double log_uniform = std::lgamma(static_cast<double>(alpha.size()));
  double acc = 0.0;
  std::vector<double> g(alpha.size());
  for (std::size_t n = 0; n < samples; ++n) {
    double total = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) total += g[j] = gammas[j](gen);
    double log_p = log_norm;
    for (std::size_t j = 0; j < alpha.size(); ++j) log_p += (alpha[j] - 1.0) * std::log(g[j] / total);
    acc += log_p - log_uniform;
  }
  return acc / static_cast<double>(samples);
}

Verdict kl_check() {
  const long double exact = std::numbers::ln2_v<long double> - 0.5L;
  const double closed = dirichlet_kl_to_uniform(std::vector<double>{2.0, 1.0});
  const double closed_err = static_cast<double>(std::abs(static_cast<long double>(closed) - exact));
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> draw(0.5, 6.0);
  double worst_mc = 0.0;
  for (int c = 0; c < 5; ++c) {
    std::vector<double> alpha = {draw(gen), draw(gen), draw(gen)};
    const double mc = monte_carlo_kl(alpha, 1'000'000, 500 + static_cast<std::uint64_t>(c));
    worst_mc = std::max(worst_mc, std::abs(mc - dirichlet_kl_to_uniform(alpha)));
  }
  return {closed_err <= 1e-9 && worst_mc <= 1e-2, fmt("closed_err=%.3g max_mc_err=%.3g", closed_err, worst_mc)};
}

Verdict ewma_check() {
  DetectorConfig cfg;
  const std::vector<double> b0 = {2.0, -1.0, 0.5, 4.0};
  const std::vector<double> v = {-0.25, 0.75, 3.0, 4.0};
  UserState s;
  s.user = "u";
  s.baseline = b0;
  s.previous = b0;
  DirichletAssessment a = assess(std::vector<double>{5.0, 3.0, 2.0});
  LatentEmbedding z;
  z.user = "u";
  z.values = v;
  double worst = 0.0;
  for (int t = 1; t <= 50; ++t) {
    s = observe(s, z, a, cfg).state;
    for (std::size_t i = 0; i < v.size(); ++i) {
      worst = std::max(worst, std::abs(s.baseline[i] - (v[i] + std::pow(1.0 - cfg.beta, t) * (b0[i] - v[i]))));
    }
  }
  return {worst <= 1e-9, fmt("max_err=%.3g over 50 steps", worst)};
}

Verdict threshold_grid() {
  const DetectorConfig cfg;  // 0.4, 1.5
  const double eps = 1e-6;
  std::vector<double> us, ds;
  for (double o : {-eps, 0.0, eps}) {
    us.push_back(cfg.tau_u + o);
    ds.push_back(cfg.tau_d + o);
  }
  std::size_t cases = 0, wrong = 0;
  for (double u : us) {
    for (double d : ds) {
      const Trigger t = classify(u, d, cfg);
      const Trigger want = (u > cfg.tau_u && d > cfg.tau_d) ? Trigger::both
                           : u > cfg.tau_u                  ? Trigger::uncertainty
                           : d > cfg.tau_d                  ? Trigger::drift
                                                            : Trigger::none;
      ++cases;
      if ((t != Trigger::none) != (u > cfg.tau_u || d > cfg.tau_d) || t != want) ++wrong;
    }
  }
  return {wrong == 0, fmt("%zu cases at (%.1f, %.1f) +- 1e-6, %zu wrong", cases, cfg.tau_u, cfg.tau_d, wrong)};
}

double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double acc = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      acc += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      pairs += 1.0;
    }
  }
  return acc / pairs;
}

Verdict auc_check() {
  std::mt19937_64 gen(31);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 5);
  std::bernoulli_distribution label(0.3), tied(0.3);
  double worst = 0.0, min_tie_share = 1.0;
  for (int set = 0; set < 5; ++set) {
    std::vector<double> s(1000);
    std::vector<bool> y(1000);
    for (std::size_t i = 0; i < s.size(); ++i) {
      y[i] = label(gen);
      s[i] = tied(gen) ? level(gen) * 0.5 : noise(gen) + (y[i] ? 0.7 : 0.0);
    }
    std::map<double, int> counts;
    for (double v : s) ++counts[v];
    std::size_t in_ties = 0;
    for (double v : s) in_ties += counts[v] > 1 ? 1 : 0;
    min_tie_share = std::min(min_tie_share, static_cast<double>(in_ties) / static_cast<double>(s.size()));
    worst = std::max(worst, std::abs(roc_auc(s, y).auc - pairwise_auc(s, y)));
  }
  return {worst <= 1e-9 && min_tie_share >= 0.1,
          fmt("5 sets, max|trapezoid - pairwise|=%.3g min tied share=%.0f%%", worst, 100.0 * min_tie_share)};
}

struct Cli {
  std::string binary;

  int run(const std::string& args, const fs::path& log) const {
    const std::string cmd = "\"" + binary + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
  }
};

struct PipelineRun {
  bool ok = false;
  std::string failure;
  double seconds = 0.0;
  fs::path dir;
  nlohmann::json metrics;
};

PipelineRun run_pipeline(const Cli& cli, const fs::path& dir) {
  PipelineRun r;
  r.dir = dir;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
  const auto start = Clock::now();
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"gen", "gen --seed 7 --out " + q(dir / "corpus")},
      {"train", "train --seed 7 --epochs 50 --corpus " + q(dir / "corpus") + " --out " + q(dir / "train")},
      {"detect", "detect --seed 7 --checkpoint " + q(dir / "train/checkpoint.evsn") + " --input " +
                     q(dir / "corpus") + " --out " + q(dir / "detect")},
      {"eval", "eval --seed 7 --scores " + q(dir / "detect/scores.csv") + " --corpus " + q(dir / "corpus") +
                   " --checkpoint " + q(dir / "train/checkpoint.evsn") + " --out " + q(dir / "report")},
  };
  for (const auto& [name, args] : steps) {
    const int rc = cli.run(args, dir / (name + ".log"));
    if (rc != 0) {
      r.failure = name + " exited " + std::to_string(rc) + ", see " + (dir / (name + ".log")).string();
      return r;
    }
  }
  r.seconds = seconds_since(start);
  std::ifstream in(dir / "report/metrics.json");
  r.metrics = nlohmann::json::parse(in);
  r.ok = true;
  return r;
}

double number(const nlohmann::json& j, const char* key) {
  return j.contains(key) && j[key].is_number() ? j[key].get<double>() : std::nan("");
}

Verdict pipeline_check(const PipelineRun& r) {
  if (!r.ok) return {false, r.failure};
  const double auc = number(r.metrics, "auc");
  const double fpr = number(r.metrics, "fpr");
  const double base = number(r.metrics, "baseline_fpr");
  const bool pass = auc >= 0.90 && fpr <= 0.10 && fpr < base && r.seconds <= 900.0;
  return {pass, fmt("auc=%.4f fpr=%.4f baseline_fpr=%.4f runtime=%.0fs", auc, fpr, base, r.seconds)};
}

Verdict intensity_check(const PipelineRun& r) {
  if (!r.ok) return {false, "pipeline did not complete"};
  const Checkpoint checkpoint = load_checkpoint(r.dir / "train/checkpoint.evsn");
  const std::vector<double> levels = {1.0, 4.0, 7.0, 10.0, 13.0};
  std::vector<double> rates;
  std::string detail = "insider post-onset alert rate:";
  for (double level : levels) {
    GeneratorConfig g;
    g.seed = 7;
    g.intensity = level;
    g.keep_events = false;
    const Corpus corpus = generate(g);
    const auto truth = truth_from_sequences(corpus.sequences);
    std::map<UserId, Timestamp> onset_end;
    for (const auto& t : truth) {
      if (t.label != kBenignLabel) onset_end[t.user] = t.onset_end;
    }
    const auto out = detect_sequences(checkpoint, corpus.sequences, DetectorConfig{});
    std::size_t windows = 0, alerts = 0;
    for (const auto& row : out.rows) {
      const auto it = onset_end.find(row.user);
      if (row.warmup || it == onset_end.end() || row.window_end < it->second) continue;
      ++windows;
      alerts += row.alert ? 1 : 0;
    }
    rates.push_back(windows == 0 ? 0.0 : static_cast<double>(alerts) / static_cast<double>(windows));
    detail += fmt(" %.0f:%.4f", level, rates.back());
  }
  const bool monotone = std::is_sorted(rates.begin(), rates.end());
  return {monotone, detail};
}

Verdict score_separation(const PipelineRun& r) {
  if (!r.ok) return {false, "pipeline did not complete"};
  const double ins = number(r.metrics, "mean_insider_score");
  const double ben = number(r.metrics, "mean_benign_score");
  return {ins > ben, fmt("mean_insider_s=%.4f mean_benign_s=%.4f", ins, ben)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism(const PipelineRun& a, const PipelineRun& b) {
  if (!a.ok || !b.ok) return {false, a.ok ? b.failure : a.failure};
  std::string detail;
  bool same = true;
  for (const char* f : {"train/checkpoint.evsn", "detect/scores.csv", "report/metrics.json"}) {
    const bool eq = slurp(a.dir / f) == slurp(b.dir / f) && !slurp(a.dir / f).empty();
    same = same && eq;
    detail += fmt("%s%s=%s", detail.empty() ? "" : " ", f, eq ? "identical" : "differs");
  }
  return {same, detail};
}

Verdict guarded(const std::function<Verdict()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s <evsn-cli> <work-dir>\n", argv[0]);
    return 2;
  }
  const Cli cli{argv[1]};
  const fs::path work = argv[2];

  int failures = 0;
  auto report = [&](int id, const char* name, const Verdict& v) {
    std::printf("criterion %2d %-34s %s  %s\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  };

  report(1, "gradient vs finite differences", guarded(gradient_check));
  report(2, "Dirichlet mean and uncertainty", guarded(dirichlet_invariants));
  report(3, "KL to uniform Dirichlet", guarded(kl_check));
  report(4, "EWMA closed form", guarded(ewma_check));
  report(5, "alert rule threshold grid", guarded(threshold_grid));
  report(6, "AUC with ties vs pairwise", guarded(auc_check));

  PipelineRun first, second;
  try {
    first = run_pipeline(cli, work / "run_a");
  } catch (const std::exception& e) {
    first.failure = e.what();
  }
  report(7, "synthetic pipeline quality", guarded([&] { return pipeline_check(first); }));
  report(8, "alert rate rises with intensity", guarded([&] { return intensity_check(first); }));
  report(9, "insider scores exceed benign", guarded([&] { return score_separation(first); }));
  try {
    second = run_pipeline(cli, work / "run_b");
  } catch (const std::exception& e) {
    second.failure = e.what();
  }
  report(10, "bitwise reproducible reruns", guarded([&] { return determinism(first, second); }));

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
