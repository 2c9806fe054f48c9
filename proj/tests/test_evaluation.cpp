#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "doctest.h"
#include "evsn/array_file.hpp"
#include "evsn/error.hpp"
#include "evsn/evaluation.hpp"
#include "evsn/generator.hpp"

using namespace evsn;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::io;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("confusion metrics by definition") {
  std::map<UserId, bool> truth, pred;
  for (int i = 0; i < 10; ++i) truth["u" + std::to_string(i)] = pred["u" + std::to_string(i)] = i < 3;
  auto m = confusion(pred, truth);
  CHECK(*m.accuracy == 1.0);
  CHECK(*m.fpr == 0.0);

  ConfusionCounts c{0, 2, 18, 0};
  CHECK(*confusion(c).fpr == doctest::Approx(0.1));
  CHECK_FALSE(confusion(c).recall);
  CHECK_FALSE(confusion(c).f1);

  c = {3, 1, 0, 2};
  m = confusion(c);
  CHECK(*m.precision == doctest::Approx(0.75));
  CHECK(*m.recall == doctest::Approx(0.6));
  CHECK(*m.f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
  CHECK(*m.fpr == 1.0);

  c = {4, 7, 31, 5};
  CHECK(*confusion(c).accuracy == 1.0 - (7.0 + 5.0) / 47.0);
  CHECK_FALSE(confusion(ConfusionCounts{}).accuracy);

  pred.erase("u0");
  pred["x"] = true;
  CHECK(kind_of([&] { confusion(pred, truth); }) == ErrorKind::contract);
}

TEST_CASE("ROC examples") {
  std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
  std::vector<bool> y = {true, true, false, false};
  CHECK(roc_auc(s, y).auc == 1.0);
  s = {0.5, 0.5, 0.5, 0.5};
  const auto flat = roc_auc(s, y);
  CHECK(flat.auc == 0.5);
  CHECK(flat.points.size() == 2);
  CHECK(kind_of([&] { roc_auc(s, std::vector<bool>(4, true)); }) == ErrorKind::degenerate);
  CHECK(kind_of([&] { roc_auc(s, std::vector<bool>(4, false)); }) == ErrorKind::degenerate);
}

TEST_CASE("trapezoid AUC equals the pairwise estimator") {
  std::mt19937_64 gen(99);
  for (std::size_t n : {200u, 1000u}) {
    std::vector<double> s(n);
    std::vector<bool> y(n);
    std::uniform_int_distribution<int> coarse(0, 40);
    std::normal_distribution<double> noise;
    std::size_t tied = 0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = gen() % 4 == 0;
      s[i] = i % 3 == 0 ? coarse(gen) / 40.0 + (y[i] ? 0.1 : 0.0) : noise(gen) + (y[i] ? 0.7 : 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (std::count(s.begin(), s.end(), s[i]) > 1) ++tied;
    }
    CHECK(tied >= n / 10);
    const auto roc = roc_auc(s, y);
    CHECK(std::abs(roc.auc - pairwise_auc(s, y)) <= 1e-9);
    CHECK(roc.points.front().fpr == 0.0);
    CHECK(roc.points.front().tpr == 0.0);
    CHECK(roc.points.back().fpr == 1.0);
    CHECK(roc.points.back().tpr == 1.0);
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
      CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
      CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
    }
  }
}

TEST_CASE("quantile interpolates order statistics") {
  CHECK(quantile({3, 1, 2, 4}, 0.0) == 1.0);
  CHECK(quantile({3, 1, 2, 4}, 1.0) == 4.0);
  CHECK(quantile({3, 1, 2, 4}, 0.5) == 2.5);
  CHECK(quantile({5}, 0.95) == 5.0);
  CHECK(kind_of([] { quantile({}, 0.5); }) == ErrorKind::degenerate);
}

TEST_CASE("k-means baseline flags points beyond the distance cut") {
  std::vector<Matrix> users;
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n(0.0, 0.1);
  for (int u = 0; u < 20; ++u) {
    Matrix m(5, 2);
    const double cx = u % 2 ? 5.0 : -5.0;
    for (std::size_t i = 0; i < 5; ++i) {
      m(i, 0) = cx + n(gen);
      m(i, 1) = n(gen);
    }
    users.push_back(m);
  }
  Matrix outlier(1, 2);
  outlier(0, 0) = 0.0;
  outlier(0, 1) = 4.0;
  users.push_back(outlier);
  SeededRng rng(1);
  const auto b = baseline_kmeans_detector(users, 2, 0.95, rng);
  CHECK(b.flagged.back());
  CHECK(b.max_distance.back() > b.threshold);

  Matrix at_centroid = Matrix::row_vector(b.centroids.row(0));
  users.push_back(at_centroid);
  SeededRng rng2(1);
  const auto b2 = baseline_kmeans_detector(users, 2, 0.95, rng2);
  CHECK_FALSE(b2.flagged.back());

  std::size_t flagged = std::count(b.flagged.begin(), b.flagged.end(), true);
  CHECK(flagged >= 1);
  CHECK(flagged <= users.size());
}

TEST_CASE("projection of axis-aligned 2-D data recovers coordinates") {
  Matrix x(4, 2);
  const double xs[] = {-3, -1, 1, 3};
  const double ys[] = {0.2, -0.2, -0.2, 0.2};  // uncorrelated with xs
  for (std::size_t i = 0; i < 4; ++i) {
    x(i, 0) = xs[i] + 10.0;
    x(i, 1) = ys[i] - 4.0;
  }
  const auto p = project_2d(x);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    mx += xs[i] / 4;
    my += ys[i] / 4;
  }
  const double sx = p.components(0, 0) > 0 ? 1.0 : -1.0;
  const double sy = p.components(1, 1) > 0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p.coordinates(i, 0) == doctest::Approx(sx * (xs[i] - mx)).epsilon(1e-9));
    CHECK(p.coordinates(i, 1) == doctest::Approx(sy * (ys[i] - my)).epsilon(1e-9));
  }
  CHECK(p.variance[0] >= p.variance[1]);
}

TEST_CASE("projection matches a dense eigensolver") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> n;
  for (std::size_t k : {2u, 3u, 5u, 8u}) {
    Matrix x(40, k);
    for (std::size_t i = 0; i < 40; ++i) {
      for (std::size_t j = 0; j < k; ++j) x(i, j) = n(gen) * (1.0 + static_cast<double>(j)) + (j == 0 ? n(gen) : 0.0);
    }
    const auto p = project_2d(x);
    Eigen::MatrixXd m(40, k);
    for (std::size_t i = 0; i < 40; ++i) {
      for (std::size_t j = 0; j < k; ++j) m(i, j) = x(i, j);
    }
    const Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
    const Eigen::MatrixXd cov = c.transpose() * c / 40.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const auto ev = es.eigenvalues();  // ascending
    CHECK(std::abs(p.variance[0] - ev(k - 1)) <= 1e-6);
    CHECK(std::abs(p.variance[1] - ev(k - 2)) <= 1e-6);
    double dot = 0, n0 = 0, n1 = 0;
    for (std::size_t j = 0; j < k; ++j) {
      dot += p.components(0, j) * p.components(1, j);
      n0 += p.components(0, j) * p.components(0, j);
      n1 += p.components(1, j) * p.components(1, j);
    }
    CHECK(std::abs(dot) <= 1e-8);
    CHECK(std::abs(n0 - 1.0) <= 1e-8);
    CHECK(std::abs(n1 - 1.0) <= 1e-8);
  }
}

TEST_CASE("projection rejects identical points and rank-1 data is handled") {
  Matrix same(4, 3, 1.5);
  CHECK(kind_of([&] { project_2d(same); }) == ErrorKind::degenerate);
  Matrix line(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) line(i, j) = static_cast<double>(i) * (j + 1.0);
  }
  const auto p = project_2d(line);
  CHECK(p.variance[1] == doctest::Approx(0.0).epsilon(1e-12));
  double dot = 0;
  for (std::size_t j = 0; j < 3; ++j) dot += p.components(0, j) * p.components(1, j);
  CHECK(std::abs(dot) <= 1e-8);
}

TEST_CASE("user aggregation applies the onset rule and skips warm-up rows") {
  std::vector<UserTruth> truth = {{"a", "data_theft", 300}, {"b", std::string(kBenignLabel), 0}};
  auto row = [](UserId u, Timestamp t, double s, bool alert, bool warm = false) {
    ScoreRow r;
    r.user = std::move(u);
    r.window_end = t;
    r.uncertainty = warm ? 0.99 : 0.2;
    r.drift = s / 0.2;
    r.score = s;
    r.alert = alert;
    r.warmup = warm;
    return r;
  };
  std::vector<ScoreRow> rows = {row("a", 100, 0, false, true), row("a", 200, 0.5, true), row("a", 300, 0.1, false),
                                row("b", 100, 0, false, true), row("b", 200, 0.05, false)};
  auto users = aggregate_users(rows, truth);
  CHECK_FALSE(users[0].detected);  // alert before onset
  CHECK(users[0].max_s == 0.5);
  CHECK(users[0].max_u == 0.2);
  CHECK(users[0].windows == 2);
  CHECK_FALSE(users[1].detected);
  rows.push_back(row("a", 300, 0.3, true));
  users = aggregate_users(rows, truth);
  CHECK(users[0].detected);

  rows.push_back(row("c", 100, 0.1, false));
  CHECK(kind_of([&] { aggregate_users(rows, truth); }) == ErrorKind::data);
}

TEST_CASE("report export is complete, consistent and deterministic") {
  GeneratorConfig g;
  g.population = 16;
  g.insider_fraction = 0.25;
  g.length = 12;
  g.min_duration = 2;
  g.max_duration = 4;
  g.seed = 5;
  const Corpus corpus = generate(g);
  Checkpoint ck;
  SeededRng rng(3);
  ck.model = init_model(kFeatureCount, 4, 1, 3, rng);
  ck.config.length = 12;
  ck.config.clusters = 3;
  ck.standardizer = Standardizer::fit(corpus.sequences);
  DetectorConfig dc;
  dc.warmup_windows = 2;
  const auto det = detect_sequences(ck, corpus.sequences, dc);
  EvaluationOptions opts;
  opts.config_digest = "abc";
  auto report = evaluate(ck, corpus.sequences, det.rows, dc.warmup_windows, opts);
  report.epochs = {{1, 2.0, 1.5, 0.5, 1.0, 0.25}};

  const auto base = std::filesystem::temp_directory_path() / "evsn_report_test";
  std::filesystem::remove_all(base);
  export_report(base / "one", report);
  export_report(base / "two", report);
  for (const char* f : {"metrics.json", "roc.csv", "scores.csv", "projection.csv", "epochs.csv"}) {
    REQUIRE(std::filesystem::exists(base / "one" / f));
    CHECK(read_text_file(base / "one" / f) == read_text_file(base / "two" / f));
  }
  const auto metrics = nlohmann::json::parse(read_text_file(base / "one" / "metrics.json"));
  for (const char* key : {"accuracy", "precision", "recall", "f1", "fpr", "auc", "baseline_fpr", "n_users",
                          "n_insiders", "seed", "config_digest"}) {
    CHECK(metrics.contains(key));
  }
  CHECK(metrics["n_users"] == 16);
  CHECK(metrics["n_insiders"] == 4);

  std::istringstream roc(read_text_file(base / "one" / "roc.csv"));
  std::string line;
  std::getline(roc, line);
  CHECK(line == "threshold,fpr,tpr");
  double area = 0, px = 0, py = 0;
  while (std::getline(roc, line)) {
    const auto cells = split_csv_line(line);
    const double x = std::stod(cells[1]), y = std::stod(cells[2]);
    area += (x - px) * (y + py) / 2;
    px = x;
    py = y;
  }
  CHECK(std::abs(area - metrics["auc"].get<double>()) <= 1e-12);

  std::istringstream proj(read_text_file(base / "one" / "projection.csv"));
  std::getline(proj, line);
  CHECK(line == "user,label,pc1,pc2,cluster,p0,p1,p2");
  CHECK(read_epochs_csv(base / "one" / "epochs.csv").size() == 1);
  std::filesystem::remove_all(base);
}
