#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include "doctest.h"
#include "evsn/array_file.hpp"
#include "evsn/error.hpp"
#include "evsn/generator.hpp"
#include "evsn/training.hpp"

using namespace evsn;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  c.clusters = 3;
  c.hidden = 4;
  c.layers = 1;
  c.length = 8;
  c.warmup_epochs = 3;
  c.anneal_epochs = 2;
  c.refresh_period = 2;
  c.seed = 11;
  return c;
}

std::vector<BehaviorSequence> small_corpus(std::size_t users = 24, std::uint64_t seed = 3) {
  GeneratorConfig g;
  g.population = users;
  g.length = 8;
  g.insider_fraction = 0.0;
  g.min_duration = 1;
  g.max_duration = 3;
  g.seed = seed;
  g.keep_events = false;
  return generate(g).sequences;
}

double brute_force_two_means(const Matrix& x) {
  const std::size_t n = x.rows();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
    double total = 0.0;
    for (int side = 0; side < 2; ++side) {
      std::vector<double> mean(x.cols(), 0.0);
      double count = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (((mask >> i) & 1u) != static_cast<std::size_t>(side)) continue;
        count += 1.0;
        for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(i, c);
      }
      for (double& m : mean) m /= count;
      for (std::size_t i = 0; i < n; ++i) {
        if (((mask >> i) & 1u) != static_cast<std::size_t>(side)) continue;
        for (std::size_t c = 0; c < x.cols(); ++c) total += (x(i, c) - mean[c]) * (x(i, c) - mean[c]);
      }
    }
    best = std::min(best, total);
  }
  return best;
}

}  // namespace

TEST_CASE("training config JSON round trip and validation") {
  TrainConfig c = small_config();
  c.head_init = HeadInit::centroids;
  c.head_temperature = 2.5;
  CHECK(train_config_from_json(to_json(c)) == c);
  CHECK(train_config_from_json("{}") == TrainConfig{});
  CHECK_THROWS_AS(train_config_from_json(R"({"epoch": 3})"), Error);
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("zero warm-up epochs leave the initialization untouched") {
  const auto data = small_corpus();
  TrainConfig c = small_config();
  c.warmup_epochs = 0;
  SeededRng a(5), b(5);
  const EncoderParams warmed = warmup(c, data, a);
  const EncoderParams init = init_encoder(kFeatureCount, c.hidden, c.layers, b);
  CHECK(flatten(ModelParams{warmed, {}})[0] == flatten(ModelParams{init, {}})[0]);
  REQUIRE(warmed.layers.size() == 1);
  CHECK(warmed.layers[0].un == init.layers[0].un);
}

TEST_CASE("warm-up reduces reconstruction error and is seeded") {
  auto raw = small_corpus();
  const Standardizer st = Standardizer::fit(raw);
  std::vector<BehaviorSequence> data;
  for (const auto& s : raw) data.push_back(st.apply(s));
  TrainConfig c = small_config();
  c.warmup_epochs = 15;
  c.warmup_horizon = 3;
  c.supervise_stride = 1;
  c.learning_rate = 1e-2;
  std::vector<double> l1, l2;
  SeededRng a(2), b(2);
  const auto e1 = warmup(c, data, a, &l1);
  const auto e2 = warmup(c, data, b, &l2);
  REQUIRE(l1.size() == 15);
  CHECK(l1.back() < l1.front());
  CHECK(l1 == l2);
  CHECK(e1.layers[0].wz == e2.layers[0].wz);
}

TEST_CASE("k-means on K points puts each in its own cluster") {
  Matrix x(3, 2, std::vector<double>{0, 0, 5, 5, -3, 4});
  SeededRng rng(1);
  const auto ci = init_clusters(x, 3, rng);
  CHECK(ci.distortion.back() == 0.0);
  std::vector<std::size_t> seen = ci.assignment;
  std::sort(seen.begin(), seen.end());
  CHECK(seen == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("k-means reaches the brute-force optimum on two blobs") {
  SeededRng gen(8);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix x(10, 2);
    for (std::size_t i = 0; i < 10; ++i) {
      const double c = i < 4 ? -3.0 : 3.0;
      x(i, 0) = c + 0.5 * gen.normal();
      x(i, 1) = 0.5 * gen.normal();
    }
    SeededRng rng(static_cast<std::uint64_t>(trial));
    const auto ci = init_clusters(x, 2, rng);
    CHECK(ci.distortion.back() == doctest::Approx(brute_force_two_means(x)).epsilon(1e-12));
    for (std::size_t i = 1; i < ci.distortion.size(); ++i) CHECK(ci.distortion[i] <= ci.distortion[i - 1] + 1e-12);
  }
}

TEST_CASE("k-means needs K distinct points") {
  Matrix x(4, 2, 1.0);
  x(3, 0) = 2.0;
  SeededRng rng(1);
  try {
    init_clusters(x, 3, rng);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate);
  }
}

TEST_CASE("pseudo-labels are the argmax, ties to the lowest index") {
  SeededRng rng(4);
  ModelParams m = init_model(kFeatureCount, 4, 1, 3, rng);
  const auto data = small_corpus(4);
  m.head.weights.fill(0.0);
  m.head.bias = Matrix(1, 3, std::vector<double>{0.2, 0.7, 0.7});
  for (auto label : refresh_pseudo_labels(m, data)) CHECK(label == 1);
  m.head.bias = Matrix(1, 3, std::vector<double>{0.0, 0.0, 0.0});
  for (auto label : refresh_pseudo_labels(m, data)) CHECK(label == 0);
}

TEST_CASE("centroid head ranks the nearest centroid first") {
  Matrix c(2, 2, std::vector<double>{1, 0, -1, 0});
  const auto h = centroid_head(c, 3.0);
  CHECK(head(h, std::vector<double>{0.8, 0.1}).top_cluster() == 0);
  CHECK(head(h, std::vector<double>{-0.4, 2.0}).top_cluster() == 1);
}

TEST_CASE("smoke training run is deterministic and self-consistent") {
  const auto data = small_corpus();
  TrainConfig c = small_config();
  const TrainResult r1 = train(c, data);
  const TrainResult r2 = train(c, data);
  REQUIRE(r1.epochs.size() == 2);
  CHECK(r1.checkpoint.digest == r2.checkpoint.digest);
  CHECK(r1.checkpoint.digest.size() == 64);
  for (const auto& e : r1.epochs) {
    CHECK(e.total_loss == e.ce_loss + e.lambda * e.kl_loss);
    CHECK(e.lambda == anneal_lambda(e.epoch, c.anneal_epochs, c.lambda_max));
    CHECK(e.pseudo_accuracy >= 0.0);
    CHECK(e.pseudo_accuracy <= 1.0);
  }
  c.seed = 12;
  CHECK(train(c, data).checkpoint.digest != r1.checkpoint.digest);
}

TEST_CASE("cross-entropy falls over a longer run") {
  const auto data = small_corpus(32, 9);
  TrainConfig c = small_config();
  c.epochs = 25;
  c.learning_rate = 1e-2;
  c.lambda_max = 0.0;
  c.refresh_period = 100;
  c.dropout = 0.0;
  const auto r = train(c, data);
  CHECK(r.epochs.back().ce_loss < r.epochs.front().ce_loss);
}

TEST_CASE("checkpoint file round trip is bitwise") {
  const auto data = small_corpus();
  const TrainResult r = train(small_config(), data);
  const auto path = std::filesystem::temp_directory_path() / "evsn_training_ckpt.evsn";
  const std::string digest = save_checkpoint(path, r.checkpoint);
  CHECK(digest == r.checkpoint.digest);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.digest == digest);
  CHECK(back.config == r.checkpoint.config);
  CHECK(back.epoch == r.checkpoint.epoch);
  CHECK(back.rng_state == r.checkpoint.rng_state);
  CHECK(back.adam.step == r.checkpoint.adam.step);
  CHECK(back.standardizer.mean == r.checkpoint.standardizer.mean);
  CHECK(back.standardizer.scale == r.checkpoint.standardizer.scale);
  const auto a = flatten(back.model), b = flatten(r.checkpoint.model);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  const auto path2 = std::filesystem::temp_directory_path() / "evsn_training_ckpt2.evsn";
  save_checkpoint(path2, back);
  CHECK(read_text_file(path) == read_text_file(path2));
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("a diverging run aborts with a numeric error") {
  const auto data = small_corpus();
  TrainConfig c = small_config();
  c.learning_rate = 1e200;
  c.epochs = 5;
  try {
    train(c, data);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("length mismatch is a config error") {
  const auto data = small_corpus();
  TrainConfig c = small_config();
  c.length = 9;
  try {
    train(c, data);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}
