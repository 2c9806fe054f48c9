#include <doctest.h>

#include <chrono>
#include <cmath>

#include "evsn/error.hpp"
#include "evsn/evidential.hpp"
#include "evsn/sequence_model.hpp"
#include "gradient_check.hpp"

using namespace evsn;

namespace {

BehaviorSequence random_sequence(std::size_t t, std::size_t d, std::size_t padding, SeededRng& rng) {
  BehaviorSequence s;
  s.user = "u";
  s.windows = Matrix(t, d);
  s.padding = padding;
  for (std::size_t i = padding; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) s.windows(i, j) = rng.normal();
  }
  return s;
}

Matrix scalar(double v) { return Matrix(1, 1, v); }

}  // namespace

TEST_CASE("zero parameters give a zero embedding") {
  SeededRng rng(1);
  ModelParams m = init_model(4, 6, 2, 3, rng);
  for (auto& layer : m.encoder.layers) {
    for (Matrix* p : {&layer.wz, &layer.wr, &layer.wn, &layer.uz, &layer.ur, &layer.un, &layer.bz, &layer.br,
                      &layer.bn}) {
      p->fill(0.0);
    }
  }
  const auto seq = random_sequence(10, 4, 0, rng);
  const auto z = encode(m.encoder, seq, DropoutSpec::inference(), rng);
  REQUIRE(z.values.size() == 6);
  for (double v : z.values) CHECK(v == 0.0);
}

TEST_CASE("scalar GRU matches a hand-computed recurrence") {
  GruLayerParams l{scalar(0.5), scalar(-0.3), scalar(0.8), scalar(0.2), scalar(0.4),
                   scalar(-0.6), scalar(0.1), scalar(0.0), scalar(0.05)};
  EncoderParams enc{{l}};
  BehaviorSequence s;
  s.windows = Matrix(3, 1);
  s.windows(0, 0) = 1.0;
  s.windows(1, 0) = -2.0;
  s.windows(2, 0) = 0.5;
  SeededRng rng(0);
  CHECK(encode(enc, s, DropoutSpec::inference(), rng).values[0] == doctest::Approx(-0.08821260370141165).epsilon(1e-14));
  EncoderState st = initial_state(enc);
  advance(enc, st, s.windows.row(0));
  CHECK(st.embedding()[0] == doctest::Approx(0.24487610859518186).epsilon(1e-14));
  advance(enc, st, s.windows.row(1));
  CHECK(st.embedding()[0] == doctest::Approx(-0.5774730986197597).epsilon(1e-14));
}

TEST_CASE("initialization respects fan-in bounds and is seeded") {
  SeededRng a(5), b(5);
  const ModelParams m = init_model(12, 64, 2, 5, a);
  const ModelParams n = init_model(12, 64, 2, 5, b);
  CHECK(flatten(m) == flatten(n));
  auto within = [](const Matrix& x, double bound) {
    for (double v : x.values()) {
      if (!(std::abs(v) <= bound)) return false;
    }
    return true;
  };
  CHECK(within(m.encoder.layers[0].wz, 1.0 / std::sqrt(12.0)));
  CHECK(within(m.encoder.layers[1].wz, 1.0 / std::sqrt(64.0)));
  CHECK(within(m.encoder.layers[0].un, 1.0 / std::sqrt(64.0)));
  CHECK(within(m.head.weights, 1.0 / std::sqrt(64.0)));
  CHECK(m.encoder.layers[1].input_dim() == 64);
  CHECK(m.head.clusters() == 5);
  CHECK(parameter_names(m).size() == 20);
  CHECK(parameter_names(m).front() == "encoder.l0.wz");
  CHECK(parameter_names(m).back() == "head.bias");
}

TEST_CASE("flatten and unflatten round-trip") {
  SeededRng rng(2);
  const ModelParams m = init_model(3, 4, 2, 3, rng);
  ModelParams blank = init_model(3, 4, 2, 3, rng);
  const auto flat = flatten(m);
  unflatten(flat, blank);
  CHECK(flatten(blank) == flat);
  std::vector<Matrix> wrong = flat;
  wrong.pop_back();
  CHECK_THROWS_AS(unflatten(wrong, blank), Error);
}

TEST_CASE("head maps to softplus evidence plus one") {
  EvidentialHeadParams h{Matrix(2, 3), Matrix(1, 2)};
  const std::vector<double> z = {0.3, -1.0, 2.0};
  const auto flat = head(h, z);
  CHECK(flat.alpha[0] == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-15));
  CHECK(flat.uncertainty == doctest::Approx(2.0 / (2.0 * (std::log(2.0) + 1.0))));
  h.bias(0, 0) = 2.0;
  h.bias(0, 1) = -2.0;
  const auto a = head(h, z);
  CHECK(a.alpha[0] == doctest::Approx(3.1269280110429724964).epsilon(1e-15));
  CHECK(a.alpha[1] == doctest::Approx(1.1269280110429724964).epsilon(1e-15));
  CHECK_THROWS_AS(head(h, std::vector<double>{1.0}), Error);
}

TEST_CASE("encoding is deterministic and ignores padded rows") {
  SeededRng rng(3);
  const ModelParams m = init_model(5, 8, 2, 3, rng);
  BehaviorSequence padded = random_sequence(12, 5, 4, rng);
  for (std::size_t i = 0; i < 4; ++i) padded.windows(i, 0) = 99.0;  // garbage behind the flag
  BehaviorSequence trimmed;
  trimmed.windows = Matrix(8, 5);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 5; ++j) trimmed.windows(i, j) = padded.windows(i + 4, j);
  }
  const auto a = encode(m.encoder, padded, DropoutSpec::inference(), rng);
  const auto b = encode(m.encoder, padded, DropoutSpec::inference(), rng);
  const auto c = encode(m.encoder, trimmed, DropoutSpec::inference(), rng);
  CHECK(a.values == b.values);
  CHECK(a.values == c.values);
}

TEST_CASE("dropout masks are reproducible from the RNG") {
  SeededRng init(4);
  const ModelParams m = init_model(5, 8, 2, 3, init);
  SeededRng data(9);
  const auto seq = random_sequence(10, 5, 0, data);
  DropoutSpec on{0.3, true};
  SeededRng r1(77), r2(77), r3(78);
  const auto a = encode(m.encoder, seq, on, r1);
  const auto b = encode(m.encoder, seq, on, r2);
  const auto c = encode(m.encoder, seq, on, r3);
  const auto off = encode(m.encoder, seq, DropoutSpec::inference(), r3);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.values != off.values);
}

TEST_CASE("batched, whole-sequence and incremental encoders agree") {
  SeededRng rng(6);
  const ModelParams m = init_model(4, 5, 2, 3, rng);
  std::vector<BehaviorSequence> seqs;
  seqs.push_back(random_sequence(7, 4, 0, rng));
  seqs.push_back(random_sequence(7, 4, 3, rng));
  seqs.push_back(random_sequence(7, 4, 6, rng));
  std::vector<const BehaviorSequence*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  Tape tape;
  const ModelVars vars = register_parameters(tape, m);
  const Var z = encode_batch(tape, vars, ptrs, DropoutSpec::inference(), rng);
  const Matrix& batch = tape.value(z);
  REQUIRE(batch.rows() == 3);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto whole = encode(m.encoder, seqs[b], DropoutSpec::inference(), rng);
    EncoderState st = initial_state(m.encoder);
    for (std::size_t t = seqs[b].padding; t < 7; ++t) advance(m.encoder, st, seqs[b].windows.row(t));
    CHECK(st.steps == 7 - seqs[b].padding);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(batch(b, j) == doctest::Approx(whole.values[j]).epsilon(1e-14));
      CHECK(st.embedding()[j] == whole.values[j]);
    }
  }
  const Matrix& alpha = tape.value(head_batch(tape, vars, z));
  const auto direct = head(m.head, std::vector<double>(batch.row(1).begin(), batch.row(1).end()));
  for (std::size_t j = 0; j < 3; ++j) CHECK(alpha(1, j) == doctest::Approx(direct.alpha[j]).epsilon(1e-14));
}

TEST_CASE("full loss gradient through head and encoder matches finite differences") {
  const auto start = std::chrono::steady_clock::now();
  SeededRng rng(10);
  const ModelParams model = init_model(3, 4, 2, 3, rng);
  std::vector<BehaviorSequence> seqs = {random_sequence(5, 3, 0, rng), random_sequence(5, 3, 0, rng)};
  const std::vector<std::size_t> targets = {2, 0};
  const double lambda = 0.6;

  // Oracle: forward-only scalar path, independent of the tape.
  auto loss_of = [&](const ModelParams& m) {
    double total = 0.0;
    SeededRng unused(0);
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      const auto z = encode(m.encoder, seqs[b], DropoutSpec::inference(), unused);
      const auto a = head(m.head, z.values);
      total += evidential_loss(a.alpha, one_hot(targets[b], 3), lambda).total;
    }
    return total / static_cast<double>(seqs.size());
  };

  Tape tape;
  const ModelVars vars = register_parameters(tape, model);
  std::vector<const BehaviorSequence*> ptrs = {&seqs[0], &seqs[1]};
  const Var z = encode_batch(tape, vars, ptrs, DropoutSpec::inference(), rng);
  const Var loss = evidential_loss_batch(tape, head_batch(tape, vars, z), targets, lambda);
  CHECK(tape.value(loss)(0, 0) == doctest::Approx(loss_of(model)).epsilon(1e-13));
  tape.backward(loss);
  const auto grads = collect_gradients(tape, vars);
  const auto flat = flatten(model);
  const auto names = parameter_names(model);
  REQUIRE(grads.size() == flat.size());
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
    CAPTURE(names[p]);
    CHECK(testing::max_relative_error(grads[p], fd) <= 1e-4);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 10.0);
}
