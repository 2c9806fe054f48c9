#include "evsn/sequence_model.hpp"

#include <cmath>

#include "evsn/activations.hpp"
#include "evsn/error.hpp"

namespace evsn {

std::size_t EncoderParams::input_dim() const {
  if (layers.empty()) fail(ErrorKind::contract, "encoder has no layers");
  return layers.front().input_dim();
}

std::size_t EncoderParams::hidden_dim() const {
  if (layers.empty()) fail(ErrorKind::contract, "encoder has no layers");
  return layers.back().hidden_dim();
}

namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, SeededRng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, SeededRng& rng) {
  Matrix mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& v : mask.values()) v = rng.uniform() < p ? 0.0 : keep_scale;
  return mask;
}

void check_dropout(const DropoutSpec& dropout) {
  if (!(dropout.probability >= 0.0 && dropout.probability < 1.0)) {
    fail(ErrorKind::config, "dropout probability must lie in [0, 1), got " +
                                std::to_string(dropout.probability));
  }
}

void check_sequence(const EncoderParams& params, const BehaviorSequence& seq) {
  if (seq.width() != params.input_dim()) {
    fail(ErrorKind::shape, "sequence for '" + seq.user + "' has width " +
                               std::to_string(seq.width()) + ", encoder expects " +
                               std::to_string(params.input_dim()));
  }
  if (seq.padding > seq.length()) {
    fail(ErrorKind::contract, "sequence padding exceeds its length");
  }
  if (seq.valid_length() == 0) {
    fail(ErrorKind::contract, "cannot encode an empty sequence for '" + seq.user + "'");
  }
}

}  // namespace

EncoderParams init_encoder(std::size_t input_dim, std::size_t hidden, std::size_t layers,
                           SeededRng& rng) {
  if (input_dim == 0 || hidden == 0 || layers == 0) {
    fail(ErrorKind::config, "encoder dimensions must be positive");
  }
  EncoderParams p;
  const double hidden_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input_dim : hidden;
    const double in_bound = 1.0 / std::sqrt(static_cast<double>(in));
    GruLayerParams layer;
    layer.wz = uniform_matrix(in, hidden, in_bound, rng);
    layer.wr = uniform_matrix(in, hidden, in_bound, rng);
    layer.wn = uniform_matrix(in, hidden, in_bound, rng);
    layer.uz = uniform_matrix(hidden, hidden, hidden_bound, rng);
    layer.ur = uniform_matrix(hidden, hidden, hidden_bound, rng);
    layer.un = uniform_matrix(hidden, hidden, hidden_bound, rng);
    layer.bz = uniform_matrix(1, hidden, hidden_bound, rng);
    layer.br = uniform_matrix(1, hidden, hidden_bound, rng);
    layer.bn = uniform_matrix(1, hidden, hidden_bound, rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

EvidentialHeadParams init_head(std::size_t hidden, std::size_t clusters, SeededRng& rng) {
  if (hidden == 0 || clusters < 2) fail(ErrorKind::config, "head needs k >= 1 and K >= 2");
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  return {uniform_matrix(clusters, hidden, bound, rng), uniform_matrix(1, clusters, bound, rng)};
}

ModelParams init_model(std::size_t input_dim, std::size_t hidden, std::size_t layers,
                       std::size_t clusters, SeededRng& rng) {
  ModelParams m;
  m.encoder = init_encoder(input_dim, hidden, layers, rng);
  m.head = init_head(hidden, clusters, rng);
  return m;
}

LatentEmbedding encode(const EncoderParams& params, const BehaviorSequence& seq,
                       const DropoutSpec& dropout, SeededRng& rng) {
  check_dropout(dropout);
  check_sequence(params, seq);
  const bool drop = dropout.active && dropout.probability > 0.0;

  std::vector<Matrix> inputs;
  inputs.reserve(seq.valid_length());
  for (std::size_t t = seq.padding; t < seq.length(); ++t) inputs.push_back(Matrix::row_vector(seq.windows.row(t)));

  Matrix h;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const GruWeights w = params.layers[l].view();
    h = Matrix(1, params.layers[l].hidden_dim());
    std::vector<Matrix> outputs;
    outputs.reserve(inputs.size());
    for (const Matrix& x : inputs) {
      h = gru_step(x, h, w).h_next;
      outputs.push_back(h);
    }
    if (drop && l + 1 < params.layers.size()) {
      for (Matrix& out : outputs) {
        const Matrix mask = dropout_mask(out.rows(), out.cols(), dropout.probability, rng);
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= mask.data()[i];
      }
    }
    inputs = std::move(outputs);
  }
  return LatentEmbedding{h.values(), seq.user, seq.window_end(seq.length() - 1)};
}

DirichletAssessment head(const EvidentialHeadParams& params, std::span<const double> z) {
  if (z.size() != params.input_dim()) {
    fail(ErrorKind::shape, "embedding has length " + std::to_string(z.size()) +
                               ", head expects " + std::to_string(params.input_dim()));
  }
  std::vector<double> alpha(params.clusters());
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    double o = params.bias(0, j);
    const auto w = params.weights.row(j);
    for (std::size_t i = 0; i < z.size(); ++i) o += w[i] * z[i];
    alpha[j] = softplus(o) + 1.0;
  }
  return assess(alpha);
}

EncoderState initial_state(const EncoderParams& params) {
  EncoderState s;
  for (const auto& layer : params.layers) s.hidden.emplace_back(1, layer.hidden_dim());
  return s;
}

void advance(const EncoderParams& params, EncoderState& state, std::span<const double> window) {
  if (window.size() != params.input_dim()) {
    fail(ErrorKind::shape, "window has width " + std::to_string(window.size()) +
                               ", encoder expects " + std::to_string(params.input_dim()));
  }
  if (state.hidden.size() != params.layers.size()) {
    fail(ErrorKind::shape, "encoder state does not match the encoder depth");
  }
  Matrix x = Matrix::row_vector(window);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    state.hidden[l] = gru_step(x, state.hidden[l], params.layers[l].view()).h_next;
    x = state.hidden[l];
  }
  state.steps += 1;
}

std::vector<std::string> parameter_names(const ModelParams& model) {
  static constexpr std::array<const char*, 9> kGate = {"wz", "wr", "wn", "uz", "ur",
                                                        "un", "bz", "br", "bn"};
  std::vector<std::string> names;
  for (std::size_t l = 0; l < model.encoder.layers.size(); ++l)
    for (const char* g : kGate) names.push_back("encoder.l" + std::to_string(l) + "." + g);
  names.emplace_back("head.weights");
  names.emplace_back("head.bias");
  return names;
}

std::vector<Matrix> flatten(const ModelParams& model) {
  std::vector<Matrix> flat;
  for (const auto& l : model.encoder.layers) {
    for (const Matrix* m : {&l.wz, &l.wr, &l.wn, &l.uz, &l.ur, &l.un, &l.bz, &l.br, &l.bn})
      flat.push_back(*m);
  }
  flat.push_back(model.head.weights);
  flat.push_back(model.head.bias);
  return flat;
}

void unflatten(std::span<const Matrix> flat, ModelParams& model) {
  const std::size_t expected = model.encoder.layers.size() * 9 + 2;
  if (flat.size() != expected) {
    fail(ErrorKind::shape, "expected " + std::to_string(expected) + " parameter arrays, got " +
                               std::to_string(flat.size()));
  }
  std::size_t i = 0;
  auto assign = [&](Matrix& dst) {
    require_same_shape(dst, flat[i], "parameter update");
    dst = flat[i++];
  };
  for (auto& l : model.encoder.layers) {
    for (Matrix* m : {&l.wz, &l.wr, &l.wn, &l.uz, &l.ur, &l.un, &l.bz, &l.br, &l.bn}) assign(*m);
  }
  assign(model.head.weights);
  assign(model.head.bias);
}

ModelVars register_parameters(Tape& tape, const ModelParams& model) {
  ModelVars vars;
  for (const auto& l : model.encoder.layers) {
    vars.layers.push_back({tape.parameter(l.wz), tape.parameter(l.wr), tape.parameter(l.wn),
                           tape.parameter(l.uz), tape.parameter(l.ur), tape.parameter(l.un),
                           tape.parameter(l.bz), tape.parameter(l.br), tape.parameter(l.bn)});
  }
  vars.head_weights_t = tape.parameter(transpose(model.head.weights));
  vars.head_bias = tape.parameter(model.head.bias);
  return vars;
}

std::vector<Matrix> collect_gradients(const Tape& tape, const ModelVars& vars) {
  std::vector<Matrix> grads;
  for (const auto& layer : vars.layers)
    for (Var v : layer) grads.push_back(tape.grad(v));
  grads.push_back(transpose(tape.grad(vars.head_weights_t)));
  grads.push_back(tape.grad(vars.head_bias));
  return grads;
}

Var apply_dropout(Tape& tape, Var input, const DropoutSpec& dropout, SeededRng& rng) {
  check_dropout(dropout);
  if (!dropout.active || dropout.probability == 0.0) return input;
  const Matrix& v = tape.value(input);
  return tape.mul(input, tape.constant(dropout_mask(v.rows(), v.cols(), dropout.probability, rng)));
}

BatchStates encode_batch_states(Tape& tape, const ModelVars& vars,
                                std::span<const BehaviorSequence* const> batch, const DropoutSpec& dropout,
                                SeededRng& rng) {
  check_dropout(dropout);
  if (batch.empty()) fail(ErrorKind::contract, "encode_batch: empty batch");
  const std::size_t rows = batch.size();
  const std::size_t length = batch.front()->length();
  const std::size_t width = batch.front()->width();
  std::size_t start = length;
  for (const BehaviorSequence* seq : batch) {
    if (seq->length() != length || seq->width() != width) {
      fail(ErrorKind::shape, "encode_batch: sequences must share one T x d shape");
    }
    if (seq->padding >= seq->length()) {
      fail(ErrorKind::contract, "cannot encode an empty sequence for '" + seq->user + "'");
    }
    start = std::min(start, seq->padding);
  }
  const std::size_t in_dim = tape.value(vars.layers.front()[0]).rows();
  if (width != in_dim) {
    fail(ErrorKind::shape, "batch width " + std::to_string(width) + " does not match encoder input " +
                               std::to_string(in_dim));
  }

  std::vector<Var> inputs;
  for (std::size_t t = start; t < length; ++t) {
    Matrix x(rows, width);
    for (std::size_t b = 0; b < rows; ++b) {
      const auto src = batch[b]->windows.row(t);
      std::copy(src.begin(), src.end(), x.row(b).begin());
    }
    inputs.push_back(tape.constant(std::move(x)));
  }

  Var h{};
  for (std::size_t l = 0; l < vars.layers.size(); ++l) {
    const std::size_t hidden = tape.value(vars.layers[l][0]).cols();
    h = tape.constant(Matrix(rows, hidden));
    std::vector<Var> outputs;
    outputs.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const std::size_t t = start + i;
      Var next = tape.gru_cell(inputs[i], h, vars.layers[l]);
      bool masked = false;
      Matrix keep(rows, hidden), hold(rows, hidden);
      for (std::size_t b = 0; b < rows; ++b) {
        const bool pad = t < batch[b]->padding;
        masked = masked || pad;
        for (std::size_t c = 0; c < hidden; ++c) {
          keep(b, c) = pad ? 0.0 : 1.0;
          hold(b, c) = pad ? 1.0 : 0.0;
        }
      }
      if (masked) {
        next = tape.add(tape.mul(next, tape.constant(std::move(keep))),
                        tape.mul(h, tape.constant(std::move(hold))));
      }
      h = next;
      outputs.push_back(h);
    }
    if (l + 1 < vars.layers.size()) {
      for (Var& out : outputs) out = apply_dropout(tape, out, dropout, rng);
    }
    inputs = std::move(outputs);
  }
  return {start, std::move(inputs)};
}

Var encode_batch(Tape& tape, const ModelVars& vars, std::span<const BehaviorSequence* const> batch,
                 const DropoutSpec& dropout, SeededRng& rng) {
  return encode_batch_states(tape, vars, batch, dropout, rng).states.back();
}

Var head_batch(Tape& tape, const ModelVars& vars, Var embeddings) {
  Var logits = tape.add_row(tape.matmul(embeddings, vars.head_weights_t), vars.head_bias);
  return tape.add_scalar(tape.softplus(logits), 1.0);
}

}  // namespace evsn
