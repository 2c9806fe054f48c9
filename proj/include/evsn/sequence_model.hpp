#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "evsn/behavior.hpp"
#include "evsn/evidential.hpp"
#include "evsn/matrix.hpp"
#include "evsn/rng.hpp"
#include "evsn/tape.hpp"

namespace evsn {

struct GruLayerParams {
  Matrix wz, wr, wn;  // in x k
  Matrix uz, ur, un;  // k x k
  Matrix bz, br, bn;  // 1 x k

  GruWeights view() const { return {&wz, &wr, &wn, &uz, &ur, &un, &bz, &br, &bn}; }
  std::size_t input_dim() const noexcept { return wz.rows(); }
  std::size_t hidden_dim() const noexcept { return wz.cols(); }
};

/// Stacked GRU encoder. The embedding is the last layer's final hidden state.
struct EncoderParams {
  std::vector<GruLayerParams> layers;

  std::size_t input_dim() const;
  std::size_t hidden_dim() const;
};

/// Affine map from a k-dim embedding to K raw evidence outputs.
struct EvidentialHeadParams {
  Matrix weights;  // K x k
  Matrix bias;     // 1 x K

  std::size_t clusters() const noexcept { return weights.rows(); }
  std::size_t input_dim() const noexcept { return weights.cols(); }
};

struct ModelParams {
  EncoderParams encoder;
  EvidentialHeadParams head;
};

struct DropoutSpec {
  double probability = 0.3;
  bool active = false;

  static DropoutSpec inference() { return {0.0, false}; }
};

struct LatentEmbedding {
  std::vector<double> values;
  UserId user;
  Timestamp window_end = 0;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
EncoderParams init_encoder(std::size_t input_dim, std::size_t hidden, std::size_t layers,
                           SeededRng& rng);
EvidentialHeadParams init_head(std::size_t hidden, std::size_t clusters, SeededRng& rng);
ModelParams init_model(std::size_t input_dim, std::size_t hidden, std::size_t layers,
                       std::size_t clusters, SeededRng& rng);

/// Final hidden state of the top GRU layer over the unpadded rows of seq.
/// Dropout (inverted) is applied to inter-layer activations when active.
LatentEmbedding encode(const EncoderParams& params, const BehaviorSequence& seq,
                       const DropoutSpec& dropout, SeededRng& rng);

/// alpha_j = softplus(o_j) + 1 with o = W z + b.
DirichletAssessment head(const EvidentialHeadParams& params, std::span<const double> z);

/// Recurrent state for feeding one window at a time.
struct EncoderState {
  std::vector<Matrix> hidden;  // one 1 x k row per layer
  std::size_t steps = 0;

  std::span<const double> embedding() const { return hidden.back().row(0); }
};

EncoderState initial_state(const EncoderParams& params);
/// Advance by one window (dropout off). Repeated advance() calls give the same
/// result as encode() over the same rows.
void advance(const EncoderParams& params, EncoderState& state, std::span<const double> window);

// Flattened parameter views, in a fixed order: per layer wz wr wn uz ur un bz br bn,
// then head weights and head bias.
std::vector<std::string> parameter_names(const ModelParams& model);
std::vector<Matrix> flatten(const ModelParams& model);
void unflatten(std::span<const Matrix> flat, ModelParams& model);

/// Parameters registered on a tape.
struct ModelVars {
  std::vector<std::array<Var, 9>> layers;
  Var head_weights_t;  // k x K (transposed head weights)
  Var head_bias;
};

ModelVars register_parameters(Tape& tape, const ModelParams& model);
/// Gradients of every registered parameter, in flatten() order.
std::vector<Matrix> collect_gradients(const Tape& tape, const ModelVars& vars);

/// Top-layer hidden states of a batched encode, one B x k node per time step
/// from `first` to T - 1. Rows still inside their padding hold the zero state.
struct BatchStates {
  std::size_t first = 0;
  std::vector<Var> states;
};
BatchStates encode_batch_states(Tape& tape, const ModelVars& vars,
                                std::span<const BehaviorSequence* const> batch, const DropoutSpec& dropout,
                                SeededRng& rng);

/// Batched encode on a tape: row b of the result is the embedding of batch[b].
Var encode_batch(Tape& tape, const ModelVars& vars, std::span<const BehaviorSequence* const> batch,
                 const DropoutSpec& dropout, SeededRng& rng);
/// Inverted dropout on an arbitrary tape value.
Var apply_dropout(Tape& tape, Var input, const DropoutSpec& dropout, SeededRng& rng);
/// Batched evidential head: B x K concentration parameters.
Var head_batch(Tape& tape, const ModelVars& vars, Var embeddings);

}  // namespace evsn
