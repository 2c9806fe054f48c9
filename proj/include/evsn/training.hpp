#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evsn/adam.hpp"
#include "evsn/array_file.hpp"
#include "evsn/behavior.hpp"
#include "evsn/features.hpp"
#include "evsn/matrix.hpp"
#include "evsn/rng.hpp"
#include "evsn/sequence_model.hpp"

namespace evsn {

enum class HeadInit {
  random,     // fan-in uniform like every other layer
  centroids,  // nearest-centroid linear classifier built from the k-means solution
};

std::string_view to_string(HeadInit h);
std::optional<HeadInit> parse_head_init(std::string_view text);

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  double dropout = 0.3;
  std::size_t clusters = 5;  // K
  std::size_t hidden = 64;   // k
  std::size_t layers = 2;
  std::size_t length = 100;  // T
  double lambda_max = 1.0;
  std::size_t anneal_epochs = 10;
  std::size_t warmup_epochs = 60;
  std::size_t refresh_period = 5;  // R
  /// 0 supervises only the final state; s > 0 also supervises every s-th
  /// earlier step counted back from the end.
  std::size_t supervise_stride = 1;
  /// Warm-up reconstructs the mean of the last `warmup_horizon` windows at
  /// each supervised step; 0 means every window seen so far.
  std::size_t warmup_horizon = 5;
  HeadInit head_init = HeadInit::centroids;
  /// Logit scale of the centroid head initialization.
  double head_temperature = 4.0;
  std::uint64_t seed = 7;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

std::string to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are a config error.
TrainConfig train_config_from_json(const std::string& text);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double total_loss = 0.0;
  double ce_loss = 0.0;
  double kl_loss = 0.0;
  double lambda = 0.0;
  double pseudo_accuracy = 0.0;
};

struct ClusterInit {
  Matrix centroids;                     // K x k
  std::vector<std::size_t> assignment;  // one per point
  std::vector<double> distortion;       // after seeding, then after each Lloyd step
  std::size_t iterations = 0;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelParams model;
  TrainConfig config;
  std::size_t epoch = 0;
  AdamState adam;
  SeededRng::State rng_state{};
  Standardizer standardizer;
  std::string digest;  // SHA-256 of the payload, filled on save and load
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> epochs;
  std::vector<double> warmup_losses;
  ClusterInit clusters;
};

/// Row b is the inference-mode embedding of dataset[b].
Matrix embed_all(const EncoderParams& encoder, std::span<const BehaviorSequence> dataset);

/// Initializes an encoder from rng and trains it with a temporary linear
/// decoder. At each supervised step the decoder reconstructs the mean of the
/// trailing `warmup_horizon` windows. Per-epoch mean squared errors go to
/// *losses when given.
EncoderParams warmup(const TrainConfig& config, std::span<const BehaviorSequence> dataset, SeededRng& rng,
                     std::vector<double>* losses = nullptr);

/// k-means++ seeding then Lloyd iterations to a fixpoint (at most 100).
ClusterInit init_clusters(const Matrix& points, std::size_t clusters, SeededRng& rng);

std::vector<std::size_t> refresh_pseudo_labels(const ModelParams& model, std::span<const BehaviorSequence> dataset);

/// Linear head whose argmax is the nearest centroid:
/// o_j = temperature * (2 c_j . z - |c_j|^2).
EvidentialHeadParams centroid_head(const Matrix& centroids, double temperature);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Full offline pipeline on raw (unstandardized) sequences: standardize, warm
/// up, cluster, then mini-batch Adam on the evidential loss.
TrainResult train(const TrainConfig& config, std::span<const BehaviorSequence> raw,
                  const EpochCallback& on_epoch = {});

void write_epochs_csv(const std::filesystem::path& path, std::span<const EpochMetrics> epochs);
std::vector<EpochMetrics> read_epochs_csv(const std::filesystem::path& path);

ArrayFile checkpoint_to_file(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_file(const ArrayFile& file);
/// Writes the checkpoint and returns its digest.
std::string save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace evsn
