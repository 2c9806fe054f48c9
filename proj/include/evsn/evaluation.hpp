#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evsn/behavior.hpp"
#include "evsn/detector.hpp"
#include "evsn/matrix.hpp"
#include "evsn/rng.hpp"
#include "evsn/training.hpp"

namespace evsn {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

/// Metrics whose denominator is zero are absent.
struct ConfusionMetrics {
  ConfusionCounts counts;
  std::optional<double> accuracy, precision, recall, f1, fpr;
};

ConfusionMetrics confusion(const ConfusionCounts& counts);
/// Both maps must hold the same users.
ConfusionMetrics confusion(const std::map<UserId, bool>& predicted, const std::map<UserId, bool>& truth);

struct RocPoint {
  double threshold = 0.0;  // flag when score >= threshold; +inf for the origin
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;
};

/// Sweeps every distinct score as a threshold; area by the trapezoidal rule.
RocCurve roc_auc(std::span<const double> scores, const std::vector<bool>& truth);

/// Linear interpolation between order statistics (q in [0, 1]).
double quantile(std::vector<double> values, double q);

struct BaselineDetector {
  Matrix centroids;
  double threshold = 0.0;            // distance cut
  std::vector<double> max_distance;  // per user, over their windows
  std::vector<bool> flagged;
};

/// k-means over every row of every user's embedding matrix; a user is flagged
/// when any of their rows lies farther from its nearest centroid than the
/// `q` quantile of those distances.
BaselineDetector baseline_kmeans_detector(std::span<const Matrix> user_embeddings, std::size_t clusters,
                                          double q, SeededRng& rng);

/// Per-window embeddings of each user's unpadded windows from row `skip` on,
/// encoded incrementally from the first unpadded row.
std::vector<Matrix> window_embeddings(const Checkpoint& checkpoint, std::span<const BehaviorSequence> raw,
                                      std::size_t skip);

struct Projection {
  std::vector<double> mean;
  Matrix components;             // 2 x k, unit rows
  std::array<double, 2> variance{};  // population variance along each component
  Matrix coordinates;            // n x 2
};

/// Principal-component projection by power iteration with deflation.
Projection project_2d(const Matrix& embeddings);

/// Final-window embeddings of a corpus projected to 2-D, with the expected
/// cluster assignment of each user.
struct CorpusProjection {
  std::vector<UserId> users;
  std::vector<std::string> labels;
  Projection projection;
  Matrix assignments;
};

CorpusProjection project_corpus(const Checkpoint& checkpoint, std::span<const BehaviorSequence> raw);
/// `user,label,pc1,pc2,cluster,p0..p{K-1}`
void write_projection_csv(const std::filesystem::path& path, const CorpusProjection& projection);

/// Ground truth of one user. `onset_end` is the end of the first scenario
/// window; alerts from then on count as detections.
struct UserTruth {
  UserId user;
  std::string label{kBenignLabel};
  Timestamp onset_end = 0;

  bool insider() const noexcept { return label != kBenignLabel; }
};

std::vector<UserTruth> truth_from_sequences(std::span<const BehaviorSequence> sequences);

/// Per-user aggregate of the score log.
struct UserScore {
  UserId user;
  std::string label;
  bool insider = false;
  double max_u = 0.0;
  double max_d = 0.0;
  double max_s = 0.0;  // ranking score
  double mean_u = 0.0;
  std::size_t windows = 0;
  std::size_t alerts = 0;
  bool detected = false;  // any alert (insiders: at or after onset)
};

/// Users in `truth` order. Users missing from either side are a data error.
std::vector<UserScore> aggregate_users(std::span<const ScoreRow> rows, std::span<const UserTruth> truth);

struct EvaluationOptions {
  double baseline_quantile = 0.95;
  std::uint64_t seed = 7;
  std::string config_digest;
};

struct EvaluationReport {
  ConfusionMetrics detector;
  RocCurve roc;
  ConfusionMetrics baseline;
  BaselineDetector baseline_detector;
  std::vector<UserScore> users;
  CorpusProjection projection;
  std::vector<EpochMetrics> epochs;
  double mean_insider_score = 0.0;
  double mean_benign_score = 0.0;
  std::uint64_t seed = 0;
  std::string config_digest;
};

/// Scores the detector output against the corpus labels, runs the k-means
/// baseline on the same observed windows and projects final embeddings.
EvaluationReport evaluate(const Checkpoint& checkpoint, std::span<const BehaviorSequence> raw,
                          std::span<const ScoreRow> rows, std::size_t skip_windows,
                          const EvaluationOptions& options);

inline constexpr int kReportSchemaVersion = 1;

std::string metrics_json(const EvaluationReport& report);
/// Writes metrics.json, roc.csv, scores.csv, projection.csv and epochs.csv.
void export_report(const std::filesystem::path& dir, const EvaluationReport& report);

}  // namespace evsn
