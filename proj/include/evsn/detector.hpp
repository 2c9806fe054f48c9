#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evsn/behavior.hpp"
#include "evsn/evidential.hpp"
#include "evsn/features.hpp"
#include "evsn/sequence_model.hpp"

namespace evsn {

struct Checkpoint;

/// What drift is measured against.
enum class DriftReference {
  baseline,  // the EWMA baseline before this window's update
  previous,  // the previous raw embedding
};

enum class Trigger { none, uncertainty, drift, both };

std::string_view to_string(Trigger t);
std::string_view to_string(DriftReference r);
std::optional<DriftReference> parse_drift_reference(std::string_view text);

struct DetectorConfig {
  double tau_u = 0.4;  // 0 alerts on every observed window
  double tau_d = 1.5;
  double beta = 0.7;
  DriftReference reference = DriftReference::baseline;
  /// Windows per user encoded before observation starts. The first observed
  /// window seeds the baseline. 0 observes from the first window.
  std::size_t warmup_windows = 14;

  void validate() const;
};

struct UserState {
  UserId user;
  std::vector<double> baseline;  // EWMA of embeddings
  std::vector<double> previous;  // last raw embedding
  Timestamp last_update = 0;
  std::size_t window_count = 0;
  double drift = 0.0;
  double uncertainty = 0.0;
  double score = 0.0;
};

struct AnomalyScore {
  double uncertainty = 0.0;
  double drift = 0.0;
  double score = 0.0;
};

struct Alert {
  UserId user;
  Timestamp window_end = 0;
  double score = 0.0;
  double uncertainty = 0.0;
  double drift = 0.0;
  Trigger triggered_by = Trigger::uncertainty;
  std::vector<double> cluster_assignment;

  bool operator==(const Alert&) const = default;
};

struct Observation {
  UserState state;
  AnomalyScore score;
  std::optional<Alert> alert;
};

Trigger classify(double u, double d, const DetectorConfig& config);

/// One detection step for one user and window. The input state is not
/// modified; a non-finite embedding is a data error.
Observation observe(const std::optional<UserState>& state, const LatentEmbedding& z,
                    const DirichletAssessment& assessment, const DetectorConfig& config);

/// Descending score, then higher uncertainty, earlier window, user id.
std::vector<Alert> rank_alerts(std::vector<Alert> alerts);

/// One scored window.
struct ScoreRow {
  UserId user;
  Timestamp window_end = 0;
  double uncertainty = 0.0;
  double drift = 0.0;
  double score = 0.0;
  bool alert = false;
  bool warmup = false;  // inside the user's warm-up windows, never alerts
  Trigger trigger = Trigger::none;
  std::size_t cluster = 0;
};

struct DetectionOutput {
  std::vector<ScoreRow> rows;
  std::vector<Alert> alerts;

  double mean_uncertainty() const;
};

enum class OrderPolicy { reject, reorder };

struct StreamOptions {
  WindowOptions windows;      // length is ignored; the checkpoint fixes T
  OrderPolicy order = OrderPolicy::reject;
  std::int64_t reorder_seconds = 0;  // buffer span when reordering
};

/// Scores raw feature windows for many users. Each user keeps the last T
/// standardized windows; while fewer than T exist the sequence is encoded
/// incrementally, afterwards the last T windows are re-encoded.
class DetectionEngine {
 public:
  DetectionEngine(const ModelParams& model, const Standardizer& standardizer, std::size_t length,
                  DetectorConfig config);

  /// Appends one raw (unstandardized) feature window for `user`.
  ScoreRow push_window(const UserId& user, std::span<const double> raw_features, Timestamp window_end);

  const DetectionOutput& output() const noexcept { return output_; }
  DetectionOutput take_output();
  std::optional<UserState> state(const UserId& user) const;

 private:
  struct UserTrack {
    std::deque<std::vector<double>> history;  // standardized, at most T
    EncoderState encoder;
    std::size_t windows = 0;
    std::optional<UserState> state;
  };

  const ModelParams& model_;
  const Standardizer& standardizer_;
  std::size_t length_;
  DetectorConfig config_;
  std::map<UserId, UserTrack> users_;
  DetectionOutput output_;
};

/// Runs every unpadded window of every sequence through a fresh engine, user
/// by user in input order.
DetectionOutput detect_sequences(const Checkpoint& checkpoint, std::span<const BehaviorSequence> raw,
                                 const DetectorConfig& config);

/// Windows a record stream on the fly and scores each closed window. All users
/// end at the window holding the latest record.
DetectionOutput detect_stream(const Checkpoint& checkpoint, std::vector<ActivityRecord> records,
                              const DetectorConfig& config, const StreamOptions& options);

/// Header `user,window_end,u,d,s,alert,trigger,cluster`; trigger is none,
/// uncertainty, drift, both, or warmup for windows before detection starts.
void write_score_log(const std::filesystem::path& path, std::span<const ScoreRow> rows);
std::vector<ScoreRow> read_score_log(const std::filesystem::path& path);
std::string alert_to_json(const Alert& alert);
void write_alerts_jsonl(const std::filesystem::path& path, std::span<const Alert> alerts);

}  // namespace evsn
