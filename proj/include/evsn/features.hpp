#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "evsn/behavior.hpp"

namespace evsn {

inline constexpr std::int64_t kSecondsPerDay = 86400;

struct WindowOptions {
  std::int64_t window_seconds = kSecondsPerDay;
  std::size_t length = 100;  // T
  /// Offset added to timestamps before taking the local hour of day.
  std::int64_t utc_offset_seconds = 0;
  /// Start of window 0 for every user. When absent each user's history starts
  /// at the window holding their first event, on a grid aligned to the epoch.
  std::optional<Timestamp> origin;
  /// Exclusive end of the observation period. When absent the last window is
  /// the one holding the latest event.
  std::optional<Timestamp> end;
};

/// Reduces the events of one (user, window) to the raw feature vector.
/// Off-hours means a local time in [00:00, 06:00).
class WindowAccumulator {
 public:
  explicit WindowAccumulator(std::int64_t utc_offset_seconds = 0) : utc_offset_(utc_offset_seconds) {}

  void add(const ActivityRecord& record);
  std::vector<double> features() const;
  std::size_t events() const noexcept { return events_; }
  void reset();

 private:
  std::int64_t utc_offset_;
  std::size_t events_ = 0;
  double logons_ = 0, off_hours_ = 0, files_ = 0, file_reads_ = 0, devices_ = 0;
  double processes_ = 0, emails_ = 0, external_ = 0, http_ = 0, bytes_ = 0;
  std::set<std::string> hosts_, commands_;
};

bool is_off_hours(Timestamp ts, std::int64_t utc_offset_seconds = 0);

/// Floor division of (ts - origin) by the window length.
std::int64_t window_index(Timestamp ts, Timestamp origin, std::int64_t window_seconds);

/// One BehaviorSequence per user (ordered by user id) with raw, unstandardized
/// features. All users end at the window holding the latest event; users with
/// shorter histories are front-padded with flagged zero rows.
std::vector<BehaviorSequence> extract_features(std::vector<ActivityRecord> records,
                                               const WindowOptions& options);

/// Per-feature affine standardization fitted on unpadded training windows.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // population standard deviation, 1 where it is 0

  static Standardizer fit(std::span<const BehaviorSequence> sequences);
  void apply_inplace(std::span<double> window) const;
  /// Standardizes unpadded rows; padded rows stay exactly zero.
  BehaviorSequence apply(const BehaviorSequence& seq) const;
  std::size_t width() const noexcept { return mean.size(); }
};

}  // namespace evsn
