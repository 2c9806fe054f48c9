#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evsn/matrix.hpp"

namespace evsn {

using UserId = std::string;
using Timestamp = std::int64_t;  // seconds since the Unix epoch

enum class ActivityKind {
  logon,
  logoff,
  file_access,
  removable_device,
  process_exec,
  command,
  email,
  http,
};

std::string_view to_string(ActivityKind kind);
std::optional<ActivityKind> parse_activity_kind(std::string_view text);

/// One raw log event.
struct ActivityRecord {
  UserId user;
  Timestamp timestamp = 0;
  ActivityKind kind = ActivityKind::logon;
  std::map<std::string, std::string> attributes;

  bool operator==(const ActivityRecord&) const = default;
};

/// Per-window feature layout.
enum Feature : std::size_t {
  kLogonCount,
  kOffHoursLogons,
  kDistinctHosts,
  kFileAccessCount,
  kFileReadRatio,
  kRemovableDeviceEvents,
  kProcessExecCount,
  kDistinctCommands,
  kEmailCount,
  kEmailExternalRatio,
  kHttpCount,
  kBytesMovedLog,
  kFeatureCount,
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "logon_count",    "off_hours_logons",   "distinct_hosts",     "file_access_count",
    "file_read_ratio", "removable_device",  "process_exec_count", "distinct_commands",
    "email_count",    "email_external_ratio", "http_count",       "bytes_moved_log"};

inline constexpr std::string_view kBenignLabel = "benign";

/// A user's windowed feature matrix. Rows [0, padding) are flagged front
/// padding and never fed to the encoder.
struct BehaviorSequence {
  UserId user;
  Matrix windows;  // T x d
  std::size_t padding = 0;
  Timestamp origin = 0;         // start of row 0
  std::int64_t window_seconds = 3600;
  std::string label{kBenignLabel};
  std::size_t onset = 0;        // first scenario window (row index); 0 for benign
  std::size_t duration = 0;

  std::size_t length() const noexcept { return windows.rows(); }
  std::size_t width() const noexcept { return windows.cols(); }
  std::size_t valid_length() const noexcept { return windows.rows() - padding; }
  bool is_insider() const noexcept { return label != kBenignLabel; }
  Timestamp window_end(std::size_t row) const noexcept {
    return origin + static_cast<Timestamp>(row + 1) * window_seconds;
  }
};

}  // namespace evsn
