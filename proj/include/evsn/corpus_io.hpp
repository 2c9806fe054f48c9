#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evsn/behavior.hpp"

namespace evsn {

/// On-disk corpus directory:
///   sequences.bin  array file with "windows" (N x T x d), "padding" (N) and
///                  "origin" (N); metadata JSON carries users, window_seconds
///                  and feature names plus anything passed in `extra`
///   labels.csv     user,label,onset,duration
///   events.csv     optional raw log
struct CorpusFiles {
  std::vector<BehaviorSequence> sequences;
  std::string metadata = "{}";  // full metadata JSON as stored
};

/// `extra_metadata` must be a JSON object; its keys are merged into the
/// stored metadata.
void write_corpus(const std::filesystem::path& dir, const std::vector<BehaviorSequence>& sequences,
                  const std::string& extra_metadata = "{}");
CorpusFiles read_corpus(const std::filesystem::path& dir);

void write_labels_csv(const std::filesystem::path& path, const std::vector<BehaviorSequence>& sequences);

struct LabelRow {
  UserId user;
  std::string label;
  std::size_t onset = 0;
  std::size_t duration = 0;
};
std::vector<LabelRow> read_labels_csv(const std::filesystem::path& path);

/// Raw log rows `user,timestamp,kind,key=value;key=value`. Attribute keys and
/// values percent-encode '%', ',', ';', '=', CR and LF.
std::string format_raw_log_row(const ActivityRecord& record);
ActivityRecord parse_raw_log_row(const std::string& line);
void write_raw_log(const std::filesystem::path& path, const std::vector<ActivityRecord>& records);
std::vector<ActivityRecord> read_raw_log(const std::filesystem::path& path);

}  // namespace evsn
