#include "evsn/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "evsn/error.hpp"

namespace evsn {

namespace {

double attribute_number(const ActivityRecord& r, const std::string& key) {
  const auto it = r.attributes.find(key);
  if (it == r.attributes.end()) return 0.0;
  try {
    const double v = std::stod(it->second);
    return std::isfinite(v) && v > 0.0 ? v : 0.0;
  } catch (const std::exception&) {
    return 0.0;
  }
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

bool is_off_hours(Timestamp ts, std::int64_t utc_offset_seconds) {
  const std::int64_t local = ts + utc_offset_seconds;
  const std::int64_t seconds_of_day = local - floor_div(local, kSecondsPerDay) * kSecondsPerDay;
  return seconds_of_day < 6 * 3600;
}

std::int64_t window_index(Timestamp ts, Timestamp origin, std::int64_t window_seconds) {
  return floor_div(ts - origin, window_seconds);
}

void WindowAccumulator::add(const ActivityRecord& r) {
  ++events_;
  if (auto host = r.attributes.find("host"); host != r.attributes.end()) hosts_.insert(host->second);
  bytes_ += attribute_number(r, "bytes");
  switch (r.kind) {
    case ActivityKind::logon:
      logons_ += 1;
      if (is_off_hours(r.timestamp, utc_offset_)) off_hours_ += 1;
      break;
    case ActivityKind::logoff:
      break;
    case ActivityKind::file_access: {
      files_ += 1;
      const auto op = r.attributes.find("op");
      if (op != r.attributes.end() && op->second == "read") file_reads_ += 1;
      break;
    }
    case ActivityKind::removable_device: {
      const auto act = r.attributes.find("activity");
      if (act == r.attributes.end() || act->second != "Disconnect") devices_ += 1;
      break;
    }
    case ActivityKind::process_exec:
      processes_ += 1;
      break;
    case ActivityKind::command:
      if (auto cmd = r.attributes.find("cmd"); cmd != r.attributes.end()) commands_.insert(cmd->second);
      break;
    case ActivityKind::email: {
      emails_ += 1;
      const auto ext = r.attributes.find("external");
      if (ext != r.attributes.end() && ext->second == "1") external_ += 1;
      break;
    }
    case ActivityKind::http:
      http_ += 1;
      break;
  }
}

std::vector<double> WindowAccumulator::features() const {
  std::vector<double> f(kFeatureCount, 0.0);
  f[kLogonCount] = logons_;
  f[kOffHoursLogons] = off_hours_;
  f[kDistinctHosts] = static_cast<double>(hosts_.size());
  f[kFileAccessCount] = files_;
  f[kFileReadRatio] = files_ > 0 ? file_reads_ / files_ : 0.0;
  f[kRemovableDeviceEvents] = devices_;
  f[kProcessExecCount] = processes_;
  f[kDistinctCommands] = static_cast<double>(commands_.size());
  f[kEmailCount] = emails_;
  f[kEmailExternalRatio] = emails_ > 0 ? external_ / emails_ : 0.0;
  f[kHttpCount] = http_;
  f[kBytesMovedLog] = std::log1p(bytes_);
  return f;
}

void WindowAccumulator::reset() { *this = WindowAccumulator(utc_offset_); }

std::vector<BehaviorSequence> extract_features(std::vector<ActivityRecord> records,
                                               const WindowOptions& options) {
  if (options.window_seconds <= 0) fail(ErrorKind::config, "window duration must be positive");
  if (options.length == 0) fail(ErrorKind::config, "sequence length T must be >= 1");
  std::vector<BehaviorSequence> out;
  if (records.empty()) return out;

  std::stable_sort(records.begin(), records.end(), [](const ActivityRecord& a, const ActivityRecord& b) {
    return a.user != b.user ? a.user < b.user : a.timestamp < b.timestamp;
  });
  Timestamp latest = records.front().timestamp;
  for (const auto& r : records) latest = std::max(latest, r.timestamp);

  const std::int64_t w = options.window_seconds;
  const std::int64_t grid = options.origin.value_or(0);
  const std::int64_t last_window = window_index(options.end ? *options.end - 1 : latest, grid, w);
  const auto length = static_cast<std::int64_t>(options.length);

  for (std::size_t begin = 0; begin < records.size();) {
    std::size_t end = begin;
    while (end < records.size() && records[end].user == records[begin].user) ++end;

    const std::int64_t first_window =
        options.origin ? 0 : window_index(records[begin].timestamp, grid, w);
    const std::int64_t span = last_window - first_window + 1;
    const std::int64_t start = std::max(first_window, last_window - length + 1);

    BehaviorSequence seq;
    seq.user = records[begin].user;
    seq.windows = Matrix(options.length, kFeatureCount);
    seq.padding = span >= length ? 0 : static_cast<std::size_t>(length - span);
    seq.window_seconds = w;
    seq.origin = grid + (last_window - length + 1) * w;

    std::vector<WindowAccumulator> acc(options.length, WindowAccumulator(options.utc_offset_seconds));
    for (std::size_t i = begin; i < end; ++i) {
      const std::int64_t idx = window_index(records[i].timestamp, grid, w);
      if (idx < start || idx > last_window) continue;  // outside the last T windows
      acc[static_cast<std::size_t>(idx - (last_window - length + 1))].add(records[i]);
    }
    for (std::size_t row = seq.padding; row < options.length; ++row) {
      const auto f = acc[row].features();
      std::copy(f.begin(), f.end(), seq.windows.row(row).begin());
    }
    out.push_back(std::move(seq));
    begin = end;
  }
  return out;
}

Standardizer Standardizer::fit(std::span<const BehaviorSequence> sequences) {
  if (sequences.empty()) fail(ErrorKind::data, "cannot fit standardization on an empty corpus");
  const std::size_t d = sequences.front().width();
  std::vector<double> sum(d, 0.0);
  double count = 0.0;
  for (const auto& s : sequences) {
    if (s.width() != d) fail(ErrorKind::shape, "sequences disagree on feature width");
    for (std::size_t t = s.padding; t < s.length(); ++t) {
      for (std::size_t j = 0; j < d; ++j) sum[j] += s.windows(t, j);
    }
    count += static_cast<double>(s.valid_length());
  }
  if (count == 0.0) fail(ErrorKind::data, "no unpadded windows to standardize");
  Standardizer z;
  z.mean.resize(d);
  for (std::size_t j = 0; j < d; ++j) z.mean[j] = sum[j] / count;
  std::vector<double> sq(d, 0.0);
  for (const auto& s : sequences) {
    for (std::size_t t = s.padding; t < s.length(); ++t) {
      for (std::size_t j = 0; j < d; ++j) {
        const double c = s.windows(t, j) - z.mean[j];
        sq[j] += c * c;
      }
    }
  }
  z.scale.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(sq[j] / count);
    z.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  return z;
}

void Standardizer::apply_inplace(std::span<double> window) const {
  if (window.size() != mean.size()) {
    fail(ErrorKind::shape, "window width " + std::to_string(window.size()) +
                               " does not match standardizer width " + std::to_string(mean.size()));
  }
  for (std::size_t j = 0; j < window.size(); ++j) window[j] = (window[j] - mean[j]) / scale[j];
}

BehaviorSequence Standardizer::apply(const BehaviorSequence& seq) const {
  BehaviorSequence out = seq;
  for (std::size_t t = out.padding; t < out.length(); ++t) apply_inplace(out.windows.row(t));
  return out;
}

}  // namespace evsn
