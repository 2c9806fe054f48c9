#include "evsn/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <queue>

#include <json.hpp>

#include "evsn/error.hpp"
#include "evsn/training.hpp"

namespace evsn {

std::string_view to_string(Trigger t) {
  switch (t) {
    case Trigger::uncertainty: return "uncertainty";
    case Trigger::drift: return "drift";
    case Trigger::both: return "both";
    case Trigger::none: break;
  }
  return "none";
}

std::string_view to_string(DriftReference r) { return r == DriftReference::previous ? "previous" : "baseline"; }

std::optional<DriftReference> parse_drift_reference(std::string_view text) {
  if (text == "baseline") return DriftReference::baseline;
  if (text == "previous") return DriftReference::previous;
  return std::nullopt;
}

void DetectorConfig::validate() const {
  if (!(tau_u >= 0.0 && tau_u <= 1.0)) fail(ErrorKind::config, "tau_u must lie in [0, 1]");
  if (!(tau_d > 0.0) || !std::isfinite(tau_d)) fail(ErrorKind::config, "tau_d must be > 0");
  if (!(beta > 0.0 && beta <= 1.0)) fail(ErrorKind::config, "beta must lie in (0, 1]");
}

Trigger classify(double u, double d, const DetectorConfig& config) {
  const bool by_u = u > config.tau_u;
  const bool by_d = d > config.tau_d;
  if (by_u && by_d) return Trigger::both;
  if (by_u) return Trigger::uncertainty;
  if (by_d) return Trigger::drift;
  return Trigger::none;
}

Observation observe(const std::optional<UserState>& state, const LatentEmbedding& z,
                    const DirichletAssessment& assessment, const DetectorConfig& config) {
  for (double v : z.values) {
    if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite embedding for user " + z.user);
  }
  if (state && state->baseline.size() != z.values.size()) {
    fail(ErrorKind::shape, "embedding width differs from the baseline of user " + z.user);
  }
  const double u = assessment.uncertainty;

  Observation out;
  UserState& next = out.state;
  double d = 0.0;
  if (!state) {
    next.user = z.user;
    next.baseline = z.values;
  } else {
    next = *state;
    const auto& ref = config.reference == DriftReference::previous ? state->previous : state->baseline;
    double sq = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) sq += (z.values[i] - ref[i]) * (z.values[i] - ref[i]);
    d = std::sqrt(sq);
    for (std::size_t i = 0; i < next.baseline.size(); ++i) {
      next.baseline[i] = config.beta * z.values[i] + (1.0 - config.beta) * state->baseline[i];
    }
  }
  next.previous = z.values;
  next.last_update = z.window_end;
  next.window_count += 1;
  next.drift = d;
  next.uncertainty = u;
  next.score = u * d;
  out.score = {u, d, next.score};

  const Trigger trigger = classify(u, d, config);
  if (trigger != Trigger::none) {
    out.alert = Alert{z.user, z.window_end, next.score, u, d, trigger, assessment.expected};
  }
  return out;
}

std::vector<Alert> rank_alerts(std::vector<Alert> alerts) {
  std::stable_sort(alerts.begin(), alerts.end(), [](const Alert& a, const Alert& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.uncertainty != b.uncertainty) return a.uncertainty > b.uncertainty;
    if (a.window_end != b.window_end) return a.window_end < b.window_end;
    return a.user < b.user;
  });
  return alerts;
}

double DetectionOutput::mean_uncertainty() const {
  if (rows.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : rows) sum += r.uncertainty;
  return sum / static_cast<double>(rows.size());
}

DetectionEngine::DetectionEngine(const ModelParams& model, const Standardizer& standardizer,
                                 std::size_t length, DetectorConfig config)
    : model_(model), standardizer_(standardizer), length_(length), config_(config) {
  config_.validate();
  if (length_ == 0) fail(ErrorKind::config, "sequence length T must be >= 1");
  if (standardizer_.width() != model_.encoder.input_dim()) {
    fail(ErrorKind::config, "standardizer width " + std::to_string(standardizer_.width()) +
                                " does not match the encoder input width " +
                                std::to_string(model_.encoder.input_dim()));
  }
}

ScoreRow DetectionEngine::push_window(const UserId& user, std::span<const double> raw_features,
                                      Timestamp window_end) {
  if (raw_features.size() != standardizer_.width()) {
    fail(ErrorKind::shape, "window for user " + user + " has " + std::to_string(raw_features.size()) +
                               " features, expected " + std::to_string(standardizer_.width()));
  }
  auto [it, inserted] = users_.try_emplace(user);
  UserTrack& track = it->second;
  if (inserted) track.encoder = initial_state(model_.encoder);

  std::vector<double> window(raw_features.begin(), raw_features.end());
  standardizer_.apply_inplace(window);

  if (track.history.size() < length_) {
    advance(model_.encoder, track.encoder, window);
    track.history.push_back(std::move(window));
  } else {
    track.history.pop_front();
    track.history.push_back(std::move(window));
    track.encoder = initial_state(model_.encoder);
    for (const auto& row : track.history) advance(model_.encoder, track.encoder, row);
  }

  LatentEmbedding z;
  z.user = user;
  z.window_end = window_end;
  const auto emb = track.encoder.embedding();
  z.values.assign(emb.begin(), emb.end());
  const DirichletAssessment a = head(model_.head, z.values);

  ScoreRow row;
  row.user = user;
  row.window_end = window_end;
  row.uncertainty = a.uncertainty;
  row.cluster = a.top_cluster();

  if (track.windows < config_.warmup_windows) {
    row.warmup = true;
  } else {
    Observation obs = observe(track.state, z, a, config_);
    track.state = std::move(obs.state);
    row.drift = obs.score.drift;
    row.score = obs.score.score;
    if (obs.alert) {
      row.alert = true;
      row.trigger = obs.alert->triggered_by;
      output_.alerts.push_back(std::move(*obs.alert));
    }
  }
  track.windows += 1;
  output_.rows.push_back(row);
  return row;
}

DetectionOutput DetectionEngine::take_output() {
  DetectionOutput out = std::move(output_);
  output_ = {};
  return out;
}

std::optional<UserState> DetectionEngine::state(const UserId& user) const {
  auto it = users_.find(user);
  if (it == users_.end()) return std::nullopt;
  return it->second.state;
}

namespace {

void check_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.model.encoder.layers.empty()) fail(ErrorKind::config, "checkpoint has no encoder layers");
  if (checkpoint.model.encoder.input_dim() != kFeatureCount) {
    fail(ErrorKind::config, "checkpoint expects " + std::to_string(checkpoint.model.encoder.input_dim()) +
                                " features, the feature extractor produces " + std::to_string(kFeatureCount));
  }
}

}  // namespace

DetectionOutput detect_sequences(const Checkpoint& checkpoint, std::span<const BehaviorSequence> raw,
                                 const DetectorConfig& config) {
  const std::size_t d = checkpoint.model.encoder.input_dim();
  const std::size_t T = checkpoint.config.length;
  for (const auto& s : raw) {
    if (s.width() != d || s.length() != T) {
      fail(ErrorKind::config, "corpus sequence of user " + s.user + " is " + std::to_string(s.length()) + "x" +
                                  std::to_string(s.width()) + ", checkpoint expects " + std::to_string(T) +
                                  "x" + std::to_string(d));
    }
  }
  DetectionEngine engine(checkpoint.model, checkpoint.standardizer, T, config);
  for (const auto& s : raw) {
    for (std::size_t t = s.padding; t < s.length(); ++t) engine.push_window(s.user, s.windows.row(t), s.window_end(t));
  }
  return engine.take_output();
}

namespace {

struct OpenWindow {
  std::int64_t index = 0;
  WindowAccumulator acc;
  Timestamp last_timestamp = 0;
};

class StreamWindower {
 public:
  StreamWindower(DetectionEngine& engine, const StreamOptions& options)
      : engine_(engine), options_(options), grid_(options.windows.origin.value_or(0)) {}

  void add(const ActivityRecord& r) {
    if (options_.windows.origin && r.timestamp < *options_.windows.origin) return;
    if (options_.windows.end && r.timestamp >= *options_.windows.end) return;
    latest_ = seen_ ? std::max(latest_, r.timestamp) : r.timestamp;
    seen_ = true;
    const std::int64_t idx = window_index(r.timestamp, grid_, w());
    auto it = open_.find(r.user);
    if (it == open_.end()) {
      const std::int64_t first = options_.windows.origin ? 0 : idx;
      it = open_.emplace(r.user, OpenWindow{first, WindowAccumulator(options_.windows.utc_offset_seconds),
                                            r.timestamp})
               .first;
    }
    OpenWindow& ow = it->second;
    if (r.timestamp < ow.last_timestamp) {
      fail(ErrorKind::data, "out-of-order record for user " + r.user + ": " + std::to_string(r.timestamp) +
                                " after " + std::to_string(ow.last_timestamp));
    }
    close_until(r.user, ow, idx);
    ow.acc.add(r);
    ow.last_timestamp = r.timestamp;
  }

  void finish() {
    if (!seen_) return;
    const std::int64_t last = window_index(options_.windows.end ? *options_.windows.end - 1 : latest_, grid_, w());
    for (auto& [user, ow] : open_) {
      close_until(user, ow, last + 1);
    }
  }

 private:
  std::int64_t w() const { return options_.windows.window_seconds; }

  void close_until(const UserId& user, OpenWindow& ow, std::int64_t idx) {
    while (ow.index < idx) {
      engine_.push_window(user, ow.acc.features(), grid_ + (ow.index + 1) * w());
      ow.acc = WindowAccumulator(options_.windows.utc_offset_seconds);
      ++ow.index;
    }
  }

  DetectionEngine& engine_;
  const StreamOptions& options_;
  Timestamp grid_;
  Timestamp latest_ = 0;
  bool seen_ = false;
  std::map<UserId, OpenWindow> open_;
};

struct Pending {
  ActivityRecord record;
  std::size_t arrival = 0;
};

struct LaterFirst {
  bool operator()(const Pending& a, const Pending& b) const {
    if (a.record.timestamp != b.record.timestamp) return a.record.timestamp > b.record.timestamp;
    return a.arrival > b.arrival;
  }
};

}  // namespace

DetectionOutput detect_stream(const Checkpoint& checkpoint, std::vector<ActivityRecord> records,
                              const DetectorConfig& config, const StreamOptions& options) {
  check_checkpoint(checkpoint);
  if (options.windows.window_seconds <= 0) fail(ErrorKind::config, "window duration must be positive");
  if (options.reorder_seconds < 0) fail(ErrorKind::config, "reorder buffer span must be >= 0");
  DetectionEngine engine(checkpoint.model, checkpoint.standardizer, checkpoint.config.length, config);
  StreamWindower windower(engine, options);

  if (options.order == OrderPolicy::reject) {
    for (const auto& r : records) windower.add(r);
  } else {
    std::priority_queue<Pending, std::vector<Pending>, LaterFirst> buffer;
    Timestamp newest = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      newest = i == 0 ? records[i].timestamp : std::max(newest, records[i].timestamp);
      buffer.push({std::move(records[i]), i});
      while (!buffer.empty() && buffer.top().record.timestamp <= newest - options.reorder_seconds) {
        windower.add(buffer.top().record);
        buffer.pop();
      }
    }
    while (!buffer.empty()) {
      windower.add(buffer.top().record);
      buffer.pop();
    }
  }
  windower.finish();
  return engine.take_output();
}

void write_score_log(const std::filesystem::path& path, std::span<const ScoreRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "user,window_end,u,d,s,alert,trigger,cluster\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%lld,%.17g,%.17g,%.17g,%d,", static_cast<long long>(r.window_end),
                  r.uncertainty, r.drift, r.score, r.alert ? 1 : 0);
    out << r.user << buf << (r.warmup ? std::string_view("warmup") : to_string(r.trigger)) << ',' << r.cluster
        << '\n';
  }
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

std::vector<ScoreRow> read_score_log(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::io, "score log not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  std::string line;
  if (!std::getline(in, line) || line != "user,window_end,u,d,s,alert,trigger,cluster") {
    fail(ErrorKind::data, path.string() + ": not a score log (unexpected header)");
  }
  std::vector<ScoreRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      cells.push_back(line.substr(start, pos - start));
    }
    cells.push_back(line.substr(start));
    auto bad = [&] { fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": malformed score row"); };
    if (cells.size() != 8) bad();
    ScoreRow r;
    r.user = cells[0];
    try {
      std::size_t used = 0;
      r.window_end = std::stoll(cells[1], &used);
      r.uncertainty = std::stod(cells[2]);
      r.drift = std::stod(cells[3]);
      r.score = std::stod(cells[4]);
      r.cluster = std::stoul(cells[7]);
    } catch (const std::exception&) {
      bad();
    }
    if (cells[5] != "0" && cells[5] != "1") bad();
    r.alert = cells[5] == "1";
    const std::string& t = cells[6];
    if (t == "warmup") r.warmup = true;
    else if (t == "uncertainty") r.trigger = Trigger::uncertainty;
    else if (t == "drift") r.trigger = Trigger::drift;
    else if (t == "both") r.trigger = Trigger::both;
    else if (t != "none") bad();
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string alert_to_json(const Alert& a) {
  nlohmann::ordered_json j;
  j["user"] = a.user;
  j["window_end"] = a.window_end;
  j["score"] = a.score;
  j["uncertainty"] = a.uncertainty;
  j["drift"] = a.drift;
  j["triggered_by"] = std::string(to_string(a.triggered_by));
  j["cluster_assignment"] = a.cluster_assignment;
  return j.dump();
}

void write_alerts_jsonl(const std::filesystem::path& path, std::span<const Alert> alerts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  for (const auto& a : alerts) out << alert_to_json(a) << '\n';
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

}  // namespace evsn
