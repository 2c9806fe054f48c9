#include "evsn/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "evsn/error.hpp"
#include "evsn/rng.hpp"

namespace evsn {

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::data_theft: return "data-theft";
    case Scenario::privilege_abuse: return "privilege-abuse";
    case Scenario::sabotage: return "sabotage";
  }
  return "unknown";
}

std::optional<Scenario> parse_scenario(std::string_view text) {
  for (Scenario s : {Scenario::data_theft, Scenario::privilege_abuse, Scenario::sabotage}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

void GeneratorConfig::validate() const {
  if (population < 1) fail(ErrorKind::contract, "population must be >= 1");
  if (!(insider_fraction >= 0.0 && insider_fraction <= 1.0)) {
    fail(ErrorKind::contract, "insider fraction must lie in [0, 1], got " + std::to_string(insider_fraction));
  }
  if (length < 1) fail(ErrorKind::config, "sequence length must be >= 1");
  if (window_seconds < 3600 || window_seconds % 3600 != 0) {
    fail(ErrorKind::config, "window duration must be a positive whole number of hours");
  }
  if (!(intensity >= 1.0)) fail(ErrorKind::config, "scenario intensity must be >= 1");
  if (min_duration < 1 || max_duration < min_duration || max_duration > length) {
    fail(ErrorKind::config, "scenario durations must satisfy 1 <= min <= max <= T");
  }
  if (!(onset_from >= 0.0 && onset_from < 1.0)) fail(ErrorKind::config, "onset_from must lie in [0, 1)");
  double total = 0.0;
  for (double w : scenario_weights) {
    if (!(w >= 0.0)) fail(ErrorKind::config, "scenario weights must be non-negative");
    total += w;
  }
  if (total <= 0.0) fail(ErrorKind::config, "at least one scenario weight must be positive");
}

std::size_t insider_count(std::size_t population, double fraction) {
  // The epsilon absorbs representation error such as 0.05 * 100 = 5.000...01.
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(population) + 1e-9));
}

namespace {

constexpr std::size_t kRoles = 5;

// Daily expected counts per role: logons, files, devices, processes, commands,
// emails, http; then write fraction, external fraction, roaming, vocabulary.
struct RoleRow {
  double logons, files, devices, processes, commands, emails, http;
  double write_fraction, external_fraction, roaming;
  std::size_t vocabulary;
};

constexpr RoleRow kRoleTable[kRoles] = {
    {2.0, 12.0, 0.03, 10.0, 6.0, 5.0, 15.0, 0.35, 0.10, 0.05, 10},  // engineering
    {3.0, 6.0, 0.15, 15.0, 10.0, 6.0, 10.0, 0.25, 0.05, 0.30, 16},  // IT administration
    {1.5, 4.0, 0.02, 3.0, 0.0, 14.0, 20.0, 0.20, 0.50, 0.02, 0},    // sales
    {1.5, 15.0, 0.02, 4.0, 0.0, 7.0, 8.0, 0.30, 0.20, 0.02, 0},     // finance
    {2.5, 3.0, 0.06, 5.0, 2.0, 11.0, 25.0, 0.15, 0.30, 0.10, 4},    // support
};

// Share of a day's activity falling in each local hour; sums to 1.
constexpr std::array<double, 24> kDiurnal = {
    0.002, 0.002, 0.002, 0.002, 0.002, 0.002,                                 // 00-06
    0.03,  0.03,                                                              // 06-08
    0.085, 0.085, 0.085, 0.085, 0.085, 0.085, 0.085, 0.085, 0.085, 0.085,     // 08-18
    0.013, 0.013, 0.013, 0.013, 0.013, 0.013};                                // 18-24

constexpr std::size_t kSharedHosts = 40;
constexpr std::size_t kPrivilegedCommands = 8;
constexpr std::size_t kProcessNames = 12;

enum Channel : std::size_t {
  ch_logon,
  ch_night_logon,
  ch_file,
  ch_device,
  ch_process,
  ch_command,
  ch_privileged,
  ch_email,
  ch_http,
  kChannels,
};

enum Purpose : std::uint64_t { purpose_profile = 1, purpose_counts = 2, purpose_attributes = 3 };

std::uint64_t stream_id(std::size_t user, std::uint64_t slot, Purpose purpose) {
  return (static_cast<std::uint64_t>(user) << 34) | (slot << 2) | purpose;
}

std::string format_id(const char* prefix, std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, n);
  return buf;
}

ActivityProfile sample_profile(std::uint64_t seed, std::size_t user) {
  SeededRng rng(seed, stream_id(user, 0, purpose_profile));
  const std::size_t role = rng.index(kRoles);
  const RoleRow& row = kRoleTable[role];
  auto jitter = [&rng] { return std::exp(0.25 * rng.normal()); };
  ActivityProfile p;
  p.role = role;
  p.logons = row.logons * jitter();
  p.files = row.files * jitter();
  p.devices = row.devices * jitter();
  p.processes = row.processes * jitter();
  p.commands = row.commands * jitter();
  p.emails = row.emails * jitter();
  p.http = row.http * jitter();
  p.write_fraction = std::clamp(row.write_fraction * jitter(), 0.02, 0.95);
  p.external_fraction = std::clamp(row.external_fraction * jitter(), 0.0, 0.95);
  p.roaming = std::clamp(row.roaming * jitter(), 0.0, 0.9);
  p.command_vocabulary = row.vocabulary;
  return p;
}

double lognormal(SeededRng& rng, double median, double sigma) {
  return median * std::exp(sigma * rng.normal());
}

std::array<double, kChannels> daily_rates(const ActivityProfile& p) {
  std::array<double, kChannels> r{};
  r[ch_logon] = p.logons;
  r[ch_night_logon] = p.night_logons;
  r[ch_file] = p.files;
  r[ch_device] = p.devices;
  r[ch_process] = p.processes;
  r[ch_command] = p.command_vocabulary > 0 ? p.commands : 0.0;
  r[ch_privileged] = p.privileged_commands;
  r[ch_email] = p.emails;
  r[ch_http] = p.http;
  return r;
}

void emit_user_events(const GeneratorConfig& config, std::size_t user_index, const GeneratedUser& user,
                      std::vector<ActivityRecord>& out) {
  const std::int64_t hours_per_window = config.window_seconds / 3600;
  const std::int64_t total_hours = static_cast<std::int64_t>(config.length) * hours_per_window;
  const std::string primary_host = format_id("PC-", user_index, 4);

  const ActivityProfile attacked =
      user.scenario ? attack_profile(user.profile, *user.scenario) : user.profile;
  const auto benign_rates = daily_rates(user.profile);
  const auto attack_rates = daily_rates(attacked);

  for (std::int64_t day = 0; day * 24 < total_hours; ++day) {
    SeededRng counts(config.seed, stream_id(user_index, static_cast<std::uint64_t>(day), purpose_counts));
    SeededRng attrs(config.seed, stream_id(user_index, static_cast<std::uint64_t>(day), purpose_attributes));
    for (std::int64_t hour_of_day = 0; hour_of_day < 24; ++hour_of_day) {
      const std::int64_t hour = day * 24 + hour_of_day;
      if (hour >= total_hours) break;
      const auto window = static_cast<std::size_t>(hour / hours_per_window);
      const bool active = user.scenario && window >= user.scenario->onset &&
                          window < user.scenario->onset + user.scenario->duration;
      const ActivityProfile& p = active ? attacked : user.profile;
      const auto& rates = active ? attack_rates : benign_rates;
      const Timestamp hour_start = config.origin + hour * 3600;

      for (std::size_t c = 0; c < kChannels; ++c) {
        const double share = c == ch_night_logon ? (hour_of_day < 6 ? 1.0 / 6.0 : 0.0)
                                                 : kDiurnal[static_cast<std::size_t>(hour_of_day)];
        // One uniform per (hour, channel) regardless of the rate keeps the
        // draws of every later hour aligned across intensities.
        const std::uint64_t n = counts.poisson(rates[c] * share);
        for (std::uint64_t e = 0; e < n; ++e) {
          ActivityRecord r;
          r.user = user.user;
          r.timestamp = hour_start + static_cast<Timestamp>(attrs.index(3600));
          r.attributes["host"] = primary_host;
          switch (c) {
            case ch_logon:
            case ch_night_logon:
              r.kind = ActivityKind::logon;
              if (attrs.bernoulli(p.roaming)) r.attributes["host"] = format_id("SRV-", attrs.index(kSharedHosts), 2);
              break;
            case ch_file:
              r.kind = ActivityKind::file_access;
              r.attributes["op"] = attrs.bernoulli(p.write_fraction) ? "write" : "read";
              r.attributes["bytes"] = std::to_string(static_cast<long long>(lognormal(attrs, 2e5, 1.0)));
              break;
            case ch_device:
              r.kind = ActivityKind::removable_device;
              r.attributes["bytes"] =
                  std::to_string(static_cast<long long>(lognormal(attrs, 5e6, 1.0) * p.device_bytes_scale));
              break;
            case ch_process:
              r.kind = ActivityKind::process_exec;
              r.attributes["process"] = format_id("proc", attrs.index(kProcessNames), 2);
              break;
            case ch_command:
              r.kind = ActivityKind::command;
              r.attributes["cmd"] = "cmd" + std::to_string(p.role) + "_" +
                                    std::to_string(attrs.index(p.command_vocabulary));
              break;
            case ch_privileged:
              r.kind = ActivityKind::command;
              r.attributes["cmd"] = format_id("priv", attrs.index(kPrivilegedCommands), 1);
              break;
            case ch_email:
              r.kind = ActivityKind::email;
              r.attributes["external"] = attrs.bernoulli(p.external_fraction) ? "1" : "0";
              r.attributes["bytes"] = std::to_string(static_cast<long long>(lognormal(attrs, 5e4, 1.0)));
              break;
            case ch_http:
              r.kind = ActivityKind::http;
              r.attributes["bytes"] = std::to_string(static_cast<long long>(lognormal(attrs, 2e4, 1.0)));
              break;
            default:
              break;
          }
          out.push_back(std::move(r));
        }
      }
    }
  }
}

}  // namespace

ActivityProfile attack_profile(const ActivityProfile& benign, const ScenarioSpec& spec) {
  if (!(spec.intensity >= 1.0)) fail(ErrorKind::config, "scenario intensity must be >= 1");
  const double e = spec.intensity - 1.0;
  ActivityProfile p = benign;
  switch (spec.scenario) {
    case Scenario::data_theft:
      p.devices += 1.0 * e;
      p.device_bytes_scale = 1.0 + 2.0 * e;
      p.files *= 1.0 + 0.25 * e;
      p.night_logons = 0.4 * e;
      break;
    case Scenario::privilege_abuse:
      p.roaming = std::min(0.9, p.roaming + 0.12 * e);
      p.logons *= 1.0 + 0.3 * e;
      p.privileged_commands = 2.0 * e;
      p.processes *= 1.0 + 0.3 * e;
      p.night_logons = 0.3 * e;
      break;
    case Scenario::sabotage:
      p.files *= 1.0 + 0.3 * e;
      p.write_fraction = std::min(0.95, p.write_fraction + 0.12 * e);
      p.processes *= 1.0 + 0.3 * e;
      p.privileged_commands = 1.5 * e;
      p.night_logons = 0.3 * e;
      break;
  }
  return p;
}

Corpus generate(const GeneratorConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.windowing.window_seconds = config.window_seconds;
  corpus.windowing.length = config.length;
  corpus.windowing.origin = config.origin;
  corpus.windowing.end = config.origin + static_cast<Timestamp>(config.length) * config.window_seconds;

  const std::size_t n = config.population;
  for (std::size_t u = 0; u < n; ++u) {
    corpus.users.push_back({format_id("U", u, 4), sample_profile(config.seed, u), std::nullopt});
  }

  SeededRng selection(config.seed, stream_id(0, 0, Purpose{0}));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[selection.index(i)]);
  const std::size_t insiders = insider_count(n, config.insider_fraction);
  double weight_total = 0.0;
  for (double w : config.scenario_weights) weight_total += w;
  for (std::size_t i = 0; i < insiders; ++i) {
    ScenarioSpec spec;
    double pick = selection.uniform() * weight_total;
    std::size_t s = 0;
    while (s + 1 < 3 && (config.scenario_weights[s] == 0.0 || pick >= config.scenario_weights[s])) {
      pick -= config.scenario_weights[s];
      ++s;
    }
    spec.scenario = static_cast<Scenario>(s);
    spec.duration = config.min_duration + selection.index(config.max_duration - config.min_duration + 1);
    const auto earliest = static_cast<std::size_t>(std::ceil(config.onset_from * static_cast<double>(config.length)));
    const std::size_t latest = config.length - spec.duration;
    const std::size_t lo = std::min(earliest, latest);
    spec.onset = lo + selection.index(latest - lo + 1);
    spec.intensity = config.intensity;
    corpus.users[order[i]].scenario = spec;
  }

  const WindowOptions& per_user = corpus.windowing;
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<ActivityRecord> events;
    emit_user_events(config, u, corpus.users[u], events);
    const GeneratedUser& gu = corpus.users[u];
    BehaviorSequence seq;
    if (events.empty()) {
      seq.user = gu.user;
      seq.windows = Matrix(config.length, kFeatureCount);
      seq.origin = config.origin;
      seq.padding = 0;
      seq.window_seconds = config.window_seconds;
    } else {
      seq = std::move(extract_features(events, per_user).front());
    }
    if (gu.scenario) {
      seq.label = std::string(to_string(gu.scenario->scenario));
      seq.onset = gu.scenario->onset;
      seq.duration = gu.scenario->duration;
    }
    corpus.sequences.push_back(std::move(seq));
    if (config.keep_events) {
      corpus.events.insert(corpus.events.end(), std::make_move_iterator(events.begin()),
                           std::make_move_iterator(events.end()));
    }
  }
  std::stable_sort(corpus.events.begin(), corpus.events.end(),
                   [](const ActivityRecord& a, const ActivityRecord& b) {
                     return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.user < b.user;
                   });
  return corpus;
}

}  // namespace evsn
