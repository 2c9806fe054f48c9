#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evsn/behavior.hpp"
#include "evsn/features.hpp"

namespace evsn {

enum class Scenario { data_theft, privilege_abuse, sabotage };

std::string_view to_string(Scenario s);
std::optional<Scenario> parse_scenario(std::string_view text);

/// Attack placement for one insider. onset and duration are in windows.
struct ScenarioSpec {
  Scenario scenario = Scenario::data_theft;
  std::size_t onset = 0;
  std::size_t duration = 0;
  double intensity = 1.0;  // 1 reproduces benign behavior
};

/// Daily expected event counts for one user, before the diurnal profile.
struct ActivityProfile {
  double logons = 0, files = 0, devices = 0, processes = 0, commands = 0, emails = 0, http = 0;
  double write_fraction = 0.3;
  double external_fraction = 0.1;
  double roaming = 0.05;  // chance a logon lands on a shared host
  std::size_t command_vocabulary = 0;
  std::size_t role = 0;
  // Only non-zero while a scenario is active.
  double night_logons = 0;
  double privileged_commands = 0;
  double device_bytes_scale = 1.0;
};

struct GeneratorConfig {
  std::size_t population = 200;
  double insider_fraction = 0.05;
  std::size_t length = 100;  // T
  std::int64_t window_seconds = kSecondsPerDay;
  Timestamp origin = 1704067200;  // 2024-01-01T00:00:00Z
  std::uint64_t seed = 7;

  double intensity = 10.0;
  /// Relative weights of data-theft, privilege-abuse and sabotage.
  std::array<double, 3> scenario_weights = {1.0, 1.0, 1.0};
  std::size_t min_duration = 3;
  std::size_t max_duration = 10;
  /// Onset is drawn from [onset_from * T, T - duration].
  double onset_from = 0.2;
  /// Keep the raw event log in the returned corpus.
  bool keep_events = true;

  void validate() const;
};

struct GeneratedUser {
  UserId user;
  ActivityProfile profile;
  std::optional<ScenarioSpec> scenario;
};

struct Corpus {
  std::vector<BehaviorSequence> sequences;  // raw features, ordered by user id
  std::vector<ActivityRecord> events;       // time-ordered raw log
  std::vector<GeneratedUser> users;
  WindowOptions windowing;
};

/// floor(fraction * population), the number of insiders generated.
std::size_t insider_count(std::size_t population, double fraction);

/// Expected daily counts of a user's profile once a scenario is active.
ActivityProfile attack_profile(const ActivityProfile& benign, const ScenarioSpec& spec);

/// Builds the raw log and the labeled sequences extracted from it.
Corpus generate(const GeneratorConfig& config);

}  // namespace evsn
