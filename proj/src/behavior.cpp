#include "evsn/behavior.hpp"

namespace evsn {

namespace {

constexpr std::pair<ActivityKind, std::string_view> kKindNames[] = {
    {ActivityKind::logon, "logon"},
    {ActivityKind::logoff, "logoff"},
    {ActivityKind::file_access, "file-access"},
    {ActivityKind::removable_device, "removable-device"},
    {ActivityKind::process_exec, "process-exec"},
    {ActivityKind::command, "command"},
    {ActivityKind::email, "email"},
    {ActivityKind::http, "http"},
};

}  // namespace

std::string_view to_string(ActivityKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<ActivityKind> parse_activity_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

}  // namespace evsn
