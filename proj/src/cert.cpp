#include "evsn/cert.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>

#include "evsn/array_file.hpp"
#include "evsn/error.hpp"

namespace evsn {

namespace fs = std::filesystem;

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"': quoted = true; any = true; break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r': break;
      case '\n':
        if (any || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
        break;
      default: field.push_back(c); any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

bool parse_cert_date(const std::string& text, Timestamp& out) {
  if (text.size() != 19 || text[2] != '/' || text[5] != '/' || text[10] != ' ' || text[13] != ':' ||
      text[16] != ':') {
    return false;
  }
  auto num = [&](std::size_t pos, std::size_t len, int& v) {
    const auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
    return ec == std::errc() && ptr == text.data() + pos + len;
  };
  int mo, d, y, h, mi, s;
  if (!num(0, 2, mo) || !num(3, 2, d) || !num(6, 4, y) || !num(11, 2, h) || !num(14, 2, mi) || !num(17, 2, s)) {
    return false;
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return false;
  out = sys_days{ymd}.time_since_epoch().count() * 86400LL + h * 3600 + mi * 60 + s;
  return true;
}

namespace {

struct Columns {
  std::map<std::string, std::size_t> index;
  const std::string* get(const std::vector<std::string>& row, const std::string& name) const {
    const auto it = index.find(name);
    if (it == index.end() || it->second >= row.size()) return nullptr;
    return &row[it->second];
  }
};

bool external_recipient(const std::string& list, const std::string& domain) {
  std::size_t start = 0;
  while (start <= list.size()) {
    std::size_t end = list.find(';', start);
    if (end == std::string::npos) end = list.size();
    const std::string addr = list.substr(start, end - start);
    const auto at = addr.rfind('@');
    if (at != std::string::npos && addr.substr(at + 1) != domain) return true;
    start = end + 1;
  }
  return false;
}

ActivityKind kind_for(const std::string& file, const std::string& activity) {
  if (file == "logon.csv") return activity == "Logoff" ? ActivityKind::logoff : ActivityKind::logon;
  if (file == "device.csv") return ActivityKind::removable_device;
  if (file == "file.csv") return ActivityKind::file_access;
  if (file == "email.csv") return ActivityKind::email;
  return ActivityKind::http;
}

}  // namespace

CertIngest ingest_cert(const fs::path& directory, const CertOptions& options) {
  if (!fs::is_directory(directory)) fail(ErrorKind::io, "CERT directory not found: " + directory.string());
  CertIngest out;
  for (const std::string file : {"logon.csv", "device.csv", "file.csv", "email.csv", "http.csv"}) {
    const fs::path path = directory / file;
    if (!fs::exists(path)) continue;
    const auto rows = parse_csv(read_text_file(path));
    if (rows.empty()) continue;
    Columns cols;
    for (std::size_t i = 0; i < rows.front().size(); ++i) cols.index[rows.front()[i]] = i;
    std::size_t parsed = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      const std::string* date = cols.get(row, "date");
      const std::string* user = cols.get(row, "user");
      Timestamp ts = 0;
      if (!date || !user || user->empty() || !parse_cert_date(*date, ts)) {
        ++out.malformed;
        continue;
      }
      const std::string* activity = cols.get(row, "activity");
      ActivityRecord rec;
      rec.user = *user;
      rec.timestamp = ts;
      rec.kind = kind_for(file, activity ? *activity : std::string());
      if (const auto* pc = cols.get(row, "pc")) rec.attributes["host"] = *pc;
      if (activity) rec.attributes["activity"] = *activity;
      if (file == "file.csv") {
        rec.attributes["op"] = activity && *activity == "File Open" ? "read" : "write";
        if (const auto* name = cols.get(row, "filename")) rec.attributes["path"] = *name;
      } else if (file == "email.csv") {
        bool external = false;
        for (const char* field : {"to", "cc", "bcc"}) {
          if (const auto* list = cols.get(row, field)) external = external || external_recipient(*list, options.internal_domain);
        }
        rec.attributes["external"] = external ? "1" : "0";
        if (const auto* size = cols.get(row, "size"); size && !size->empty()) rec.attributes["bytes"] = *size;
      } else if (file == "http.csv") {
        if (const auto* url = cols.get(row, "url")) rec.attributes["url"] = *url;
      }
      out.records.push_back(std::move(rec));
      ++parsed;
    }
    out.rows_per_file[file] = parsed;
  }
  if (out.records.empty()) {
    fail(ErrorKind::data, "no parseable CERT rows in " + directory.string() + " (" +
                              std::to_string(out.malformed) + " malformed)");
  }
  return out;
}

}  // namespace evsn
