#include "evsn/corpus_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "evsn/array_file.hpp"
#include "evsn/error.hpp"

namespace evsn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t parse_size(const std::string& text, const std::string& what) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorKind::data, "bad " + what + " '" + text + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string encode_field(const std::string& text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (char c : text) {
    if (c == '%' || c == ',' || c == ';' || c == '=' || c == '\n' || c == '\r') {
      const auto b = static_cast<unsigned char>(c);
      out.push_back('%');
      out.push_back(kHex[b >> 4]);
      out.push_back(kHex[b & 15]);
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string decode_field(const std::string& text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '%') {
      out.push_back(text[i]);
      continue;
    }
    if (i + 2 >= text.size()) fail(ErrorKind::data, "truncated escape in '" + text + "'");
    unsigned v = 0;
    const auto [ptr, ec] = std::from_chars(text.data() + i + 1, text.data() + i + 3, v, 16);
    if (ec != std::errc() || ptr != text.data() + i + 3) fail(ErrorKind::data, "bad escape in '" + text + "'");
    out.push_back(static_cast<char>(v));
    i += 2;
  }
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

void write_labels_csv(const fs::path& path, const std::vector<BehaviorSequence>& sequences) {
  std::ostringstream out;
  out << "user,label,onset,duration\n";
  for (const auto& s : sequences) out << s.user << ',' << s.label << ',' << s.onset << ',' << s.duration << '\n';
  write_text_file(path, out.str());
}

std::vector<LabelRow> read_labels_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != "user,label,onset,duration") {
    fail(ErrorKind::data, path.string() + ": expected header user,label,onset,duration");
  }
  std::vector<LabelRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 4) fail(ErrorKind::data, path.string() + ":" + std::to_string(i + 1) + ": expected 4 fields");
    rows.push_back({f[0], f[1], parse_size(f[2], "onset"), parse_size(f[3], "duration")});
  }
  return rows;
}

void write_corpus(const fs::path& dir, const std::vector<BehaviorSequence>& sequences,
                  const std::string& extra_metadata) {
  if (sequences.empty()) fail(ErrorKind::data, "refusing to write an empty corpus");
  const std::size_t n = sequences.size();
  const std::size_t t = sequences.front().length();
  const std::size_t d = sequences.front().width();
  NamedArray windows{"windows", {n, t, d}, {}};
  NamedArray padding{"padding", {n}, {}};
  NamedArray origin{"origin", {n}, {}};
  windows.values.reserve(n * t * d);
  json users = json::array();
  for (const auto& s : sequences) {
    if (s.length() != t || s.width() != d) {
      fail(ErrorKind::shape, "sequence " + s.user + " is " + s.windows.shape_string() + ", corpus expects " +
                                 std::to_string(t) + "x" + std::to_string(d));
    }
    if (s.window_seconds != sequences.front().window_seconds) {
      fail(ErrorKind::data, "sequences disagree on window duration");
    }
    windows.values.insert(windows.values.end(), s.windows.values().begin(), s.windows.values().end());
    padding.values.push_back(static_cast<double>(s.padding));
    origin.values.push_back(static_cast<double>(s.origin));
    users.push_back(s.user);
  }
  json meta = json::parse(extra_metadata);
  if (!meta.is_object()) fail(ErrorKind::contract, "corpus metadata must be a JSON object");
  meta["users"] = users;
  meta["window_seconds"] = sequences.front().window_seconds;
  meta["length"] = t;
  meta["feature_names"] = json(std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end()));

  fs::create_directories(dir);
  ArrayFile file;
  file.arrays = {std::move(windows), std::move(padding), std::move(origin)};
  file.metadata = meta.dump();
  write_array_file(dir / "sequences.bin", file);
  write_labels_csv(dir / "labels.csv", sequences);
}

CorpusFiles read_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::io, "corpus directory not found: " + dir.string());
  const ArrayFile file = read_array_file(dir / "sequences.bin");
  const json meta = json::parse(file.metadata, nullptr, false);
  if (meta.is_discarded() || !meta.contains("users")) {
    fail(ErrorKind::data, (dir / "sequences.bin").string() + ": metadata lacks the user list");
  }
  const auto& windows = file.get("windows");
  const auto& padding = file.get("padding");
  const auto& origin = file.get("origin");
  if (windows.shape.size() != 3) fail(ErrorKind::data, "windows array must be N x T x d");
  const std::size_t n = windows.shape[0], t = windows.shape[1], d = windows.shape[2];
  if (meta["users"].size() != n || padding.values.size() != n || origin.values.size() != n) {
    fail(ErrorKind::data, "corpus arrays disagree on the number of users");
  }
  const auto labels = read_labels_csv(dir / "labels.csv");
  if (labels.size() != n) fail(ErrorKind::data, "labels.csv has " + std::to_string(labels.size()) +
                                                     " rows for " + std::to_string(n) + " sequences");
  CorpusFiles out;
  out.metadata = file.metadata;
  const std::int64_t w = meta.value("window_seconds", std::int64_t{3600});
  for (std::size_t i = 0; i < n; ++i) {
    BehaviorSequence s;
    s.user = meta["users"][i].get<std::string>();
    if (labels[i].user != s.user) fail(ErrorKind::data, "labels.csv row " + std::to_string(i + 2) +
                                                            " names " + labels[i].user + ", expected " + s.user);
    s.windows = Matrix(t, d);
    std::copy_n(windows.values.begin() + static_cast<std::ptrdiff_t>(i * t * d), t * d, s.windows.values().begin());
    s.padding = static_cast<std::size_t>(padding.values[i]);
    s.origin = static_cast<Timestamp>(origin.values[i]);
    s.window_seconds = w;
    s.label = labels[i].label;
    s.onset = labels[i].onset;
    s.duration = labels[i].duration;
    out.sequences.push_back(std::move(s));
  }
  return out;
}

std::string format_raw_log_row(const ActivityRecord& r) {
  std::string out = encode_field(r.user);
  out += ',';
  out += std::to_string(r.timestamp);
  out += ',';
  out += to_string(r.kind);
  out += ',';
  bool first = true;
  for (const auto& [k, v] : r.attributes) {
    if (!first) out += ';';
    first = false;
    out += encode_field(k);
    out += '=';
    out += encode_field(v);
  }
  return out;
}

ActivityRecord parse_raw_log_row(const std::string& line) {
  const auto f = split(line, ',');
  if (f.size() != 4) fail(ErrorKind::data, "raw log row needs 4 fields: '" + line + "'");
  ActivityRecord r;
  r.user = decode_field(f[0]);
  const auto [ptr, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), r.timestamp);
  if (ec != std::errc() || ptr != f[1].data() + f[1].size()) fail(ErrorKind::data, "bad timestamp '" + f[1] + "'");
  const auto kind = parse_activity_kind(f[2]);
  if (!kind) fail(ErrorKind::data, "unknown activity kind '" + f[2] + "'");
  r.kind = *kind;
  if (!f[3].empty()) {
    for (const auto& pair : split(f[3], ';')) {
      const auto eq = pair.find('=');
      if (eq == std::string::npos) fail(ErrorKind::data, "attribute without '=': '" + pair + "'");
      r.attributes[decode_field(pair.substr(0, eq))] = decode_field(pair.substr(eq + 1));
    }
  }
  return r;
}

void write_raw_log(const fs::path& path, const std::vector<ActivityRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << "user,timestamp,kind,attributes\n";
  for (const auto& r : records) out << format_raw_log_row(r) << '\n';
  if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

std::vector<ActivityRecord> read_raw_log(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != "user,timestamp,kind,attributes") {
    fail(ErrorKind::data, path.string() + ": expected header user,timestamp,kind,attributes");
  }
  std::vector<ActivityRecord> out;
  out.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      out.push_back(parse_raw_log_row(lines[i]));
    } catch (const Error& e) {
      fail(ErrorKind::data, path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace evsn
