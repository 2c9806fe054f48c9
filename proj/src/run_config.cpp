#include "evsn/run_config.hpp"

#include <cerrno>
#include <cstdlib>

#include "evsn/array_file.hpp"
#include "evsn/error.hpp"

namespace evsn {

using nlohmann::ordered_json;

namespace {

[[noreturn]] void bad_value(const std::string& name, const char* expected) {
  fail(ErrorKind::config, flag_name(name) + " (" + name + ") must be " + expected);
}

template <class T>
T convert(const ordered_json& v, const std::string& name) {
  if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad_value(name, "a string");
    return v.get<std::string>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) bad_value(name, "a number");
    return v.get<double>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) bad_value(name, "a non-negative integer");
    return v.get<T>();
  } else {
    if (!v.is_number_integer()) bad_value(name, "an integer");
    return v.get<T>();
  }
}

template <class T, class Ref>
ConfigField field(std::string name, std::string help, Ref ref, bool path = false) {
  ConfigField f;
  f.name = name;
  f.help = std::move(help);
  f.path = path;
  f.get = [ref](const RunConfig& c) { return ordered_json(ref(const_cast<RunConfig&>(c))); };
  f.set = [ref, name](RunConfig& c, const ordered_json& v) { ref(c) = convert<T>(v, name); };
  return f;
}

template <class Enum, class Ref, class Parse>
ConfigField enum_field(std::string name, std::string help, Ref ref, Parse parse, const char* choices) {
  ConfigField f;
  f.name = name;
  f.help = std::move(help);
  f.get = [ref](const RunConfig& c) { return ordered_json(std::string(to_string(ref(const_cast<RunConfig&>(c))))); };
  f.set = [ref, parse, name, choices](RunConfig& c, const ordered_json& v) {
    const auto parsed = parse(convert<std::string>(v, name));
    if (!parsed) bad_value(name, choices);
    ref(c) = *parsed;
  };
  return f;
}

std::string_view order_name(OrderPolicy p) { return p == OrderPolicy::reorder ? "reorder" : "reject"; }

std::vector<ConfigField> build_fields() {
  std::vector<ConfigField> f;
  using u64 = std::uint64_t;
  using sz = std::size_t;
  using i64 = std::int64_t;
  f.push_back(field<u64>("seed", "master seed for generation and training",
                         [](RunConfig& c) -> u64& { return c.train.seed; }));
  // generator
  f.push_back(field<sz>("population", "number of synthetic users",
                        [](RunConfig& c) -> sz& { return c.generator.population; }));
  f.push_back(field<double>("insider_fraction", "fraction of insiders, floor(fraction * population) users",
                            [](RunConfig& c) -> double& { return c.generator.insider_fraction; }));
  f.push_back(field<sz>("length", "sequence length T in windows",
                        [](RunConfig& c) -> sz& { return c.train.length; }));
  f.push_back(field<i64>("window_seconds", "window duration in seconds (whole hours)",
                         [](RunConfig& c) -> i64& { return c.generator.window_seconds; }));
  f.push_back(field<double>("intensity", "scenario intensity multiplier (>= 1)",
                            [](RunConfig& c) -> double& { return c.generator.intensity; }));
  f.push_back(field<sz>("min_duration", "shortest scenario in windows",
                        [](RunConfig& c) -> sz& { return c.generator.min_duration; }));
  f.push_back(field<sz>("max_duration", "longest scenario in windows",
                        [](RunConfig& c) -> sz& { return c.generator.max_duration; }));
  f.push_back(field<double>("onset_from", "earliest onset as a fraction of T",
                            [](RunConfig& c) -> double& { return c.generator.onset_from; }));
  // training
  f.push_back(field<sz>("epochs", "training epochs", [](RunConfig& c) -> sz& { return c.train.epochs; }));
  f.push_back(field<double>("learning_rate", "Adam learning rate",
                            [](RunConfig& c) -> double& { return c.train.learning_rate; }));
  f.push_back(field<sz>("batch_size", "mini-batch size", [](RunConfig& c) -> sz& { return c.train.batch_size; }));
  f.push_back(field<double>("dropout", "dropout probability", [](RunConfig& c) -> double& { return c.train.dropout; }));
  f.push_back(field<sz>("clusters", "number of clusters K", [](RunConfig& c) -> sz& { return c.train.clusters; }));
  f.push_back(field<sz>("hidden", "embedding width k", [](RunConfig& c) -> sz& { return c.train.hidden; }));
  f.push_back(field<sz>("layers", "stacked GRU layers", [](RunConfig& c) -> sz& { return c.train.layers; }));
  f.push_back(field<double>("lambda_max", "final KL weight", [](RunConfig& c) -> double& { return c.train.lambda_max; }));
  f.push_back(field<sz>("anneal_epochs", "epochs to reach the final KL weight",
                        [](RunConfig& c) -> sz& { return c.train.anneal_epochs; }));
  f.push_back(field<sz>("warmup_epochs", "encoder warm-up epochs",
                        [](RunConfig& c) -> sz& { return c.train.warmup_epochs; }));
  f.push_back(field<sz>("refresh_period", "epochs between pseudo-label refreshes",
                        [](RunConfig& c) -> sz& { return c.train.refresh_period; }));
  f.push_back(field<sz>("supervise_stride", "supervise every n-th step back from the end (0: final only)",
                        [](RunConfig& c) -> sz& { return c.train.supervise_stride; }));
  f.push_back(field<sz>("warmup_horizon", "warm-up target: mean of this many trailing windows (0: all)",
                        [](RunConfig& c) -> sz& { return c.train.warmup_horizon; }));
  f.push_back(enum_field<HeadInit>("head_init", "head initialization: random or centroids",
                                   [](RunConfig& c) -> HeadInit& { return c.train.head_init; }, parse_head_init,
                                   "'random' or 'centroids'"));
  f.push_back(field<double>("head_temperature", "logit scale of the centroid head",
                            [](RunConfig& c) -> double& { return c.train.head_temperature; }));
  // detector
  f.push_back(field<double>("tau_u", "uncertainty threshold", [](RunConfig& c) -> double& { return c.detector.tau_u; }));
  f.push_back(field<double>("tau_d", "drift threshold", [](RunConfig& c) -> double& { return c.detector.tau_d; }));
  f.push_back(field<double>("beta", "EWMA weight of the newest embedding",
                            [](RunConfig& c) -> double& { return c.detector.beta; }));
  f.push_back(enum_field<DriftReference>("drift_reference", "drift against the EWMA baseline or previous embedding",
                                         [](RunConfig& c) -> DriftReference& { return c.detector.reference; },
                                         parse_drift_reference, "'baseline' or 'previous'"));
  f.push_back(field<sz>("warmup_windows", "per-user windows encoded before detection starts",
                        [](RunConfig& c) -> sz& { return c.detector.warmup_windows; }));
  // stream
  f.push_back(field<i64>("utc_offset_seconds", "offset added before taking the local hour",
                         [](RunConfig& c) -> i64& { return c.stream.windows.utc_offset_seconds; }));
  {
    ConfigField o;
    o.name = "order";
    o.help = "out-of-order records: reject or reorder";
    o.get = [](const RunConfig& c) { return ordered_json(std::string(order_name(c.stream.order))); };
    o.set = [](RunConfig& c, const ordered_json& v) {
      const auto s = convert<std::string>(v, "order");
      if (s == "reject") c.stream.order = OrderPolicy::reject;
      else if (s == "reorder") c.stream.order = OrderPolicy::reorder;
      else bad_value("order", "'reject' or 'reorder'");
    };
    f.push_back(std::move(o));
  }
  f.push_back(field<i64>("reorder_seconds", "reorder buffer span in seconds",
                         [](RunConfig& c) -> i64& { return c.stream.reorder_seconds; }));
  {
    ConfigField o;
    o.name = "stream_origin";
    o.help = "start of window 0 for every user (unix seconds); unset starts each user at their first record";
    o.get = [](const RunConfig& c) {
      return c.stream.windows.origin ? ordered_json(*c.stream.windows.origin) : ordered_json(nullptr);
    };
    o.set = [](RunConfig& c, const ordered_json& v) {
      if (v.is_null()) c.stream.windows.origin.reset();
      else c.stream.windows.origin = convert<std::int64_t>(v, "stream_origin");
    };
    f.push_back(std::move(o));
  }
  f.push_back(field<std::string>("internal_domain", "CERT email domain treated as internal",
                                 [](RunConfig& c) -> std::string& { return c.internal_domain; }));
  f.push_back(field<double>("baseline_quantile", "distance quantile of the k-means baseline",
                            [](RunConfig& c) -> double& { return c.baseline_quantile; }));
  // paths
  f.push_back(field<std::string>("corpus", "corpus directory", [](RunConfig& c) -> std::string& { return c.corpus; }, true));
  f.push_back(field<std::string>("checkpoint", "checkpoint file",
                                 [](RunConfig& c) -> std::string& { return c.checkpoint; }, true));
  f.push_back(field<std::string>("input", "detection input: corpus directory, raw log file or CERT directory",
                                 [](RunConfig& c) -> std::string& { return c.input; }, true));
  f.push_back(field<std::string>("input_format", "auto, corpus, raw or cert",
                                 [](RunConfig& c) -> std::string& { return c.input_format; }, true));
  f.push_back(field<std::string>("scores", "score log written by detect",
                                 [](RunConfig& c) -> std::string& { return c.scores; }, true));
  f.push_back(field<std::string>("epochs_csv", "training curve to include in the report",
                                 [](RunConfig& c) -> std::string& { return c.epochs; }, true));
  return f;
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = build_fields();
  return fields;
}

std::string flag_name(const std::string& key) {
  std::string flag = "--" + key;
  for (char& ch : flag) {
    if (ch == '_') ch = '-';
  }
  return flag;
}

void RunConfig::resolve() {
  generator.seed = train.seed;
  generator.length = train.length;
  stream.windows.window_seconds = generator.window_seconds;
  stream.windows.length = train.length;
}

void RunConfig::validate() const {
  auto cfg = [](const std::string& msg) { fail(ErrorKind::config, msg); };
  if (generator.population < 1) cfg("--population must be >= 1");
  if (!(generator.insider_fraction >= 0.0 && generator.insider_fraction <= 1.0)) {
    cfg("--insider-fraction must lie in [0, 1], got " + std::to_string(generator.insider_fraction));
  }
  if (!(detector.tau_u >= 0.0 && detector.tau_u <= 1.0)) {
    cfg("--tau-u must lie in [0, 1], got " + std::to_string(detector.tau_u));
  }
  if (!(detector.tau_d > 0.0)) cfg("--tau-d must be > 0, got " + std::to_string(detector.tau_d));
  if (!(detector.beta > 0.0 && detector.beta <= 1.0)) cfg("--beta must lie in (0, 1], got " + std::to_string(detector.beta));
  if (!(baseline_quantile >= 0.0 && baseline_quantile <= 1.0)) cfg("--baseline-quantile must lie in [0, 1]");
  if (stream.reorder_seconds < 0) cfg("--reorder-seconds must be >= 0");
  if (input_format != "auto" && input_format != "corpus" && input_format != "raw" && input_format != "cert") {
    cfg("--input-format must be auto, corpus, raw or cert");
  }
  try {
    generator.validate();
    train.validate();
    detector.validate();
  } catch (const Error& e) {
    cfg(std::string("invalid configuration: ") + e.what());
  }
}

ordered_json to_json(const RunConfig& config) {
  ordered_json j = ordered_json::object();
  for (const auto& f : config_fields()) j[f.name] = f.get(config);
  return j;
}

RunConfig overlay(const RunConfig& base, const ordered_json& j) {
  if (!j.is_object()) fail(ErrorKind::config, "run config must be a flat JSON object");
  RunConfig out = base;
  for (const auto& [key, value] : j.items()) {
    if (key == "config_digest") continue;
    const auto& fields = config_fields();
    auto it = std::find_if(fields.begin(), fields.end(), [&](const ConfigField& f) { return f.name == key; });
    if (it == fields.end()) fail(ErrorKind::config, "unknown config key '" + key + "'");
    it->set(out, value);
  }
  out.resolve();
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::io, "config file not found: " + path.string());
  const ordered_json j = ordered_json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::config, path.string() + " is not valid JSON");
  return overlay(base, j);
}

void set_from_text(RunConfig& config, const ConfigField& field, const std::string& text) {
  const ordered_json current = field.get(config);
  const std::string flag = flag_name(field.name);
  auto whole = [&](const char* end) {
    if (text.empty() || *end != '\0' || errno == ERANGE) {
      fail(ErrorKind::config, flag + ": cannot parse '" + text + "'");
    }
  };
  char* end = nullptr;
  errno = 0;
  ordered_json value;
  if (current.is_string()) {
    value = text;
  } else if (current.is_number_float()) {
    value = std::strtod(text.c_str(), &end);
    whole(end);
  } else if (current.is_number_unsigned()) {
    if (!text.empty() && text.front() == '-') fail(ErrorKind::config, flag + " must be a non-negative integer");
    value = static_cast<std::uint64_t>(std::strtoull(text.c_str(), &end, 10));
    whole(end);
  } else {
    value = static_cast<std::int64_t>(std::strtoll(text.c_str(), &end, 10));
    whole(end);
  }
  field.set(config, value);
  config.resolve();
}

std::string config_digest(const RunConfig& config) {
  ordered_json j = ordered_json::object();
  for (const auto& f : config_fields()) {
    if (!f.path) j[f.name] = f.get(config);
  }
  return sha256_hex(j.dump());
}

void write_run_config(const std::filesystem::path& dir, const RunConfig& config) {
  ordered_json j = to_json(config);
  j["config_digest"] = config_digest(config);
  write_text_file(dir / "config.json", j.dump(2) + "\n");
}

}  // namespace evsn
