// evsn: command-line entry point (gen, train, detect, eval, project).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evsn/array_file.hpp"
#include "evsn/cert.hpp"
#include "evsn/corpus_io.hpp"
#include "evsn/detector.hpp"
#include "evsn/error.hpp"
#include "evsn/evaluation.hpp"
#include "evsn/generator.hpp"
#include "evsn/run_config.hpp"
#include "evsn/training.hpp"

namespace fs = std::filesystem;
using namespace evsn;

namespace {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kData = 3,
  kIo = 4,
  kNumeric = 5,
  kDegenerate = 6,
  kInternal = 7,
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return kConfig;
    case ErrorKind::data: return kData;
    case ErrorKind::io: return kIo;
    case ErrorKind::numeric: return kNumeric;
    case ErrorKind::degenerate: return kDegenerate;
    case ErrorKind::shape:
    case ErrorKind::domain:
    case ErrorKind::contract: break;
  }
  return kInternal;
}

const std::vector<std::string> kGenFields = {"seed", "population", "insider_fraction", "length", "window_seconds",
                                             "intensity", "min_duration", "max_duration", "onset_from"};
const std::vector<std::string> kTrainFields = {
    "seed",          "corpus",         "length",        "epochs",         "learning_rate",    "batch_size",
    "dropout",       "clusters",       "hidden",        "layers",         "lambda_max",       "anneal_epochs",
    "warmup_epochs", "refresh_period", "supervise_stride", "warmup_horizon", "head_init",     "head_temperature"};
const std::vector<std::string> kDetectFields = {
    "seed",  "checkpoint",      "input",          "input_format",       "tau_u", "tau_d",           "beta",
    "drift_reference", "warmup_windows", "window_seconds", "utc_offset_seconds", "order", "reorder_seconds",
    "stream_origin",   "internal_domain"};
const std::vector<std::string> kEvalFields = {"seed",           "scores",           "corpus", "checkpoint",
                                              "epochs_csv",     "warmup_windows",   "baseline_quantile"};
const std::vector<std::string> kProjectFields = {"seed", "checkpoint", "corpus"};

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::string out;
  std::vector<std::pair<const ConfigField*, CLI::Option*>> options;
  std::map<std::string, std::string> values;
};

void add_command(CLI::App& root, Command& cmd, const std::string& name, const std::string& description,
                 const std::vector<std::string>& fields) {
  cmd.app = root.add_subcommand(name, description);
  cmd.out = "evsn_" + name;
  cmd.app->add_option("--config", cmd.config_path, "flat JSON run config; flags override its values");
  cmd.app->add_option("--out", cmd.out, "output directory")->capture_default_str();
  RunConfig defaults;
  defaults.resolve();
  const auto defaults_json = to_json(defaults);
  for (const auto& key : fields) {
    const auto& all = config_fields();
    const auto it = std::find_if(all.begin(), all.end(), [&](const ConfigField& f) { return f.name == key; });
    if (it == all.end()) throw std::logic_error("unknown field " + key);
    const auto& dv = defaults_json.at(key);
    std::string shown = dv.is_string() ? dv.get<std::string>() : dv.dump();
    auto* opt = cmd.app->add_option(flag_name(key), cmd.values[key], it->help);
    opt->type_name(dv.is_number_float()      ? "FLOAT"
                   : dv.is_number_unsigned() ? "UINT"
                   : dv.is_number() || dv.is_null() ? "INT"
                                            : "TEXT");
    if (!shown.empty() && shown != "null") opt->default_str(shown);
    cmd.options.emplace_back(&*it, opt);
  }
}

RunConfig resolve_config(const Command& cmd) {
  RunConfig cfg;
  cfg.resolve();
  if (!cmd.config_path.empty()) cfg = load_run_config(cmd.config_path, cfg);
  for (const auto& [field, opt] : cmd.options) {
    if (opt->count() > 0) set_from_text(cfg, *field, cmd.values.at(field->name));
  }
  cfg.resolve();
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::io, "cannot create output directory " + out + ": " + ec.message());
  return fs::path(out);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorKind::config, std::string(flag) + " is required");
}

std::vector<BehaviorSequence> load_sequences(const std::string& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::io, "corpus directory not found: " + dir);
  auto files = read_corpus(dir);
  return std::move(files.sequences);
}

Checkpoint load_checkpoint_checked(const std::string& path) {
  if (!fs::exists(path)) fail(ErrorKind::io, "checkpoint not found: " + path);
  return load_checkpoint(path);
}

int cmd_gen(const RunConfig& cfg, const fs::path& out) {
  GeneratorConfig g = cfg.generator;
  g.keep_events = true;
  const Corpus corpus = generate(g);
  nlohmann::ordered_json extra;
  extra["seed"] = cfg.seed();
  extra["config_digest"] = config_digest(cfg);
  extra["origin"] = g.origin;
  write_corpus(out, corpus.sequences, extra.dump());
  write_raw_log(out / "events.csv", corpus.events);
  write_run_config(out, cfg);
  std::size_t insiders = 0;
  for (const auto& s : corpus.sequences) insiders += s.is_insider() ? 1 : 0;
  std::printf("generated %zu users (%zu insiders), %zu events, T = %zu\n", corpus.sequences.size(), insiders,
              corpus.events.size(), g.length);
  std::printf("corpus digest %s\n", sha256_file_hex(out / "sequences.bin").c_str());
  return kOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& out) {
  require(cfg.corpus, "--corpus");
  const auto seqs = load_sequences(cfg.corpus);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(cfg.train, seqs, [&](const EpochMetrics& m) {
    std::printf("epoch %zu/%zu total %.6f ce %.6f kl %.6f lambda %.3f pseudo-acc %.4f\n", m.epoch, cfg.train.epochs,
                m.total_loss, m.ce_loss, m.kl_loss, m.lambda, m.pseudo_accuracy);
    std::fflush(stdout);
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string digest = save_checkpoint(out / "checkpoint.evsn", r.checkpoint);
  write_epochs_csv(out / "epochs.csv", r.epochs);
  write_run_config(out, cfg);
  const auto& last = r.epochs.back();
  std::printf("final total %.6f ce %.6f kl %.6f pseudo-acc %.4f (%.1f s)\n", last.total_loss, last.ce_loss,
              last.kl_loss, last.pseudo_accuracy, secs);
  std::printf("checkpoint %s digest %s\n", (out / "checkpoint.evsn").string().c_str(), digest.c_str());
  return kOk;
}

int cmd_detect(const RunConfig& cfg, const fs::path& out) {
  require(cfg.checkpoint, "--checkpoint");
  require(cfg.input, "--input");
  const Checkpoint ck = load_checkpoint_checked(cfg.checkpoint);
  std::string format = cfg.input_format;
  if (!fs::exists(cfg.input)) fail(ErrorKind::io, "detection input not found: " + cfg.input);
  if (format == "auto") {
    if (fs::is_directory(cfg.input)) format = fs::exists(fs::path(cfg.input) / "sequences.bin") ? "corpus" : "cert";
    else format = "raw";
  }
  DetectionOutput result;
  if (format == "corpus") {
    result = detect_sequences(ck, load_sequences(cfg.input), cfg.detector);
  } else {
    std::vector<ActivityRecord> records;
    if (format == "raw") {
      records = read_raw_log(cfg.input);
    } else {
      CertIngest ingest = ingest_cert(cfg.input, CertOptions{cfg.internal_domain});
      if (ingest.malformed > 0) std::fprintf(stderr, "skipped %zu malformed CERT rows\n", ingest.malformed);
      records = std::move(ingest.records);
    }
    result = detect_stream(ck, std::move(records), cfg.detector, cfg.stream);
  }
  write_score_log(out / "scores.csv", result.rows);
  write_alerts_jsonl(out / "alerts.jsonl", rank_alerts(result.alerts));
  write_run_config(out, cfg);
  std::printf("windows %zu alerts %zu mean_u %.6f\n", result.rows.size(), result.alerts.size(),
              result.mean_uncertainty());
  return kOk;
}

std::string show(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

int cmd_eval(const RunConfig& cfg, const fs::path& out) {
  require(cfg.scores, "--scores");
  require(cfg.corpus, "--corpus");
  require(cfg.checkpoint, "--checkpoint");
  const auto rows = read_score_log(cfg.scores);
  const auto seqs = load_sequences(cfg.corpus);
  const Checkpoint ck = load_checkpoint_checked(cfg.checkpoint);
  EvaluationOptions opts;
  opts.baseline_quantile = cfg.baseline_quantile;
  opts.seed = cfg.seed();
  opts.config_digest = config_digest(cfg);
  EvaluationReport report = evaluate(ck, seqs, rows, cfg.detector.warmup_windows, opts);
  fs::path epochs = cfg.epochs;
  if (epochs.empty()) epochs = fs::path(cfg.checkpoint).parent_path() / "epochs.csv";
  if (fs::exists(epochs)) report.epochs = read_epochs_csv(epochs);
  else if (!cfg.epochs.empty()) fail(ErrorKind::io, "epochs file not found: " + cfg.epochs);
  export_report(out, report);
  write_run_config(out, cfg);
  const auto& d = report.detector;
  std::printf("accuracy %s precision %s recall %s f1 %s fpr %s auc %.4f baseline_fpr %s\n", show(d.accuracy).c_str(),
              show(d.precision).c_str(), show(d.recall).c_str(), show(d.f1).c_str(), show(d.fpr).c_str(),
              report.roc.auc, show(report.baseline.fpr).c_str());
  return kOk;
}

int cmd_project(const RunConfig& cfg, const fs::path& out) {
  require(cfg.checkpoint, "--checkpoint");
  require(cfg.corpus, "--corpus");
  const Checkpoint ck = load_checkpoint_checked(cfg.checkpoint);
  const auto p = project_corpus(ck, load_sequences(cfg.corpus));
  write_projection_csv(out / "projection.csv", p);
  write_run_config(out, cfg);
  std::printf("projected %zu users; explained variance %.6g %.6g\n", p.users.size(), p.projection.variance[0],
              p.projection.variance[1]);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming insider-threat detection with evidential deep clustering"};
  app.require_subcommand(1);
  Command gen, trn, det, evl, prj;
  add_command(app, gen, "gen", "generate a synthetic corpus with labels and raw log", kGenFields);
  add_command(app, trn, "train", "train encoder and evidential head on a corpus", kTrainFields);
  add_command(app, det, "detect", "score a corpus, raw log or CERT directory window by window", kDetectFields);
  add_command(app, evl, "eval", "score detector output against labels and write the report", kEvalFields);
  add_command(app, prj, "project", "project final user embeddings to 2-D", kProjectFields);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  const std::pair<Command*, int (*)(const RunConfig&, const fs::path&)> table[] = {
      {&gen, cmd_gen}, {&trn, cmd_train}, {&det, cmd_detect}, {&evl, cmd_eval}, {&prj, cmd_project}};
  try {
    for (const auto& [cmd, run] : table) {
      if (!cmd->app->parsed()) continue;
      const RunConfig cfg = resolve_config(*cmd);
      return run(cfg, prepare_out(cmd->out));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", std::string(to_string(e.kind())).c_str(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUnexpected;
  }
  return kUnexpected;
}
