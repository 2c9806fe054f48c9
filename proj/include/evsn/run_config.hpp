#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evsn/cert.hpp"
#include "evsn/detector.hpp"
#include "evsn/generator.hpp"
#include "evsn/training.hpp"

namespace evsn {

/// Everything a CLI run depends on. The seed, sequence length and window
/// duration are shared by the generator, trainer and stream windowing.
struct RunConfig {
  GeneratorConfig generator;
  TrainConfig train;
  DetectorConfig detector;
  StreamOptions stream;
  std::string internal_domain = CertOptions{}.internal_domain;
  double baseline_quantile = 0.95;

  std::string corpus;
  std::string checkpoint;
  std::string input;
  std::string input_format = "auto";  // auto, corpus, raw or cert
  std::string scores;
  std::string epochs;

  std::uint64_t seed() const noexcept { return train.seed; }
  /// Copies the shared values into every sub-config.
  void resolve();
  /// Config error naming the offending flag.
  void validate() const;
};

struct ConfigField {
  std::string name;  // JSON key; the flag is --name with '-' for '_'
  std::string help;
  bool path = false;  // excluded from the digest
  std::function<nlohmann::ordered_json(const RunConfig&)> get;
  std::function<void(RunConfig&, const nlohmann::ordered_json&)> set;
};

const std::vector<ConfigField>& config_fields();
std::string flag_name(const std::string& key);

/// Flat JSON of every field, in table order.
nlohmann::ordered_json to_json(const RunConfig& config);
/// Overlays the keys of `j` on `base`. Unknown keys are a config error; a
/// `config_digest` key is accepted and ignored.
RunConfig overlay(const RunConfig& base, const nlohmann::ordered_json& j);
RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base = {});
/// Sets one field from its command-line text, typed like the field.
void set_from_text(RunConfig& config, const ConfigField& field, const std::string& text);

/// SHA-256 of the non-path fields.
std::string config_digest(const RunConfig& config);
/// Writes config.json: the flat config plus its digest.
void write_run_config(const std::filesystem::path& dir, const RunConfig& config);

}  // namespace evsn
