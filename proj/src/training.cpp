#include "evsn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "evsn/error.hpp"
#include "evsn/evidential.hpp"

namespace evsn {

using nlohmann::json;

std::string_view to_string(HeadInit h) { return h == HeadInit::centroids ? "centroids" : "random"; }

std::optional<HeadInit> parse_head_init(std::string_view text) {
  if (text == "random") return HeadInit::random;
  if (text == "centroids") return HeadInit::centroids;
  return std::nullopt;
}

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) fail(ErrorKind::config, std::string(name) + " must be >= 1");
  };
  positive(epochs, "epochs");
  positive(batch_size, "batch_size");
  positive(clusters, "clusters");
  positive(hidden, "hidden");
  positive(layers, "layers");
  positive(length, "length");
  positive(anneal_epochs, "anneal_epochs");
  positive(refresh_period, "refresh_period");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail(ErrorKind::config, "learning_rate must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::config, "dropout must lie in [0, 1)");
  if (!(lambda_max >= 0.0) || !std::isfinite(lambda_max)) fail(ErrorKind::config, "lambda_max must be >= 0");
  if (!(head_temperature > 0.0) || !std::isfinite(head_temperature)) {
    fail(ErrorKind::config, "head_temperature must be > 0");
  }
}

namespace {

json config_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"dropout", c.dropout},
              {"clusters", c.clusters},
              {"hidden", c.hidden},
              {"layers", c.layers},
              {"length", c.length},
              {"lambda_max", c.lambda_max},
              {"anneal_epochs", c.anneal_epochs},
              {"warmup_epochs", c.warmup_epochs},
              {"refresh_period", c.refresh_period},
              {"supervise_stride", c.supervise_stride},
              {"warmup_horizon", c.warmup_horizon},
              {"head_init", std::string(to_string(c.head_init))},
              {"head_temperature", c.head_temperature},
              {"seed", c.seed}};
}

TrainConfig config_from(const json& j) {
  if (!j.is_object()) fail(ErrorKind::config, "training config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "clusters") c.clusters = value.get<std::size_t>();
      else if (key == "hidden") c.hidden = value.get<std::size_t>();
      else if (key == "layers") c.layers = value.get<std::size_t>();
      else if (key == "length") c.length = value.get<std::size_t>();
      else if (key == "lambda_max") c.lambda_max = value.get<double>();
      else if (key == "anneal_epochs") c.anneal_epochs = value.get<std::size_t>();
      else if (key == "warmup_epochs") c.warmup_epochs = value.get<std::size_t>();
      else if (key == "refresh_period") c.refresh_period = value.get<std::size_t>();
      else if (key == "supervise_stride") c.supervise_stride = value.get<std::size_t>();
      else if (key == "warmup_horizon") c.warmup_horizon = value.get<std::size_t>();
      else if (key == "head_temperature") c.head_temperature = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "head_init") {
        const auto h = parse_head_init(value.get<std::string>());
        if (!h) fail(ErrorKind::config, "head_init must be 'random' or 'centroids'");
        c.head_init = *h;
      } else {
        fail(ErrorKind::config, "unknown training config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("bad training config value: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::size_t> shuffled(std::size_t n, SeededRng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest(const Matrix& centroids, std::span<const double> x, double* distance = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centroids.rows(); ++j) {
    const double d = squared_distance(centroids.row(j), x);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  if (distance) *distance = best_d;
  return best;
}

// Mean over the last `horizon` unpadded rows before `end`; 0 means all of them.
std::vector<double> mean_features(const BehaviorSequence& s, std::size_t end, std::size_t horizon) {
  std::size_t begin = s.padding;
  if (horizon > 0 && end - begin > horizon) begin = end - horizon;
  std::vector<double> m(s.width(), 0.0);
  for (std::size_t t = begin; t < end; ++t) {
    for (std::size_t j = 0; j < s.width(); ++j) m[j] += s.windows(t, j);
  }
  for (double& v : m) v /= static_cast<double>(end - begin);
  return m;
}

// Offsets into states.states: always the final step, plus every stride-th
// earlier step while all rows of the batch are past their padding.
std::vector<std::size_t> supervised_positions(const BatchStates& states,
                                              std::span<const BehaviorSequence* const> batch,
                                              std::size_t stride) {
  std::vector<std::size_t> positions = {states.states.size() - 1};
  if (stride == 0) return positions;
  std::size_t deepest_padding = 0;
  for (const auto* s : batch) deepest_padding = std::max(deepest_padding, s->padding);
  const std::size_t last = states.first + states.states.size() - 1;
  for (std::size_t back = stride; back <= last; back += stride) {
    const std::size_t t = last - back;
    if (t < std::max(states.first, deepest_padding)) break;
    positions.push_back(t - states.first);
  }
  return positions;
}

std::size_t argmax_row(const Matrix& m, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) best = j;
  }
  return best;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string to_json(const TrainConfig& config) { return config_json(config).dump(); }

TrainConfig train_config_from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::config, "training config is not valid JSON");
  return config_from(j);
}

Matrix embed_all(const EncoderParams& encoder, std::span<const BehaviorSequence> dataset) {
  Matrix out(dataset.size(), encoder.hidden_dim());
  SeededRng unused(0);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto z = encode(encoder, dataset[i], DropoutSpec::inference(), unused);
    std::copy(z.values.begin(), z.values.end(), out.row(i).begin());
  }
  return out;
}

EncoderParams warmup(const TrainConfig& config, std::span<const BehaviorSequence> dataset, SeededRng& rng,
                     std::vector<double>* losses) {
  config.validate();
  if (dataset.empty()) fail(ErrorKind::contract, "warm-up needs a non-empty dataset");
  const std::size_t d = dataset.front().width();
  ModelParams m;
  m.encoder = init_encoder(d, config.hidden, config.layers, rng);
  if (config.warmup_epochs == 0) return m.encoder;
  m.head = init_head(config.hidden, d, rng);  // decoder: k -> d, discarded afterwards

  std::vector<Matrix> params = flatten(m);
  AdamState adam = AdamState::zeros_like(params);
  const AdamHyper hyper{config.learning_rate};
  const DropoutSpec dropout{config.dropout, config.dropout > 0.0};

  for (std::size_t epoch = 1; epoch <= config.warmup_epochs; ++epoch) {
    const auto order = shuffled(dataset.size(), rng);
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const BehaviorSequence*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&dataset[order[i]]);
      try {
        Tape tape;
        const ModelVars vars = register_parameters(tape, m);
        const BatchStates states = encode_batch_states(tape, vars, batch, dropout, rng);
        const auto positions = supervised_positions(states, batch, config.supervise_stride);
        Var loss{};
        for (std::size_t p = 0; p < positions.size(); ++p) {
          // Target: mean feature vector of the trailing horizon.
          const std::size_t t = states.first + positions[p];
          Matrix target(batch.size(), d);
          for (std::size_t b = 0; b < batch.size(); ++b) {
            const auto mean = mean_features(*batch[b], t + 1, config.warmup_horizon);
            std::copy(mean.begin(), mean.end(), target.row(b).begin());
          }
          const Var pred = tape.add_row(tape.matmul(states.states[positions[p]], vars.head_weights_t), vars.head_bias);
          const Var diff = tape.sub(pred, tape.constant(std::move(target)));
          const Var sq = tape.sum(tape.mul(diff, diff));
          loss = p == 0 ? sq : tape.add(loss, sq);
        }
        loss = tape.scale(loss, 1.0 / static_cast<double>(batch.size() * d * positions.size()));
        const double value = tape.value(loss)(0, 0);
        if (!std::isfinite(value)) fail(ErrorKind::numeric, "loss evaluated to " + std::to_string(value));
        total += value * static_cast<double>(batch.size());
        tape.backward(loss);
        adam_step(params, collect_gradients(tape, vars), adam, hyper);
        unflatten(params, m);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        fail(ErrorKind::numeric, "non-finite warm-up loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(begin / config.batch_size) + ": " + e.what());
      }
    }
    if (losses) losses->push_back(total / static_cast<double>(dataset.size()));
  }
  return m.encoder;
}

ClusterInit init_clusters(const Matrix& points, std::size_t clusters, SeededRng& rng) {
  const std::size_t n = points.rows();
  if (clusters < 1) fail(ErrorKind::contract, "need at least one cluster");
  {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) rows.emplace_back(points.row(i).begin(), points.row(i).end());
    std::sort(rows.begin(), rows.end());
    const auto distinct = static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
    if (distinct < clusters) {
      fail(ErrorKind::degenerate, "k-means needs " + std::to_string(clusters) + " distinct points, got " +
                                      std::to_string(distinct));
    }
  }
  if (!points.all_finite()) fail(ErrorKind::numeric, "k-means input contains non-finite values");

  ClusterInit out;
  out.centroids = Matrix(clusters, points.cols());
  auto set_centroid = [&](std::size_t j, std::size_t i) {
    std::copy(points.row(i).begin(), points.row(i).end(), out.centroids.row(j).begin());
  };
  set_centroid(0, rng.index(n));
  std::vector<double> nearest_d(n);
  for (std::size_t i = 0; i < n; ++i) nearest_d[i] = squared_distance(points.row(i), out.centroids.row(0));
  for (std::size_t j = 1; j < clusters; ++j) {
    double total = 0.0;
    for (double v : nearest_d) total += v;
    const double pick = rng.uniform() * total;
    double acc = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      acc += nearest_d[i];
      if (nearest_d[i] > 0.0 && acc > pick) {
        chosen = i;
        break;
      }
    }
    if (chosen == n) {  // rounding at the top end of the cumulative sum
      for (std::size_t i = n; i-- > 0;) {
        if (nearest_d[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    }
    set_centroid(j, chosen);
    for (std::size_t i = 0; i < n; ++i) {
      nearest_d[i] = std::min(nearest_d[i], squared_distance(points.row(i), out.centroids.row(j)));
    }
  }

  auto assign = [&](std::vector<std::size_t>& labels) {
    double distortion = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      labels[i] = nearest(out.centroids, points.row(i), &d);
      distortion += d;
    }
    return distortion;
  };
  out.assignment.assign(n, 0);
  out.distortion.push_back(assign(out.assignment));
  for (out.iterations = 0; out.iterations < 100;) {
    Matrix sums(clusters, points.cols());
    std::vector<std::size_t> counts(clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[out.assignment[i]];
      auto dst = sums.row(out.assignment[i]);
      const auto src = points.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    for (std::size_t j = 0; j < clusters; ++j) {
      if (counts[j] == 0) continue;  // an emptied cluster keeps its centroid
      for (std::size_t c = 0; c < points.cols(); ++c) {
        out.centroids(j, c) = sums(j, c) / static_cast<double>(counts[j]);
      }
    }
    ++out.iterations;
    std::vector<std::size_t> next(n);
    out.distortion.push_back(assign(next));
    const bool fixpoint = next == out.assignment;
    out.assignment = std::move(next);
    if (fixpoint) break;
  }
  return out;
}

std::vector<std::size_t> refresh_pseudo_labels(const ModelParams& model, std::span<const BehaviorSequence> dataset) {
  std::vector<std::size_t> labels;
  labels.reserve(dataset.size());
  SeededRng unused(0);
  for (const auto& s : dataset) {
    const auto z = encode(model.encoder, s, DropoutSpec::inference(), unused);
    labels.push_back(head(model.head, z.values).top_cluster());
  }
  return labels;
}

EvidentialHeadParams centroid_head(const Matrix& centroids, double temperature) {
  EvidentialHeadParams h{Matrix(centroids.rows(), centroids.cols()), Matrix(1, centroids.rows())};
  for (std::size_t j = 0; j < centroids.rows(); ++j) {
    double norm2 = 0.0;
    for (std::size_t c = 0; c < centroids.cols(); ++c) {
      h.weights(j, c) = 2.0 * temperature * centroids(j, c);
      norm2 += centroids(j, c) * centroids(j, c);
    }
    h.bias(0, j) = -temperature * norm2;
  }
  return h;
}

TrainResult train(const TrainConfig& config, std::span<const BehaviorSequence> raw, const EpochCallback& on_epoch) {
  config.validate();
  if (raw.empty()) fail(ErrorKind::contract, "training needs a non-empty dataset");
  for (const auto& s : raw) {
    if (s.length() != config.length) {
      fail(ErrorKind::config, "sequence '" + s.user + "' has T = " + std::to_string(s.length()) +
                                  " but the training config expects T = " + std::to_string(config.length));
    }
  }

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.config = config;
  ck.standardizer = Standardizer::fit(raw);
  std::vector<BehaviorSequence> data;
  data.reserve(raw.size());
  for (const auto& s : raw) data.push_back(ck.standardizer.apply(s));

  SeededRng init_rng(config.seed, 1), warm_rng(config.seed, 2), cluster_rng(config.seed, 3), rng(config.seed, 4);
  ModelParams& model = ck.model;
  model.head = init_head(config.hidden, config.clusters, init_rng);
  model.encoder = warmup(config, data, warm_rng, &result.warmup_losses);
  result.clusters = init_clusters(embed_all(model.encoder, data), config.clusters, cluster_rng);
  if (config.head_init == HeadInit::centroids) {
    model.head = centroid_head(result.clusters.centroids, config.head_temperature);
  }
  std::vector<std::size_t> labels = result.clusters.assignment;

  std::vector<Matrix> params = flatten(model);
  ck.adam = AdamState::zeros_like(params);
  const AdamHyper hyper{config.learning_rate};
  const DropoutSpec dropout{config.dropout, config.dropout > 0.0};

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (epoch > 1 && (epoch - 1) % config.refresh_period == 0) labels = refresh_pseudo_labels(model, data);
    const double lambda = anneal_lambda(epoch, config.anneal_epochs, config.lambda_max);
    const auto order = shuffled(data.size(), rng);
    double ce_sum = 0.0, kl_sum = 0.0, correct = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const BehaviorSequence*> batch;
      std::vector<std::size_t> targets;
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(&data[order[i]]);
        targets.push_back(labels[order[i]]);
      }
      try {
        Tape tape;
        const ModelVars vars = register_parameters(tape, model);
        const BatchStates states = encode_batch_states(tape, vars, batch, dropout, rng);
        const auto positions = supervised_positions(states, batch, config.supervise_stride);
        Var loss{};
        LossBreakdown mean{};
        for (std::size_t p = 0; p < positions.size(); ++p) {
          const Var z = apply_dropout(tape, states.states[positions[p]], dropout, rng);
          const Var alpha = head_batch(tape, vars, z);
          LossBreakdown part;
          const Var l = evidential_loss_batch(tape, alpha, targets, lambda, &part);
          loss = p == 0 ? l : tape.add(loss, l);
          mean.ce += part.ce;
          mean.kl += part.kl;
          if (p == 0) {
            const Matrix& a = tape.value(alpha);
            for (std::size_t b = 0; b < targets.size(); ++b) correct += argmax_row(a, b) == targets[b] ? 1.0 : 0.0;
          }
        }
        const double positions_n = static_cast<double>(positions.size());
        if (positions.size() > 1) loss = tape.scale(loss, 1.0 / positions_n);
        const double value = tape.value(loss)(0, 0);
        if (!std::isfinite(value)) fail(ErrorKind::numeric, "loss evaluated to " + std::to_string(value));
        ce_sum += mean.ce / positions_n * static_cast<double>(batch.size());
        kl_sum += mean.kl / positions_n * static_cast<double>(batch.size());
        tape.backward(loss);
        adam_step(params, collect_gradients(tape, vars), ck.adam, hyper);
        unflatten(params, model);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        fail(ErrorKind::numeric, "non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_index) + ": " + e.what());
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.lambda = lambda;
    m.ce_loss = ce_sum / static_cast<double>(data.size());
    m.kl_loss = kl_sum / static_cast<double>(data.size());
    m.total_loss = m.ce_loss + lambda * m.kl_loss;
    m.pseudo_accuracy = correct / static_cast<double>(data.size());
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  ck.epoch = config.epochs;
  ck.rng_state = rng.state();
  const auto payload = encode_payload(checkpoint_to_file(ck));
  ck.digest = sha256_hex(payload.data(), payload.size());
  return result;
}

void write_epochs_csv(const std::filesystem::path& path, std::span<const EpochMetrics> epochs) {
  std::string out = "epoch,total_loss,ce_loss,kl_loss,lambda,pseudo_accuracy\n";
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.total_loss, e.ce_loss,
                  e.kl_loss, e.lambda, e.pseudo_accuracy);
    out += buf;
  }
  write_text_file(path, out);
}

std::vector<EpochMetrics> read_epochs_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "epoch,total_loss,ce_loss,kl_loss,lambda,pseudo_accuracy") {
    fail(ErrorKind::data, path.string() + ": unexpected epochs header");
  }
  std::vector<EpochMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochMetrics e;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf", &e.epoch, &e.total_loss, &e.ce_loss, &e.kl_loss,
                    &e.lambda, &e.pseudo_accuracy) != 6) {
      fail(ErrorKind::data, path.string() + ": malformed epochs row '" + line + "'");
    }
    out.push_back(e);
  }
  return out;
}

ArrayFile checkpoint_to_file(const Checkpoint& ck) {
  ArrayFile file;
  const auto names = parameter_names(ck.model);
  const auto flat = flatten(ck.model);
  for (std::size_t i = 0; i < flat.size(); ++i) file.arrays.push_back(NamedArray::from_matrix(names[i], flat[i]));
  if (!ck.adam.first.empty()) {
    if (ck.adam.first.size() != flat.size() || ck.adam.second.size() != flat.size()) {
      fail(ErrorKind::shape, "Adam state does not match the parameter list");
    }
    for (std::size_t i = 0; i < flat.size(); ++i) {
      file.arrays.push_back(NamedArray::from_matrix("adam.first." + names[i], ck.adam.first[i]));
    }
    for (std::size_t i = 0; i < flat.size(); ++i) {
      file.arrays.push_back(NamedArray::from_matrix("adam.second." + names[i], ck.adam.second[i]));
    }
  }
  file.arrays.push_back({"standardizer.mean", {ck.standardizer.mean.size()}, ck.standardizer.mean});
  file.arrays.push_back({"standardizer.scale", {ck.standardizer.scale.size()}, ck.standardizer.scale});
  json rng = json::array();
  for (std::uint64_t w : ck.rng_state) rng.push_back(hex64(w));
  json meta{{"format", "evsn-checkpoint"},
            {"format_version", Checkpoint::kFormatVersion},
            {"config", config_json(ck.config)},
            {"epoch", ck.epoch},
            {"adam_step", ck.adam.step},
            {"has_adam", !ck.adam.first.empty()},
            {"rng_state", rng},
            {"parameters", names}};
  file.metadata = meta.dump();
  return file;
}

Checkpoint checkpoint_from_file(const ArrayFile& file) {
  const json meta = json::parse(file.metadata, nullptr, false);
  if (meta.is_discarded() || meta.value("format", "") != "evsn-checkpoint") {
    fail(ErrorKind::data, "not a checkpoint (metadata format tag missing)");
  }
  if (meta.value("format_version", 0u) != Checkpoint::kFormatVersion) {
    fail(ErrorKind::data, "unsupported checkpoint format version " + meta["format_version"].dump());
  }
  Checkpoint ck;
  ck.config = config_from(meta.at("config"));
  ck.epoch = meta.at("epoch").get<std::size_t>();
  const auto& rng = meta.at("rng_state");
  if (!rng.is_array() || rng.size() != 4) fail(ErrorKind::data, "checkpoint RNG state must hold 4 words");
  for (std::size_t i = 0; i < 4; ++i) ck.rng_state[i] = std::stoull(rng[i].get<std::string>(), nullptr, 16);

  const Matrix first = file.get("encoder.l0.wz").to_matrix();
  SeededRng shape_rng(0);
  ck.model = init_model(first.rows(), ck.config.hidden, ck.config.layers, ck.config.clusters, shape_rng);
  const auto names = parameter_names(ck.model);
  std::vector<Matrix> flat;
  for (const auto& n : names) flat.push_back(file.get(n).to_matrix());
  unflatten(flat, ck.model);
  if (meta.value("has_adam", false)) {
    for (const auto& n : names) ck.adam.first.push_back(file.get("adam.first." + n).to_matrix());
    for (const auto& n : names) ck.adam.second.push_back(file.get("adam.second." + n).to_matrix());
    ck.adam.step = meta.at("adam_step").get<std::uint64_t>();
  }
  ck.standardizer.mean = file.get("standardizer.mean").values;
  ck.standardizer.scale = file.get("standardizer.scale").values;
  if (ck.standardizer.width() != first.rows() || ck.standardizer.scale.size() != first.rows()) {
    fail(ErrorKind::data, "standardizer width does not match the encoder input");
  }
  const auto payload = encode_payload(file);
  ck.digest = sha256_hex(payload.data(), payload.size());
  return ck;
}

std::string save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const ArrayFile file = checkpoint_to_file(checkpoint);
  write_array_file(path, file);
  const auto payload = encode_payload(file);
  return sha256_hex(payload.data(), payload.size());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return checkpoint_from_file(read_array_file(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::data, path.string() + ": malformed checkpoint metadata: " + e.what());
  }
}

}  // namespace evsn
