#include "evsn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "evsn/array_file.hpp"
#include "evsn/error.hpp"

namespace evsn {

namespace {

std::optional<double> ratio(double num, double den) {
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

std::string missing_list(const std::vector<UserId>& users) {
  std::string out;
  for (std::size_t i = 0; i < users.size() && i < 5; ++i) out += (i ? ", " : "") + users[i];
  if (users.size() > 5) out += " and " + std::to_string(users.size() - 5) + " more";
  return out;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

}  // namespace

ConfusionMetrics confusion(const ConfusionCounts& c) {
  ConfusionMetrics m;
  m.counts = c;
  const auto total = static_cast<double>(c.total());
  if (total > 0.0) m.accuracy = 1.0 - static_cast<double>(c.fp + c.fn) / total;
  m.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  m.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  m.fpr = ratio(static_cast<double>(c.fp), static_cast<double>(c.fp + c.tn));
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

ConfusionMetrics confusion(const std::map<UserId, bool>& predicted, const std::map<UserId, bool>& truth) {
  ConfusionCounts c;
  std::vector<UserId> missing;
  for (const auto& [user, t] : truth) {
    auto it = predicted.find(user);
    if (it == predicted.end()) {
      missing.push_back(user);
      continue;
    }
    const bool p = it->second;
    (p ? (t ? c.tp : c.fp) : (t ? c.fn : c.tn)) += 1;
  }
  for (const auto& [user, p] : predicted) {
    if (!truth.contains(user)) missing.push_back(user);
  }
  if (!missing.empty()) fail(ErrorKind::contract, "prediction and truth users differ: " + missing_list(missing));
  return confusion(c);
}

RocCurve roc_auc(std::span<const double> scores, const std::vector<bool>& truth) {
  if (scores.size() != truth.size()) fail(ErrorKind::shape, "scores and truth differ in length");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) fail(ErrorKind::domain, "non-finite score at index " + std::to_string(i));
    positives += truth[i] ? 1 : 0;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) fail(ErrorKind::degenerate, "ROC needs both positive and negative users");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  const auto P = static_cast<double>(positives);
  const auto N = static_cast<double>(negatives);
  double tp = 0, fp = 0, area = 0;  // area in units of P*N
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    double group_tp = 0, group_fp = 0;
    for (; i < order.size() && scores[order[i]] == threshold; ++i) (truth[order[i]] ? group_tp : group_fp) += 1;
    area += group_fp * (2.0 * tp + group_tp) / 2.0;
    tp += group_tp;
    fp += group_fp;
    roc.points.push_back({threshold, fp / N, tp / P});
  }
  roc.auc = area / (P * N);
  return roc;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorKind::degenerate, "quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) fail(ErrorKind::config, "quantile must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

BaselineDetector baseline_kmeans_detector(std::span<const Matrix> user_embeddings, std::size_t clusters,
                                          double q, SeededRng& rng) {
  if (!(q >= 0.0 && q <= 1.0)) fail(ErrorKind::config, "baseline quantile must lie in [0, 1]");
  std::size_t n = 0, k = 0;
  for (const auto& m : user_embeddings) {
    if (m.rows() == 0) continue;
    if (k != 0 && m.cols() != k) fail(ErrorKind::shape, "embedding widths differ between users");
    k = m.cols();
    n += m.rows();
  }
  if (n == 0) fail(ErrorKind::degenerate, "baseline needs at least one embedding");
  Matrix points(n, k);
  std::size_t r = 0;
  for (const auto& m : user_embeddings) {
    for (std::size_t i = 0; i < m.rows(); ++i, ++r) std::copy(m.row(i).begin(), m.row(i).end(), points.row(r).begin());
  }
  BaselineDetector out;
  out.centroids = init_clusters(points, clusters, rng).centroids;
  auto nearest = [&](std::span<const double> z) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < out.centroids.rows(); ++j) best = std::min(best, distance(z, out.centroids.row(j)));
    return best;
  };
  std::vector<double> all;
  all.reserve(n);
  for (const auto& m : user_embeddings) {
    double worst = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double dist = nearest(m.row(i));
      all.push_back(dist);
      worst = std::max(worst, dist);
    }
    out.max_distance.push_back(worst);
  }
  out.threshold = quantile(std::move(all), q);
  for (std::size_t u = 0; u < user_embeddings.size(); ++u) {
    out.flagged.push_back(user_embeddings[u].rows() > 0 && out.max_distance[u] > out.threshold);
  }
  return out;
}

std::vector<Matrix> window_embeddings(const Checkpoint& checkpoint, std::span<const BehaviorSequence> raw,
                                      std::size_t skip) {
  const auto& enc = checkpoint.model.encoder;
  std::vector<Matrix> out;
  out.reserve(raw.size());
  for (const auto& seq : raw) {
    const BehaviorSequence s = checkpoint.standardizer.apply(seq);
    const std::size_t first = std::min(s.length(), s.padding + skip);
    Matrix m(s.length() - first, enc.hidden_dim());
    EncoderState state = initial_state(enc);
    for (std::size_t t = s.padding; t < s.length(); ++t) {
      advance(enc, state, s.windows.row(t));
      if (t >= first) std::copy(state.embedding().begin(), state.embedding().end(), m.row(t - first).begin());
    }
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

std::vector<double> multiply(const Matrix& c, std::span<const double> v) {
  std::vector<double> w(c.rows(), 0.0);
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.cols(); ++j) w[i] += c(i, j) * v[j];
  }
  return w;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 0.0)) return false;
  for (double& x : v) x /= n;
  return true;
}

void remove_component(std::vector<double>& v, std::span<const double> unit) {
  const double p = dot(v, unit);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * unit[i];
}

/// Dominant eigenvector of a symmetric PSD matrix, orthogonal to `against`.
std::vector<double> power_iteration(const Matrix& c, const std::vector<double>* against) {
  const std::size_t k = c.rows();
  std::vector<double> v(k);
  for (std::size_t i = 0; i < k; ++i) v[i] = 1.0 + static_cast<double>(i) / static_cast<double>(k);
  if (against) remove_component(v, *against);
  normalize(v);
  for (int iter = 0; iter < 200000; ++iter) {
    std::vector<double> w = multiply(c, v);
    if (against) remove_component(w, *against);
    if (!normalize(w)) {
      // v lies in the null space; any unit vector orthogonal to `against` will do.
      for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> e(k, 0.0);
        e[j] = 1.0;
        if (against) remove_component(e, *against);
        if (normalize(e)) return e;
      }
      return v;
    }
    double change = 0.0;
    for (std::size_t i = 0; i < k; ++i) change = std::max(change, std::abs(w[i] - v[i]));
    v = std::move(w);
    if (change < 1e-13) break;
  }
  return v;
}

void fix_sign(std::vector<double>& v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) {
    for (double& x : v) x = -x;
  }
}

}  // namespace

Projection project_2d(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t k = x.cols();
  if (n < 2 || k < 2) fail(ErrorKind::contract, "projection needs at least 2 embeddings of width >= 2");
  Projection p;
  p.mean.assign(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) p.mean[j] += x(i, j);
  }
  for (double& m : p.mean) m /= static_cast<double>(n);
  Matrix centered(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) centered(i, j) = x(i, j) - p.mean[j];
  }
  Matrix cov(k, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) cov(a, b) += centered(i, a) * centered(i, b);
    }
  }
  double trace = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) cov(a, b) /= static_cast<double>(n);
    trace += cov(a, a);
  }
  if (!(trace > 0.0)) fail(ErrorKind::degenerate, "all embeddings are identical; nothing to project");

  std::vector<double> c1 = power_iteration(cov, nullptr);
  fix_sign(c1);
  const double var1 = dot(c1, multiply(cov, c1));
  Matrix deflated = cov;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) deflated(a, b) -= var1 * c1[a] * c1[b];
  }
  std::vector<double> c2 = power_iteration(deflated, &c1);
  remove_component(c2, c1);
  normalize(c2);
  fix_sign(c2);
  const double var2 = dot(c2, multiply(cov, c2));

  p.components = Matrix(2, k);
  std::copy(c1.begin(), c1.end(), p.components.row(0).begin());
  std::copy(c2.begin(), c2.end(), p.components.row(1).begin());
  p.variance = {var1, var2};
  p.coordinates = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    p.coordinates(i, 0) = dot(centered.row(i), c1);
    p.coordinates(i, 1) = dot(centered.row(i), c2);
  }
  return p;
}

CorpusProjection project_corpus(const Checkpoint& checkpoint, std::span<const BehaviorSequence> raw) {
  CorpusProjection out;
  std::vector<BehaviorSequence> standardized;
  standardized.reserve(raw.size());
  for (const auto& s : raw) {
    standardized.push_back(checkpoint.standardizer.apply(s));
    out.users.push_back(s.user);
    out.labels.push_back(s.label);
  }
  const Matrix embeddings = embed_all(checkpoint.model.encoder, standardized);
  out.projection = project_2d(embeddings);
  out.assignments = Matrix(raw.size(), checkpoint.model.head.clusters());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto a = head(checkpoint.model.head, embeddings.row(i));
    std::copy(a.expected.begin(), a.expected.end(), out.assignments.row(i).begin());
  }
  return out;
}

std::vector<UserTruth> truth_from_sequences(std::span<const BehaviorSequence> sequences) {
  std::vector<UserTruth> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) {
    UserTruth t{s.user, s.label, 0};
    if (s.is_insider()) t.onset_end = s.window_end(s.onset);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<UserScore> aggregate_users(std::span<const ScoreRow> rows, std::span<const UserTruth> truth) {
  std::map<UserId, std::vector<const ScoreRow*>> by_user;
  for (const auto& r : rows) by_user[r.user].push_back(&r);
  std::vector<UserId> missing;
  std::map<UserId, const UserTruth*> known;
  for (const auto& t : truth) {
    known[t.user] = &t;
    if (!by_user.contains(t.user)) missing.push_back(t.user + " (no scores)");
  }
  for (const auto& [user, _] : by_user) {
    if (!known.contains(user)) missing.push_back(user + " (no label)");
  }
  if (!missing.empty()) fail(ErrorKind::data, "scores and labels cover different users: " + missing_list(missing));

  std::vector<UserScore> out;
  out.reserve(truth.size());
  for (const auto& t : truth) {
    UserScore s;
    s.user = t.user;
    s.label = t.label;
    s.insider = t.insider();
    double sum_u = 0.0;
    for (const ScoreRow* r : by_user[t.user]) {
      if (r->warmup) continue;
      s.windows += 1;
      sum_u += r->uncertainty;
      s.max_u = std::max(s.max_u, r->uncertainty);
      s.max_d = std::max(s.max_d, r->drift);
      s.max_s = std::max(s.max_s, r->score);
      if (r->alert) {
        s.alerts += 1;
        if (!s.insider || r->window_end >= t.onset_end) s.detected = true;
      }
    }
    if (s.windows > 0) s.mean_u = sum_u / static_cast<double>(s.windows);
    out.push_back(std::move(s));
  }
  return out;
}

EvaluationReport evaluate(const Checkpoint& checkpoint, std::span<const BehaviorSequence> raw,
                          std::span<const ScoreRow> rows, std::size_t skip_windows,
                          const EvaluationOptions& options) {
  EvaluationReport rep;
  rep.seed = options.seed;
  rep.config_digest = options.config_digest;
  const auto truth = truth_from_sequences(raw);
  rep.users = aggregate_users(rows, truth);

  ConfusionCounts det, base;
  std::vector<double> scores;
  std::vector<bool> labels;
  double insider_sum = 0.0, benign_sum = 0.0;
  std::size_t insiders = 0;
  for (const auto& u : rep.users) {
    (u.detected ? (u.insider ? det.tp : det.fp) : (u.insider ? det.fn : det.tn)) += 1;
    scores.push_back(u.max_s);
    labels.push_back(u.insider);
    (u.insider ? insider_sum : benign_sum) += u.max_s;
    insiders += u.insider ? 1 : 0;
  }
  rep.detector = confusion(det);
  rep.roc = roc_auc(scores, labels);
  if (insiders > 0) rep.mean_insider_score = insider_sum / static_cast<double>(insiders);
  if (insiders < rep.users.size()) rep.mean_benign_score = benign_sum / static_cast<double>(rep.users.size() - insiders);

  SeededRng rng(options.seed, 5);
  const auto windows = window_embeddings(checkpoint, raw, skip_windows);
  rep.baseline_detector = baseline_kmeans_detector(windows, checkpoint.config.clusters, options.baseline_quantile, rng);
  for (std::size_t i = 0; i < rep.users.size(); ++i) {
    const bool f = rep.baseline_detector.flagged[i];
    const bool t = rep.users[i].insider;
    (f ? (t ? base.tp : base.fp) : (t ? base.fn : base.tn)) += 1;
  }
  rep.baseline = confusion(base);

  rep.projection = project_corpus(checkpoint, raw);
  return rep;
}

namespace {

nlohmann::ordered_json optional_value(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_projection_csv(const std::filesystem::path& path, const CorpusProjection& p) {
  std::string out = "user,label,pc1,pc2,cluster";
  for (std::size_t j = 0; j < p.assignments.cols(); ++j) out += ",p" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < p.users.size(); ++i) {
    const auto row = p.assignments.row(i);
    const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    out += p.users[i] + "," + p.labels[i] + "," + number(p.projection.coordinates(i, 0)) + "," +
           number(p.projection.coordinates(i, 1)) + "," + std::to_string(top);
    for (double v : row) out += "," + number(v);
    out += "\n";
  }
  write_text_file(path, out);
}

std::string metrics_json(const EvaluationReport& r) {
  std::size_t insiders = 0;
  for (const auto& u : r.users) insiders += u.insider ? 1 : 0;
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["accuracy"] = optional_value(r.detector.accuracy);
  j["precision"] = optional_value(r.detector.precision);
  j["recall"] = optional_value(r.detector.recall);
  j["f1"] = optional_value(r.detector.f1);
  j["fpr"] = optional_value(r.detector.fpr);
  j["auc"] = r.roc.auc;
  j["baseline_fpr"] = optional_value(r.baseline.fpr);
  j["n_users"] = r.users.size();
  j["n_insiders"] = insiders;
  j["seed"] = r.seed;
  j["config_digest"] = r.config_digest;
  j["counts"] = {{"tp", r.detector.counts.tp}, {"fp", r.detector.counts.fp},
                 {"tn", r.detector.counts.tn}, {"fn", r.detector.counts.fn}};
  j["baseline_counts"] = {{"tp", r.baseline.counts.tp}, {"fp", r.baseline.counts.fp},
                          {"tn", r.baseline.counts.tn}, {"fn", r.baseline.counts.fn}};
  j["baseline_threshold"] = r.baseline_detector.threshold;
  j["mean_insider_score"] = r.mean_insider_score;
  j["mean_benign_score"] = r.mean_benign_score;
  j["explained_variance"] = {r.projection.projection.variance[0], r.projection.projection.variance[1]};
  return j.dump(2) + "\n";
}

void export_report(const std::filesystem::path& dir, const EvaluationReport& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create report directory " + dir.string() + ": " + ec.message());

  write_text_file(dir / "metrics.json", metrics_json(r));

  std::string roc = "threshold,fpr,tpr\n";
  for (const auto& p : r.roc.points) roc += number(p.threshold) + "," + number(p.fpr) + "," + number(p.tpr) + "\n";
  write_text_file(dir / "roc.csv", roc);

  std::string scores = "user,label,insider,max_u,max_d,max_s,mean_u,windows,alerts,detected,baseline_distance,baseline_flagged\n";
  for (std::size_t i = 0; i < r.users.size(); ++i) {
    const auto& u = r.users[i];
    scores += u.user + "," + u.label + "," + (u.insider ? "1" : "0") + "," + number(u.max_u) + "," + number(u.max_d) +
              "," + number(u.max_s) + "," + number(u.mean_u) + "," + std::to_string(u.windows) + "," +
              std::to_string(u.alerts) + "," + (u.detected ? "1" : "0") + "," +
              number(r.baseline_detector.max_distance[i]) + "," + (r.baseline_detector.flagged[i] ? "1" : "0") + "\n";
  }
  write_text_file(dir / "scores.csv", scores);

  write_projection_csv(dir / "projection.csv", r.projection);

  write_epochs_csv(dir / "epochs.csv", r.epochs);
}

}  // namespace evsn
