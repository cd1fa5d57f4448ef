#include "mwpcl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace mwpcl::analysis {

bool answers_match(const Rational& predicted, const Rational& gold, double tolerance) {
  const Rational diff = predicted > gold ? Rational(predicted - gold) : Rational(gold - predicted);
  const Rational magnitude = gold < 0 ? Rational(-gold) : gold;
  const Rational scale = magnitude > 1 ? magnitude : Rational(1);
  return rational_to_double(diff) <= tolerance * rational_to_double(scale);
}

Prediction judge(const ProblemInstance& problem, const std::vector<eq::Token>& predicted) {
  Prediction p;
  p.id = problem.id;
  p.tokens = predicted;
  if (predicted.empty()) return p;
  p.equation_correct = predicted == eq::to_polish(problem.gold);
  if (p.equation_correct) {
    p.answer_correct = true;
    return p;
  }
  try {
    const Rational value = eq::evaluate(eq::from_polish(predicted), problem.numbers);
    p.answer_correct = answers_match(value, problem.answer);
  } catch (const eq::EvalError&) {
    p.answer_correct = false;
  }
  return p;
}

AccuracyReport accuracy(const Corpus& corpus, const nn::Model& model, std::size_t beam) {
  AccuracyReport report;
  nn::Tape tape(model.params().values());
  std::size_t eq_ok = 0;
  std::size_t ans_ok = 0;
  for (const auto& problem : corpus) {
    tape.clear();
    const auto enc = model.encode(tape, problem, nn::Mode::Infer, 0);
    const auto hyps = model.decode_beam(tape, enc, beam, model.config().max_output_len);
    Prediction p = judge(problem, hyps.empty() ? std::vector<eq::Token>{} : hyps.front().tokens);
    eq_ok += p.equation_correct;
    ans_ok += p.answer_correct;
    report.predictions.push_back(std::move(p));
  }
  if (!corpus.empty()) {
    report.acc_eq = static_cast<double>(eq_ok) / static_cast<double>(corpus.size());
    report.acc_ans = static_cast<double>(ans_ok) / static_cast<double>(corpus.size());
  }
  return report;
}

std::vector<Vector> representations(const Corpus& corpus, const nn::Model& model) {
  std::vector<Vector> out;
  out.reserve(corpus.size());
  nn::Tape tape(model.params().values());
  for (const auto& problem : corpus) {
    tape.clear();
    const auto enc = model.encode(tape, problem, nn::Mode::Infer, 0);
    out.push_back(tape.copy(enc.problem));
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

std::vector<PrototypeCluster> prototype_clusters(std::span<const Vector> points, std::span<const std::string> keys) {
  if (points.size() != keys.size()) throw std::invalid_argument("points and keys differ in length");
  std::map<std::string, PrototypeCluster> by_key;
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& c = by_key[keys[i]];
    c.key = keys[i];
    c.members.push_back(i);
  }
  std::vector<PrototypeCluster> out;
  for (auto& [key, c] : by_key) {
    const std::size_t dim = points[c.members.front()].size();
    c.center.assign(dim, 0.0);
    for (std::size_t m : c.members) {
      for (std::size_t j = 0; j < dim; ++j) c.center[j] += points[m][j];
    }
    for (double& v : c.center) v /= static_cast<double>(c.members.size());
    for (std::size_t m : c.members) c.similarity.push_back(cosine(points[m], c.center));
    out.push_back(std::move(c));
  }
  return out;
}

int similarity_interval(double similarity) {
  if (similarity >= 1.0) return 10;
  if (similarity < 0.0) return 1;
  return std::clamp(static_cast<int>(std::floor(similarity * 10.0)) + 1, 1, 10);
}

std::vector<IntervalRow> interval_accuracy(std::span<const Vector> points, std::span<const std::string> keys,
                                          const std::vector<bool>& correct) {
  if (correct.size() != points.size()) throw std::invalid_argument("correctness flags differ in length");
  std::vector<IntervalRow> rows(10);
  for (int x = 0; x < 10; ++x) rows[static_cast<std::size_t>(x)].interval = x + 1;
  for (const auto& cluster : prototype_clusters(points, keys)) {
    if (cluster.members.size() < 2) continue;
    for (std::size_t i = 0; i < cluster.members.size(); ++i) {
      auto& row = rows[static_cast<std::size_t>(similarity_interval(cluster.similarity[i]) - 1)];
      ++row.count;
      row.correct += correct[cluster.members[i]] ? 1 : 0;
    }
  }
  return rows;
}

std::vector<IntervalRow> interval_accuracy(const Corpus& corpus, const nn::Model& model, std::size_t beam) {
  const auto reps = representations(corpus, model);
  const auto keys = prototype_keys(corpus);
  const auto report = accuracy(corpus, model, beam);
  std::vector<bool> correct;
  for (const auto& p : report.predictions) correct.push_back(p.answer_correct);
  return interval_accuracy(reps, keys, correct);
}

ChIndex calinski_harabasz(std::span<const Vector> points, std::span<const std::string> labels) {
  if (points.size() != labels.size()) throw std::invalid_argument("points and labels differ in length");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  const std::size_t n = points.size();
  const std::size_t k = groups.size();
  if (k < 2) throw std::invalid_argument("Calinski-Harabasz needs at least two clusters");
  if (n <= k) throw std::invalid_argument("Calinski-Harabasz needs more points than clusters");
  const std::size_t dim = points.front().size();

  Vector grand(dim, 0.0);
  for (const auto& p : points) {
    for (std::size_t j = 0; j < dim; ++j) grand[j] += p[j];
  }
  for (double& v : grand) v /= static_cast<double>(n);

  ChIndex out;
  for (const auto& [label, members] : groups) {
    Vector mean(dim, 0.0);
    for (std::size_t m : members) {
      for (std::size_t j = 0; j < dim; ++j) mean[j] += points[m][j];
    }
    for (double& v : mean) v /= static_cast<double>(members.size());
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = mean[j] - grand[j];
      out.between += static_cast<double>(members.size()) * diff * diff;
    }
    for (std::size_t m : members) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = points[m][j] - mean[j];
        out.within += diff * diff;
      }
    }
  }
  if (out.within == 0.0) {
    out.infinite = true;
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  out.value = (out.between / static_cast<double>(k - 1)) / (out.within / static_cast<double>(n - k));
  return out;
}

std::vector<ProbePair> read_probe_pairs(std::istream& in) {
  std::vector<ProbePair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ProbePair p;
    if (!std::getline(ss, p.first, '\t') || !std::getline(ss, p.second, '\t') || !std::getline(ss, p.tag)) {
      throw std::runtime_error("malformed probe pair line: " + line);
    }
    if (!p.tag.empty() && p.tag.back() == '\r') p.tag.pop_back();
    if (p.tag != "semantic" && p.tag != "prototype") throw std::runtime_error("probe tag must be semantic or prototype: " + p.tag);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<LayerSimilarity> layer_similarity_probe(std::span<const ProbePair> pairs, const Corpus& corpus, const nn::Model& model) {
  std::unordered_map<std::string, const ProblemInstance*> by_id;
  for (const auto& p : corpus) by_id[p.id] = &p;
  const std::size_t layers = model.config().layers;

  std::unordered_map<std::string, std::vector<Vector>> cache;
  nn::Tape tape(model.params().values());
  auto pooled = [&](const std::string& id) -> const std::vector<Vector>& {
    auto it = cache.find(id);
    if (it != cache.end()) return it->second;
    auto found = by_id.find(id);
    if (found == by_id.end()) throw std::runtime_error("probe pair references unknown problem " + id);
    tape.clear();
    const auto enc = model.encode(tape, *found->second, nn::Mode::Infer, 0);
    std::vector<Vector> per_layer;
    for (nn::Var v : enc.layer_pooled) per_layer.push_back(tape.copy(v));
    return cache.emplace(id, std::move(per_layer)).first->second;
  };

  std::vector<LayerSimilarity> table(layers);
  std::vector<std::size_t> sem_count(layers, 0);
  std::vector<std::size_t> proto_count(layers, 0);
  for (std::size_t l = 0; l < layers; ++l) table[l].layer = l + 1;
  for (const auto& pair : pairs) {
    const auto a = pooled(pair.first);
    const auto& b = pooled(pair.second);
    for (std::size_t l = 0; l < layers; ++l) {
      const double sim = cosine(a[l], b[l]);
      if (pair.tag == "semantic") {
        table[l].semantic += sim;
        ++sem_count[l];
      } else {
        table[l].prototype += sim;
        ++proto_count[l];
      }
    }
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (sem_count[l]) table[l].semantic /= static_cast<double>(sem_count[l]);
    if (proto_count[l]) table[l].prototype /= static_cast<double>(proto_count[l]);
  }
  return table;
}

void export_embeddings(const Corpus& corpus, const nn::Model& model, std::ostream& out, std::size_t beam) {
  const auto reps = representations(corpus, model);
  const auto report = accuracy(corpus, model, beam);
  std::ostringstream buf;
  buf.precision(17);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    buf << corpus[i].id << '\t' << eq::prototype_key(corpus[i].gold) << '\t' << (report.predictions[i].answer_correct ? 1 : 0);
    for (double v : reps[i]) buf << '\t' << v;
    buf << '\n';
  }
  out << buf.str();
}

std::vector<std::string> prototype_keys(const Corpus& corpus, bool canonicalize_commutative) {
  std::vector<std::string> keys;
  keys.reserve(corpus.size());
  for (const auto& p : corpus) {
    keys.push_back(eq::prototype_key(canonicalize_commutative ? eq::canonicalize_commutative(p.gold) : p.gold));
  }
  return keys;
}

}  // namespace mwpcl::analysis
