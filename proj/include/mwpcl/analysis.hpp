#pragma once

// Accuracy, prototype clustering diagnostics, and embedding export.

#include "mwpcl/model.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mwpcl::analysis {

using Vector = std::vector<double>;

inline constexpr double kAnswerTolerance = 1e-4;

/// |predicted - gold| <= tol * max(1, |gold|)
bool answers_match(const Rational& predicted, const Rational& gold, double tolerance = kAnswerTolerance);

struct Prediction {
  std::string id;
  std::vector<eq::Token> tokens;  // empty when decoding produced nothing
  bool equation_correct = false;
  bool answer_correct = false;
};

struct AccuracyReport {
  double acc_eq = 0.0;
  double acc_ans = 0.0;
  std::vector<Prediction> predictions;
};

Prediction judge(const ProblemInstance& problem, const std::vector<eq::Token>& predicted);
AccuracyReport accuracy(const Corpus& corpus, const nn::Model& model, std::size_t beam);

/// Problem representations (mean-pooled final encoder states, inference mode).
std::vector<Vector> representations(const Corpus& corpus, const nn::Model& model);

struct PrototypeCluster {
  std::string key;
  std::vector<std::size_t> members;  // indices into the input
  Vector center;
  std::vector<double> similarity;  // cosine of each member to the center
};

double cosine(std::span<const double> a, std::span<const double> b);

/// One cluster per distinct key, ordered by key.
std::vector<PrototypeCluster> prototype_clusters(std::span<const Vector> points, std::span<const std::string> keys);

struct IntervalRow {
  int interval = 0;  // x: similarity in [0.1(x-1), 0.1x); x = 10 also holds 1.0, x = 1 also holds negatives
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
  friend bool operator==(const IntervalRow&, const IntervalRow&) = default;
};

int similarity_interval(double similarity);

/// Ten rows, x = 1..10. Clusters with a single member are skipped.
std::vector<IntervalRow> interval_accuracy(std::span<const Vector> points, std::span<const std::string> keys,
                                          const std::vector<bool>& correct);
std::vector<IntervalRow> interval_accuracy(const Corpus& corpus, const nn::Model& model, std::size_t beam = 3);

struct ChIndex {
  double value = 0.0;
  bool infinite = false;  // within-cluster scatter was zero
  double between = 0.0;   // trace(B)
  double within = 0.0;    // trace(W)
};

/// Calinski-Harabasz index. Requires at least two labels and more points than labels.
ChIndex calinski_harabasz(std::span<const Vector> points, std::span<const std::string> labels);

struct ProbePair {
  std::string first;
  std::string second;
  std::string tag;  // "semantic" or "prototype"
};

std::vector<ProbePair> read_probe_pairs(std::istream& in);

struct LayerSimilarity {
  std::size_t layer = 0;
  double semantic = 0.0;
  double prototype = 0.0;
};

/// Mean cosine of per-layer mean-pooled token states for each tag group.
std::vector<LayerSimilarity> layer_similarity_probe(std::span<const ProbePair> pairs, const Corpus& corpus, const nn::Model& model);

/// id, prototype key, correctness flag (0/1), then the representation, tab-separated, no header.
void export_embeddings(const Corpus& corpus, const nn::Model& model, std::ostream& out, std::size_t beam = 3);

std::vector<std::string> prototype_keys(const Corpus& corpus, bool canonicalize_commutative = false);

}  // namespace mwpcl::analysis
