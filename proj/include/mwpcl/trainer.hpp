#pragma once

#include "mwpcl/miner.hpp"
#include "mwpcl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mwpcl::train {

struct TrainConfig {
  double margin = 0.2;
  double alpha = 5.0;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs_stage1 = 30;
  std::size_t epochs_stage2 = 30;
  std::size_t batch_size = 16;
  std::size_t triples_per_batch = 5;
  std::size_t beam = 3;
  std::uint64_t seed = 1;
  /// "combined" (equation + alpha * contrastive) or "equation".
  std::string stage1_loss = "combined";
  nn::ModelConfig model;

  std::string train_corpus;
  std::string dev_corpus;
  std::string triples;
  std::vector<std::string> triple_corpora;
  std::string checkpoint = "model.ckpt.json";
  std::string metrics_log = "metrics.jsonl";
  bool masked_numbers = false;

  void validate() const;
};

/// Flat `key = value` file; '#' starts a comment. Unknown keys are errors.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::filesystem::path& path);

// --- losses ---------------------------------------------------------------

/// max(0, margin + cos(e, e_neg) - cos(e, e_pos)); zero-norm vectors give cos = 0.
double contrastive_loss(std::span<const double> e, std::span<const double> e_pos, std::span<const double> e_neg, double margin);
nn::Var contrastive_loss(nn::Tape& tape, nn::Var e, nn::Var e_pos, nn::Var e_neg, double margin);

/// -log P(gold | problem) of a teacher-forced decode.
nn::Var equation_loss(nn::Tape& tape, const nn::DecodeResult& result);
double equation_loss(const nn::DecodeResult& result);

/// A triple whose members are resolved to problems.
struct ResolvedTriple {
  const ProblemInstance* base;
  const ProblemInstance* positive;
  std::string positive_path;
  const ProblemInstance* negative;
};

struct CombinedLoss {
  nn::Var total;
  nn::Var equation_sum;
  nn::Var contrastive_sum;
  double value = 0.0;
  double equation_value = 0.0;
  double contrastive_value = 0.0;
};

/// Sum over members' equation losses plus alpha times the summed margin losses.
/// Each member is encoded in train mode with dropout seed derived from
/// `dropout_seed` and its position in the batch.
CombinedLoss combined_loss(nn::Tape& tape, const nn::Model& model, std::span<const ResolvedTriple> batch, double alpha, double margin,
                           std::uint64_t dropout_seed, nn::Mode mode = nn::Mode::Train);

/// Deterministic mixing of seed components.
std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts);

// --- optimizer ------------------------------------------------------------

/// Adaptive moments with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon, double weight_decay);
  void step(std::span<double> params, std::span<const double> grad);
  void reset();
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, wd_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// --- training -------------------------------------------------------------

struct EpochMetrics {
  int stage = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_acc_eq = 0.0;
  double dev_acc_ans = 0.0;
};

struct TrainData {
  Corpus train;
  Corpus dev;
  std::vector<mine::ContrastiveTriple> triples;
  /// Extra problems referenced by triples but not trained on in stage II.
  Corpus triple_pool;
};

struct TrainResult {
  nn::Model model;
  std::vector<EpochMetrics> log;
  EpochMetrics best;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int stage, std::size_t epoch, std::size_t batch);
  std::size_t batch() const { return batch_; }

 private:
  std::size_t batch_;
};

void write_metrics_line(std::ostream& out, const EpochMetrics& m);

/// Stage I on contrastive triples, stage II on the whole training corpus, dev
/// evaluation after every epoch; returns the best-dev model.
TrainResult train_two_stage(const TrainConfig& config, const TrainData& data, std::ostream* metrics_out = nullptr);

/// Loads corpora and triples named by the config, trains, writes checkpoint and metrics.
TrainResult run_training(const TrainConfig& config);

}  // namespace mwpcl::train
