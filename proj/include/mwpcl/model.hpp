#pragma once

// Sequence encoder (stacked bidirectional GRU) and goal-driven tree decoder.
//
// The decoder expands one node per step in pre-order. Each node carries a goal
// vector; the goal attends over the encoder token states and scores every
// candidate token (operators, constants, and this problem's number slots).
// An operator spawns a left goal, and once the left subtree is finished its
// embedding conditions the right goal. Finished subtrees are folded into one
// embedding per node, so the root embedding summarizes the whole tree.

#include "mwpcl/autodiff.hpp"
#include "mwpcl/corpus.hpp"
#include "mwpcl/params.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mwpcl::nn {

class Vocab {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kNum = 1;

  Vocab();
  explicit Vocab(const std::vector<std::string>& words);
  /// Sorted, de-duplicated words of every corpus; number tokens map to <num>.
  static Vocab build(const std::vector<const Corpus*>& corpora);

  std::size_t id(const std::string& token) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t layers = 2;
  double dropout = 0.5;
  std::size_t max_input_len = 120;
  std::size_t max_output_len = 45;
  std::vector<Rational> constants = {Rational(1), Rational(100), Rational(157, 50)};
};

enum class Mode { Train, Infer };

struct Encoded {
  std::vector<Var> token_states;
  Var problem;
  std::vector<Var> layer_pooled;
  std::size_t number_count = 0;

  // Per-problem decoder constants, computed once.
  std::vector<Var> attention_keys;
  std::vector<Var> candidate_embeddings;
  std::vector<Var> candidate_keys;
  Var attention_v;
  Var score_v;
};

struct NodeEmbedding {
  std::string path;
  eq::Token token;
  Var var;
  std::vector<double> vector;
};

struct DecodeResult {
  std::vector<eq::Token> tokens;
  /// Pre-order, parallel to `tokens`.
  std::vector<NodeEmbedding> nodes;
  std::vector<std::vector<double>> step_log_probs;
  std::vector<std::size_t> choices;
  std::vector<Var> step_vars;
  double total_log_prob = 0.0;
  Var total;

  eq::EquationTree tree() const { return eq::from_polish(tokens); }
  const NodeEmbedding& root() const { return nodes.front(); }
};

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Model {
 public:
  Model(ModelConfig config, Vocab vocab, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::size_t candidate_count(std::size_t number_count) const;
  eq::Token candidate_token(std::size_t index) const;
  /// Candidate index of a gold token for a problem with `number_count` numbers.
  std::optional<std::size_t> candidate_index(const eq::Token& token, std::size_t number_count) const;
  /// Whether teacher forcing can reproduce this tree (constants known, length ok).
  bool can_decode(const eq::EquationTree& tree, std::size_t number_count) const;

  Encoded encode(Tape& tape, const ProblemInstance& problem, Mode mode, std::uint64_t seed) const;
  DecodeResult decode_teacher_forced(Tape& tape, const Encoded& encoded, const eq::EquationTree& gold) const;
  DecodeResult decode_greedy(Tape& tape, const Encoded& encoded, std::size_t max_len) const;
  /// Complete hypotheses, best first. Empty when none completes within max_len.
  std::vector<DecodeResult> decode_beam(Tape& tape, const Encoded& encoded, std::size_t beam, std::size_t max_len) const;

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  struct Frame {
    eq::Op op;
    Var goal;
    Var context;
    Var op_embedding;
    Var left;
    std::size_t step;
    std::string path;
  };
  struct Hypothesis {
    std::vector<eq::Token> tokens;
    std::vector<std::size_t> choices;
    std::vector<std::vector<double>> step_log_probs;
    std::vector<Var> step_vars;
    std::vector<NodeEmbedding> nodes;
    std::vector<Frame> frames;
    Var goal;
    std::string path;
    std::size_t need = 1;
    double score = 0.0;
  };
  struct StepScores {
    Var context;
    Var log_probs;
  };

  void build_params();
  StepScores score_step(Tape& tape, const Encoded& enc, Var goal) const;
  /// Applies candidate `choice` to `h` (whose step scores are `s`).
  void advance(Tape& tape, const Encoded& enc, Hypothesis& h, const StepScores& s, std::size_t choice) const;
  Hypothesis initial(const Encoded& enc) const;
  DecodeResult finish(Tape& tape, Hypothesis h) const;
  bool allowed(const Hypothesis& h, std::size_t choice, std::size_t max_len) const;

  ModelConfig config_;
  Vocab vocab_;
  ParamStore params_;
};

/// Vector at `path` ("" is the root) in a decoded tree.
const NodeEmbedding& subtree_embedding_at(const DecodeResult& result, const std::string& path);

}  // namespace mwpcl::nn
