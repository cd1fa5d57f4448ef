#include "mwpcl/model.hpp"

#include "mwpcl/log.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

namespace mwpcl::nn {

// --- vocabulary -----------------------------------------------------------

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& words) {
  words_ = {"<unk>", "<num>"};
  for (const auto& w : words) {
    if (w != "<unk>" && w != "<num>") words_.push_back(w);
  }
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
}

Vocab Vocab::build(const std::vector<const Corpus*>& corpora) {
  std::set<std::string> words;
  for (const Corpus* corpus : corpora) {
    for (const auto& p : *corpus) {
      std::vector<bool> is_number(p.tokens.size(), false);
      for (std::size_t pos : p.number_positions) is_number[pos] = true;
      for (std::size_t t = 0; t < p.tokens.size(); ++t) {
        if (!is_number[t]) words.insert(p.tokens[t]);
      }
    }
  }
  return Vocab(std::vector<std::string>(words.begin(), words.end()));
}

std::size_t Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

// --- model ----------------------------------------------------------------

Model::Model(ModelConfig config, Vocab vocab, std::uint64_t init_seed) : config_(std::move(config)), vocab_(std::move(vocab)) {
  if (config_.dim < 2 || config_.dim % 2 != 0) throw std::invalid_argument("model dimension must be even and >= 2");
  if (config_.layers < 1) throw std::invalid_argument("encoder needs at least one layer");
  build_params();
  params_.init_uniform(-0.08, 0.08, init_seed);
}

void Model::build_params() {
  const std::size_t d = config_.dim;
  const std::size_t h = d / 2;
  params_.add("embed", vocab_.size(), d);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string prefix = "enc." + std::to_string(l) + "." + dir + ".";
      params_.add(prefix + "w_ih", 3 * h, d);
      params_.add(prefix + "w_hh", 3 * h, h);
      params_.add(prefix + "b_ih", 3 * h);
      params_.add(prefix + "b_hh", 3 * h);
    }
  }
  params_.add("dec.op_emb", eq::kOpCount, d);
  params_.add("dec.const_emb", config_.constants.size(), d);
  params_.add("dec.att_goal", d, d);
  params_.add("dec.att_state", d, d);
  params_.add("dec.att_bias", d);
  params_.add("dec.att_v", d);
  params_.add("dec.score_goal", d, d);
  params_.add("dec.score_ctx", d, d);
  params_.add("dec.score_cand", d, d);
  params_.add("dec.score_bias", d);
  params_.add("dec.score_v", d);
  params_.add("dec.left", 2 * d, 3 * d);
  params_.add("dec.left_bias", 2 * d);
  params_.add("dec.right", 2 * d, 4 * d);
  params_.add("dec.right_bias", 2 * d);
  params_.add("dec.merge", 2 * d, 3 * d);
  params_.add("dec.merge_bias", 2 * d);
}

std::size_t Model::candidate_count(std::size_t number_count) const { return eq::kOpCount + config_.constants.size() + number_count; }

eq::Token Model::candidate_token(std::size_t index) const {
  if (index < eq::kOpCount) return eq::Token::make_op(eq::kAllOps[index]);
  index -= eq::kOpCount;
  if (index < config_.constants.size()) return eq::Token::make_constant(config_.constants[index]);
  index -= config_.constants.size();
  return eq::Token::make_slot(static_cast<int>(index) + 1);
}

std::optional<std::size_t> Model::candidate_index(const eq::Token& token, std::size_t number_count) const {
  switch (token.kind) {
    case eq::Token::Kind::Operator: return static_cast<std::size_t>(token.op);
    case eq::Token::Kind::Constant: {
      auto it = std::find(config_.constants.begin(), config_.constants.end(), token.constant);
      if (it == config_.constants.end()) return std::nullopt;
      return eq::kOpCount + static_cast<std::size_t>(it - config_.constants.begin());
    }
    case eq::Token::Kind::Slot:
      if (token.slot < 1 || static_cast<std::size_t>(token.slot) > number_count) return std::nullopt;
      return eq::kOpCount + config_.constants.size() + static_cast<std::size_t>(token.slot - 1);
  }
  return std::nullopt;
}

bool Model::can_decode(const eq::EquationTree& tree, std::size_t number_count) const {
  if (tree.empty() || tree.size() > config_.max_output_len) return false;
  for (const auto& n : tree.nodes()) {
    if (!candidate_index(n.token, number_count)) return false;
  }
  return true;
}

Encoded Model::encode(Tape& tape, const ProblemInstance& problem, Mode mode, std::uint64_t seed) const {
  const std::size_t d = config_.dim;
  const std::size_t h = d / 2;

  std::vector<std::size_t> ids;
  ids.reserve(problem.tokens.size());
  for (const auto& tok : problem.tokens) ids.push_back(vocab_.id(tok));
  for (std::size_t pos : problem.number_positions) {
    if (pos < ids.size()) ids[pos] = Vocab::kNum;
  }
  if (ids.size() > config_.max_input_len) {
    log::warn("problem " + problem.id + ": " + std::to_string(ids.size()) + " tokens truncated to " + std::to_string(config_.max_input_len));
    ids.resize(config_.max_input_len);
  }
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  const std::size_t T = ids.size();

  const ParamRef embed = params_.get("embed");
  std::vector<Var> inputs;
  inputs.reserve(T);
  for (std::size_t id : ids) inputs.push_back(tape.param(embed.row(id)));

  Encoded enc;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    std::vector<Var> fwd(T);
    std::vector<Var> bwd(T);
    for (int pass = 0; pass < 2; ++pass) {
      const std::string prefix = "enc." + std::to_string(l) + (pass == 0 ? ".fwd." : ".bwd.");
      const ParamRef w_ih = params_.get(prefix + "w_ih");
      const ParamRef w_hh = params_.get(prefix + "w_hh");
      const ParamRef b_ih = params_.get(prefix + "b_ih");
      const ParamRef b_hh = params_.get(prefix + "b_hh");
      Var state = tape.zeros(h);
      for (std::size_t step = 0; step < T; ++step) {
        const std::size_t t = pass == 0 ? step : T - 1 - step;
        Var gx = tape.linear(w_ih, inputs[t], b_ih);
        Var gh = tape.linear(w_hh, state, b_hh);
        state = tape.gru(gx, gh, state);
        (pass == 0 ? fwd : bwd)[t] = state;
      }
    }
    std::vector<Var> outputs(T);
    for (std::size_t t = 0; t < T; ++t) outputs[t] = tape.concat({fwd[t], bwd[t]});
    enc.layer_pooled.push_back(tape.mean(outputs));
    inputs = std::move(outputs);
  }

  if (mode == Mode::Train && config_.dropout > 0.0) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution keep(1.0 - config_.dropout);
    const double scale = 1.0 / (1.0 - config_.dropout);
    std::vector<double> mask(d);
    for (auto& state : inputs) {
      for (double& m : mask) m = keep(rng) ? scale : 0.0;
      state = tape.mul(state, tape.constant(mask));
    }
  }
  enc.token_states = inputs;
  enc.problem = tape.mean(enc.token_states);
  enc.number_count = problem.numbers.size();

  const ParamRef att_state = params_.get("dec.att_state");
  for (Var s : enc.token_states) enc.attention_keys.push_back(tape.linear(att_state, s));

  const ParamRef op_emb = params_.get("dec.op_emb");
  const ParamRef const_emb = params_.get("dec.const_emb");
  for (std::size_t i = 0; i < eq::kOpCount; ++i) enc.candidate_embeddings.push_back(tape.param(op_emb.row(i)));
  for (std::size_t i = 0; i < config_.constants.size(); ++i) enc.candidate_embeddings.push_back(tape.param(const_emb.row(i)));
  for (std::size_t k = 0; k < problem.number_positions.size(); ++k) {
    std::size_t pos = problem.number_positions[k];
    if (pos >= T) {
      log::warn("problem " + problem.id + ": number n" + std::to_string(k + 1) + " lies past the truncation point");
      pos = T - 1;
    }
    enc.candidate_embeddings.push_back(enc.token_states[pos]);
  }
  const ParamRef score_cand = params_.get("dec.score_cand");
  for (Var e : enc.candidate_embeddings) enc.candidate_keys.push_back(tape.linear(score_cand, e));
  enc.attention_v = tape.param(params_.get("dec.att_v"));
  enc.score_v = tape.param(params_.get("dec.score_v"));
  return enc;
}

Model::StepScores Model::score_step(Tape& tape, const Encoded& enc, Var goal) const {
  Var query = tape.linear(params_.get("dec.att_goal"), goal, params_.get("dec.att_bias"));
  std::vector<Var> energies;
  energies.reserve(enc.attention_keys.size());
  for (Var key : enc.attention_keys) energies.push_back(tape.dot(enc.attention_v, tape.tanh(tape.add(query, key))));
  Var weights = tape.softmax(tape.stack(energies));
  Var context = tape.weighted_sum(weights, enc.token_states);

  Var base = tape.add(tape.linear(params_.get("dec.score_goal"), goal, params_.get("dec.score_bias")),
                      tape.linear(params_.get("dec.score_ctx"), context));
  std::vector<Var> scores;
  scores.reserve(enc.candidate_keys.size());
  for (Var key : enc.candidate_keys) scores.push_back(tape.dot(enc.score_v, tape.tanh(tape.add(base, key))));
  return StepScores{context, tape.log_softmax(tape.stack(scores))};
}

Model::Hypothesis Model::initial(const Encoded& enc) const {
  Hypothesis h;
  h.goal = enc.problem;
  return h;
}

bool Model::allowed(const Hypothesis& h, std::size_t choice, std::size_t max_len) const {
  // An operator needs one more leaf than it fills; the tree must still close within max_len.
  if (choice < eq::kOpCount) return h.tokens.size() + 1 + (h.need + 1) <= max_len;
  return h.tokens.size() + 1 + (h.need - 1) <= max_len;
}

void Model::advance(Tape& tape, const Encoded& enc, Hypothesis& h, const StepScores& s, std::size_t choice) const {
  const std::size_t step = h.tokens.size();
  auto log_probs = tape.value(s.log_probs);
  h.step_log_probs.emplace_back(log_probs.begin(), log_probs.end());
  h.step_vars.push_back(tape.pick(s.log_probs, choice));
  h.score += log_probs[choice];
  h.choices.push_back(choice);
  const eq::Token token = candidate_token(choice);
  h.tokens.push_back(token);
  h.nodes.push_back(NodeEmbedding{h.path, token, Var{}, {}});

  if (token.is_op()) {
    Var op_embedding = enc.candidate_embeddings[choice];
    h.frames.push_back(Frame{token.op, h.goal, s.context, op_embedding, Var{}, step, h.path});
    Var in = tape.concat({h.goal, s.context, op_embedding});
    h.goal = tape.gated_tanh(tape.linear(params_.get("dec.left"), in, params_.get("dec.left_bias")));
    h.path += 'L';
    h.need += 1;
    return;
  }

  Var subtree = enc.candidate_embeddings[choice];
  h.nodes[step].var = subtree;
  h.need -= 1;
  while (!h.frames.empty()) {
    Frame& f = h.frames.back();
    if (!f.left.valid()) {
      f.left = subtree;
      Var in = tape.concat({f.goal, f.context, f.op_embedding, subtree});
      h.goal = tape.gated_tanh(tape.linear(params_.get("dec.right"), in, params_.get("dec.right_bias")));
      h.path = f.path + 'R';
      return;
    }
    Var in = tape.concat({f.op_embedding, f.left, subtree});
    subtree = tape.gated_tanh(tape.linear(params_.get("dec.merge"), in, params_.get("dec.merge_bias")));
    h.nodes[f.step].var = subtree;
    h.frames.pop_back();
  }
}

DecodeResult Model::finish(Tape& tape, Hypothesis h) const {
  DecodeResult r;
  r.total = tape.sum(h.step_vars);
  r.total_log_prob = tape.scalar(r.total);
  for (auto& n : h.nodes) n.vector = tape.copy(n.var);
  r.tokens = std::move(h.tokens);
  r.nodes = std::move(h.nodes);
  r.step_log_probs = std::move(h.step_log_probs);
  r.choices = std::move(h.choices);
  r.step_vars = std::move(h.step_vars);
  return r;
}

DecodeResult Model::decode_teacher_forced(Tape& tape, const Encoded& enc, const eq::EquationTree& gold) const {
  if (gold.empty()) throw DecodeError("empty gold tree");
  if (gold.size() > config_.max_output_len) {
    throw DecodeError("gold equation has " + std::to_string(gold.size()) + " tokens; maximum is " + std::to_string(config_.max_output_len));
  }
  Hypothesis h = initial(enc);
  for (const auto& node : gold.nodes()) {
    auto choice = candidate_index(node.token, enc.number_count);
    if (!choice) throw DecodeError("token " + node.token.str() + " is not a decoder candidate");
    StepScores s = score_step(tape, enc, h.goal);
    advance(tape, enc, h, s, *choice);
  }
  return finish(tape, std::move(h));
}

DecodeResult Model::decode_greedy(Tape& tape, const Encoded& enc, std::size_t max_len) const {
  if (max_len == 0) throw DecodeError("max_len must be positive");
  Hypothesis h = initial(enc);
  while (h.need > 0) {
    StepScores s = score_step(tape, enc, h.goal);
    auto lp = tape.value(s.log_probs);
    std::size_t best = lp.size();
    for (std::size_t c = 0; c < lp.size(); ++c) {
      if (allowed(h, c, max_len) && (best == lp.size() || lp[c] > lp[best])) best = c;
    }
    advance(tape, enc, h, s, best);
  }
  return finish(tape, std::move(h));
}

std::vector<DecodeResult> Model::decode_beam(Tape& tape, const Encoded& enc, std::size_t beam, std::size_t max_len) const {
  if (beam == 0) throw std::invalid_argument("beam must be >= 1");
  if (max_len == 0) return {};

  struct Expansion {
    double score;
    std::size_t hyp;
    std::size_t choice;
  };

  std::vector<Hypothesis> live{initial(enc)};
  std::vector<Hypothesis> done;
  while (!live.empty()) {
    std::vector<StepScores> scores;
    std::vector<Expansion> expansions;
    for (std::size_t i = 0; i < live.size(); ++i) {
      scores.push_back(score_step(tape, enc, live[i].goal));
      auto lp = tape.value(scores.back().log_probs);
      for (std::size_t c = 0; c < lp.size(); ++c) {
        if (allowed(live[i], c, max_len)) expansions.push_back(Expansion{live[i].score + lp[c], i, c});
      }
    }
    std::stable_sort(expansions.begin(), expansions.end(), [](const Expansion& a, const Expansion& b) { return a.score > b.score; });
    if (expansions.size() > beam) expansions.resize(beam);

    std::vector<Hypothesis> next;
    for (const auto& e : expansions) {
      Hypothesis h = live[e.hyp];
      advance(tape, enc, h, scores[e.hyp], e.choice);
      (h.need == 0 ? done : next).push_back(std::move(h));
    }
    live = std::move(next);

    // Scores only fall as hypotheses grow, so stop once the beam's worth of
    // finished hypotheses all beat every live one.
    if (done.size() >= beam && !live.empty()) {
      std::vector<double> finished;
      for (const auto& h : done) finished.push_back(h.score);
      std::nth_element(finished.begin(), finished.begin() + static_cast<std::ptrdiff_t>(beam - 1), finished.end(), std::greater<>());
      const double kth = finished[beam - 1];
      const bool any_better = std::any_of(live.begin(), live.end(), [&](const Hypothesis& h) { return h.score > kth; });
      if (!any_better) live.clear();
    }
  }

  std::stable_sort(done.begin(), done.end(), [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  if (done.size() > beam) done.resize(beam);
  std::vector<DecodeResult> out;
  out.reserve(done.size());
  for (auto& h : done) out.push_back(finish(tape, std::move(h)));
  return out;
}

// --- checkpoints ------------------------------------------------------------

namespace {
constexpr const char* kCheckpointFormat = "mwpcl-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void Model::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  auto& cfg = j["config"];
  cfg["dim"] = config_.dim;
  cfg["layers"] = config_.layers;
  cfg["dropout"] = config_.dropout;
  cfg["max_input_len"] = config_.max_input_len;
  cfg["max_output_len"] = config_.max_output_len;
  cfg["operators"] = nlohmann::ordered_json::array();
  for (auto op : eq::kAllOps) cfg["operators"].push_back(std::string(1, eq::op_symbol(op)));
  cfg["constants"] = nlohmann::ordered_json::array();
  for (const auto& c : config_.constants) cfg["constants"].push_back(rational_to_string(c));
  cfg["vocab"] = vocab_.words();
  auto& tensors = j["tensors"] = nlohmann::ordered_json::array();
  for (const auto& e : params_.entries()) {
    nlohmann::ordered_json t;
    t["name"] = e.name;
    t["shape"] = {e.ref.rows, e.ref.cols};
    auto values = params_.values(e.ref);
    t["data"] = std::vector<double>(values.begin(), values.end());
    tensors.push_back(std::move(t));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", std::string()) != kCheckpointFormat) throw std::runtime_error(path.string() + " is not a checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  const auto& cfg = j.at("config");
  ModelConfig config;
  config.dim = cfg.at("dim").get<std::size_t>();
  config.layers = cfg.at("layers").get<std::size_t>();
  config.dropout = cfg.at("dropout").get<double>();
  config.max_input_len = cfg.at("max_input_len").get<std::size_t>();
  config.max_output_len = cfg.at("max_output_len").get<std::size_t>();
  std::vector<std::string> ops = cfg.at("operators").get<std::vector<std::string>>();
  if (ops.size() != eq::kOpCount) throw std::runtime_error("checkpoint operator set differs from this build");
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i] != std::string(1, eq::op_symbol(eq::kAllOps[i]))) throw std::runtime_error("checkpoint operator order differs");
  }
  config.constants.clear();
  for (const auto& c : cfg.at("constants")) config.constants.push_back(parse_rational(c.get<std::string>()));
  auto words = cfg.at("vocab").get<std::vector<std::string>>();
  if (words.size() < 2 || words[0] != "<unk>" || words[1] != "<num>") throw std::runtime_error("checkpoint vocabulary is malformed");
  Model model(config, Vocab(std::vector<std::string>(words.begin() + 2, words.end())), 0);

  const auto& tensors = j.at("tensors");
  if (tensors.size() != model.params_.entries().size()) throw std::runtime_error("checkpoint tensor count mismatch");
  for (const auto& t : tensors) {
    const std::string name = t.at("name").get<std::string>();
    const ParamRef ref = model.params_.get(name);
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != ref.rows || shape[1] != ref.cols) throw std::runtime_error("shape mismatch for tensor " + name);
    const auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != ref.size()) throw std::runtime_error("data size mismatch for tensor " + name);
    std::copy(data.begin(), data.end(), model.params_.values(ref).begin());
  }
  return model;
}

const NodeEmbedding& subtree_embedding_at(const DecodeResult& result, const std::string& path) {
  for (const auto& n : result.nodes) {
    if (n.path == path) return n;
  }
  throw std::out_of_range("no node at path '" + path + "'");
}

}  // namespace mwpcl::nn
