#include "mwpcl/trainer.hpp"

#include "mwpcl/analysis.hpp"
#include "mwpcl/log.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace mwpcl::train {

// --- config -----------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(margin > 0.0)) throw std::invalid_argument("margin must be > 0");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (triples_per_batch < 1) throw std::invalid_argument("triples_per_batch must be >= 1");
  if (beam < 1) throw std::invalid_argument("beam must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (stage1_loss != "combined" && stage1_loss != "equation") throw std::invalid_argument("stage1_loss must be combined or equation");
  if (model.dropout < 0.0 || model.dropout >= 1.0) throw std::invalid_argument("dropout must be in [0, 1)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

}  // namespace

TrainConfig parse_config(std::istream& in) {
  TrainConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq_pos = line.find('=');
    if (eq_pos == std::string::npos) throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq_pos));
    const std::string value = trim(line.substr(eq_pos + 1));
    try {
      if (key == "margin") c.margin = std::stod(value);
      else if (key == "alpha") c.alpha = std::stod(value);
      else if (key == "learning_rate" || key == "lr") c.learning_rate = std::stod(value);
      else if (key == "weight_decay") c.weight_decay = std::stod(value);
      else if (key == "beta1") c.beta1 = std::stod(value);
      else if (key == "beta2") c.beta2 = std::stod(value);
      else if (key == "epsilon") c.epsilon = std::stod(value);
      else if (key == "epochs_stage1") c.epochs_stage1 = std::stoul(value);
      else if (key == "epochs_stage2") c.epochs_stage2 = std::stoul(value);
      else if (key == "batch_size") c.batch_size = std::stoul(value);
      else if (key == "triples_per_batch") c.triples_per_batch = std::stoul(value);
      else if (key == "beam") c.beam = std::stoul(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "stage1_loss") c.stage1_loss = value;
      else if (key == "dim") c.model.dim = std::stoul(value);
      else if (key == "layers") c.model.layers = std::stoul(value);
      else if (key == "dropout") c.model.dropout = std::stod(value);
      else if (key == "max_input_len") c.model.max_input_len = std::stoul(value);
      else if (key == "max_output_len") c.model.max_output_len = std::stoul(value);
      else if (key == "constants") {
        c.model.constants.clear();
        for (const auto& v : split_list(value)) c.model.constants.push_back(parse_rational(v));
      }
      else if (key == "train_corpus") c.train_corpus = value;
      else if (key == "dev_corpus") c.dev_corpus = value;
      else if (key == "triples") c.triples = value;
      else if (key == "triple_corpora") c.triple_corpora = split_list(value);
      else if (key == "checkpoint") c.checkpoint = value;
      else if (key == "metrics_log") c.metrics_log = value;
      else if (key == "masked_numbers") c.masked_numbers = parse_bool(value);
      else throw std::invalid_argument("unknown key");
    } catch (const std::logic_error& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + " (" + key + "): " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_config(in);
}

// --- losses -----------------------------------------------------------------

double contrastive_loss(std::span<const double> e, std::span<const double> e_pos, std::span<const double> e_neg, double margin) {
  const double sim_pos = analysis::cosine(e, e_pos);
  const double sim_neg = analysis::cosine(e, e_neg);
  auto zero = [](std::span<const double> v) { return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }); };
  if (zero(e) || zero(e_pos) || zero(e_neg)) log::warn("contrastive loss: zero-norm embedding, cosine taken as 0");
  return std::max(0.0, margin + sim_neg - sim_pos);
}

nn::Var contrastive_loss(nn::Tape& tape, nn::Var e, nn::Var e_pos, nn::Var e_neg, double margin) {
  const std::size_t before = tape.degenerate_cosines();
  nn::Var sim_pos = tape.cosine(e, e_pos);
  nn::Var sim_neg = tape.cosine(e, e_neg);
  if (tape.degenerate_cosines() != before) log::warn("contrastive loss: zero-norm embedding, cosine taken as 0");
  nn::Var gap = tape.sub(tape.add(tape.constant({margin}), sim_neg), sim_pos);
  return tape.relu(gap);
}

nn::Var equation_loss(nn::Tape& tape, const nn::DecodeResult& result) { return tape.scale(result.total, -1.0); }

double equation_loss(const nn::DecodeResult& result) { return -result.total_log_prob; }

std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = splitmix(seed);
  for (std::uint64_t p : parts) h = splitmix(h ^ splitmix(p));
  return h;
}

CombinedLoss combined_loss(nn::Tape& tape, const nn::Model& model, std::span<const ResolvedTriple> batch, double alpha, double margin,
                           std::uint64_t dropout_seed, nn::Mode mode) {
  if (batch.empty()) throw std::invalid_argument("combined_loss on an empty batch");
  std::vector<nn::Var> equation_terms;
  std::vector<nn::Var> contrastive_terms;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ResolvedTriple& t = batch[i];
    const ProblemInstance* members[3] = {t.base, t.positive, t.negative};
    nn::DecodeResult decoded[3];
    for (std::size_t m = 0; m < 3; ++m) {
      const auto enc = model.encode(tape, *members[m], mode, mix_seed(dropout_seed, {i, m}));
      decoded[m] = model.decode_teacher_forced(tape, enc, members[m]->gold);
      equation_terms.push_back(equation_loss(tape, decoded[m]));
    }
    const nn::Var e = decoded[0].root().var;
    const nn::Var e_pos = nn::subtree_embedding_at(decoded[1], t.positive_path).var;
    const nn::Var e_neg = decoded[2].root().var;
    contrastive_terms.push_back(contrastive_loss(tape, e, e_pos, e_neg, margin));
  }
  CombinedLoss out;
  out.equation_sum = tape.sum(equation_terms);
  out.contrastive_sum = tape.sum(contrastive_terms);
  out.total = tape.add(out.equation_sum, tape.scale(out.contrastive_sum, alpha));
  out.value = tape.scalar(out.total);
  out.equation_value = tape.scalar(out.equation_sum);
  out.contrastive_value = tape.scalar(out.contrastive_sum);
  return out;
}

// --- optimizer ----------------------------------------------------------------

AdamW::AdamW(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon, double weight_decay)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon), wd_(weight_decay), m_(size, 0.0), v_(size, 0.0) {}

void AdamW::reset() {
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
  t_ = 0;
}

void AdamW::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw std::invalid_argument("AdamW: size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= lr_ * wd_ * params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

// --- training loop --------------------------------------------------------------

TrainingDiverged::TrainingDiverged(int stage, std::size_t epoch, std::size_t batch)
    : std::runtime_error("loss diverged in stage " + std::to_string(stage) + ", epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
      batch_(batch) {}

void write_metrics_line(std::ostream& out, const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["stage"] = m.stage;
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  j["dev_acc_eq"] = m.dev_acc_eq;
  j["dev_acc_ans"] = m.dev_acc_ans;
  out << j.dump() << '\n';
  out.flush();
}

namespace {

bool better(const EpochMetrics& a, const EpochMetrics& b) {
  if (a.dev_acc_ans != b.dev_acc_ans) return a.dev_acc_ans > b.dev_acc_ans;
  return a.dev_acc_eq > b.dev_acc_eq;
}

Corpus decodable(const Corpus& corpus, const nn::Model& model, const char* what) {
  Corpus out;
  for (const auto& p : corpus) {
    if (model.can_decode(p.gold, p.numbers.size())) {
      out.push_back(p);
    } else {
      log::warn(std::string(what) + " problem " + p.id + " cannot be produced by the decoder; skipped");
    }
  }
  return out;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

TrainResult train_two_stage(const TrainConfig& config, const TrainData& data, std::ostream* metrics_out) {
  config.validate();
  nn::Model model(config.model, nn::Vocab::build({&data.train, &data.triple_pool}), mix_seed(config.seed, {0xC0FFEE}));

  const Corpus train = decodable(data.train, model, "training");
  if (train.empty()) throw std::invalid_argument("stage-II corpus is empty");
  const Corpus pool = decodable(data.triple_pool, model, "triple-pool");

  std::unordered_map<std::string, const ProblemInstance*> by_id;
  for (const auto& p : pool) by_id[p.id] = &p;
  for (const auto& p : train) by_id[p.id] = &p;
  std::vector<ResolvedTriple> triples;
  for (const auto& t : data.triples) {
    auto b = by_id.find(t.base);
    auto p = by_id.find(t.positive);
    auto n = by_id.find(t.negative);
    if (b == by_id.end() || p == by_id.end() || n == by_id.end()) {
      log::warn("triple (" + t.base + ", " + t.positive + ", " + t.negative + ") references unknown problems; skipped");
      continue;
    }
    if (!p->second->gold.find(t.positive_path)) {
      log::warn("triple positive path '" + t.positive_path + "' invalid for " + t.positive + "; skipped");
      continue;
    }
    triples.push_back(ResolvedTriple{b->second, p->second, t.positive_path, n->second});
  }

  TrainResult result{model, {}, {}};
  bool have_best = false;
  std::vector<double> grad(model.params().size(), 0.0);
  AdamW optimizer(model.params().size(), config.learning_rate, config.beta1, config.beta2, config.epsilon, config.weight_decay);
  nn::Tape tape(model.params().values());
  const double stage1_alpha = config.stage1_loss == "equation" ? 0.0 : config.alpha;

  auto finish_epoch = [&](int stage, std::size_t epoch, double loss) {
    const auto report = analysis::accuracy(data.dev, model, config.beam);
    EpochMetrics m{stage, epoch, loss, report.acc_eq, report.acc_ans};
    result.log.push_back(m);
    if (metrics_out) write_metrics_line(*metrics_out, m);
    if (!have_best || better(m, result.best)) {
      have_best = true;
      result.best = m;
      std::copy(model.params().values().begin(), model.params().values().end(), result.model.params().values().begin());
    }
  };

  auto apply = [&](nn::Var loss, int stage, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(tape.scalar(loss))) throw TrainingDiverged(stage, epoch, batch);
    std::fill(grad.begin(), grad.end(), 0.0);
    tape.backward(loss, grad);
    optimizer.step(model.params().values(), grad);
    if (!model.params().all_finite()) throw TrainingDiverged(stage, epoch, batch);
  };

  if (triples.empty()) {
    if (config.epochs_stage1 > 0) log::warn("no contrastive triples; stage I skipped");
  } else {
    optimizer.reset();
    for (std::size_t epoch = 1; epoch <= config.epochs_stage1; ++epoch) {
      const auto order = shuffled(triples.size(), mix_seed(config.seed, {1, epoch}));
      double total = 0.0;
      std::size_t batch_index = 0;
      for (std::size_t start = 0; start < order.size(); start += config.triples_per_batch, ++batch_index) {
        std::vector<ResolvedTriple> batch;
        for (std::size_t i = start; i < std::min(order.size(), start + config.triples_per_batch); ++i) batch.push_back(triples[order[i]]);
        tape.clear();
        const auto loss = combined_loss(tape, model, batch, stage1_alpha, config.margin, mix_seed(config.seed, {1, epoch, batch_index}));
        apply(loss.total, 1, epoch, batch_index);
        total += loss.value;
      }
      finish_epoch(1, epoch, total / static_cast<double>(triples.size()));
    }
  }

  optimizer.reset();
  for (std::size_t epoch = 1; epoch <= config.epochs_stage2; ++epoch) {
    const auto order = shuffled(train.size(), mix_seed(config.seed, {2, epoch}));
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      tape.clear();
      std::vector<nn::Var> terms;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        const auto& problem = train[order[i]];
        const auto enc = model.encode(tape, problem, nn::Mode::Train, mix_seed(config.seed, {2, epoch, batch_index, i - start}));
        terms.push_back(equation_loss(tape, model.decode_teacher_forced(tape, enc, problem.gold)));
      }
      const nn::Var loss = tape.sum(terms);
      apply(loss, 2, epoch, batch_index);
      total += tape.scalar(loss);
    }
    finish_epoch(2, epoch, total / static_cast<double>(train.size()));
  }

  if (!have_best) {
    // No epochs ran; the initial parameters stand.
    result.model = model;
  }
  return result;
}

TrainResult run_training(const TrainConfig& config) {
  config.validate();
  CorpusOptions options;
  options.masked_numbers = config.masked_numbers;
  TrainData data;
  if (config.train_corpus.empty()) throw std::invalid_argument("train_corpus is required");
  data.train = load_corpus(config.train_corpus, options);
  if (!config.dev_corpus.empty()) data.dev = load_corpus(config.dev_corpus, options);
  if (!config.triples.empty()) {
    std::ifstream in(config.triples);
    if (!in) throw std::runtime_error("cannot open triples " + config.triples);
    data.triples = mine::read_triples(in);
  }
  for (const auto& path : config.triple_corpora) {
    for (auto& p : load_corpus(path, options)) data.triple_pool.push_back(std::move(p));
  }
  std::ofstream metrics(config.metrics_log);
  if (!metrics) throw std::runtime_error("cannot write metrics log " + config.metrics_log);
  TrainResult result = train_two_stage(config, data, &metrics);
  result.model.save(config.checkpoint);
  return result;
}

}  // namespace mwpcl::train
