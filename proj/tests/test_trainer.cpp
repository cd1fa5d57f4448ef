#include "mwpcl/corpusgen.hpp"
#include "mwpcl/miner.hpp"
#include "mwpcl/trainer.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace mwpcl;
using namespace mwpcl::nn;
using namespace mwpcl::train;

namespace {

struct Setup {
  Corpus corpus = gen::generate(gen::default_pack(), 3, 8);
  std::vector<ResolvedTriple> triples;
  Model model;
  explicit Setup(std::size_t dim = 8) : model(config(dim), Vocab::build({&corpus}), 21) {
    mine::MineOptions opt{8, 1, mine::LeafMode::Wildcard};
    std::map<std::string, const ProblemInstance*> by_id;
    for (const auto& p : corpus) by_id[p.id] = &p;
    for (const auto& t : mine::mine_triples(corpus, corpus, corpus, opt))
      triples.push_back(ResolvedTriple{by_id.at(t.base), by_id.at(t.positive), t.positive_path, by_id.at(t.negative)});
  }
  static ModelConfig config(std::size_t dim) {
    ModelConfig c;
    c.dim = dim;
    return c;
  }
};

}  // namespace

TEST_CASE("contrastive loss boundary cases") {
  const std::vector<double> e = {1.0, 0.0};
  const std::vector<double> neg = {-1.0, 0.0};
  CHECK(std::abs(contrastive_loss(e, e, neg, 0.2)) <= 1e-12);
  const std::vector<double> any = {0.3, -0.7};
  CHECK(std::abs(contrastive_loss(e, any, any, 0.2) - 0.2) <= 1e-12);
  // cos(e, e+) = 0.5, cos(e, e-) = 0.4
  const std::vector<double> pos = {0.5, std::sqrt(0.75)};
  const std::vector<double> n2 = {0.4, std::sqrt(0.84)};
  CHECK(std::abs(contrastive_loss(e, pos, n2, 0.2) - 0.1) <= 1e-12);
}

TEST_CASE("contrastive loss stays within [0, margin + 2]") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> a(4), b(4), c(4);
    for (int k = 0; k < 4; ++k) {
      a[k] = n(rng);
      b[k] = n(rng);
      c[k] = n(rng);
    }
    const double l = contrastive_loss(a, b, c, 0.2);
    CHECK(l >= 0.0);
    CHECK(l <= 2.2 + 1e-12);
  }
}

TEST_CASE("tape contrastive loss matches the double version") {
  ParamStore store;
  Tape tape(store.values());
  const std::vector<double> a = {0.3, 0.1, -0.4}, b = {0.2, 0.2, 0.1}, c = {-0.5, 0.3, 0.9};
  CHECK(tape.scalar(contrastive_loss(tape, tape.constant(a), tape.constant(b), tape.constant(c), 0.2)) ==
        doctest::Approx(contrastive_loss(a, b, c, 0.2)).epsilon(1e-14));
}

TEST_CASE("equation loss closed forms") {
  DecodeResult r;
  r.total_log_prob = 0.0;
  CHECK(equation_loss(r) == 0.0);
  r.total_log_prob = -3 * std::log(7.0);
  CHECK(equation_loss(r) == doctest::Approx(3 * std::log(7.0)));
}

TEST_CASE("combined loss identities") {
  Setup s;
  REQUIRE(s.triples.size() >= 3);
  const std::span<const ResolvedTriple> batch(s.triples.data(), 3);
  Tape tape(s.model.params().values());
  const auto zero = combined_loss(tape, s.model, batch, 0.0, 0.2, 9);
  // sum the three members' equation losses with the same dropout seeds
  std::vector<Var> terms;
  for (std::size_t i = 0; i < 3; ++i) {
    const ProblemInstance* members[3] = {batch[i].base, batch[i].positive, batch[i].negative};
    for (std::size_t m = 0; m < 3; ++m) {
      const auto enc = s.model.encode(tape, *members[m], Mode::Train, mix_seed(9, {i, m}));
      terms.push_back(equation_loss(tape, s.model.decode_teacher_forced(tape, enc, members[m]->gold)));
    }
  }
  const double summed = tape.scalar(tape.sum(terms));
  CHECK(zero.value == summed);  // bitwise
  CHECK(zero.value == zero.equation_value);
  const auto five = combined_loss(tape, s.model, batch, 5.0, 0.2, 9);
  CHECK(five.value == doctest::Approx(five.equation_value + 5.0 * five.contrastive_value));
  CHECK(five.equation_value == zero.equation_value);
}

TEST_CASE("combined loss gradient matches finite differences") {
  Setup s;
  // wider than the training init so that every parameter group carries a gradient well above difference-quotient noise
  s.model.params().init_uniform(-0.5, 0.5, 99);
  const std::span<const ResolvedTriple> batch(s.triples.data(), 3);
  const auto worst = oracle::gradient_check(s.model, [&](Tape& tape, std::span<double> grad) {
    const auto loss = combined_loss(tape, s.model, batch, 5.0, 0.2, 4);
    if (!grad.empty()) tape.backward(loss.total, grad);
    return loss.value;
  });
  for (const auto& [name, err] : worst) {
    CAPTURE(name);
    CHECK(err.scale > 0.0);
    CHECK(err.relative < 1e-4);
  }
}

TEST_CASE("AdamW") {
  std::vector<double> p = {1.0, -2.0};
  const std::vector<double> zero = {0.0, 0.0};
  AdamW opt(2, 0.1, 0.9, 0.999, 1e-8, 0.0);
  opt.step(p, zero);
  CHECK(p == std::vector<double>{1.0, -2.0});
  AdamW decay(2, 0.1, 0.9, 0.999, 1e-8, 0.01);
  decay.step(p, zero);
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.01 * 1.0));
  // first step moves each parameter by lr against the gradient sign
  std::vector<double> q = {0.0, 0.0};
  AdamW first(2, 0.1, 0.9, 0.999, 1e-8, 0.0);
  first.step(q, std::vector<double>{3.0, -0.5});
  CHECK(q[0] == doctest::Approx(-0.1));
  CHECK(q[1] == doctest::Approx(0.1));
  CHECK(first.steps() == 1);
  first.reset();
  CHECK(first.steps() == 0);
}

TEST_CASE("fixed batch: 50 steps reduce combined loss by at least 1%") {
  Setup s;
  const std::span<const ResolvedTriple> batch(s.triples.data(), 3);
  auto values = s.model.params().values();
  AdamW opt(values.size(), 1e-3, 0.9, 0.999, 1e-8, 0.01);
  std::vector<double> grad(values.size());
  double first = 0.0;
  double last = 0.0;
  for (int step = 0; step <= 50; ++step) {
    Tape tape(values);
    const auto loss = combined_loss(tape, s.model, batch, 5.0, 0.2, 1, Mode::Infer);
    if (step == 0) first = loss.value;
    last = loss.value;
    if (step == 50) break;
    std::fill(grad.begin(), grad.end(), 0.0);
    tape.backward(loss.total, grad);
    opt.step(values, grad);
  }
  CHECK(last < 0.99 * first);
}

TEST_CASE("config parsing") {
  std::istringstream in("# comment\nalpha = 0\nmargin=0.3\nepochs_stage1 = 2\ndim = 16\nconstants = 1, 100\ntrain_corpus = a.jsonl\n");
  const auto c = parse_config(in);
  CHECK(c.alpha == 0.0);
  CHECK(c.margin == 0.3);
  CHECK(c.epochs_stage1 == 2);
  CHECK(c.model.dim == 16);
  CHECK(c.model.constants.size() == 2);
  CHECK(c.train_corpus == "a.jsonl");
  std::istringstream bad("alhpa = 3\n");
  CHECK_THROWS(parse_config(bad));
  TrainConfig neg;
  neg.margin = 0.0;
  CHECK_THROWS(neg.validate());
}

TEST_CASE("training is deterministic and alpha = 0 equals equation-only stage I") {
  const Corpus corpus = gen::generate(gen::default_pack(), 2, 3);
  TrainData data;
  data.train = corpus;
  data.dev = Corpus(corpus.begin(), corpus.begin() + 6);
  data.triple_pool = corpus;
  data.triples = mine::mine_triples(corpus, corpus, corpus, mine::MineOptions{3, 1, mine::LeafMode::Wildcard});
  TrainConfig c;
  c.model.dim = 8;
  c.epochs_stage1 = 1;
  c.epochs_stage2 = 2;
  c.seed = 4;
  std::ostringstream log1, log2;
  const auto r1 = train_two_stage(c, data, &log1);
  const auto r2 = train_two_stage(c, data, &log2);
  CHECK(log1.str() == log2.str());
  CHECK(r1.log.size() == 3);
  CHECK(r1.log[0].stage == 1);
  CHECK(r1.log[2].stage == 2);

  c.alpha = 0.0;
  std::ostringstream a0, eqonly;
  train_two_stage(c, data, &a0);
  c.alpha = 5.0;
  c.stage1_loss = "equation";
  train_two_stage(c, data, &eqonly);
  CHECK(a0.str() == eqonly.str());
}

TEST_CASE("empty triple set skips stage I") {
  const Corpus corpus = gen::generate(gen::default_pack(), 1, 3);
  TrainData data;
  data.train = corpus;
  data.dev = corpus;
  TrainConfig c;
  c.model.dim = 8;
  c.epochs_stage1 = 3;
  c.epochs_stage2 = 1;
  const auto r = train_two_stage(c, data);
  REQUIRE(r.log.size() == 1);
  CHECK(r.log[0].stage == 2);
}
