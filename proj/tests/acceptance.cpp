// Acceptance suite: one PASS/FAIL line per criterion, details on the lines after it.
// Usage: acceptance <path-to-mwpcl-cli> [criteria...]   (default: all)

#include "mwpcl/analysis.hpp"
#include "mwpcl/corpusgen.hpp"
#include "mwpcl/log.hpp"
#include "mwpcl/miner.hpp"
#include "mwpcl/trainer.hpp"
#include "oracles.hpp"
#include "random_trees.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <numeric>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

using namespace mwpcl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& summary) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << summary << std::endl;
  if (!pass) ++failures;
}

void detail(const std::string& line) { std::cout << "    " << line << std::endl; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---- 1 ----

void criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::size_t ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto tree = testing_util::random_tree(rng, static_cast<int>(rng() % 9), 4);
    const auto infix = eq::print_infix(tree);
    const auto reparsed = eq::parse_infix(infix, 4);
    std::vector<eq::Token> from_strings;
    for (const auto& s : eq::polish_strings(reparsed)) from_strings.push_back(eq::Token::parse(s));
    const auto back = eq::from_polish(from_strings);
    if (reparsed == tree && back == tree && eq::print_infix(back) == infix) ++ok;
  }
  const Rational a = eq::evaluate(eq::parse_infix("100 / (3 + 2)", 0), {});
  const std::vector<Rational> nums = {30, 90};
  const Rational b = eq::evaluate(eq::parse_infix("1 / ((1 / n1) - (1 / n2))", 2), nums);
  const Rational c = eq::evaluate(eq::parse_infix("20 + ((25 / 100) * 80)", 0), {});
  const double t = seconds_since(t0);
  const bool pass = ok == 1000 && a == 20 && b == 45 && c == 40 && t < 5.0;
  report(1, pass, std::to_string(ok) + "/1000 round trips; values " + rational_to_string(a) + ", " + rational_to_string(b) + ", " +
                      rational_to_string(c) + " (want 20, 45, 40); " + fmt(t) + " s (< 5)");
}

// ---- 2 ----

void criterion2() {
  const auto t0 = Clock::now();
  bool all_equal = true;
  std::size_t corpora = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Corpus corpus = gen::generate(gen::default_pack(), 16, seed);  // 192 problems
    ++corpora;
    for (auto mode : {mine::LeafMode::Wildcard, mine::LeafMode::Exact}) {
      for (std::size_t k : {1u, 4u, 100000u}) {
        const mine::MineOptions opt{seed, k, mode};
        const auto lib = mine::mine_triples(corpus, corpus, corpus, opt);
        const auto ref = oracle::brute_mine(corpus, corpus, corpus, opt);
        const bool eq = lib == ref;
        all_equal = all_equal && eq;
        detail("corpus seed " + std::to_string(seed) + " (" + std::to_string(corpus.size()) + " problems), " +
               (mode == mine::LeafMode::Exact ? "exact" : "wildcard") + ", max_per_problem " + std::to_string(k) + ": " +
               std::to_string(lib.size()) + " triples, " + (eq ? "identical" : "DIFFERENT"));
      }
    }
  }
  const auto p = eq::parse_infix("n1 - n2", 2);
  const auto p_pos = eq::parse_infix("(n1 - n2) / n3", 3);
  const bool table1 = mine::find_positive_sites(p, p_pos) == std::vector<std::string>{"L"};
  const double t = seconds_since(t0);
  report(2, all_equal && corpora >= 3 && table1 && t < 30.0,
         std::to_string(corpora) + " corpora x 2 leaf modes match brute force: " + (all_equal ? "yes" : "no") +
             "; Table 1 pair positive at L: " + (table1 ? "yes" : "no") + "; " + fmt(t) + " s (< 30)");
}

// ---- 3 and 4 share a tiny model ----

struct TinySetup {
  Corpus corpus = gen::generate(gen::default_pack(), 3, 77);
  std::vector<train::ResolvedTriple> triples;
  nn::Model model;
  TinySetup() : model(config(), nn::Vocab::build({&corpus}), 5) {
    std::map<std::string, const ProblemInstance*> by_id;
    for (const auto& p : corpus) by_id[p.id] = &p;
    const auto mined = mine::mine_triples(corpus, corpus, corpus, mine::MineOptions{77, 1, mine::LeafMode::Wildcard});
    // three triples picked at random
    std::mt19937_64 rng(3);
    std::vector<std::size_t> idx(mined.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < 3 && i < idx.size(); ++i) {
      const auto& t = mined[idx[i]];
      triples.push_back({by_id.at(t.base), by_id.at(t.positive), t.positive_path, by_id.at(t.negative)});
    }
  }
  static nn::ModelConfig config() {
    nn::ModelConfig c;
    c.dim = 8;
    return c;
  }
};

void criterion3() {
  TinySetup s;
  if (s.triples.size() < 3) {
    report(3, false, "could not mine 3 triples");
    return;
  }
  // Wider than the training init: at +-0.08 the attention goal term is nearly
  // softmax-invariant and its gradient sinks below difference-quotient noise.
  s.model.params().init_uniform(-0.5, 0.5, 11);
  const auto t0 = Clock::now();
  const auto errors = oracle::gradient_check(s.model, [&](nn::Tape& tape, std::span<double> grad) {
    const auto loss = train::combined_loss(tape, s.model, s.triples, 5.0, 0.2, 8);
    if (!grad.empty()) tape.backward(loss.total, grad);
    return loss.value;
  });
  double worst = 0.0;
  std::string worst_name;
  bool all_nonzero = true;
  for (const auto& [name, e] : errors) {
    if (e.relative >= worst) {
      worst = e.relative;
      worst_name = name;
    }
    all_nonzero = all_nonzero && e.scale > 0.0;
    detail(name + ": rel " + fmt(e.relative, 3) + " (max abs err " + fmt(e.max_abs_error, 3) + ", grad scale " + fmt(e.scale, 3) + ")");
  }
  report(3, worst < 1e-4 && all_nonzero,
         std::to_string(errors.size()) + " parameter groups, max relative error " + fmt(worst, 3) + " (" + worst_name + ") < 1e-4, h = 1e-4; " +
             fmt(seconds_since(t0)) + " s");
}

void criterion4() {
  const std::vector<double> e = {1.0, 0.0};
  const std::vector<double> opposite = {-1.0, 0.0};
  const std::vector<double> any = {0.3, -0.7};
  const double zero_case = train::contrastive_loss(e, e, opposite, 0.2);
  const double margin_case = train::contrastive_loss(e, any, any, 0.2);
  const bool boundary = std::abs(zero_case) <= 1e-12 && std::abs(margin_case - 0.2) <= 1e-12;

  TinySetup s;
  nn::Tape tape(s.model.params().values());
  const auto combined = train::combined_loss(tape, s.model, s.triples, 0.0, 0.2, 6);
  std::vector<nn::Var> terms;
  for (std::size_t i = 0; i < s.triples.size(); ++i) {
    const ProblemInstance* members[3] = {s.triples[i].base, s.triples[i].positive, s.triples[i].negative};
    for (std::size_t m = 0; m < 3; ++m) {
      const auto enc = s.model.encode(tape, *members[m], nn::Mode::Train, train::mix_seed(6, {i, m}));
      terms.push_back(train::equation_loss(tape, s.model.decode_teacher_forced(tape, enc, members[m]->gold)));
    }
  }
  const double summed = tape.scalar(tape.sum(terms));
  const bool bitwise = std::memcmp(&combined.value, &summed, sizeof(double)) == 0;
  report(4, boundary && bitwise,
         "contrastive(e, e, -e) = " + fmt(zero_case, 17) + ", contrastive(e, x, x) - 0.2 = " + fmt(margin_case - 0.2, 3) +
             "; combined(alpha=0) " + fmt(combined.value, 17) + " vs summed " + fmt(summed, 17) + (bitwise ? " (bitwise equal)" : " (differ)"));
}

// ---- 5, 6, 7: training runs ----

struct SeedData {
  std::uint64_t seed;
  gen::Split split;
  std::vector<mine::ContrastiveTriple> mono;
  std::vector<mine::ContrastiveTriple> cross;
};

struct RunOutcome {
  double ch = 0.0;
  double acc_ans = 0.0;
  double acc_eq = 0.0;
  std::vector<analysis::IntervalRow> intervals;
  double seconds = 0.0;
};

constexpr std::size_t kPerTemplate = 50;
constexpr std::size_t kEpochs = 30;
constexpr std::size_t kTriplesPerBase = 1;

SeedData prepare(std::uint64_t seed) {
  SeedData d;
  d.seed = seed;
  d.split = gen::split_corpus(gen::generate(gen::default_pack(), kPerTemplate, seed), 0.1, 0.2, seed);
  const mine::MineOptions opt{seed, kTriplesPerBase, mine::LeafMode::Wildcard};
  d.mono = mine::mine_triples(d.split.train, d.split.train, d.split.train, opt);
  Corpus a;
  Corpus b;
  for (const auto& p : d.split.train) (p.corpus == "toyA" ? a : b).push_back(p);
  d.cross = mine::mine_triples(a, b, a, opt);
  return d;
}

RunOutcome run(const SeedData& d, const std::vector<mine::ContrastiveTriple>& triples, double alpha, std::size_t stage1_epochs) {
  const auto t0 = Clock::now();
  train::TrainConfig c;
  c.seed = d.seed;
  c.alpha = alpha;
  c.margin = 0.2;
  c.epochs_stage1 = stage1_epochs;
  c.epochs_stage2 = kEpochs;
  c.model.dim = 64;
  train::TrainData data;
  data.train = d.split.train;
  data.dev = d.split.dev;
  data.triples = triples;
  data.triple_pool = d.split.train;
  const auto result = train::train_two_stage(c, data);
  RunOutcome out;
  const auto& test = d.split.test;
  const auto reps = analysis::representations(test, result.model);
  const auto keys = analysis::prototype_keys(test);
  out.ch = analysis::calinski_harabasz(reps, keys).value;
  const auto acc = analysis::accuracy(test, result.model, 3);
  out.acc_ans = acc.acc_ans;
  out.acc_eq = acc.acc_eq;
  std::vector<bool> correct;
  for (const auto& p : acc.predictions) correct.push_back(p.answer_correct);
  out.intervals = analysis::interval_accuracy(reps, keys, correct);
  out.seconds = seconds_since(t0);
  return out;
}

struct TrainingResults {
  std::vector<SeedData> data;
  std::vector<RunOutcome> cl;
  std::vector<RunOutcome> base;
  double seconds = 0.0;
};

TrainingResults& training() {
  static TrainingResults r = [] {
    TrainingResults out;
    const auto t0 = Clock::now();
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      out.data.push_back(prepare(seed));
      out.cl.push_back(run(out.data.back(), out.data.back().mono, 5.0, kEpochs));
      out.base.push_back(run(out.data.back(), {}, 0.0, 0));
    }
    out.seconds = seconds_since(t0);
    return out;
  }();
  return r;
}

void criterion5() {
  auto& r = training();
  std::size_t ch_wins = 0;
  std::size_t acc_wins = 0;
  double cl_mean = 0.0;
  double base_mean = 0.0;
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    const auto& cl = r.cl[i];
    const auto& b = r.base[i];
    ch_wins += cl.ch > b.ch ? 1 : 0;
    acc_wins += cl.acc_ans > b.acc_ans ? 1 : 0;
    cl_mean += cl.acc_ans / 3.0;
    base_mean += b.acc_ans / 3.0;
    detail("seed " + std::to_string(r.data[i].seed) + ": " + std::to_string(r.data[i].split.train.size()) + " train / " +
           std::to_string(r.data[i].split.test.size()) + " test, " + std::to_string(r.data[i].mono.size()) + " triples; CL ch " + fmt(cl.ch, 6) +
           " acc_ans " + fmt(cl.acc_ans) + " (" + fmt(cl.seconds, 3) + " s) | baseline ch " + fmt(b.ch, 6) + " acc_ans " + fmt(b.acc_ans) +
           " (" + fmt(b.seconds, 3) + " s)");
  }
  const bool a = ch_wins >= 2;
  const bool b = cl_mean >= base_mean - 0.01 && acc_wins >= 2;
  report(5, a && b && r.seconds < 1200.0,
         "(a) CH higher on " + std::to_string(ch_wins) + "/3 seeds; (b) mean acc_ans " + fmt(cl_mean) + " vs baseline " + fmt(base_mean) +
             ", strictly better on " + std::to_string(acc_wins) + "/3 seeds; " + fmt(r.seconds, 4) + " s (< 1200)");
}

void criterion6() {
  // fixture: A = {(1,0), (0,1)} both cos .7071 -> interval 8; B = {(2,0) cos .9487 -> 10, (1,1) cos .8944 -> 9}
  const std::vector<analysis::Vector> pts = {{1, 0}, {0, 1}, {2, 0}, {1, 1}};
  const std::vector<std::string> keys = {"A", "A", "B", "B"};
  const auto rows = analysis::interval_accuracy(pts, keys, std::vector<bool>{true, false, true, false});
  std::vector<analysis::IntervalRow> expected(10);
  for (int x = 0; x < 10; ++x) expected[static_cast<std::size_t>(x)].interval = x + 1;
  expected[7] = {8, 2, 1};
  expected[8] = {9, 1, 0};
  expected[9] = {10, 1, 1};
  const bool fixture = rows == expected;

  auto& r = training();
  std::size_t monotone = 0;
  for (std::size_t i = 0; i < r.cl.size(); ++i) {
    const auto& iv = r.cl[i].intervals;
    const analysis::IntervalRow* bottom = nullptr;
    const analysis::IntervalRow* top = nullptr;
    std::string table;
    for (const auto& row : iv) {
      if (!row.count) continue;
      if (!bottom) bottom = &row;
      top = &row;
      table += " [" + std::to_string(row.interval) + "] " + std::to_string(row.correct) + "/" + std::to_string(row.count);
    }
    const bool ok = top && top->accuracy() >= bottom->accuracy();
    monotone += ok ? 1 : 0;
    detail("seed " + std::to_string(r.data[i].seed) + ":" + table + (ok ? "  top >= bottom" : "  top < bottom") +
           (top == bottom ? " (only one interval occupied, comparison is trivial)" : ""));
  }
  report(6, fixture && monotone >= 2,
         std::string("4-problem fixture ") + (fixture ? "reproduced" : "DIFFERS") + "; top interval accuracy >= bottom occupied interval on " +
             std::to_string(monotone) + "/3 seeds");
}

void criterion7() {
  auto& r = training();
  std::size_t wins = 0;
  bool completed = true;
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    RunOutcome x;
    try {
      x = run(r.data[i], r.data[i].cross, 5.0, kEpochs);
    } catch (const std::exception& e) {
      completed = false;
      detail("seed " + std::to_string(r.data[i].seed) + ": training failed: " + e.what());
      continue;
    }
    std::set<std::string> pos_corpora;
    for (const auto& t : r.data[i].cross) pos_corpora.insert(t.positive.substr(0, 4));
    wins += x.ch > r.base[i].ch ? 1 : 0;
    detail("seed " + std::to_string(r.data[i].seed) + ": " + std::to_string(r.data[i].cross.size()) + " cross triples (positives from " +
           *pos_corpora.begin() + (pos_corpora.size() > 1 ? "+" : "") + "); ch " + fmt(x.ch, 6) + " vs baseline " + fmt(r.base[i].ch, 6) +
           "; acc_ans " + fmt(x.acc_ans) + " (" + fmt(x.seconds, 3) + " s)");
  }
  report(7, completed && wins >= 2, std::string("training ") + (completed ? "completed" : "FAILED") + "; CH above baseline on " +
                                        std::to_string(wins) + "/3 seeds");
}

// ---- 8 ----

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool run_cli_suite(const std::string& cli, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string d = dir.string();
  const std::vector<std::string> commands = {
      "gen-corpus --seed 5 --per-template 8 --out " + d + "/all.jsonl --dump-pack " + d + "/pack.jsonl > " + d + "/gen.stdout",
      "gen-corpus --pack " + d + "/pack.jsonl --seed 5 --per-template 8 > " + d + "/gen2.stdout",
      "split --in " + d + "/all.jsonl --out-prefix " + d + "/s --seed 5",
      "split --in " + d + "/all.jsonl --out-prefix " + d + "/b --seed 5 --lang toyb",
      "mine --base " + d + "/s.train.jsonl --seed 5 --max-per-problem 2 --out " + d + "/t.jsonl",
      "mine --base " + d + "/s.train.jsonl --pos-source " + d + "/b.train.jsonl --neg-source same --seed 5 --exact-leaves > " + d +
          "/tx.jsonl",
      "train --config " + d + "/train.cfg 2> " + d + "/train.stderr",
      "eval --corpus " + d + "/s.test.jsonl --ckpt " + d + "/m.ckpt --predictions " + d + "/pred.jsonl > " + d + "/eval.json",
      "analyze intervals --corpus " + d + "/s.test.jsonl --ckpt " + d + "/m.ckpt --out " + d + "/intervals.tsv",
      "analyze ch --corpus " + d + "/s.test.jsonl --ckpt " + d + "/m.ckpt > " + d + "/ch.json",
      "analyze ch --canonicalize-commutative --corpus " + d + "/s.test.jsonl --ckpt " + d + "/m.ckpt > " + d + "/ch2.json",
      "analyze layers --corpus " + d + "/s.test.jsonl --ckpt " + d + "/m.ckpt --pairs " + d + "/pairs.tsv > " + d + "/layers.tsv",
      "analyze export --corpus " + d + "/s.test.jsonl --ckpt " + d + "/m.ckpt --out " + d + "/export.tsv",
  };
  {
    std::ofstream cfg(dir / "train.cfg");
    cfg << "seed = 5\ndim = 16\nepochs_stage1 = 1\nepochs_stage2 = 2\n"
        << "train_corpus = " << d << "/s.train.jsonl\ndev_corpus = " << d << "/s.dev.jsonl\ntriples = " << d << "/t.jsonl\n"
        << "checkpoint = " << d << "/m.ckpt\nmetrics_log = " << d << "/metrics.jsonl\n";
  }
  bool ok = true;
  for (const auto& c : commands) {
    if (c.rfind("analyze layers", 0) == 0) {
      // pairs drawn from the test split: same-prototype and different-prototype neighbours
      const Corpus test = load_corpus(dir / "s.test.jsonl");
      std::ofstream pairs(dir / "pairs.tsv");
      for (std::size_t i = 1; i < test.size(); ++i) {
        const bool same = eq::prototype_key(test[i - 1].gold) == eq::prototype_key(test[i].gold);
        pairs << test[i - 1].id << '\t' << test[i].id << '\t' << (same ? "prototype" : "semantic") << '\n';
      }
    }
    const std::string full = "\"" + cli + "\" " + c;
    if (std::system(full.c_str()) != 0) {
      detail("command failed: " + c);
      ok = false;
    }
  }
  return ok;
}

void criterion8(const std::string& cli) {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / ("mwpcl_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const bool ran = run_cli_suite(cli, root / "a") && run_cli_suite(cli, root / "b");
  std::size_t compared = 0;
  std::size_t identical = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto name = entry.path().filename();
    if (name == "train.cfg" || name == "pairs.tsv") continue;
    ++compared;
    // outputs embed their own directory in no file, so the bytes must agree
    if (slurp(entry.path()) == slurp(root / "b" / name) && fs::exists(root / "b" / name)) {
      ++identical;
    } else {
      detail("differs: " + name.string());
    }
  }
  fs::remove_all(root);
  report(8, ran && compared > 0 && identical == compared,
         std::to_string(identical) + "/" + std::to_string(compared) + " output files byte-identical across two runs of 13 CLI commands; " +
             fmt(seconds_since(t0), 3) + " s");
}

// ---- 9 ----

void criterion9() {
  const auto t0 = Clock::now();
  const Corpus all = gen::generate(gen::default_pack(), 2, 9);
  const Corpus corpus(all.begin(), all.begin() + 20);
  train::TrainConfig c;
  c.seed = 9;
  c.epochs_stage1 = 0;
  c.epochs_stage2 = 200;
  c.model.dim = 32;
  // one problem per update: at batch 16 the 20 problems give only 400 updates in 200 epochs
  c.batch_size = 1;
  train::TrainData data;
  data.train = corpus;
  data.dev = corpus;  // per-epoch evaluation on the training problems themselves
  const auto result = train::train_two_stage(c, data);
  std::size_t first = 0;
  for (const auto& m : result.log) {
    if (m.dev_acc_eq == 1.0) {
      first = m.epoch;
      break;
    }
  }
  const double final_acc = analysis::accuracy(corpus, result.model, 3).acc_eq;
  const double t = seconds_since(t0);
  report(9, first > 0 && final_acc == 1.0 && t < 120.0,
         "20 problems, d=32, batch 1: 100% training equation accuracy first at stage-II epoch " + (first ? std::to_string(first) : std::string("never")) +
             " (<= 200), selected model " + fmt(final_acc) + "; " + fmt(t, 3) + " s (< 120)");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <mwpcl-cli> [criterion ids...]\n";
    return 2;
  }
  log::set_level(log::Level::Error);
  const std::string cli = argv[1];
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return only.empty() || only.count(id); };
  const auto t0 = Clock::now();
  if (want(1)) criterion1();
  if (want(2)) criterion2();
  if (want(3)) criterion3();
  if (want(4)) criterion4();
  if (want(5)) criterion5();
  if (want(6)) criterion6();
  if (want(7)) criterion7();
  if (want(8)) criterion8(cli);
  if (want(9)) criterion9();
  std::cout << "acceptance: " << failures << " failing criteria, " << fmt(seconds_since(t0), 4) << " s total" << std::endl;
  return failures == 0 ? 0 : 1;
}
