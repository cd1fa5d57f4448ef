// Command-line front end: corpus generation, mining, training, evaluation, analysis.

#include "mwpcl/analysis.hpp"
#include "mwpcl/corpusgen.hpp"
#include "mwpcl/log.hpp"
#include "mwpcl/miner.hpp"
#include "mwpcl/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

using namespace mwpcl;

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw std::runtime_error("cannot write " + path);
  return file;
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Math word problem solver with structural contrastive learning"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  // gen-corpus
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic corpus from a template pack");
  std::string pack_name = "default";
  std::size_t per_template = 50;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  std::string dump_pack;
  gen_cmd->add_option("--pack", pack_name, "'default' or a template pack JSONL file");
  gen_cmd->add_option("--per-template", per_template, "Problems per template");
  gen_cmd->add_option("--seed", gen_seed, "Random seed");
  gen_cmd->add_option("--out", gen_out, "Output corpus JSONL (stdout if omitted)");
  gen_cmd->add_option("--dump-pack", dump_pack, "Also write the template pack to this file");

  // split
  auto* split_cmd = app.add_subcommand("split", "Split a corpus into train/dev/test files");
  std::string split_in;
  std::string split_prefix;
  double dev_fraction = 0.1;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
  std::string split_lang;
  split_cmd->add_option("--in", split_in, "Input corpus")->required();
  split_cmd->add_option("--out-prefix", split_prefix, "Writes <prefix>.train.jsonl, .dev.jsonl, .test.jsonl")->required();
  split_cmd->add_option("--dev", dev_fraction, "Dev fraction");
  split_cmd->add_option("--test", test_fraction, "Test fraction");
  split_cmd->add_option("--seed", split_seed, "Shuffle seed");
  split_cmd->add_option("--lang", split_lang, "Keep only problems with this language tag");

  // mine
  auto* mine_cmd = app.add_subcommand("mine", "Mine contrastive triples");
  std::string base_path;
  std::string pos_source = "same";
  std::string neg_source = "same";
  std::uint64_t mine_seed = 0;
  std::size_t max_per_problem = 4;
  bool exact_leaves = false;
  bool masked = false;
  std::string mine_out;
  mine_cmd->add_option("--base", base_path, "Base corpus")->required();
  mine_cmd->add_option("--pos-source", pos_source, "Positive source corpus or 'same'");
  mine_cmd->add_option("--neg-source", neg_source, "Negative source corpus or 'same'");
  mine_cmd->add_option("--seed", mine_seed, "Sampling seed");
  mine_cmd->add_option("--max-per-problem", max_per_problem, "Triples per base problem");
  mine_cmd->add_flag("--exact-leaves", exact_leaves, "Leaves must match exactly");
  mine_cmd->add_flag("--masked-numbers", masked, "Corpus text carries n1..nk markers");
  mine_cmd->add_option("--out", mine_out, "Triple JSONL (stdout if omitted)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Two-stage training");
  std::string config_path;
  train_cmd->add_option("--config", config_path, "key = value config file")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Equation and answer accuracy");
  std::string corpus_path;
  std::string ckpt_path;
  std::size_t beam = 3;
  std::string predictions_out;
  eval_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  eval_cmd->add_option("--beam", beam, "Beam size");
  eval_cmd->add_option("--predictions", predictions_out, "Per-problem predictions JSONL");
  eval_cmd->add_flag("--masked-numbers", masked, "Corpus text carries n1..nk markers");

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Representation analyses");
  analyze_cmd->require_subcommand(1);
  bool canonical = false;
  std::string analyze_out;
  std::string pairs_path;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
    cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
    cmd->add_option("--out", analyze_out, "Output file (stdout if omitted)");
    cmd->add_flag("--masked-numbers", masked, "Corpus text carries n1..nk markers");
  };
  auto* intervals_cmd = analyze_cmd->add_subcommand("intervals", "Accuracy by cosine similarity to prototype center");
  add_common(intervals_cmd);
  intervals_cmd->add_option("--beam", beam, "Beam size");
  auto* ch_cmd = analyze_cmd->add_subcommand("ch", "Calinski-Harabasz index of problem representations by prototype");
  add_common(ch_cmd);
  ch_cmd->add_flag("--canonicalize-commutative", canonical, "Merge prototypes that differ only by operand order of + and *");
  auto* layers_cmd = analyze_cmd->add_subcommand("layers", "Per-layer similarity of probe pairs");
  add_common(layers_cmd);
  layers_cmd->add_option("--pairs", pairs_path, "TSV: id_a, id_b, semantic|prototype")->required();
  auto* export_cmd = analyze_cmd->add_subcommand("export", "Export problem representations as TSV");
  add_common(export_cmd);
  export_cmd->add_option("--beam", beam, "Beam size");

  CLI11_PARSE(app, argc, argv);
  if (quiet) log::set_level(log::Level::Error);

  try {
    CorpusOptions options;
    options.masked_numbers = masked;

    if (*gen_cmd) {
      std::vector<gen::Template> pack;
      if (pack_name == "default") {
        pack = gen::default_pack();
      } else {
        std::ifstream in(pack_name);
        if (!in) throw std::runtime_error("cannot open pack " + pack_name);
        pack = gen::read_pack(in);
      }
      if (!dump_pack.empty()) {
        std::ofstream out(dump_pack);
        gen::write_pack(out, pack);
      }
      std::ofstream file;
      write_corpus(open_out(gen_out, file), gen::generate(pack, per_template, gen_seed));
    } else if (*split_cmd) {
      Corpus corpus = load_corpus(split_in, options);
      if (!split_lang.empty()) corpus = gen::filter_lang(corpus, split_lang);
      const auto parts = gen::split_corpus(corpus, dev_fraction, test_fraction, split_seed);
      save_corpus(split_prefix + ".train.jsonl", parts.train);
      save_corpus(split_prefix + ".dev.jsonl", parts.dev);
      save_corpus(split_prefix + ".test.jsonl", parts.test);
    } else if (*mine_cmd) {
      const Corpus base = load_corpus(base_path, options);
      const Corpus pos = pos_source == "same" ? base : load_corpus(pos_source, options);
      const Corpus neg = neg_source == "same" ? base : load_corpus(neg_source, options);
      mine::MineOptions mo;
      mo.seed = mine_seed;
      mo.max_per_problem = max_per_problem;
      mo.leaf_mode = exact_leaves ? mine::LeafMode::Exact : mine::LeafMode::Wildcard;
      std::ofstream file;
      mine::write_triples(open_out(mine_out, file), mine::mine_triples(base, pos, neg, mo));
    } else if (*train_cmd) {
      const auto config = train::load_config(config_path);
      const auto result = train::run_training(config);
      std::cerr << "best: stage " << result.best.stage << " epoch " << result.best.epoch << " dev_acc_ans " << result.best.dev_acc_ans
                << " dev_acc_eq " << result.best.dev_acc_eq << '\n';
    } else if (*eval_cmd) {
      const Corpus corpus = load_corpus(corpus_path, options);
      const auto model = nn::Model::load(ckpt_path);
      const auto report = analysis::accuracy(corpus, model, beam);
      nlohmann::ordered_json j;
      j["n"] = corpus.size();
      j["acc_eq"] = report.acc_eq;
      j["acc_ans"] = report.acc_ans;
      std::cout << j.dump() << '\n';
      if (!predictions_out.empty()) {
        std::ofstream out(predictions_out);
        for (const auto& p : report.predictions) {
          nlohmann::ordered_json row;
          row["id"] = p.id;
          std::vector<std::string> tokens;
          for (const auto& t : p.tokens) tokens.push_back(t.str());
          row["prediction"] = tokens;
          row["equation_correct"] = p.equation_correct;
          row["answer_correct"] = p.answer_correct;
          out << row.dump() << '\n';
        }
      }
    } else if (*analyze_cmd) {
      const Corpus corpus = load_corpus(corpus_path, options);
      const auto model = nn::Model::load(ckpt_path);
      std::ofstream file;
      std::ostream& out = open_out(analyze_out, file);
      if (*intervals_cmd) {
        out << "interval\tlow\thigh\tcount\tcorrect\taccuracy\n";
        for (const auto& row : analysis::interval_accuracy(corpus, model, beam)) {
          out << row.interval << '\t' << fmt_double(0.1 * (row.interval - 1)) << '\t' << fmt_double(0.1 * row.interval) << '\t' << row.count
              << '\t' << row.correct << '\t' << fmt_double(row.accuracy()) << '\n';
        }
      } else if (*ch_cmd) {
        const auto reps = analysis::representations(corpus, model);
        const auto keys = analysis::prototype_keys(corpus, canonical);
        const auto ch = analysis::calinski_harabasz(reps, keys);
        nlohmann::ordered_json j;
        j["n"] = corpus.size();
        j["ch"] = ch.infinite ? nlohmann::ordered_json("inf") : nlohmann::ordered_json(ch.value);
        j["infinite"] = ch.infinite;
        j["trace_between"] = ch.between;
        j["trace_within"] = ch.within;
        out << j.dump() << '\n';
      } else if (*layers_cmd) {
        std::ifstream in(pairs_path);
        if (!in) throw std::runtime_error("cannot open pairs file " + pairs_path);
        const auto pairs = analysis::read_probe_pairs(in);
        out << "layer\tsemantic\tprototype\n";
        for (const auto& row : analysis::layer_similarity_probe(pairs, corpus, model)) {
          out << row.layer << '\t' << fmt_double(row.semantic) << '\t' << fmt_double(row.prototype) << '\n';
        }
      } else if (*export_cmd) {
        analysis::export_embeddings(corpus, model, out, beam);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
