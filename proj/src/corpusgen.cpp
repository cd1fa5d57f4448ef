#include "mwpcl/corpusgen.hpp"

#include "mwpcl/miner.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <regex>
#include <set>

namespace mwpcl::gen {

namespace {

const std::vector<std::string> kNamesA = {"tom", "ann", "lee", "kim", "sam", "joe"};
const std::vector<std::string> kItemsA = {"apples", "pens", "books", "coins", "cards", "eggs"};
const std::vector<std::string> kNamesB = {"zorp", "quib", "dax", "vel", "mok", "fen"};
const std::vector<std::string> kOthersB = {"ulo", "brim", "taz", "wem"};
const std::vector<std::string> kItemsB = {"flurbs", "zints", "plovs", "kresh", "tumms", "gloks"};

Template make(std::string name, std::string lang, std::string corpus, std::vector<std::string> patterns, std::string equation,
              std::vector<std::pair<int, int>> ranges, std::map<std::string, std::vector<std::string>> fillers) {
  return Template{std::move(name), std::move(lang), std::move(corpus), std::move(patterns), std::move(equation), std::move(ranges), std::move(fillers)};
}

// Placeholder occurrences in pattern order: {1}, {name}, ...
std::vector<std::string> placeholders(const std::string& pattern) {
  static const std::regex re(R"(\{([A-Za-z0-9_]+)\})");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(pattern.begin(), pattern.end(), re); it != std::sregex_iterator(); ++it) out.push_back((*it)[1].str());
  return out;
}

bool is_slot_placeholder(const std::string& p) { return std::all_of(p.begin(), p.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }); }

std::string answer_string(const Rational& value) {
  try {
    return rational_to_decimal(value);
  } catch (const std::domain_error&) {
    return rational_to_string(value);
  }
}

}  // namespace

eq::EquationTree Template::prototype() const { return eq::parse_infix(equation, ranges.size()); }

void Template::validate() const {
  if (patterns.empty()) throw std::invalid_argument("template " + name + " has no patterns");
  const auto tree = prototype();
  const int slots = tree.max_slot();
  if (static_cast<std::size_t>(slots) != ranges.size()) {
    throw std::invalid_argument("template " + name + ": prototype uses " + std::to_string(slots) + " slots but " + std::to_string(ranges.size()) + " ranges given");
  }
  for (const auto& [lo, hi] : ranges) {
    if (lo > hi || lo < 0) throw std::invalid_argument("template " + name + ": bad number range");
  }
  for (const auto& pattern : patterns) {
    int expected = 1;
    for (const auto& ph : placeholders(pattern)) {
      if (is_slot_placeholder(ph)) {
        if (std::stoi(ph) != expected) throw std::invalid_argument("template " + name + ": number placeholders must appear once each, in order");
        ++expected;
      } else if (!fillers.count(ph) || fillers.at(ph).empty()) {
        throw std::invalid_argument("template " + name + ": no filler words for {" + ph + "}");
      }
    }
    if (expected - 1 != slots) throw std::invalid_argument("template " + name + ": pattern has " + std::to_string(expected - 1) + " number placeholders, prototype has " + std::to_string(slots));
  }
}

std::vector<Template> default_pack() {
  const std::map<std::string, std::vector<std::string>> fa = {{"name", kNamesA}, {"item", kItemsA}};
  const std::map<std::string, std::vector<std::string>> fb = {{"name", kNamesB}, {"item", kItemsB}, {"other", kOthersB}};
  std::vector<Template> pack;
  // Toy language A.
  pack.push_back(make("add", "toya", "toyA",
                      {"{name} has {1} {item} and gets {2} more {item} . how many {item} does {name} have now ?",
                       "there are {1} {item} in a box . {name} puts {2} more {item} in the box . how many {item} are in the box ?"},
                      "n1 + n2", {{5, 60}, {2, 40}}, fa));
  pack.push_back(make("sub", "toya", "toyA",
                      {"{name} has {1} {item} and gives away {2} {item} . how many {item} does {name} have now ?",
                       "there are {1} {item} in a box . {name} takes {2} {item} out of the box . how many {item} are in the box ?"},
                      "n1 - n2", {{20, 80}, {1, 19}}, fa));
  pack.push_back(make("mul", "toya", "toyA",
                      {"{name} buys {1} bags with {2} {item} in each bag . how many {item} does {name} have now ?",
                       "there are {1} boxes . each box holds {2} {item} . how many {item} are in the boxes ?"},
                      "n1 * n2", {{2, 12}, {2, 12}}, fa));
  pack.push_back(make("div", "toya", "toyA",
                      {"{name} shares {1} {item} equally among {2} friends . how many {item} does each friend get ?",
                       "there are {1} {item} packed equally into {2} boxes . how many {item} are in each box ?"},
                      "n1 / n2", {{6, 90}, {2, 9}}, fa));
  pack.push_back(make("sub_div", "toya", "toyA",
                      {"{name} has {1} {item} and gives away {2} {item} . {name} shares the rest equally among {3} friends . how many {item} does each friend get ?",
                       "there are {1} {item} in a box . {name} takes {2} {item} out and packs the rest equally into {3} boxes . how many {item} are in each box ?"},
                      "(n1 - n2) / n3", {{30, 90}, {1, 20}, {2, 6}}, fa));
  pack.push_back(make("add_mul", "toya", "toyA",
                      {"each bag has {1} red {item} and {2} blue {item} . {name} buys {3} bags . how many {item} does {name} have now ?",
                       "a box holds {1} big {item} and {2} small {item} . there are {3} boxes . how many {item} are in the boxes ?"},
                      "(n1 + n2) * n3", {{2, 9}, {2, 9}, {2, 9}}, fa));
  // Toy language B: disjoint vocabulary, prototypes that embed language A's.
  pack.push_back(make("add_div", "toyb", "toyB",
                      {"{name} tak {1} {item} ve plim {2} {item} ka {name} dru lo {item} mi {3} gorf ka kel {item} po gorf ku",
                       "wa {1} {item} ve wa {2} {item} dru mi {3} gorf ka kel {item} po gorf ku"},
                      "(n1 + n2) / n3", {{5, 40}, {5, 40}, {2, 6}}, fb));
  pack.push_back(make("mul_sub", "toyb", "toyB",
                      {"{name} krel {1} bex ze {2} {item} blin bex ka {name} vosh {3} {item} ka kel {item} zum ku",
                       "wa {1} bex ze {2} {item} blin bex ka {name} vosh {3} {item} ka kel {item} lo ku"},
                      "n1 * n2 - n3", {{2, 9}, {2, 12}, {1, 10}}, fb));
  pack.push_back(make("add_mul_right", "toyb", "toyB",
                      {"{name} tak {1} {item} ve krel {2} bex ze {3} {item} blin bex ka kel {item} zum ku",
                       "wa {1} {item} ve wa {2} bex ze {3} {item} blin bex ka kel {item} zum ku"},
                      "n1 + n2 * n3", {{1, 30}, {2, 9}, {2, 9}}, fb));
  pack.push_back(make("harmonic", "toyb", "toyB",
                      {"{name} fex sol in {1} hurn ka {other} fex sol in {2} hurn ka kel hurn ja fex sol ku",
                       "{other} fex sol in {1} hurn ve {name} fex sol in {2} hurn ka kel hurn ja ku"},
                      "1 / (1 / n1 + 1 / n2)", {{2, 12}, {2, 12}}, fb));
  pack.push_back(make("add_subdiv", "toyb", "toyB",
                      {"{name} tak {1} {item} ka {other} tak {2} {item} ve vosh {3} {item} ri dru lo mi {4} gorf ka kel {item} tak {name} zum ku",
                       "wa {1} {item} ka {other} wa {2} {item} vosh {3} {item} dru lo mi {4} gorf ka kel {item} tak {name} ku"},
                      "n1 + (n2 - n3) / n4", {{1, 30}, {20, 60}, {1, 19}, {2, 5}}, fb));
  pack.push_back(make("addmul_sub", "toyb", "toyB",
                      {"blin bex ze {1} ruf {item} ve {2} sil {item} ka {name} krel {3} bex ve vosh {4} {item} ka kel {item} zum ku",
                       "wa {1} ruf {item} ve {2} sil {item} blin bex ka {3} bex ka {name} vosh {4} {item} ka kel {item} lo ku"},
                      "(n1 + n2) * n3 - n4", {{2, 9}, {2, 9}, {2, 6}, {1, 10}}, fb));
  return pack;
}

std::vector<Template> read_pack(std::istream& in) {
  std::vector<Template> pack;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    Template t;
    t.name = j.at("name").get<std::string>();
    t.lang = j.at("lang").get<std::string>();
    t.corpus = j.value("corpus", t.lang);
    t.patterns = j.at("patterns").get<std::vector<std::string>>();
    t.equation = j.at("equation").get<std::string>();
    for (const auto& r : j.at("ranges")) t.ranges.emplace_back(r.at(0).get<int>(), r.at(1).get<int>());
    if (j.contains("fillers")) t.fillers = j.at("fillers").get<std::map<std::string, std::vector<std::string>>>();
    t.validate();
    pack.push_back(std::move(t));
  }
  return pack;
}

void write_pack(std::ostream& out, const std::vector<Template>& pack) {
  for (const auto& t : pack) {
    nlohmann::ordered_json j;
    j["name"] = t.name;
    j["lang"] = t.lang;
    j["corpus"] = t.corpus;
    j["patterns"] = t.patterns;
    j["equation"] = t.equation;
    j["ranges"] = nlohmann::ordered_json::array();
    for (const auto& [lo, hi] : t.ranges) j["ranges"].push_back({lo, hi});
    j["fillers"] = t.fillers;
    out << j.dump() << '\n';
  }
}

PackProperties pack_properties(const std::vector<Template>& pack) {
  std::vector<eq::EquationTree> protos;
  std::set<std::string> seen;
  for (const auto& t : pack) {
    auto tree = t.prototype();
    if (seen.insert(eq::prototype_key(tree)).second) protos.push_back(std::move(tree));
  }
  PackProperties props;
  for (std::size_t a = 0; a < protos.size(); ++a) {
    for (std::size_t b = 0; b < protos.size(); ++b) {
      if (a == b) continue;
      for (const auto& site : mine::find_positive_sites(protos[a], protos[b])) {
        if (!site.empty()) {
          ++props.subtree_sharing_pairs;
          break;
        }
      }
      if (a < b && mine::is_hard_negative(protos[a], protos[b])) ++props.hard_negative_pairs;
    }
  }
  return props;
}

Corpus generate(const std::vector<Template>& pack, std::size_t per_template, std::uint64_t seed, std::size_t max_retries) {
  Corpus out;
  for (std::size_t ti = 0; ti < pack.size(); ++ti) {
    const Template& t = pack[ti];
    t.validate();
    const auto tree = t.prototype();
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(ti)};
    std::mt19937_64 rng(seq);
    for (std::size_t i = 0; i < per_template; ++i) {
      std::vector<int> numbers(t.ranges.size());
      std::vector<Rational> values(t.ranges.size());
      Rational answer;
      bool ok = false;
      for (std::size_t attempt = 0; attempt <= max_retries && !ok; ++attempt) {
        for (std::size_t k = 0; k < t.ranges.size(); ++k) {
          std::uniform_int_distribution<int> dist(t.ranges[k].first, t.ranges[k].second);
          numbers[k] = dist(rng);
          values[k] = numbers[k];
        }
        try {
          answer = eq::evaluate(tree, values);
          ok = true;
        } catch (const eq::EvalError&) {
        }
      }
      if (!ok) throw std::runtime_error("template " + t.name + ": no valid numbers after " + std::to_string(max_retries) + " retries");

      std::uniform_int_distribution<std::size_t> pick_pattern(0, t.patterns.size() - 1);
      const std::string& pattern = t.patterns[pick_pattern(rng)];
      std::map<std::string, std::string> chosen;
      for (const auto& [key, words] : t.fillers) {
        std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
        chosen[key] = words[pick(rng)];
      }
      std::string text;
      std::size_t pos = 0;
      while (pos < pattern.size()) {
        const auto open = pattern.find('{', pos);
        if (open == std::string::npos) {
          text += pattern.substr(pos);
          break;
        }
        const auto close = pattern.find('}', open);
        text += pattern.substr(pos, open - pos);
        const std::string ph = pattern.substr(open + 1, close - open - 1);
        text += is_slot_placeholder(ph) ? std::to_string(numbers[static_cast<std::size_t>(std::stoi(ph) - 1)]) : chosen.at(ph);
        pos = close + 1;
      }

      char suffix[32];
      std::snprintf(suffix, sizeof suffix, "%04zu", i);
      out.push_back(make_problem(t.corpus + "-" + t.name + "-" + suffix, text, t.equation, answer_string(answer), t.corpus, t.lang));
    }
  }
  return out;
}

Split split_corpus(const Corpus& corpus, double dev_fraction, double test_fraction, std::uint64_t seed) {
  if (dev_fraction < 0 || test_fraction < 0 || dev_fraction + test_fraction > 1) throw std::invalid_argument("bad split fractions");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(corpus.size());
  const auto n_test = static_cast<std::size_t>(std::llround(n * test_fraction));
  const auto n_dev = static_cast<std::size_t>(std::llround(n * dev_fraction));
  std::vector<int> part(corpus.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) part[order[i]] = i < n_test ? 2 : (i < n_test + n_dev ? 1 : 0);
  Split s;
  for (std::size_t i = 0; i < corpus.size(); ++i) (part[i] == 0 ? s.train : part[i] == 1 ? s.dev : s.test).push_back(corpus[i]);
  return s;
}

Corpus filter_lang(const Corpus& corpus, const std::string& lang) {
  Corpus out;
  std::copy_if(corpus.begin(), corpus.end(), std::back_inserter(out), [&](const ProblemInstance& p) { return p.lang == lang; });
  return out;
}

}  // namespace mwpcl::gen
