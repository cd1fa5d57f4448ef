#include "mwpcl/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

namespace mwpcl {

namespace {

bool spaceless_language(const std::string& lang) { return lang == "zh" || lang == "ja"; }

bool is_ascii_number_char(char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '/'; }

}  // namespace

bool is_number_token(const std::string& token) {
  static const std::regex pattern(R"(\d+(\.\d+)?(/\d+)?)");
  return std::regex_match(token, pattern);
}

std::vector<std::string> tokenize(const std::string& text, const std::string& lang) {
  std::vector<std::string> out;
  if (!spaceless_language(lang)) {
    std::istringstream ss(text);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (std::isdigit(c) || (c == 'n' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      const std::size_t start = i++;
      while (i < text.size() && is_ascii_number_char(text[i])) ++i;
      out.push_back(text.substr(start, i - start));
      continue;
    }
    // One UTF-8 code point.
    std::size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

ProblemInstance make_problem(std::string id, std::string text, const std::string& equation, const std::string& answer,
                             std::string corpus, std::string lang, const CorpusOptions& options,
                             const std::vector<std::string>& masked_values) {
  ProblemInstance p;
  p.id = std::move(id);
  p.text = std::move(text);
  p.corpus = std::move(corpus);
  p.lang = std::move(lang);
  p.tokens = tokenize(p.text, p.lang);
  if (options.masked_numbers) {
    p.masked = true;
    std::vector<std::size_t> positions(masked_values.size(), static_cast<std::size_t>(-1));
    for (std::size_t t = 0; t < p.tokens.size(); ++t) {
      const auto& tok = p.tokens[t];
      if (tok.size() >= 2 && tok[0] == 'n' && std::all_of(tok.begin() + 1, tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        const std::size_t k = std::stoul(tok.substr(1));
        if (k < 1 || k > masked_values.size()) throw CorpusError(p.id + ": marker " + tok + " has no value");
        positions[k - 1] = t;
      }
    }
    for (std::size_t k = 0; k < masked_values.size(); ++k) {
      if (positions[k] == static_cast<std::size_t>(-1)) throw CorpusError(p.id + ": number n" + std::to_string(k + 1) + " missing from text");
      p.numbers.push_back(parse_rational(masked_values[k]));
      p.number_positions.push_back(positions[k]);
    }
  } else {
    for (std::size_t t = 0; t < p.tokens.size(); ++t) {
      if (is_number_token(p.tokens[t])) {
        p.numbers.push_back(parse_rational(p.tokens[t]));
        p.number_positions.push_back(t);
      }
    }
  }
  p.equation = equation;
  try {
    p.gold = eq::parse_infix(equation, p.numbers.size());
  } catch (const eq::ParseError& e) {
    throw CorpusError(p.id + ": " + e.what());
  }
  p.answer_text = answer;
  try {
    p.answer = parse_rational(answer);
  } catch (const std::invalid_argument& e) {
    throw CorpusError(p.id + ": bad answer: " + e.what());
  }
  return p;
}

Corpus read_corpus(std::istream& in, const CorpusOptions& options) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      std::vector<std::string> values;
      if (j.contains("numbers")) {
        for (const auto& v : j.at("numbers")) values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
      const auto& answer = j.at("answer");
      corpus.push_back(make_problem(j.at("id").get<std::string>(), j.at("text").get<std::string>(), j.at("equation").get<std::string>(),
                                    answer.is_string() ? answer.get<std::string>() : answer.dump(), j.value("corpus", std::string()),
                                    j.value("lang", std::string()), options, values));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const CorpusOptions& options) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  return read_corpus(in, options);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& p : corpus) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["text"] = p.text;
    j["equation"] = p.equation;
    j["answer"] = p.answer_text;
    j["corpus"] = p.corpus;
    j["lang"] = p.lang;
    if (p.masked) {
      auto& numbers = j["numbers"] = nlohmann::ordered_json::array();
      for (const auto& v : p.numbers) numbers.push_back(rational_to_string(v));
    }
    out << j.dump() << '\n';
  }
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  write_corpus(out, corpus);
}

}  // namespace mwpcl
