#pragma once

#include "mwpcl/equation.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mwpcl {

struct ProblemInstance {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  /// Values of the problem's numbers in textual order; slot n_i is numbers[i-1].
  std::vector<Rational> numbers;
  /// Token index of each number, parallel to `numbers`.
  std::vector<std::size_t> number_positions;
  eq::EquationTree gold;
  std::string equation;
  Rational answer;
  std::string answer_text;
  std::string corpus;
  std::string lang;
  /// Numbers came from an explicit list rather than the text.
  bool masked = false;
};

struct CorpusOptions {
  /// Text already carries "n1".."nk" markers and the record has a "numbers" array.
  bool masked_numbers = false;
};

using Corpus = std::vector<ProblemInstance>;

/// Whitespace tokens, or one token per character (digit runs kept whole) for
/// languages written without spaces.
std::vector<std::string> tokenize(const std::string& text, const std::string& lang);
bool is_number_token(const std::string& token);

ProblemInstance make_problem(std::string id, std::string text, const std::string& equation, const std::string& answer,
                             std::string corpus, std::string lang, const CorpusOptions& options = {},
                             const std::vector<std::string>& masked_values = {});

Corpus read_corpus(std::istream& in, const CorpusOptions& options = {});
Corpus load_corpus(const std::filesystem::path& path, const CorpusOptions& options = {});
void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mwpcl
