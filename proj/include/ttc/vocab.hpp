#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace ttc {

// Token id space: ids 0..3 are reserved, corpus tokens follow ordered by
// descending frequency (ties lexicographic).
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;  // includes the reserved tokens
  int min_frequency = 1;
  int max_sentence_length = 10;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;
};

struct TokenSequence {
  std::vector<int> ids;
  int original_length = 0;  // token count before truncation

  int length() const { return static_cast<int>(ids.size()); }
};

// Lowercases and splits on non-alphanumeric characters.
std::vector<std::string> tokenize(const std::string& text);

// Keeps tokens with corpus frequency >= min_frequency; deterministic
// (rebuilding on the same corpus reproduces identical id assignment).
Vocabulary build_vocab(const std::vector<std::string>& corpus, int min_frequency,
                       int max_sentence_length);

// Unknown tokens map to UNK; output is truncated to max_sentence_length.
TokenSequence encode_sentence(const Vocabulary& v, const std::string& text);

// Caption target: encoded sentence truncated to max_sentence_length - 1,
// terminated by EOS.
TokenSequence encode_caption_target(const Vocabulary& v, const std::string& text);

std::string decode_tokens(const Vocabulary& v, const std::vector<int>& ids);

// One token per line; the file begins with the four reserved tokens, so
// line number equals id.
void save_vocab(const Vocabulary& v, const std::string& path);
Vocabulary load_vocab(const std::string& path, int min_frequency, int max_sentence_length);

}  // namespace ttc
