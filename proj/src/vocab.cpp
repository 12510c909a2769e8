#include "ttc/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "ttc/common.hpp"

namespace ttc {

namespace {

const char* kReservedTokens[Vocabulary::kReserved] = {"<pad>", "<unk>", "<bos>", "<eos>"};

}  // namespace

int Vocabulary::id_of(const std::string& token) const {
  const auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  TTC_REQUIRE(id >= 0 && id < size(), "token id " << id << " out of range");
  return id_to_token[static_cast<std::size_t>(id)];
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, int min_frequency,
                       int max_sentence_length) {
  TTC_REQUIRE(!corpus.empty(), "build_vocab: empty corpus");
  std::map<std::string, long long> counts;  // ordered map fixes the tie order
  for (const std::string& sentence : corpus)
    for (const std::string& tok : tokenize(sentence)) ++counts[tok];

  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [tok, n] : counts)
    if (n >= min_frequency) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  v.min_frequency = min_frequency;
  v.max_sentence_length = max_sentence_length;
  for (const char* r : kReservedTokens) v.id_to_token.emplace_back(r);
  for (const auto& [tok, n] : kept) {
    v.token_to_id.emplace(tok, v.size());
    v.id_to_token.push_back(tok);
  }
  return v;
}

TokenSequence encode_sentence(const Vocabulary& v, const std::string& text) {
  const std::vector<std::string> toks = tokenize(text);
  TokenSequence seq;
  seq.original_length = static_cast<int>(toks.size());
  const int limit = std::min<int>(seq.original_length, v.max_sentence_length);
  seq.ids.reserve(static_cast<std::size_t>(limit));
  for (int i = 0; i < limit; ++i) seq.ids.push_back(v.id_of(toks[static_cast<std::size_t>(i)]));
  return seq;
}

TokenSequence encode_caption_target(const Vocabulary& v, const std::string& text) {
  const std::vector<std::string> toks = tokenize(text);
  TokenSequence seq;
  const int limit = std::min<int>(static_cast<int>(toks.size()), v.max_sentence_length - 1);
  for (int i = 0; i < limit; ++i) seq.ids.push_back(v.id_of(toks[static_cast<std::size_t>(i)]));
  seq.ids.push_back(Vocabulary::kEos);
  seq.original_length = seq.length();
  return seq;
}

std::string decode_tokens(const Vocabulary& v, const std::vector<int>& ids) {
  std::string out;
  for (const int id : ids) {
    if (!out.empty()) out += ' ';
    out += v.token_of(id);
  }
  return out;
}

void save_vocab(const Vocabulary& v, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  TTC_REQUIRE_IO(f.good(), "save_vocab: cannot open " << path);
  for (const std::string& tok : v.id_to_token) f << tok << '\n';
  TTC_REQUIRE_IO(f.good(), "save_vocab: write failed for " << path);
}

Vocabulary load_vocab(const std::string& path, int min_frequency, int max_sentence_length) {
  std::ifstream f(path, std::ios::binary);
  TTC_REQUIRE_IO(f.good(), "load_vocab: cannot open " << path);
  Vocabulary v;
  v.min_frequency = min_frequency;
  v.max_sentence_length = max_sentence_length;
  std::string line;
  int id = 0;
  while (std::getline(f, line)) {
    if (id < Vocabulary::kReserved) {
      TTC_REQUIRE_IO(line == kReservedTokens[id],
                     "load_vocab: " << path << " line " << id + 1 << " expected reserved token '"
                                    << kReservedTokens[id] << "', got '" << line << "'");
    } else {
      v.token_to_id.emplace(line, id);
    }
    v.id_to_token.push_back(line);
    ++id;
  }
  TTC_REQUIRE_IO(id >= Vocabulary::kReserved, "load_vocab: " << path << " missing reserved header");
  return v;
}

}  // namespace ttc
