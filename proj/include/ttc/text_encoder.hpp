#pragma once

#include <vector>

#include "ttc/lstm.hpp"
#include "ttc/params.hpp"
#include "ttc/vocab.hpp"

namespace ttc {

enum class SentencePooling { Mean, Max, Last };

SentencePooling parse_pooling(const std::string& s);

// Per-word first-layer LSTM states plus the pooled sentence vector.
struct SentenceEncoding {
  std::vector<ad::Tensor> hidden;  // h_t, one [H] tensor per real token
  ad::Tensor pooled;               // f(S), [H]
  TokenSequence tokens;
};

// First layer of the two-layer model: word embeddings (trained from
// scratch) followed by an LSTM over the sentence. Parameter names are
// "enc.embed" [V x E], "enc.lstm.*".
class SentenceEncoder {
 public:
  SentenceEncoder(int vocab_size, int embed_dim, int hidden_dim,
                  SentencePooling pooling = SentencePooling::Mean);

  void create_params(ParamStore& store) const;

  // Runs the recurrence over the real tokens only, so the pooled vector is
  // unaffected by trailing PAD.
  SentenceEncoding forward(ParamBinder& params, const TokenSequence& tokens) const;

  int hidden_dim() const { return cell_.hidden_dim; }
  int embed_dim() const { return cell_.input_dim; }
  const LstmCell& cell() const { return cell_; }

 private:
  int vocab_size_;
  LstmCell cell_;
  SentencePooling pooling_;
};

}  // namespace ttc
