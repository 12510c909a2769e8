#include "ttc/text_encoder.hpp"

#include "ttc/common.hpp"

namespace ttc {

SentencePooling parse_pooling(const std::string& s) {
  if (s == "mean") return SentencePooling::Mean;
  if (s == "max") return SentencePooling::Max;
  if (s == "last") return SentencePooling::Last;
  TTC_REQUIRE(false, "unknown sentence pooling '" << s << "' (expected mean|max|last)");
  return SentencePooling::Mean;
}

SentenceEncoder::SentenceEncoder(int vocab_size, int embed_dim, int hidden_dim,
                                 SentencePooling pooling)
    : vocab_size_(vocab_size), pooling_(pooling) {
  cell_.prefix = "enc.lstm";
  cell_.input_dim = embed_dim;
  cell_.hidden_dim = hidden_dim;
}

void SentenceEncoder::create_params(ParamStore& store) const {
  store.create("enc.embed", {vocab_size_, cell_.input_dim});
  cell_.create_params(store);
}

SentenceEncoding SentenceEncoder::forward(ParamBinder& params, const TokenSequence& tokens) const {
  TTC_REQUIRE(tokens.length() >= 1, "sentence encoder needs at least one token");
  for (const int id : tokens.ids)
    TTC_REQUIRE(id != Vocabulary::kPad, "PAD inside a sentence passed to the encoder");

  ad::Tape& t = params.tape();
  const ad::Tensor embedded = t.embedding_lookup(params("enc.embed"), tokens.ids);

  SentenceEncoding enc;
  enc.tokens = tokens;
  LstmCell::State state = cell_.zero_state(t);
  for (int i = 0; i < tokens.length(); ++i) {
    state = cell_.step(params, t.row(embedded, i), state);
    enc.hidden.push_back(state.h);
  }

  switch (pooling_) {
    case SentencePooling::Mean:
      enc.pooled = t.reduce(ad::ReduceOp::Mean, t.stack_rows(enc.hidden), 0);
      break;
    case SentencePooling::Max:
      enc.pooled = t.reduce(ad::ReduceOp::Max, t.stack_rows(enc.hidden), 0);
      break;
    case SentencePooling::Last:
      enc.pooled = enc.hidden.back();
      break;
  }
  return enc;
}

}  // namespace ttc
