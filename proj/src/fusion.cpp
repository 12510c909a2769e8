#include "ttc/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace ttc {

FusionModel::FusionModel(int sentence_hidden_dim, int clip_feature_dim, int fc_hidden_dim,
                         int vocab_size, int late_fusion_dim)
    : hidden_dim_(sentence_hidden_dim),
      clip_dim_(clip_feature_dim),
      fc_hidden_(fc_hidden_dim),
      vocab_size_(vocab_size),
      late_dim_(late_fusion_dim) {
  cell_.prefix = "fus.lstm";
  cell_.input_dim = sentence_hidden_dim + clip_feature_dim;
  cell_.hidden_dim = sentence_hidden_dim;
}

void FusionModel::create_params(ParamStore& store) const {
  cell_.create_params(store);
  store.create("fus.fc1.W", {fc_hidden_, hidden_dim_});
  store.create("fus.fc1.b", {fc_hidden_});
  store.create("fus.fc2.W", {1, fc_hidden_});
  store.create("fus.fc2.b", {1});
  store.create("cap.out.W", {vocab_size_, hidden_dim_});
  store.create("cap.out.b", {vocab_size_});
  store.create("lf.sent.W", {late_dim_, hidden_dim_});
  store.create("lf.sent.b", {late_dim_});
  store.create("lf.clip.W", {late_dim_, clip_dim_});
  store.create("lf.clip.b", {late_dim_});
}

ad::Tensor FusionModel::fusion_score(ParamBinder& params, const SentenceEncoding& sentence,
                                     const ad::Tensor& clip_feature) const {
  TTC_REQUIRE(!sentence.hidden.empty(), "fusion_score: empty sentence encoding");
  TTC_REQUIRE(clip_feature.rank() == 1 && clip_feature.size() == clip_dim_,
              "fusion_score: clip feature has shape " << ad::shape_str(clip_feature.shape)
                                                      << ", expected [" << clip_dim_ << "]");
  ad::Tape& t = params.tape();
  LstmCell::State state = cell_.zero_state(t);
  for (const ad::Tensor& h1 : sentence.hidden)
    state = cell_.step(params, t.concat({h1, clip_feature}), state);
  ad::Tensor fc1 = t.relu(t.add(t.matmul(params("fus.fc1.W"), state.h), params("fus.fc1.b")));
  ad::Tensor fc2 = t.add(t.matmul(params("fus.fc2.W"), fc1), params("fus.fc2.b"));
  return t.sigmoid(fc2);
}

CaptionStepOutput FusionModel::caption_forward(ParamBinder& params, const SentenceEncoder& encoder,
                                               const ad::Tensor& clip_feature,
                                               const TokenSequence& target) const {
  TTC_REQUIRE(target.length() >= 1, "caption_forward: empty target");
  TTC_REQUIRE(target.ids.back() == Vocabulary::kEos, "caption_forward: target must end with EOS");
  ad::Tape& t = params.tape();

  CaptionStepOutput out;
  out.targets = target.ids;
  LstmCell::State layer1 = encoder.cell().zero_state(t);
  LstmCell::State layer2 = cell_.zero_state(t);
  for (int step = 0; step < target.length(); ++step) {
    // layer 1 has consumed w_1..w_step at this point; its state is h_{t-1}
    layer2 = cell_.step(params, t.concat({layer1.h, clip_feature}), layer2);
    out.step_logits.push_back(
        t.add(t.matmul(params("cap.out.W"), layer2.h), params("cap.out.b")));
    if (step + 1 < target.length()) {
      const ad::Tensor word =
          t.embedding_lookup(params("enc.embed"), {target.ids[static_cast<std::size_t>(step)]});
      layer1 = encoder.cell().step(params, t.row(word, 0), layer1);
    }
  }
  return out;
}

std::vector<int> FusionModel::generate_caption(ParamStore& store, const SentenceEncoder& encoder,
                                               const ad::Tensor& clip_feature_values,
                                               int max_length) const {
  TTC_REQUIRE(max_length >= 1, "generate_caption: max_length must be >= 1");
  ad::Tape tape;
  ParamBinder params(tape, store, [](const std::string&) { return false; });
  const ad::Tensor clip = tape.constant(clip_feature_values);

  std::vector<int> words;
  LstmCell::State layer1 = encoder.cell().zero_state(tape);
  LstmCell::State layer2 = cell_.zero_state(tape);
  for (int step = 0; step < max_length; ++step) {
    layer2 = cell_.step(params, tape.concat({layer1.h, clip}), layer2);
    const ad::Tensor logits =
        tape.add(tape.matmul(params("cap.out.W"), layer2.h), params("cap.out.b"));
    int best = 0;
    for (int i = 1; i < logits.size(); ++i)
      if (logits.at(i) > logits.at(best)) best = i;  // ties keep the lowest id
    words.push_back(best);
    if (best == Vocabulary::kEos) break;
    const ad::Tensor word = tape.embedding_lookup(params("enc.embed"), {best});
    layer1 = encoder.cell().step(params, tape.row(word, 0), layer1);
  }
  return words;
}

ad::Tensor FusionModel::late_fusion_score(ParamBinder& params, const ad::Tensor& sentence_vector,
                                          const ad::Tensor& clip_feature) const {
  ad::Tape& t = params.tape();
  const auto embed_normalized = [&](const char* w, const char* b, const ad::Tensor& x) {
    ad::Tensor e = t.add(t.matmul(params(w), x), params(b));
    ad::Tensor sq = t.reduce(ad::ReduceOp::Sum, t.mul(e, e), 0);
    TTC_REQUIRE(sq.item() > 1e-24, "late_fusion_score: zero-norm embedding");
    // 1/sqrt via exp(-0.5 log): keeps the normalization differentiable
    ad::Tensor inv_norm = t.exp(t.mul(t.log(sq), t.constant(-0.5)));
    return t.mul(e, inv_norm);
  };
  const ad::Tensor u = embed_normalized("lf.sent.W", "lf.sent.b", sentence_vector);
  const ad::Tensor v = embed_normalized("lf.clip.W", "lf.clip.b", clip_feature);
  return t.matmul(u, v);
}

ad::Tensor triplet_loss(ad::Tape& tape,
                        const std::vector<std::pair<ad::Tensor, ad::Tensor>>& pos_neg_scores,
                        double margin) {
  TTC_REQUIRE(margin > 0.0, "triplet_loss: margin must be positive, got " << margin);
  TTC_REQUIRE(!pos_neg_scores.empty(), "triplet_loss: empty triplet list");
  std::vector<ad::Tensor> hinges;
  const ad::Tensor eta = tape.constant(margin);
  for (const auto& [pos, neg] : pos_neg_scores)
    hinges.push_back(tape.relu(tape.add(tape.sub(neg, pos), eta)));
  return tape.reduce(ad::ReduceOp::Mean, tape.concat(hinges), 0);
}

ad::Tensor caption_loss(ad::Tape& tape, const std::vector<CaptionStepOutput>& outputs) {
  TTC_REQUIRE(!outputs.empty(), "caption_loss: no caption outputs");
  std::vector<ad::Tensor> word_losses;
  for (const CaptionStepOutput& out : outputs) {
    TTC_REQUIRE(out.step_logits.size() == out.targets.size(),
                "caption_loss: step count does not match target length");
    for (std::size_t i = 0; i < out.targets.size(); ++i)
      word_losses.push_back(tape.cross_entropy(out.step_logits[i], out.targets[i]));
  }
  // mean over all words = sum of log likelihoods / total word count
  return tape.reduce(ad::ReduceOp::Mean, tape.concat(word_losses), 0);
}

ad::Tensor multitask_loss(ad::Tape& tape, const ad::Tensor& retrieval_loss,
                          const ad::Tensor& caption_loss_value, double lambda) {
  TTC_REQUIRE(lambda >= 0.0, "multitask_loss: lambda must be >= 0, got " << lambda);
  return tape.add(retrieval_loss, tape.mul(caption_loss_value, tape.constant(lambda)));
}

}  // namespace ttc
