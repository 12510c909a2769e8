#pragma once

#include <utility>
#include <vector>

#include "ttc/lstm.hpp"
#include "ttc/params.hpp"
#include "ttc/text_encoder.hpp"

namespace ttc {

// Per-step vocabulary logits under teacher forcing, paired with the gold
// target ids (EOS-terminated).
struct CaptionStepOutput {
  std::vector<ad::Tensor> step_logits;  // one [V] tensor per target word
  std::vector<int> targets;
};

// Second layer of the two-layer model. The similarity head and the
// captioning head share the fusion LSTM parameters and differ only in
// their output projections.
class FusionModel {
 public:
  FusionModel(int sentence_hidden_dim, int clip_feature_dim, int fc_hidden_dim, int vocab_size,
              int late_fusion_dim);

  void create_params(ParamStore& store) const;

  // sigma(S, R): runs the fusion LSTM over the sentence with
  // concat(h_t, f_R) as the step input, then FC -> ReLU -> FC -> sigmoid
  // on the final hidden state.
  ad::Tensor fusion_score(ParamBinder& params, const SentenceEncoding& sentence,
                          const ad::Tensor& clip_feature) const;

  // Teacher forcing: step t consumes concat(h_{t-1}, f_R) with h_0 = 0,
  // where layer 1 has consumed gold words w_1..w_{t-1}.
  CaptionStepOutput caption_forward(ParamBinder& params, const SentenceEncoder& encoder,
                                    const ad::Tensor& clip_feature,
                                    const TokenSequence& target) const;

  // Greedy argmax decoding, feeding predictions back through layer 1.
  std::vector<int> generate_caption(ParamStore& store, const SentenceEncoder& encoder,
                                    const ad::Tensor& clip_feature_values, int max_length) const;

  // Cosine similarity of the two modality embeddings in a common space.
  ad::Tensor late_fusion_score(ParamBinder& params, const ad::Tensor& sentence_vector,
                               const ad::Tensor& clip_feature) const;

  const LstmCell& cell() const { return cell_; }
  int clip_feature_dim() const { return clip_dim_; }

 private:
  LstmCell cell_;  // input: concat(h^(1), f(R))
  int hidden_dim_;
  int clip_dim_;
  int fc_hidden_;
  int vocab_size_;
  int late_dim_;
};

// Mean over triplets of max{0, margin + sigma(S,R') - sigma(S,R)}.
ad::Tensor triplet_loss(ad::Tape& tape,
                        const std::vector<std::pair<ad::Tensor, ad::Tensor>>& pos_neg_scores,
                        double margin);

// Total negative log likelihood normalized by the total word count,
// i.e. the mean per-word cross-entropy.
ad::Tensor caption_loss(ad::Tape& tape, const std::vector<CaptionStepOutput>& outputs);

// L_RET + lambda * L_CAP.
ad::Tensor multitask_loss(ad::Tape& tape, const ad::Tensor& retrieval_loss,
                          const ad::Tensor& caption_loss_value, double lambda);

}  // namespace ttc
