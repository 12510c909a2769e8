#pragma once

#include <string>
#include <vector>

#include "ttc/params.hpp"
#include "ttc/rng.hpp"
#include "ttc/segments.hpp"
#include "ttc/tape.hpp"

namespace ttc {

// A video as a T x C matrix of temporal features. Time t maps to feature
// index floor(t * rate), clamped to [0, T-1].
struct FeatureSequence {
  std::string video_id;
  double duration = 0.0;
  ad::Tensor features;  // [T x C]
  double rate = 1.0;    // feature positions per second

  int num_positions() const { return features.dim(0); }
  int channels() const { return features.dim(1); }

  int index_of(double t) const {
    const int idx = static_cast<int>(t * rate);
    return std::clamp(idx, 0, num_positions() - 1);
  }
};

// Anchor grid: centers every `stride` feature positions, lengths in
// positions given by `scales` (strictly increasing).
struct AnchorSet {
  int stride = 8;
  std::vector<int> scales{8, 16, 32};

  int num_scales() const { return static_cast<int>(scales.size()); }
  int num_centers(int num_positions) const { return (num_positions + stride - 1) / stride; }
};

struct Proposal {
  ClipSegment segment;
  double score = 0.0;  // sigmoid objectness
  int anchor_id = -1;
};

enum class AttentionActivation { Tanh, Sigmoid };

AttentionActivation parse_attention_activation(const std::string& s);

struct QspnOptions {
  AttentionActivation activation = AttentionActivation::Tanh;
  bool scale_logits = true;  // divide the inner product by sqrt(C)
};

// Per-position attention a_t = act(<x_t, q> / sqrt(C)) for a single
// projected query q of dimension C.
ad::Tensor compute_query_attention(ad::Tape& tape, const ad::Tensor& features, const ad::Tensor& q,
                                   const QspnOptions& opts = {});

// Elementwise max over the per-query weight rows.
ad::Tensor pool_attention_over_queries(ad::Tape& tape, const std::vector<ad::Tensor>& per_query);

// x~_t = A_t * x_t, broadcast across channels.
ad::Tensor modulate_features(ad::Tape& tape, const ad::Tensor& features, const ad::Tensor& weights);

// Anchors in seconds, clipped to [0, T/rate]; center-major then scale
// order. Anchors that collapse to zero length after clipping are dropped.
std::vector<ClipSegment> generate_anchors(int num_positions, const AnchorSet& anchors, double rate);

// Offsets (delta-center / anchor length, log length ratio).
std::pair<double, double> anchor_encode(const ClipSegment& gt, const ClipSegment& anchor);
ClipSegment anchor_decode(const ClipSegment& anchor, double dc, double dl, double duration);

// Proposal head: conv (kernel 3, stride = anchor stride, zero padding) +
// ReLU over the modulated features, then per (center, scale) a linear map
// to (objectness logit, dc, dl). Parameters: "qspn.conv.*", "qspn.head.*".
struct ProposalHeadOutput {
  ad::Tensor per_center;  // [num_centers x 3*num_scales], scale-major triples
  int num_centers = 0;
  int num_scales = 0;

  int anchor_count() const { return num_centers * num_scales; }
  // Anchor ids are center-major: id = center * num_scales + scale.
  double logit_value(int anchor_id) const;
  double dc_value(int anchor_id) const;
  double dl_value(int anchor_id) const;
};

void create_qspn_params(ParamStore& store, int channels, int conv_dim, int num_scales,
                        int sentence_hidden_dim, int roi_bins, int clip_feature_dim);

ProposalHeadOutput proposal_forward(ParamBinder& params, const ad::Tensor& modulated,
                                    const AnchorSet& anchors);

// Anchor supervision: positive at tIoU >= hi or as the best anchor of a
// ground-truth segment, negative below lo, otherwise ignored.
struct AnchorLabel {
  enum Kind { Positive, Negative, Ignore } kind = Ignore;
  int gt_index = -1;
};

std::vector<AnchorLabel> assign_anchor_labels(const std::vector<ClipSegment>& anchors,
                                              const std::vector<ClipSegment>& gts, double hi = 0.7,
                                              double lo = 0.3);

// Mean binary cross-entropy over a 1:1 sample of positives and negatives
// (up to `sample_cap` anchors) plus smooth-L1 regression over positives.
ad::Tensor proposal_loss(ParamBinder& params, const ProposalHeadOutput& head,
                         const std::vector<ClipSegment>& anchor_segments,
                         const std::vector<AnchorLabel>& labels,
                         const std::vector<ClipSegment>& gts, Rng& rng, int sample_cap = 32);

// Temporal RoI pooling: B contiguous bins max-pooled over the segment's
// feature-index span, concatenated and linearly mapped to the clip
// feature dimension ("roi.proj.*").
ad::Tensor temporal_roi_pool(ParamBinder& params, const ad::Tensor& modulated,
                             const ClipSegment& segment, double rate, int bins);

// Decodes head outputs into scored proposals (forward values only).
std::vector<Proposal> decode_proposals(const ProposalHeadOutput& head,
                                       const std::vector<ClipSegment>& anchor_segments,
                                       double duration);

// Greedy NMS: keep the best-scored proposal (ties by earlier start, then
// shorter), drop everything overlapping it above the threshold.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double overlap_threshold);

std::vector<Proposal> top_k_filter(const std::vector<Proposal>& proposals, int k);

std::string proposals_to_csv(const std::string& video_id, const std::vector<Proposal>& proposals);

}  // namespace ttc
