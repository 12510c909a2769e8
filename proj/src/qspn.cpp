#include "ttc/qspn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ttc {

AttentionActivation parse_attention_activation(const std::string& s) {
  if (s == "tanh") return AttentionActivation::Tanh;
  if (s == "sigmoid") return AttentionActivation::Sigmoid;
  TTC_REQUIRE(false, "unknown attention activation '" << s << "' (expected tanh|sigmoid)");
  return AttentionActivation::Tanh;
}

ad::Tensor compute_query_attention(ad::Tape& tape, const ad::Tensor& features, const ad::Tensor& q,
                                   const QspnOptions& opts) {
  TTC_REQUIRE(features.rank() == 2, "attention: features must be [T x C]");
  const int c = features.dim(1);
  TTC_REQUIRE(q.rank() == 1 && q.size() == c,
              "attention: query dimension " << ad::shape_str(q.shape) << " does not match C = " << c);
  ad::Tensor logits = tape.matmul(features, q);
  if (opts.scale_logits)
    logits = tape.mul(logits, tape.constant(1.0 / std::sqrt(static_cast<double>(c))));
  return opts.activation == AttentionActivation::Tanh ? tape.tanh(logits) : tape.sigmoid(logits);
}

ad::Tensor pool_attention_over_queries(ad::Tape& tape, const std::vector<ad::Tensor>& per_query) {
  TTC_REQUIRE(!per_query.empty(), "attention pooling: no query rows");
  if (per_query.size() == 1) return per_query.front();
  return tape.reduce(ad::ReduceOp::Max, tape.stack_rows(per_query), 0);
}

ad::Tensor modulate_features(ad::Tape& tape, const ad::Tensor& features, const ad::Tensor& weights) {
  return tape.scale_rows(features, weights);
}

std::vector<ClipSegment> generate_anchors(int num_positions, const AnchorSet& anchors, double rate) {
  TTC_REQUIRE(num_positions >= 1, "generate_anchors: empty feature sequence");
  for (std::size_t i = 1; i < anchors.scales.size(); ++i)
    TTC_REQUIRE(anchors.scales[i] > anchors.scales[i - 1], "anchor scales must be strictly increasing");
  const double duration = num_positions / rate;
  std::vector<ClipSegment> out;
  for (int center = 0; center < num_positions; center += anchors.stride)
    for (const int scale : anchors.scales) {
      const double c = center / rate;
      const double half = 0.5 * scale / rate;
      // centers lie strictly inside [0, duration), so the clipped anchor
      // is always nonempty
      out.push_back(ClipSegment{std::max(0.0, c - half), std::min(duration, c + half)});
    }
  return out;
}

std::pair<double, double> anchor_encode(const ClipSegment& gt, const ClipSegment& anchor) {
  TTC_REQUIRE(anchor.length() > 0.0, "anchor_encode: zero-length anchor");
  TTC_REQUIRE(gt.length() > 0.0, "anchor_encode: zero-length ground truth");
  const double dc = (gt.center() - anchor.center()) / anchor.length();
  const double dl = std::log(gt.length() / anchor.length());
  return {dc, dl};
}

ClipSegment anchor_decode(const ClipSegment& anchor, double dc, double dl, double duration) {
  const double c = anchor.center() + dc * anchor.length();
  const double l = anchor.length() * std::exp(dl);
  ClipSegment seg{c - 0.5 * l, c + 0.5 * l};
  seg.start = std::clamp(seg.start, 0.0, duration);
  seg.end = std::clamp(seg.end, 0.0, duration);
  return seg;
}

void create_qspn_params(ParamStore& store, int channels, int conv_dim, int num_scales,
                        int sentence_hidden_dim, int roi_bins, int clip_feature_dim) {
  store.create("qspn.attn_proj.W", {channels, sentence_hidden_dim});
  store.create("qspn.attn_proj.b", {channels});
  store.create("qspn.conv.W", {3 * channels, conv_dim});
  store.create("qspn.conv.b", {conv_dim});
  store.create("qspn.head.W", {conv_dim, 3 * num_scales});
  store.create("qspn.head.b", {3 * num_scales});
  store.create("roi.proj.W", {clip_feature_dim, roi_bins * channels});
  store.create("roi.proj.b", {clip_feature_dim});
}

double ProposalHeadOutput::logit_value(int anchor_id) const {
  const int center = anchor_id / num_scales;
  const int scale = anchor_id % num_scales;
  return per_center.at(center, 3 * scale);
}

double ProposalHeadOutput::dc_value(int anchor_id) const {
  return per_center.at(anchor_id / num_scales, 3 * (anchor_id % num_scales) + 1);
}

double ProposalHeadOutput::dl_value(int anchor_id) const {
  return per_center.at(anchor_id / num_scales, 3 * (anchor_id % num_scales) + 2);
}

ProposalHeadOutput proposal_forward(ParamBinder& params, const ad::Tensor& modulated,
                                    const AnchorSet& anchors) {
  TTC_REQUIRE(modulated.rank() == 2, "proposal_forward: features must be [T x C]");
  ad::Tape& t = params.tape();
  ad::Tensor trunk = t.relu(
      t.conv1d_k3(modulated, params("qspn.conv.W"), params("qspn.conv.b"), anchors.stride));
  ad::Tensor head = t.matmul(trunk, params("qspn.head.W"));
  // broadcast the bias over centers
  std::vector<ad::Tensor> rows;
  ProposalHeadOutput out;
  out.num_centers = trunk.dim(0);
  out.num_scales = anchors.num_scales();
  for (int i = 0; i < out.num_centers; ++i)
    rows.push_back(t.add(t.row(head, i), params("qspn.head.b")));
  out.per_center = t.stack_rows(rows);
  return out;
}

std::vector<AnchorLabel> assign_anchor_labels(const std::vector<ClipSegment>& anchors,
                                              const std::vector<ClipSegment>& gts, double hi,
                                              double lo) {
  TTC_REQUIRE(!gts.empty(), "assign_anchor_labels: no ground-truth segments");
  const int n = static_cast<int>(anchors.size());
  std::vector<AnchorLabel> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const ClipSegment& a = anchors[static_cast<std::size_t>(i)];
    AnchorLabel& lab = labels[static_cast<std::size_t>(i)];
    if (a.length() <= 0.0) {
      lab.kind = AnchorLabel::Ignore;  // degenerate anchor clipped away
      continue;
    }
    double best = -1.0;
    int best_gt = -1;
    for (int j = 0; j < static_cast<int>(gts.size()); ++j) {
      const double v = tiou(a, gts[static_cast<std::size_t>(j)]);
      if (v > best) {
        best = v;
        best_gt = j;
      }
    }
    if (best >= hi) {
      lab.kind = AnchorLabel::Positive;
      lab.gt_index = best_gt;
    } else if (best < lo) {
      lab.kind = AnchorLabel::Negative;
    } else {
      lab.kind = AnchorLabel::Ignore;
    }
  }
  // Best-anchor fallback: each ground truth promotes its best-overlapping
  // anchor that is not already positive for an earlier one, so every gt
  // keeps a positive whenever an unclaimed overlapping anchor exists.
  for (int j = 0; j < static_cast<int>(gts.size()); ++j) {
    bool has_positive = false;
    for (const AnchorLabel& l : labels)
      has_positive = has_positive || (l.kind == AnchorLabel::Positive && l.gt_index == j);
    if (has_positive) continue;
    double best = 0.0;
    int best_anchor = -1;
    for (int i = 0; i < n; ++i) {
      if (anchors[static_cast<std::size_t>(i)].length() <= 0.0) continue;
      if (labels[static_cast<std::size_t>(i)].kind == AnchorLabel::Positive) continue;
      const double v = tiou(anchors[static_cast<std::size_t>(i)], gts[static_cast<std::size_t>(j)]);
      if (v > best) {
        best = v;
        best_anchor = i;
      }
    }
    if (best_anchor >= 0) {
      labels[static_cast<std::size_t>(best_anchor)].kind = AnchorLabel::Positive;
      labels[static_cast<std::size_t>(best_anchor)].gt_index = j;
    }
  }
  return labels;
}

ad::Tensor proposal_loss(ParamBinder& params, const ProposalHeadOutput& head,
                         const std::vector<ClipSegment>& anchor_segments,
                         const std::vector<AnchorLabel>& labels,
                         const std::vector<ClipSegment>& gts, Rng& rng, int sample_cap) {
  TTC_REQUIRE(labels.size() == anchor_segments.size(), "proposal_loss: label/anchor size mismatch");
  std::vector<int> positives;
  std::vector<int> negatives;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    if (labels[static_cast<std::size_t>(i)].kind == AnchorLabel::Positive) positives.push_back(i);
    if (labels[static_cast<std::size_t>(i)].kind == AnchorLabel::Negative) negatives.push_back(i);
  }
  TTC_REQUIRE(!positives.empty() || !negatives.empty(),
              "proposal_loss: no supervised anchors (all ignored)");

  rng.shuffle(positives);
  rng.shuffle(negatives);
  const int want_pos = std::min<int>(static_cast<int>(positives.size()), sample_cap / 2);
  const int want_neg = std::min<int>(static_cast<int>(negatives.size()), sample_cap - want_pos);
  positives.resize(static_cast<std::size_t>(want_pos));
  negatives.resize(static_cast<std::size_t>(want_neg));

  ad::Tape& t = params.tape();
  std::vector<ad::Tensor> logit_parts;
  std::vector<double> targets;
  auto logit_of = [&](int anchor_id) {
    const int center = anchor_id / head.num_scales;
    const int scale = anchor_id % head.num_scales;
    return t.slice(t.row(head.per_center, center), 3 * scale, 1);
  };
  for (const int i : positives) {
    logit_parts.push_back(logit_of(i));
    targets.push_back(1.0);
  }
  for (const int i : negatives) {
    logit_parts.push_back(logit_of(i));
    targets.push_back(0.0);
  }
  ad::Tensor logits = t.concat(logit_parts);
  ad::Tensor cls = t.reduce(ad::ReduceOp::Mean,
                            t.bce_with_logits(logits, ad::Tensor({static_cast<int>(targets.size())}, targets)),
                            0);
  if (positives.empty()) return cls;

  std::vector<ad::Tensor> offset_parts;
  std::vector<double> offset_targets;
  for (const int i : positives) {
    const int center = i / head.num_scales;
    const int scale = i % head.num_scales;
    offset_parts.push_back(t.slice(t.row(head.per_center, center), 3 * scale + 1, 2));
    const AnchorLabel& lab = labels[static_cast<std::size_t>(i)];
    const auto [dc, dl] = anchor_encode(gts[static_cast<std::size_t>(lab.gt_index)],
                                        anchor_segments[static_cast<std::size_t>(i)]);
    offset_targets.push_back(dc);
    offset_targets.push_back(dl);
  }
  ad::Tensor reg = t.smooth_l1(t.concat(offset_parts),
                               ad::Tensor({static_cast<int>(offset_targets.size())}, offset_targets));
  return t.add(cls, reg);
}

ad::Tensor temporal_roi_pool(ParamBinder& params, const ad::Tensor& modulated,
                             const ClipSegment& segment, double rate, int bins) {
  TTC_REQUIRE(modulated.rank() == 2, "temporal_roi_pool: features must be [T x C]");
  const int t_len = modulated.dim(0);
  const double duration = t_len / rate;
  TTC_REQUIRE(segment.valid() && segment.start >= 0.0 && segment.end <= duration + 1e-9,
              "temporal_roi_pool: segment [" << segment.start << ", " << segment.end
                                             << "] outside video of duration " << duration);
  const int lo = std::clamp(static_cast<int>(segment.start * rate), 0, t_len - 1);
  int hi = std::clamp(static_cast<int>(std::ceil(segment.end * rate)) - 1, 0, t_len - 1);
  if (hi < lo) hi = lo;
  ad::Tape& t = params.tape();
  ad::Tensor pooled = t.roi_bin_maxpool(modulated, lo, hi, bins);
  return t.add(t.matmul(params("roi.proj.W"), pooled), params("roi.proj.b"));
}

std::vector<Proposal> decode_proposals(const ProposalHeadOutput& head,
                                       const std::vector<ClipSegment>& anchor_segments,
                                       double duration) {
  std::vector<Proposal> out;
  for (int id = 0; id < head.anchor_count(); ++id) {
    const ClipSegment& anchor = anchor_segments[static_cast<std::size_t>(id)];
    if (anchor.length() <= 0.0) continue;
    Proposal p;
    p.anchor_id = id;
    p.score = 1.0 / (1.0 + std::exp(-head.logit_value(id)));
    p.segment = anchor_decode(anchor, head.dc_value(id), head.dl_value(id), duration);
    if (p.segment.length() <= 0.0) continue;
    out.push_back(p);
  }
  return out;
}

namespace {

bool score_order(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
  return a.segment.length() < b.segment.length();
}

}  // namespace

std::vector<Proposal> nms(std::vector<Proposal> proposals, double overlap_threshold) {
  TTC_REQUIRE(overlap_threshold >= 0.0 && overlap_threshold <= 1.0,
              "nms: threshold must be in [0, 1], got " << overlap_threshold);
  std::stable_sort(proposals.begin(), proposals.end(), score_order);
  std::vector<Proposal> kept;
  for (const Proposal& p : proposals) {
    bool suppressed = false;
    for (const Proposal& k : kept)
      if (tiou(p.segment, k.segment) > overlap_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

std::vector<Proposal> top_k_filter(const std::vector<Proposal>& proposals, int k) {
  TTC_REQUIRE(k >= 1, "top_k_filter: k must be >= 1, got " << k);
  std::vector<Proposal> out = proposals;
  if (static_cast<int>(out.size()) > k) out.resize(static_cast<std::size_t>(k));
  return out;
}

std::string proposals_to_csv(const std::string& video_id, const std::vector<Proposal>& proposals) {
  std::ostringstream oss;
  oss << "video_id,start,end,score\n";
  oss.setf(std::ios::fixed);
  oss.precision(6);
  for (const Proposal& p : proposals)
    oss << video_id << ',' << p.segment.start << ',' << p.segment.end << ',' << p.score << '\n';
  return oss.str();
}

}  // namespace ttc
