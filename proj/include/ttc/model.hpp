#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ttc/fusion.hpp"
#include "ttc/manifest.hpp"
#include "ttc/qspn.hpp"
#include "ttc/runconfig.hpp"
#include "ttc/synthetic.hpp"
#include "ttc/text_encoder.hpp"

namespace ttc {

struct ModelConfig {
  int vocab_size = 0;
  int feature_channels = 0;  // C of the ingested feature sequences
  int embed_dim = 300;
  int hidden_dim = 512;
  int clip_feature_dim = 512;
  int fc_hidden_dim = 64;
  int conv_dim = 512;
  int late_fusion_dim = 1024;
  int roi_bins = 4;
  AnchorSet anchors;
  QspnOptions attention;
  SentencePooling pooling = SentencePooling::Mean;
  bool use_qspn = true;
  bool use_caption = true;
  bool use_late_fusion = false;
  bool rank_with_objectness = false;
  double nms_threshold = 0.7;
  int top_k_proposals = 100;

  static ModelConfig from_run_config(const RunConfig& rc, int vocab_size, int feature_channels);
};

// A manifest with its feature files loaded and sentences encoded.
struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<FeatureSequence> features;  // aligned with manifest.videos
  struct Pair {
    int video_index = 0;
    int pair_index = 0;  // within the video
    ClipSegment gt;
    TokenSequence tokens;
    TokenSequence caption_target;
  };
  std::vector<Pair> pairs;  // flattened over videos
  std::string digest;

  const FeatureSequence& video_features(int video_index) const {
    return features[static_cast<std::size_t>(video_index)];
  }
};

std::vector<std::string> manifest_sentences(const DatasetManifest& m);

LoadedDataset load_dataset(const std::string& manifest_path, const Vocabulary& vocab);
LoadedDataset dataset_from_synthetic(const SyntheticDataset& ds, const Vocabulary& vocab);

// Ties the sentence encoder, the proposal network and the fusion heads
// together under one parameter store. All parameters are created for
// every variant so that seeded initialization is flag-independent.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& config() { return cfg_; }
  const SentenceEncoder& encoder() const { return encoder_; }
  const FusionModel& fusion() const { return fusion_; }

  void create_params(ParamStore& store) const;
  void init_params(ParamStore& store, Rng& rng) const;

  // Checks that the store holds exactly the tensors this configuration
  // expects; reports the first offending tensor.
  void validate_store(const ParamStore& store) const;

  SentenceEncoding encode_sentence(ParamBinder& params, const TokenSequence& tokens) const;

  // Projects f(S) into the video feature space for attention.
  ad::Tensor attention_query(ParamBinder& params, const SentenceEncoding& enc) const;

  struct VideoForward {
    ad::Tensor modulated;  // [T x C] (the raw features when guidance is off)
    ProposalHeadOutput head;
    std::vector<ClipSegment> anchor_segments;
    std::vector<Proposal> proposals;  // decoded, NMS-filtered, top-K
  };

  // Full per-video proposal pipeline with attention pooled over the given
  // query encodings (ignored when query guidance is off).
  VideoForward video_pipeline(ParamBinder& params, const FeatureSequence& video,
                              const std::vector<SentenceEncoding>& queries) const;

  ad::Tensor clip_feature(ParamBinder& params, const VideoForward& vf, const FeatureSequence& video,
                          const ClipSegment& segment) const;

  // Similarity used for ranking: early-fusion sigma or the late-fusion
  // cosine depending on configuration.
  ad::Tensor similarity(ParamBinder& params, const SentenceEncoding& sentence,
                        const ad::Tensor& clip_feature) const;

 private:
  ModelConfig cfg_;
  SentenceEncoder encoder_;
  FusionModel fusion_;
};

}  // namespace ttc
