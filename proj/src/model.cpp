#include "ttc/model.hpp"

#include <filesystem>

namespace ttc {

ModelConfig ModelConfig::from_run_config(const RunConfig& rc, int vocab_size,
                                         int feature_channels) {
  ModelConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.feature_channels = feature_channels;
  cfg.embed_dim = rc.embed_dim;
  cfg.hidden_dim = rc.hidden_dim;
  cfg.clip_feature_dim = rc.clip_feature_dim;
  cfg.fc_hidden_dim = rc.fc_hidden_dim;
  cfg.conv_dim = rc.conv_dim;
  cfg.late_fusion_dim = rc.late_fusion_dim;
  cfg.roi_bins = rc.roi_bins;
  cfg.anchors.stride = rc.anchor_stride;
  cfg.anchors.scales = rc.anchor_scales;
  cfg.attention.activation = parse_attention_activation(rc.attention_activation);
  cfg.attention.scale_logits = rc.attention_scale;
  cfg.pooling = parse_pooling(rc.sentence_pooling);
  cfg.use_qspn = rc.use_qspn;
  cfg.use_caption = rc.use_caption;
  cfg.use_late_fusion = rc.use_late_fusion;
  cfg.rank_with_objectness = rc.rank_with_objectness;
  cfg.nms_threshold = rc.nms_threshold;
  cfg.top_k_proposals = rc.top_k_proposals;
  return cfg;
}

std::vector<std::string> manifest_sentences(const DatasetManifest& m) {
  std::vector<std::string> out;
  for (const VideoRecord& v : m.videos)
    for (const PairAnnotation& p : v.pairs) out.push_back(p.sentence);
  return out;
}

namespace {

LoadedDataset finish_dataset(DatasetManifest manifest, std::vector<FeatureSequence> features,
                             const Vocabulary& vocab, std::string digest) {
  LoadedDataset ds;
  ds.manifest = std::move(manifest);
  ds.features = std::move(features);
  ds.digest = std::move(digest);
  for (int v = 0; v < static_cast<int>(ds.manifest.videos.size()); ++v) {
    const VideoRecord& rec = ds.manifest.videos[static_cast<std::size_t>(v)];
    ds.features[static_cast<std::size_t>(v)].video_id = rec.video_id;
    TTC_REQUIRE(std::abs(ds.features[static_cast<std::size_t>(v)].duration - rec.duration) < 1e-6,
                "dataset: video '" << rec.video_id << "' duration " << rec.duration
                                   << " does not match its feature file ("
                                   << ds.features[static_cast<std::size_t>(v)].duration << ")");
    for (int p = 0; p < static_cast<int>(rec.pairs.size()); ++p) {
      LoadedDataset::Pair pair;
      pair.video_index = v;
      pair.pair_index = p;
      pair.gt = rec.pairs[static_cast<std::size_t>(p)].gt;
      pair.tokens = encode_sentence(vocab, rec.pairs[static_cast<std::size_t>(p)].sentence);
      TTC_REQUIRE(pair.tokens.length() >= 1, "dataset: video '" << rec.video_id << "' pair " << p
                                                                << " has an empty sentence");
      pair.caption_target = encode_caption_target(vocab, rec.pairs[static_cast<std::size_t>(p)].sentence);
      ds.pairs.push_back(std::move(pair));
    }
  }
  return ds;
}

}  // namespace

LoadedDataset load_dataset(const std::string& manifest_path, const Vocabulary& vocab) {
  DatasetManifest manifest = load_manifest(manifest_path);
  const std::string dir = std::filesystem::path(manifest_path).parent_path().string();
  std::vector<FeatureSequence> features;
  for (const VideoRecord& rec : manifest.videos)
    features.push_back(load_features(resolve_feature_path(dir, rec.feature_path)));
  std::string digest = dataset_digest(manifest, dir);
  return finish_dataset(std::move(manifest), std::move(features), vocab, std::move(digest));
}

LoadedDataset dataset_from_synthetic(const SyntheticDataset& sds, const Vocabulary& vocab) {
  // digest over the in-memory corpus: reuse the text structure only
  std::string digest = "in-memory";
  return finish_dataset(sds.manifest, sds.features, vocab, std::move(digest));
}

Model::Model(ModelConfig cfg)
    : cfg_(cfg),
      encoder_(cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.pooling),
      fusion_(cfg.hidden_dim, cfg.clip_feature_dim, cfg.fc_hidden_dim, cfg.vocab_size,
              cfg.late_fusion_dim) {
  TTC_REQUIRE(cfg.vocab_size > Vocabulary::kReserved, "model: vocabulary not built");
  TTC_REQUIRE(cfg.feature_channels >= 1, "model: feature channel count not set");
}

void Model::create_params(ParamStore& store) const {
  encoder_.create_params(store);
  create_qspn_params(store, cfg_.feature_channels, cfg_.conv_dim, cfg_.anchors.num_scales(),
                     cfg_.hidden_dim, cfg_.roi_bins, cfg_.clip_feature_dim);
  fusion_.create_params(store);
}

void Model::init_params(ParamStore& store, Rng& rng) const {
  for (const std::string& name : store.names()) init_uniform_fanin(store.value(name), rng);
  encoder_.cell().bias_forget_gate(store);
  fusion_.cell().bias_forget_gate(store);
}

void Model::validate_store(const ParamStore& store) const {
  ParamStore expected;
  create_params(expected);
  for (const std::string& name : expected.names()) {
    TTC_REQUIRE(store.has(name), "checkpoint mismatch: missing tensor '" << name << "'");
    const ad::Shape& got = store.entry(name).value.shape;
    const ad::Shape& want = expected.entry(name).value.shape;
    TTC_REQUIRE(got == want, "checkpoint mismatch: tensor '" << name << "' has shape "
                                                             << ad::shape_str(got) << ", expected "
                                                             << ad::shape_str(want));
  }
  for (const std::string& name : store.names())
    TTC_REQUIRE(expected.has(name), "checkpoint mismatch: unexpected tensor '" << name << "'");
}

SentenceEncoding Model::encode_sentence(ParamBinder& params, const TokenSequence& tokens) const {
  return encoder_.forward(params, tokens);
}

ad::Tensor Model::attention_query(ParamBinder& params, const SentenceEncoding& enc) const {
  ad::Tape& t = params.tape();
  return t.add(t.matmul(params("qspn.attn_proj.W"), enc.pooled), params("qspn.attn_proj.b"));
}

Model::VideoForward Model::video_pipeline(ParamBinder& params, const FeatureSequence& video,
                                          const std::vector<SentenceEncoding>& queries) const {
  ad::Tape& t = params.tape();
  VideoForward vf;
  const ad::Tensor features = t.constant(video.features);
  if (cfg_.use_qspn) {
    TTC_REQUIRE(!queries.empty(), "video_pipeline: query guidance is on but no queries given");
    std::vector<ad::Tensor> rows;
    for (const SentenceEncoding& q : queries)
      rows.push_back(compute_query_attention(t, features, attention_query(params, q), cfg_.attention));
    vf.modulated = modulate_features(t, features, pool_attention_over_queries(t, rows));
  } else {
    vf.modulated = features;
  }
  vf.head = proposal_forward(params, vf.modulated, cfg_.anchors);
  vf.anchor_segments = generate_anchors(video.num_positions(), cfg_.anchors, video.rate);
  vf.proposals = top_k_filter(
      nms(decode_proposals(vf.head, vf.anchor_segments, video.duration), cfg_.nms_threshold),
      cfg_.top_k_proposals);
  return vf;
}

ad::Tensor Model::clip_feature(ParamBinder& params, const VideoForward& vf,
                               const FeatureSequence& video, const ClipSegment& segment) const {
  return temporal_roi_pool(params, vf.modulated, segment, video.rate, cfg_.roi_bins);
}

ad::Tensor Model::similarity(ParamBinder& params, const SentenceEncoding& sentence,
                             const ad::Tensor& clip_feat) const {
  if (cfg_.use_late_fusion) return fusion_.late_fusion_score(params, sentence.pooled, clip_feat);
  return fusion_.fusion_score(params, sentence, clip_feat);
}

}  // namespace ttc
