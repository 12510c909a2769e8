#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ttc {

// Flat key=value run configuration. Defaults follow the published training
// setup (batch 32, Adam lr 0.001, 30 epochs, margin 0.2, lambda 0.5,
// 300-d embeddings, 512-d hidden state, FC 512->64->1, 1024-d common
// space, NMS 0.7, top 100). Unknown keys are rejected.
struct RunConfig {
  // training
  int batch_size = 32;
  double learning_rate = 0.001;
  int epochs_max = 30;
  double margin = 0.2;
  double lambda = 0.5;
  std::uint64_t seed = 1;
  int patience = 5;
  int eval_every = 1;
  double grad_clip_norm = 5.0;
  bool use_qspn = true;
  bool use_caption = true;
  bool use_late_fusion = false;
  bool freeze_proposals = false;

  // model dimensions
  int embed_dim = 300;
  int hidden_dim = 512;
  int clip_feature_dim = 512;
  int fc_hidden_dim = 64;
  int conv_dim = 512;
  int late_fusion_dim = 1024;
  int roi_bins = 4;

  // anchors
  int anchor_stride = 8;
  std::vector<int> anchor_scales{8, 16, 32, 64};

  // attention
  std::string attention_activation = "tanh";
  bool attention_scale = true;
  std::string sentence_pooling = "mean";

  // vocabulary
  int min_frequency = 1;
  int max_sentence_length = 10;

  // evaluation
  double nms_threshold = 0.7;
  int top_k_proposals = 100;
  bool rank_with_objectness = false;

  // paths
  std::string train_manifest;
  std::string val_manifest;
  std::string out_dir = "runs/default";

  // Stable textual form (fixed key order); also the digest input.
  std::string serialize() const;
  std::string digest() const;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// Applies a single key=value assignment (used for CLI overrides).
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace ttc
