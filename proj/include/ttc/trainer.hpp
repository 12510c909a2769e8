#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttc/evaluator.hpp"
#include "ttc/model.hpp"

namespace ttc {

struct EpochStats {
  int epoch = 0;
  double mean_retrieval_loss = 0.0;
  double mean_caption_loss = 0.0;
  double mean_proposal_loss = 0.0;
  double val_r1_at_05 = 0.0;  // most recent validation measurement
  double wall_seconds = 0.0;

  static std::string csv_header();
  std::string csv_row() const;
};

// Uniform-without-replacement batches: one shuffled pass per epoch,
// derived only from (seed, epoch) so resumed runs reproduce the schedule.
std::vector<std::vector<int>> epoch_batches(int pair_count, int batch_size, std::uint64_t seed,
                                            int epoch);

// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias correction) over
// every store parameter; missing gradients count as zero. Rejects the
// whole step when any gradient is non-finite, naming the parameter.
void adam_update(ParamStore& store, const std::unordered_map<std::string, ad::Tensor>& grads,
                 double lr);

// Scales all gradients so their global L2 norm is at most max_norm.
void clip_gradients(std::unordered_map<std::string, ad::Tensor>& grads, double max_norm);

enum class StopDecision { Continue, Stop };

// Stops after `patience` consecutive validation points without an
// improvement greater than 1e-6.
StopDecision early_stopping_check(const std::vector<double>& validation_history, int patience);

struct NegativeSample {
  ClipSegment segment;
  int video_index = -1;
  enum Provenance { SameVideo, OtherVideo } provenance = SameVideo;
};

class Trainer {
 public:
  Trainer(Model& model, ParamStore& store, const RunConfig& cfg, const LoadedDataset& train_data,
          const LoadedDataset* val_data = nullptr);

  EpochStats run_epoch(int epoch);

  // Full loop: epochs, periodic validation, early stopping, CSV log and
  // checkpointing under out_dir (empty out_dir skips file output).
  std::vector<EpochStats> train(const std::string& out_dir);

  const std::vector<double>& validation_history() const { return val_history_; }

  // Exposed for tests: one optimization step over an explicit batch.
  struct BatchLosses {
    double retrieval = 0.0;
    double caption = 0.0;
    double proposal = 0.0;
  };
  BatchLosses train_batch(const std::vector<int>& pair_indices, Rng& sample_rng);

  // Negative sampling rule: a same-video proposal with tIoU < 0.5 against
  // the positive gt when available, else a proposal from another batch
  // video. Exposed for the provenance-distribution test.
  static std::optional<NegativeSample> sample_negative(
      const std::vector<Proposal>& same_video_proposals, const ClipSegment& gt, int video_index,
      const std::vector<std::pair<int, const std::vector<Proposal>*>>& other_videos, Rng& rng);

 private:
  Model& model_;
  ParamStore& store_;
  RunConfig cfg_;
  const LoadedDataset& train_;
  const LoadedDataset* val_;
  std::vector<double> val_history_;
};

}  // namespace ttc
