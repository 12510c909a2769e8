#pragma once

#include <string>
#include <vector>

#include "ttc/model.hpp"

namespace ttc {

struct RetrievalResult {
  int query_index = -1;  // index into the flattened dataset pairs
  std::vector<std::pair<ClipSegment, double>> ranked;  // scores non-increasing
};

// Recall grid over tIoU thresholds {0.3, 0.5, 0.7} x K in {1, 5, 10}.
struct RecallTable {
  std::vector<double> taus{0.3, 0.5, 0.7};
  std::vector<int> ks{1, 5, 10};
  std::vector<std::vector<double>> values;  // [tau][k]
  int query_count = 0;

  double at(double tau, int k) const;
  std::string to_csv(const std::string& header_comment = "") const;
  std::string to_text() const;
};

struct SimilarityMatrix {
  std::vector<ClipSegment> segments;        // column order
  std::vector<std::vector<double>> values;  // [query][segment]

  double diagonal_mean() const;
  double off_diagonal_mean() const;
  std::string to_csv() const;
};

// Sorts (segment, score) pairs by descending score, ties by earlier start
// then shorter segment.
RetrievalResult rank_proposals(const std::vector<ClipSegment>& segments,
                               const std::vector<double>& scores, int query_index, int keep);

// Fraction of queries whose top-K contains a candidate with
// tIoU(candidate, gt) strictly greater than tau.
double recall_at_k(const std::vector<RetrievalResult>& results,
                   const std::vector<ClipSegment>& gts, double tau, int k);

enum class ScoringMode { Model, Random };

// Full protocol: per video, attention from that video's evaluated
// queries, proposals, NMS, top-K, ranking, recall grid. Random mode
// replaces the similarity model with seeded uniform scores over the same
// proposals (baseline sanity bands).
RecallTable evaluate_dataset(const Model& model, ParamStore& store, const LoadedDataset& ds,
                             ScoringMode mode = ScoringMode::Model, std::uint64_t random_seed = 0);

// Scores every (query, gt segment) pair of one video.
SimilarityMatrix export_similarity_matrix(const Model& model, ParamStore& store,
                                          const LoadedDataset& ds, int video_index);

}  // namespace ttc
