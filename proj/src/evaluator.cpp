#include "ttc/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ttc/rng.hpp"

namespace ttc {

double RecallTable::at(double tau, int k) const {
  for (std::size_t ti = 0; ti < taus.size(); ++ti)
    for (std::size_t ki = 0; ki < ks.size(); ++ki)
      if (taus[ti] == tau && ks[ki] == k) return values[ti][ki];
  TTC_REQUIRE(false, "recall table has no cell (" << tau << ", " << k << ")");
  return 0.0;
}

std::string RecallTable::to_csv(const std::string& header_comment) const {
  std::ostringstream o;
  if (!header_comment.empty()) o << "# " << header_comment << '\n';
  o << "tiou";
  for (const int k : ks) o << ",R@" << k;
  o << '\n';
  o.setf(std::ios::fixed);
  o.precision(6);
  for (std::size_t ti = 0; ti < taus.size(); ++ti) {
    o << taus[ti];
    for (std::size_t ki = 0; ki < ks.size(); ++ki) o << ',' << values[ti][ki];
    o << '\n';
  }
  return o.str();
}

std::string RecallTable::to_text() const {
  std::ostringstream o;
  o << "            ";
  for (const int k : ks) {
    o << "R@" << k;
    o << std::string(k < 10 ? 7 : 6, ' ');
  }
  o << '\n';
  o.setf(std::ios::fixed);
  o.precision(3);
  for (std::size_t ti = 0; ti < taus.size(); ++ti) {
    o << "tIoU=" << taus[ti] << "  ";
    for (std::size_t ki = 0; ki < ks.size(); ++ki) o << " " << values[ti][ki] << "    ";
    o << '\n';
  }
  return o.str();
}

double SimilarityMatrix::diagonal_mean() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) acc += values[i][i];
  return acc / static_cast<double>(values.size());
}

double SimilarityMatrix::off_diagonal_mean() const {
  double acc = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < values[i].size(); ++j)
      if (i != j) {
        acc += values[i][j];
        ++n;
      }
  return n == 0 ? 0.0 : acc / n;
}

std::string SimilarityMatrix::to_csv() const {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(6);
  o << "query";
  for (const ClipSegment& s : segments) o << ",seg[" << s.start << ':' << s.end << ']';
  o << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) {
    o << i;
    for (const double v : values[i]) o << ',' << v;
    o << '\n';
  }
  return o.str();
}

RetrievalResult rank_proposals(const std::vector<ClipSegment>& segments,
                               const std::vector<double>& scores, int query_index, int keep) {
  TTC_REQUIRE(!segments.empty(), "rank_proposals: empty proposal list");
  TTC_REQUIRE(segments.size() == scores.size(), "rank_proposals: segment/score size mismatch");
  std::vector<int> order(segments.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = scores[static_cast<std::size_t>(a)];
    const double sb = scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    const ClipSegment& x = segments[static_cast<std::size_t>(a)];
    const ClipSegment& y = segments[static_cast<std::size_t>(b)];
    if (x.start != y.start) return x.start < y.start;
    return x.length() < y.length();
  });
  RetrievalResult r;
  r.query_index = query_index;
  for (const int i : order) {
    if (static_cast<int>(r.ranked.size()) >= keep) break;
    r.ranked.emplace_back(segments[static_cast<std::size_t>(i)], scores[static_cast<std::size_t>(i)]);
  }
  return r;
}

double recall_at_k(const std::vector<RetrievalResult>& results,
                   const std::vector<ClipSegment>& gts, double tau, int k) {
  TTC_REQUIRE(results.size() == gts.size(), "recall_at_k: result/gt count mismatch");
  if (results.empty()) return 0.0;
  int hits = 0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const int limit = std::min<int>(k, static_cast<int>(results[q].ranked.size()));
    for (int i = 0; i < limit; ++i)
      if (tiou(results[q].ranked[static_cast<std::size_t>(i)].first, gts[q]) > tau) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

RecallTable evaluate_dataset(const Model& model, ParamStore& store, const LoadedDataset& ds,
                             ScoringMode mode, std::uint64_t random_seed) {
  std::vector<RetrievalResult> results;
  std::vector<ClipSegment> gts;
  Rng random_scores = Rng::derive(random_seed, "random-baseline");

  for (int v = 0; v < static_cast<int>(ds.manifest.videos.size()); ++v) {
    const FeatureSequence& video = ds.video_features(v);
    // evaluated queries of this video, in dataset order
    std::vector<const LoadedDataset::Pair*> video_pairs;
    for (const LoadedDataset::Pair& p : ds.pairs)
      if (p.video_index == v) video_pairs.push_back(&p);
    if (video_pairs.empty()) continue;

    ad::Tape tape;
    ParamBinder params(tape, store, [](const std::string&) { return false; });
    std::vector<SentenceEncoding> encodings;
    for (const LoadedDataset::Pair* p : video_pairs)
      encodings.push_back(model.encode_sentence(params, p->tokens));
    const Model::VideoForward vf = model.video_pipeline(params, video, encodings);
    TTC_REQUIRE(!vf.proposals.empty(), "evaluate_dataset: no proposals for video '"
                                           << video.video_id << "'");

    std::vector<ClipSegment> segments;
    std::vector<ad::Tensor> features;
    for (const Proposal& p : vf.proposals) {
      segments.push_back(p.segment);
      features.push_back(model.clip_feature(params, vf, video, p.segment));
    }
    for (std::size_t qi = 0; qi < video_pairs.size(); ++qi) {
      std::vector<double> scores(segments.size());
      for (std::size_t pi = 0; pi < segments.size(); ++pi) {
        if (mode == ScoringMode::Random) {
          scores[pi] = random_scores.uniform();
        } else {
          double s = model.similarity(params, encodings[qi], features[pi]).item();
          if (model.config().rank_with_objectness) s *= vf.proposals[pi].score;
          scores[pi] = s;
        }
      }
      results.push_back(rank_proposals(segments, scores,
                                       static_cast<int>(results.size()), 100));
      gts.push_back(video_pairs[qi]->gt);
    }
  }

  RecallTable table;
  table.query_count = static_cast<int>(results.size());
  table.values.assign(table.taus.size(), std::vector<double>(table.ks.size(), 0.0));
  for (std::size_t ti = 0; ti < table.taus.size(); ++ti)
    for (std::size_t ki = 0; ki < table.ks.size(); ++ki)
      table.values[ti][ki] = recall_at_k(results, gts, table.taus[ti], table.ks[ki]);
  return table;
}

SimilarityMatrix export_similarity_matrix(const Model& model, ParamStore& store,
                                          const LoadedDataset& ds, int video_index) {
  const VideoRecord& rec = ds.manifest.videos[static_cast<std::size_t>(video_index)];
  TTC_REQUIRE(rec.pairs.size() >= 2, "export_similarity_matrix: video '"
                                         << rec.video_id << "' has fewer than 2 annotated pairs");
  const FeatureSequence& video = ds.video_features(video_index);

  ad::Tape tape;
  ParamBinder params(tape, store, [](const std::string&) { return false; });
  std::vector<SentenceEncoding> encodings;
  std::vector<const LoadedDataset::Pair*> video_pairs;
  for (const LoadedDataset::Pair& p : ds.pairs)
    if (p.video_index == video_index) video_pairs.push_back(&p);
  for (const LoadedDataset::Pair* p : video_pairs)
    encodings.push_back(model.encode_sentence(params, p->tokens));
  const Model::VideoForward vf = model.video_pipeline(params, video, encodings);

  SimilarityMatrix m;
  std::vector<ad::Tensor> gt_features;
  for (const LoadedDataset::Pair* p : video_pairs) {
    m.segments.push_back(p->gt);
    gt_features.push_back(model.clip_feature(params, vf, video, p->gt));
  }
  for (std::size_t qi = 0; qi < video_pairs.size(); ++qi) {
    std::vector<double> row;
    for (const ad::Tensor& f : gt_features)
      row.push_back(model.similarity(params, encodings[qi], f).item());
    m.values.push_back(std::move(row));
  }
  return m;
}

}  // namespace ttc
