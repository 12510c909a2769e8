#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ttc/evaluator.hpp"
#include "ttc/trainer.hpp"

using namespace ttc;

namespace {

// Small model over a seeded synthetic corpus, shared by the protocol tests.
struct EvalFixture {
  SyntheticDataset synth;
  Vocabulary vocab;
  LoadedDataset data;
  ModelConfig mc;
  Model model;
  ParamStore store;

  static SyntheticDataset make_synth() {
    SyntheticSpec spec;
    spec.num_videos = 3;
    spec.pairs_per_video = 3;
    spec.T = 48;
    spec.C = 8;
    spec.noise = 0.05;
    spec.seed = 21;
    return generate_synthetic(spec);
  }

  static ModelConfig make_config(int vocab_size) {
    ModelConfig mc;
    mc.vocab_size = vocab_size;
    mc.feature_channels = 8;
    mc.embed_dim = 6;
    mc.hidden_dim = 10;
    mc.clip_feature_dim = 12;
    mc.fc_hidden_dim = 4;
    mc.conv_dim = 8;
    mc.late_fusion_dim = 14;
    mc.roi_bins = 3;
    mc.anchors.stride = 4;
    mc.anchors.scales = {8, 16};
    mc.top_k_proposals = 100;
    return mc;
  }

  EvalFixture()
      : synth(make_synth()),
        vocab(build_vocab(manifest_sentences(synth.manifest), 1, 10)),
        data(dataset_from_synthetic(synth, vocab)),
        mc(make_config(vocab.size())),
        model(mc) {
    model.create_params(store);
    Rng rng = Rng::derive(77, "init");
    model.init_params(store, rng);
  }
};

}  // namespace

TEST_CASE("tiou arithmetic and properties") {
  CHECK(tiou({2, 6}, {4, 8}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(tiou({3, 5}, {3, 5}) == 1.0);
  CHECK(tiou({2.0, 7.9}, {11.4, 16.9}) == 0.0);  // disjoint annotated segments

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double a0 = rng.uniform(0.0, 20.0);
    const ClipSegment a{a0, a0 + rng.uniform(0.1, 10.0)};
    const double b0 = rng.uniform(0.0, 20.0);
    const ClipSegment b{b0, b0 + rng.uniform(0.1, 10.0)};
    const double v = tiou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == tiou(b, a));
    if (v == 1.0) CHECK(a == b);
  }
}

TEST_CASE("rank_proposals: argmax consistency, determinism under permutation") {
  std::vector<ClipSegment> segs{{0, 2}, {2, 4}, {4, 6}, {6, 8}};
  std::vector<double> scores{0.3, 0.9, 0.9, 0.1};
  RetrievalResult r = rank_proposals(segs, scores, 0, 100);
  REQUIRE(r.ranked.size() == 4);
  CHECK(r.ranked[0].second == 0.9);
  CHECK(r.ranked[0].first == ClipSegment{2, 4});  // tie broken by earlier start
  CHECK(r.ranked[1].first == ClipSegment{4, 6});
  CHECK(r.ranked[3].second == 0.1);

  // rank-1 equals exhaustive argmax
  double best = -1.0;
  for (const double s : scores) best = std::max(best, s);
  CHECK(r.ranked[0].second == best);

  // permuting inputs leaves the ranking identical
  std::vector<ClipSegment> psegs{segs[3], segs[1], segs[0], segs[2]};
  std::vector<double> pscores{scores[3], scores[1], scores[0], scores[2]};
  RetrievalResult rp = rank_proposals(psegs, pscores, 0, 100);
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    CHECK(rp.ranked[i].first == r.ranked[i].first);
    CHECK(rp.ranked[i].second == r.ranked[i].second);
  }

  RetrievalResult single = rank_proposals({{1, 2}}, {0.5}, 0, 100);
  CHECK(single.ranked.size() == 1);

  CHECK_THROWS_AS(rank_proposals({}, {}, 0, 100), std::invalid_argument);
}

TEST_CASE("recall_at_k: exact hits, misses, brute-force comparison") {
  // every query's rank-1 equals its gt
  {
    std::vector<RetrievalResult> results;
    std::vector<ClipSegment> gts;
    for (int q = 0; q < 5; ++q) {
      const ClipSegment gt{q * 2.0, q * 2.0 + 1.5};
      RetrievalResult r;
      r.query_index = q;
      r.ranked = {{gt, 0.9}, {{50.0, 60.0}, 0.1}};
      results.push_back(r);
      gts.push_back(gt);
    }
    for (const double tau : {0.3, 0.5, 0.7})
      for (const int k : {1, 5, 10}) CHECK(recall_at_k(results, gts, tau, k) == 1.0);
  }

  // no overlap at all
  {
    std::vector<RetrievalResult> results;
    std::vector<ClipSegment> gts;
    for (int q = 0; q < 4; ++q) {
      RetrievalResult r;
      r.query_index = q;
      r.ranked = {{{30.0, 40.0}, 0.5}};
      results.push_back(r);
      gts.push_back({0.0, 1.0});
    }
    CHECK(recall_at_k(results, gts, 0.3, 10) == 0.0);
  }

  // randomized brute-force counting oracle
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int queries = 1 + rng.uniform_int(6);
    std::vector<RetrievalResult> results;
    std::vector<ClipSegment> gts;
    for (int q = 0; q < queries; ++q) {
      RetrievalResult r;
      r.query_index = q;
      const int n = 1 + rng.uniform_int(8);
      std::vector<double> scores;
      for (int i = 0; i < n; ++i) scores.push_back(rng.uniform());
      std::vector<ClipSegment> segs;
      for (int i = 0; i < n; ++i) {
        const double s = rng.uniform(0.0, 10.0);
        segs.push_back({s, s + rng.uniform(0.2, 5.0)});
      }
      results.push_back(rank_proposals(segs, scores, q, 100));
      const double g = rng.uniform(0.0, 10.0);
      gts.push_back({g, g + rng.uniform(0.2, 5.0)});
    }
    const double tau = rng.uniform(0.1, 0.9);
    const int k = 1 + rng.uniform_int(10);
    int hits = 0;
    for (int q = 0; q < queries; ++q) {
      bool hit = false;
      for (int i = 0; i < std::min<int>(k, static_cast<int>(results[static_cast<std::size_t>(q)].ranked.size())); ++i)
        hit = hit || tiou(results[static_cast<std::size_t>(q)].ranked[static_cast<std::size_t>(i)].first,
                          gts[static_cast<std::size_t>(q)]) > tau;
      hits += hit ? 1 : 0;
    }
    CHECK(recall_at_k(results, gts, tau, k) ==
          doctest::Approx(static_cast<double>(hits) / queries).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_dataset: monotone recall grid, deterministic, random band") {
  EvalFixture fx;
  RecallTable t1 = evaluate_dataset(fx.model, fx.store, fx.data);
  CHECK(t1.query_count == 9);

  // monotone in K, anti-monotone in tau
  for (std::size_t ti = 0; ti < t1.taus.size(); ++ti)
    for (std::size_t ki = 0; ki + 1 < t1.ks.size(); ++ki)
      CHECK(t1.values[ti][ki] <= t1.values[ti][ki + 1]);
  for (std::size_t ki = 0; ki < t1.ks.size(); ++ki)
    for (std::size_t ti = 0; ti + 1 < t1.taus.size(); ++ti)
      CHECK(t1.values[ti][ki] >= t1.values[ti + 1][ki]);

  // pure evaluation: bitwise identical on a second run
  RecallTable t2 = evaluate_dataset(fx.model, fx.store, fx.data);
  for (std::size_t ti = 0; ti < t1.taus.size(); ++ti)
    for (std::size_t ki = 0; ki < t1.ks.size(); ++ki)
      CHECK(t1.values[ti][ki] == t2.values[ti][ki]);

  // random-scoring baseline falls inside a Monte-Carlo band over seeds
  double acc = 0.0;
  double lo = 1.0, hi = 0.0;
  for (int s = 0; s < 100; ++s) {
    const double r1 = evaluate_dataset(fx.model, fx.store, fx.data, ScoringMode::Random,
                                       static_cast<std::uint64_t>(s))
                          .at(0.5, 1);
    acc += r1;
    lo = std::min(lo, r1);
    hi = std::max(hi, r1);
  }
  const double mean = acc / 100.0;
  CHECK(mean < 0.9);  // random scoring cannot look like a trained model
  const double extra = evaluate_dataset(fx.model, fx.store, fx.data, ScoringMode::Random, 12345)
                           .at(0.5, 1);
  CHECK(extra >= std::max(0.0, lo - 0.35));
  CHECK(extra <= std::min(1.0, hi + 0.35));

  // CSV and text renderings carry the full grid
  const std::string csv = t1.to_csv("digest=abc");
  CHECK(csv.find("# digest=abc") == 0);
  CHECK(csv.find("R@10") != std::string::npos);
  CHECK(t1.to_text().find("tIoU=0.5") != std::string::npos);
}

TEST_CASE("similarity matrix: shape, range, row swap, rejections") {
  EvalFixture fx;
  SimilarityMatrix m = export_similarity_matrix(fx.model, fx.store, fx.data, 0);
  REQUIRE(m.values.size() == 3);
  REQUIRE(m.segments.size() == 3);
  for (const auto& row : m.values)
    for (const double v : row) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }

  const std::string csv = m.to_csv();
  CHECK(csv.find("seg[") != std::string::npos);

  // swapping two annotated pairs permutes rows and columns accordingly
  SyntheticDataset swapped_synth = fx.synth;
  std::swap(swapped_synth.manifest.videos[0].pairs[0], swapped_synth.manifest.videos[0].pairs[1]);
  LoadedDataset swapped = dataset_from_synthetic(swapped_synth, fx.vocab);
  SimilarityMatrix ms = export_similarity_matrix(fx.model, fx.store, swapped, 0);
  const int perm[3] = {1, 0, 2};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(ms.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ==
            doctest::Approx(m.values[static_cast<std::size_t>(perm[i])][static_cast<std::size_t>(perm[j])])
                .epsilon(1e-12));

  // single-pair video is rejected
  LoadedDataset single = fx.data;
  single.manifest.videos[0].pairs.resize(1);
  CHECK_THROWS_AS(export_similarity_matrix(fx.model, fx.store, single, 0), std::invalid_argument);
}
