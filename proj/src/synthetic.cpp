#include "ttc/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ttc/rng.hpp"

namespace ttc {

namespace {

const std::vector<std::string>& default_event_words() {
  static const std::vector<std::string> words{"door",   "book", "box",    "cup",  "laptop", "window",
                                              "bag",    "phone", "fridge", "drawer", "jar",  "cabinet",
                                              "closet", "towel", "pillow", "shoe"};
  return words;
}

double profile_weight(SyntheticEvent::Profile p, double rel) {
  switch (p) {
    case SyntheticEvent::Flat: return 1.0;
    case SyntheticEvent::Rising: return 0.25 + 0.75 * rel;
    case SyntheticEvent::Falling: return 1.0 - 0.75 * rel;
  }
  return 1.0;
}

// Expected feature rows of an event laid across `span` positions.
std::vector<double> expected_pattern(const SyntheticEvent& e, int span, int channels) {
  std::vector<double> rows(static_cast<std::size_t>(span) * channels);
  for (int r = 0; r < span; ++r) {
    const double rel = span > 1 ? static_cast<double>(r) / (span - 1) : 0.5;
    const double w = profile_weight(e.profile, rel);
    for (int c = 0; c < channels; ++c)
      rows[static_cast<std::size_t>(r) * channels + c] = w * e.signature[static_cast<std::size_t>(c)];
  }
  return rows;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  TTC_REQUIRE(spec.num_videos >= 1 && spec.pairs_per_video >= 1, "synthetic: empty spec");
  TTC_REQUIRE(spec.T >= 8 && spec.C >= 2, "synthetic: T/C too small");
  TTC_REQUIRE(!spec.order_sensitive || spec.pairs_per_video % 2 == 0,
              "synthetic: order_sensitive needs an even pairs_per_video");
  const std::vector<std::string>& nouns =
      spec.event_words.empty() ? default_event_words() : spec.event_words;

  Rng rng = Rng::derive(spec.seed, "synthetic");
  SyntheticDataset ds;
  ds.manifest.split = "train";

  // event table: one flat event per noun, or opposed rising/falling verb
  // pairs sharing a noun and a signature
  const int events_per_noun = spec.order_sensitive ? 2 : 1;
  const int nouns_needed = spec.order_sensitive ? spec.pairs_per_video / 2 : spec.pairs_per_video;
  TTC_REQUIRE(static_cast<int>(nouns.size()) >= nouns_needed,
              "synthetic: need at least " << nouns_needed << " event words, got " << nouns.size());
  static const char* kVerbs[] = {"opens", "closes", "lifts", "drops", "moves", "shakes"};
  for (const std::string& noun : nouns) {
    std::vector<double> signature(static_cast<std::size_t>(spec.C));
    for (double& v : signature) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
    if (spec.order_sensitive) {
      SyntheticEvent open{noun, "opens", SyntheticEvent::Rising, signature};
      SyntheticEvent close{noun, "closes", SyntheticEvent::Falling, signature};
      ds.events.push_back(std::move(open));
      ds.events.push_back(std::move(close));
    } else {
      SyntheticEvent e{noun, kVerbs[ds.events.size() % 6], SyntheticEvent::Flat, signature};
      ds.events.push_back(std::move(e));
    }
  }

  const double duration = spec.T / spec.rate;
  for (int v = 0; v < spec.num_videos; ++v) {
    VideoRecord rec;
    rec.video_id = "synth" + std::to_string(v);
    rec.duration = duration;
    rec.feature_path = "features/" + rec.video_id + ".csf";

    FeatureSequence seq;
    seq.video_id = rec.video_id;
    seq.duration = duration;
    seq.rate = spec.rate;
    seq.features = ad::Tensor::zeros({spec.T, spec.C});
    for (double& x : seq.features.values) x = spec.noise * rng.normal();

    // one event per equal-width slot keeps planted segments disjoint
    std::vector<int> noun_order(static_cast<std::size_t>(nouns.size()));
    for (std::size_t i = 0; i < noun_order.size(); ++i) noun_order[i] = static_cast<int>(i);
    rng.shuffle(noun_order);

    std::vector<int> event_ids;
    for (int p = 0; p < spec.pairs_per_video; ++p) {
      const int noun_idx = noun_order[static_cast<std::size_t>(p / events_per_noun)];
      event_ids.push_back(noun_idx * events_per_noun + (p % events_per_noun));
    }

    const double slot = duration / spec.pairs_per_video;
    std::vector<int> pair_events;
    for (int p = 0; p < spec.pairs_per_video; ++p) {
      const SyntheticEvent& e = ds.events[static_cast<std::size_t>(event_ids[static_cast<std::size_t>(p)])];
      const double len = slot * rng.uniform(0.5, 0.8);
      const double start = slot * p + rng.uniform(0.05 * slot, slot - len - 0.05 * slot);
      const ClipSegment gt{start, start + len};

      const int lo = std::clamp(static_cast<int>(gt.start * spec.rate), 0, spec.T - 1);
      const int hi = std::clamp(static_cast<int>(std::ceil(gt.end * spec.rate)) - 1, lo, spec.T - 1);
      const std::vector<double> pattern = expected_pattern(e, hi - lo + 1, spec.C);
      for (int r = lo; r <= hi; ++r)
        for (int c = 0; c < spec.C; ++c)
          seq.features.at(r, c) += pattern[static_cast<std::size_t>(r - lo) * spec.C + c];

      PairAnnotation pa;
      pa.sentence = "a person " + e.verb + " the " + e.noun;
      pa.gt = gt;
      rec.pairs.push_back(std::move(pa));
      pair_events.push_back(event_ids[static_cast<std::size_t>(p)]);
    }
    ds.manifest.videos.push_back(std::move(rec));
    ds.features.push_back(std::move(seq));
    ds.pair_event_id.push_back(std::move(pair_events));
  }
  return ds;
}

void write_synthetic(const SyntheticDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "features");
  save_manifest(ds.manifest, (fs::path(dir) / "manifest.json").string());
  for (std::size_t i = 0; i < ds.features.size(); ++i)
    save_features(ds.features[i],
                  resolve_feature_path(dir, ds.manifest.videos[i].feature_path));

  nlohmann::json j;
  j["signal"] = "unit-magnitude signature entries; noise is the Gaussian sigma added per element";
  j["events"] = nlohmann::json::array();
  for (const SyntheticEvent& e : ds.events) {
    nlohmann::json je;
    je["noun"] = e.noun;
    je["verb"] = e.verb;
    je["profile"] = e.profile == SyntheticEvent::Flat ? "flat"
                    : e.profile == SyntheticEvent::Rising ? "rising" : "falling";
    je["signature"] = e.signature;
    j["events"].push_back(std::move(je));
  }
  std::ofstream f((fs::path(dir) / "events.json").string());
  TTC_REQUIRE_IO(f.good(), "write_synthetic: cannot write events.json under " << dir);
  f << j.dump(2) << '\n';
}

double signature_matcher_recall(const SyntheticDataset& ds, double tiou_threshold) {
  int hits = 0;
  int total = 0;
  for (std::size_t v = 0; v < ds.manifest.videos.size(); ++v) {
    const VideoRecord& rec = ds.manifest.videos[v];
    const FeatureSequence& seq = ds.features[v];
    const int channels = seq.channels();
    for (std::size_t p = 0; p < rec.pairs.size(); ++p) {
      const SyntheticEvent& e =
          ds.events[static_cast<std::size_t>(ds.pair_event_id[v][p])];
      double best_score = -2.0;
      int best_candidate = -1;
      for (std::size_t q = 0; q < rec.pairs.size(); ++q) {
        const ClipSegment& cand = rec.pairs[q].gt;
        const int lo = std::clamp(static_cast<int>(cand.start * seq.rate), 0, seq.num_positions() - 1);
        const int hi = std::clamp(static_cast<int>(std::ceil(cand.end * seq.rate)) - 1, lo,
                                  seq.num_positions() - 1);
        const int span = hi - lo + 1;
        const std::vector<double> expect = expected_pattern(e, span, channels);
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int r = 0; r < span; ++r)
          for (int c = 0; c < channels; ++c) {
            const double a = seq.features.at(lo + r, c);
            const double b = expect[static_cast<std::size_t>(r) * channels + c];
            dot += a * b;
            na += a * a;
            nb += b * b;
          }
        const double score = dot / std::max(1e-12, std::sqrt(na) * std::sqrt(nb));
        if (score > best_score) {
          best_score = score;
          best_candidate = static_cast<int>(q);
        }
      }
      ++total;
      if (best_candidate >= 0 &&
          tiou(rec.pairs[static_cast<std::size_t>(best_candidate)].gt, rec.pairs[p].gt) >
              tiou_threshold)
        ++hits;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / total;
}

}  // namespace ttc
