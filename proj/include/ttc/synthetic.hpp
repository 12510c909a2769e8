#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttc/manifest.hpp"

namespace ttc {

// Desk-scale synthetic corpus: each sentence names an event whose
// signature vector is planted into the feature rows of its ground-truth
// segment, with Gaussian noise elsewhere. With order_sensitive set, nouns
// appear twice per video with opposed temporal profiles (rising "opens"
// vs falling "closes"), so only word identity plus frame order
// disambiguates them.
struct SyntheticSpec {
  int num_videos = 8;
  int pairs_per_video = 4;
  int T = 128;
  int C = 32;
  std::vector<std::string> event_words;  // nouns; defaults provided
  double noise = 0.1;
  std::uint64_t seed = 1;
  bool order_sensitive = false;
  double rate = 1.0;  // feature positions per second
};

struct SyntheticEvent {
  std::string noun;
  std::string verb;
  enum Profile { Flat, Rising, Falling } profile = Flat;
  std::vector<double> signature;  // [C], entries +-1
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<FeatureSequence> features;        // parallel to manifest.videos
  std::vector<SyntheticEvent> events;
  std::vector<std::vector<int>> pair_event_id;  // [video][pair] -> event index
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

// Writes manifest.json, features/*.csf and events.json under dir.
void write_synthetic(const SyntheticDataset& ds, const std::string& dir);

// Upper-bound sanity matcher: ranks each query's candidate segments (the
// video's planted segments) by normalized correlation with the query
// event's expected pattern, generator knowledge included. At noise 0 this
// reaches recall 1.0; it guards against unlearnable fixtures.
double signature_matcher_recall(const SyntheticDataset& ds, double tiou_threshold);

}  // namespace ttc
