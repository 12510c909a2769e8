#pragma once

#include <string>
#include <vector>

#include "ttc/qspn.hpp"
#include "ttc/segments.hpp"

namespace ttc {

struct PairAnnotation {
  std::string sentence;
  ClipSegment gt;
};

struct VideoRecord {
  std::string video_id;
  double duration = 0.0;
  std::string feature_path;
  std::vector<PairAnnotation> pairs;
};

// JSON dataset manifest; invariants (0 <= start < end <= duration, at
// least one pair per video) are enforced at load.
struct DatasetManifest {
  std::string split = "train";
  std::vector<VideoRecord> videos;

  int pair_count() const;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

// Feature file: "CSF1", u32 T, u32 C, f64 rate, then T*C little-endian
// 32-bit floats row-major. Values are widened to 64-bit in memory.
FeatureSequence load_features(const std::string& path);
void save_features(const FeatureSequence& seq, const std::string& path);

// FNV-1a over the manifest structure and feature payload bytes; identifies
// a dataset in run outputs.
std::string dataset_digest(const DatasetManifest& m, const std::string& root_dir);

// Resolves a (possibly relative) feature path against the manifest's
// directory.
std::string resolve_feature_path(const std::string& manifest_dir, const std::string& feature_path);

}  // namespace ttc
