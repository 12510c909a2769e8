#include "ttc/manifest.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace ttc {

namespace {

using nlohmann::json;

void validate_video(const VideoRecord& v) {
  TTC_REQUIRE(!v.video_id.empty(), "manifest: video with empty video_id");
  TTC_REQUIRE(v.duration > 0.0, "manifest: video '" << v.video_id << "' has non-positive duration");
  TTC_REQUIRE(!v.pairs.empty(), "manifest: video '" << v.video_id << "' has no sentence-clip pairs");
  for (std::size_t i = 0; i < v.pairs.size(); ++i) {
    const PairAnnotation& p = v.pairs[i];
    TTC_REQUIRE(p.gt.start >= 0.0, "manifest: video '" << v.video_id << "' pair " << i
                                                       << ": start < 0");
    TTC_REQUIRE(p.gt.start < p.gt.end,
                "manifest: video '" << v.video_id << "' pair " << i << ": start >= end");
    TTC_REQUIRE(p.gt.end <= v.duration + 1e-9, "manifest: video '" << v.video_id << "' pair " << i
                                                                   << ": end exceeds duration");
  }
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_str(const std::string& s, std::uint64_t h) { return fnv1a(s.data(), s.size(), h); }

template <class T>
void write_raw(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::ifstream& f, const char* what, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  TTC_REQUIRE_IO(f.gcount() == sizeof(T), "feature file " << path << ": truncated " << what);
  return v;
}

}  // namespace

int DatasetManifest::pair_count() const {
  int n = 0;
  for (const VideoRecord& v : videos) n += static_cast<int>(v.pairs.size());
  return n;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  TTC_REQUIRE_IO(f.good(), "load_manifest: cannot open " << path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    TTC_REQUIRE_IO(false, "load_manifest: " << path << " is not valid JSON: " << e.what());
  }

  DatasetManifest m;
  m.split = j.value("split", "train");
  TTC_REQUIRE(j.contains("videos") && j["videos"].is_array(),
              "load_manifest: " << path << " missing 'videos' array");
  for (const json& jv : j["videos"]) {
    VideoRecord v;
    v.video_id = jv.value("video_id", "");
    v.duration = jv.value("duration", 0.0);
    v.feature_path = jv.value("feature_path", "");
    TTC_REQUIRE(jv.contains("pairs") && jv["pairs"].is_array(),
                "manifest: video '" << v.video_id << "' missing 'pairs' array");
    for (const json& jp : jv["pairs"]) {
      PairAnnotation p;
      p.sentence = jp.value("sentence", "");
      TTC_REQUIRE(jp.contains("start") && jp.contains("end"),
                  "manifest: video '" << v.video_id << "' pair missing start/end");
      p.gt.start = jp["start"].get<double>();
      p.gt.end = jp["end"].get<double>();
      v.pairs.push_back(std::move(p));
    }
    validate_video(v);
    m.videos.push_back(std::move(v));
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  json j;
  j["split"] = m.split;
  j["videos"] = json::array();
  for (const VideoRecord& v : m.videos) {
    json jv;
    jv["video_id"] = v.video_id;
    jv["duration"] = v.duration;
    jv["feature_path"] = v.feature_path;
    jv["pairs"] = json::array();
    for (const PairAnnotation& p : v.pairs) {
      json jp;
      jp["sentence"] = p.sentence;
      jp["start"] = p.gt.start;
      jp["end"] = p.gt.end;
      jv["pairs"].push_back(std::move(jp));
    }
    j["videos"].push_back(std::move(jv));
  }
  std::ofstream f(path);
  TTC_REQUIRE_IO(f.good(), "save_manifest: cannot open " << path);
  f << j.dump(2) << '\n';
  TTC_REQUIRE_IO(f.good(), "save_manifest: write failed for " << path);
}

FeatureSequence load_features(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  TTC_REQUIRE_IO(f.good(), "load_features: cannot open " << path);
  char magic[4];
  f.read(magic, 4);
  TTC_REQUIRE_IO(f.gcount() == 4 && std::memcmp(magic, "CSF1", 4) == 0,
                 "feature file " << path << ": bad magic (expected CSF1)");
  const auto t = read_raw<std::uint32_t>(f, "T", path);
  const auto c = read_raw<std::uint32_t>(f, "C", path);
  const auto rate = read_raw<double>(f, "rate", path);
  TTC_REQUIRE_IO(t >= 1 && c >= 1, "feature file " << path << ": empty dimensions T=" << t
                                                   << " C=" << c);
  TTC_REQUIRE_IO(rate > 0.0, "feature file " << path << ": non-positive rate");

  const std::size_t n = static_cast<std::size_t>(t) * c;
  std::vector<float> payload(n);
  f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(n * sizeof(float)));
  TTC_REQUIRE_IO(f.gcount() == static_cast<std::streamsize>(n * sizeof(float)),
                 "feature file " << path << ": truncated payload (expected " << n << " floats)");

  FeatureSequence seq;
  seq.duration = t / rate;
  seq.rate = rate;
  seq.features = ad::Tensor::zeros({static_cast<int>(t), static_cast<int>(c)});
  for (std::size_t i = 0; i < n; ++i) {
    TTC_REQUIRE_IO(std::isfinite(payload[i]),
                   "feature file " << path << ": non-finite value at element " << i);
    seq.features.values[i] = static_cast<double>(payload[i]);
  }
  return seq;
}

void save_features(const FeatureSequence& seq, const std::string& path) {
  TTC_REQUIRE(seq.features.rank() == 2, "save_features: features must be [T x C]");
  std::ofstream f(path, std::ios::binary);
  TTC_REQUIRE_IO(f.good(), "save_features: cannot open " << path);
  f.write("CSF1", 4);
  write_raw(f, static_cast<std::uint32_t>(seq.features.dim(0)));
  write_raw(f, static_cast<std::uint32_t>(seq.features.dim(1)));
  write_raw(f, seq.rate);
  for (const double v : seq.features.values) {
    const float x = static_cast<float>(v);
    write_raw(f, x);
  }
  TTC_REQUIRE_IO(f.good(), "save_features: write failed for " << path);
}

std::string resolve_feature_path(const std::string& manifest_dir, const std::string& feature_path) {
  const std::filesystem::path p(feature_path);
  if (p.is_absolute()) return feature_path;
  return (std::filesystem::path(manifest_dir) / p).string();
}

std::string dataset_digest(const DatasetManifest& m, const std::string& root_dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a_str(m.split, h);
  for (const VideoRecord& v : m.videos) {
    h = fnv1a_str(v.video_id, h);
    h = fnv1a(&v.duration, sizeof(v.duration), h);
    for (const PairAnnotation& p : v.pairs) {
      h = fnv1a_str(p.sentence, h);
      h = fnv1a(&p.gt.start, sizeof(double), h);
      h = fnv1a(&p.gt.end, sizeof(double), h);
    }
    const std::string fp = resolve_feature_path(root_dir, v.feature_path);
    std::ifstream f(fp, std::ios::binary);
    TTC_REQUIRE_IO(f.good(), "dataset_digest: cannot open feature file " << fp);
    char buf[4096];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0)
      h = fnv1a(buf, static_cast<std::size_t>(f.gcount()), h);
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace ttc
