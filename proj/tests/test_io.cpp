#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ttc/manifest.hpp"
#include "ttc/runconfig.hpp"
#include "ttc/synthetic.hpp"

using namespace ttc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ttc_io_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

DatasetManifest tiny_manifest() {
  DatasetManifest m;
  m.split = "train";
  VideoRecord v;
  v.video_id = "vid0";
  v.duration = 10.0;
  v.feature_path = "vid0.csf";
  v.pairs.push_back({"a person opens the door", {1.0, 4.0}});
  v.pairs.push_back({"a person closes the door", {6.0, 9.0}});
  m.videos.push_back(v);
  return m;
}

FeatureSequence tiny_features() {
  FeatureSequence seq;
  seq.video_id = "vid0";
  seq.duration = 10.0;
  seq.rate = 1.0;
  seq.features = ad::Tensor::zeros({10, 4});
  for (int i = 0; i < seq.features.size(); ++i) seq.features.at(i) = 0.125 * i - 3.0;
  return seq;
}

}  // namespace

TEST_CASE("manifest round trip and validation") {
  TempDir dir;
  DatasetManifest m = tiny_manifest();
  save_manifest(m, dir.file("m.json"));
  DatasetManifest loaded = load_manifest(dir.file("m.json"));
  CHECK(loaded.split == m.split);
  REQUIRE(loaded.videos.size() == 1);
  CHECK(loaded.videos[0].video_id == "vid0");
  CHECK(loaded.videos[0].pairs.size() == 2);
  CHECK(loaded.videos[0].pairs[1].gt == ClipSegment{6.0, 9.0});

  // end beyond duration names the pair
  DatasetManifest bad = tiny_manifest();
  bad.videos[0].pairs[1].gt.end = 11.0;
  save_manifest(bad, dir.file("bad.json"));
  CHECK_THROWS_WITH_AS(load_manifest(dir.file("bad.json")), doctest::Contains("pair 1"),
                       std::invalid_argument);

  DatasetManifest swapped = tiny_manifest();
  swapped.videos[0].pairs[0].gt = {4.0, 1.0};
  save_manifest(swapped, dir.file("swapped.json"));
  CHECK_THROWS_AS(load_manifest(dir.file("swapped.json")), std::invalid_argument);

  std::ofstream(dir.file("garbage.json")) << "not json[";
  CHECK_THROWS_AS(load_manifest(dir.file("garbage.json")), std::runtime_error);

  DatasetManifest empty_pairs = tiny_manifest();
  empty_pairs.videos[0].pairs.clear();
  save_manifest(empty_pairs, dir.file("nopairs.json"));
  CHECK_THROWS_AS(load_manifest(dir.file("nopairs.json")), std::invalid_argument);
}

TEST_CASE("feature file round trip is bit-exact at 32-bit payload") {
  TempDir dir;
  FeatureSequence seq = tiny_features();
  save_features(seq, dir.file("f.csf"));
  FeatureSequence loaded = load_features(dir.file("f.csf"));
  CHECK(loaded.features.shape == seq.features.shape);
  CHECK(loaded.rate == seq.rate);
  for (int i = 0; i < seq.features.size(); ++i) {
    // payload is float; widening must be exact
    CHECK(loaded.features.at(i) == static_cast<double>(static_cast<float>(seq.features.at(i))));
  }
  // saving the loaded copy reproduces identical bytes
  save_features(loaded, dir.file("f2.csf"));
  std::ifstream a(dir.file("f.csf"), std::ios::binary);
  std::ifstream b(dir.file("f2.csf"), std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("feature file corruption is rejected") {
  TempDir dir;
  FeatureSequence seq = tiny_features();
  save_features(seq, dir.file("f.csf"));

  // truncated payload
  {
    std::ifstream in(dir.file("f.csf"), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 7);
    std::ofstream out(dir.file("trunc.csf"), std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS_WITH_AS(load_features(dir.file("trunc.csf")), doctest::Contains("truncated"),
                       std::runtime_error);

  // bad magic
  {
    std::ofstream out(dir.file("magic.csf"), std::ios::binary);
    out << "XXXXjunkjunkjunk";
  }
  CHECK_THROWS_WITH_AS(load_features(dir.file("magic.csf")), doctest::Contains("magic"),
                       std::runtime_error);

  // NaN payload
  {
    FeatureSequence nan_seq = tiny_features();
    nan_seq.features.at(3) = std::numeric_limits<double>::quiet_NaN();
    save_features(nan_seq, dir.file("nan.csf"));
  }
  CHECK_THROWS_WITH_AS(load_features(dir.file("nan.csf")), doctest::Contains("non-finite"),
                       std::runtime_error);

  // zero-T header
  {
    std::ofstream out(dir.file("zero.csf"), std::ios::binary);
    out << "CSF1";
    std::uint32_t t = 0, c = 4;
    double rate = 1.0;
    out.write(reinterpret_cast<char*>(&t), 4);
    out.write(reinterpret_cast<char*>(&c), 4);
    out.write(reinterpret_cast<char*>(&rate), 8);
  }
  CHECK_THROWS_AS(load_features(dir.file("zero.csf")), std::runtime_error);
}

TEST_CASE("run config: defaults, parsing, unknown keys, digest") {
  RunConfig def;
  CHECK(def.batch_size == 32);
  CHECK(def.learning_rate == 0.001);
  CHECK(def.epochs_max == 30);
  CHECK(def.margin == 0.2);
  CHECK(def.lambda == 0.5);
  CHECK(def.hidden_dim == 512);
  CHECK(def.embed_dim == 300);
  CHECK(def.late_fusion_dim == 1024);
  CHECK(def.fc_hidden_dim == 64);
  CHECK(def.nms_threshold == 0.7);
  CHECK(def.top_k_proposals == 100);

  RunConfig parsed = parse_run_config_text(
      "# comment\nbatch_size = 8\nlambda=1.5\nanchor_scales=4,8,12\nuse_qspn=false\n");
  CHECK(parsed.batch_size == 8);
  CHECK(parsed.lambda == 1.5);
  CHECK(parsed.anchor_scales == std::vector<int>{4, 8, 12});
  CHECK_FALSE(parsed.use_qspn);

  CHECK_THROWS_WITH_AS(parse_run_config_text("no_such_key=1\n"), doctest::Contains("unknown key"),
                       std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config_text("batch_size\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config_text("batch_size=abc\n"), std::invalid_argument);

  // serialize -> parse round trip, stable digest
  RunConfig rc;
  rc.batch_size = 16;
  rc.anchor_scales = {2, 5};
  RunConfig back = parse_run_config_text(rc.serialize());
  CHECK(back.serialize() == rc.serialize());
  CHECK(back.digest() == rc.digest());
  CHECK(back.digest() != def.digest());

  TempDir dir;
  save_run_config(rc, dir.file("run.cfg"));
  CHECK(load_run_config(dir.file("run.cfg")).digest() == rc.digest());
}

TEST_CASE("synthetic generator: determinism, planted signal, solvability") {
  SyntheticSpec spec;
  spec.num_videos = 3;
  spec.pairs_per_video = 2;
  spec.T = 32;
  spec.C = 8;
  spec.noise = 0.0;
  spec.seed = 5;

  SyntheticDataset a = generate_synthetic(spec);
  SyntheticDataset b = generate_synthetic(spec);
  REQUIRE(a.manifest.videos.size() == 3);
  CHECK(a.manifest.pair_count() == 6);
  for (std::size_t v = 0; v < a.features.size(); ++v) {
    CHECK(a.features[v].features.values == b.features[v].features.values);
    for (std::size_t p = 0; p < a.manifest.videos[v].pairs.size(); ++p) {
      CHECK(a.manifest.videos[v].pairs[p].sentence == b.manifest.videos[v].pairs[p].sentence);
      CHECK(a.manifest.videos[v].pairs[p].gt == b.manifest.videos[v].pairs[p].gt);
    }
  }

  // noise 0, flat profile: inside-segment rows equal the signature exactly
  const VideoRecord& rec = a.manifest.videos[0];
  const FeatureSequence& seq = a.features[0];
  const SyntheticEvent& ev = a.events[static_cast<std::size_t>(a.pair_event_id[0][0])];
  const ClipSegment gt = rec.pairs[0].gt;
  const int lo = static_cast<int>(gt.start * seq.rate);
  const int hi = static_cast<int>(std::ceil(gt.end * seq.rate)) - 1;
  for (int r = lo; r <= hi; ++r)
    for (int c = 0; c < spec.C; ++c) CHECK(seq.features.at(r, c) == ev.signature[static_cast<std::size_t>(c)]);

  // brute-force matcher solves noise-0 data perfectly
  CHECK(signature_matcher_recall(a, 0.5) == 1.0);

  SyntheticSpec noisy = spec;
  noisy.noise = 0.1;
  noisy.order_sensitive = true;
  SyntheticDataset c = generate_synthetic(noisy);
  CHECK(signature_matcher_recall(c, 0.5) == 1.0);
  // order-sensitive sentences share the noun but differ by verb
  const auto& pairs = c.manifest.videos[0].pairs;
  CHECK(pairs[0].sentence != pairs[1].sentence);
  const SyntheticEvent& e0 = c.events[static_cast<std::size_t>(c.pair_event_id[0][0])];
  const SyntheticEvent& e1 = c.events[static_cast<std::size_t>(c.pair_event_id[0][1])];
  CHECK(e0.noun == e1.noun);
  CHECK(e0.verb != e1.verb);
  CHECK(e0.signature == e1.signature);
  CHECK(e0.profile != e1.profile);
}

TEST_CASE("synthetic corpus writes a loadable dataset") {
  TempDir dir;
  SyntheticSpec spec;
  spec.num_videos = 2;
  spec.pairs_per_video = 2;
  spec.T = 16;
  spec.C = 4;
  spec.seed = 9;
  SyntheticDataset ds = generate_synthetic(spec);
  write_synthetic(ds, dir.path.string());
  CHECK(fs::exists(dir.file("manifest.json")));
  CHECK(fs::exists(dir.file("events.json")));
  DatasetManifest m = load_manifest(dir.file("manifest.json"));
  REQUIRE(m.videos.size() == 2);
  FeatureSequence f = load_features(resolve_feature_path(dir.path.string(), m.videos[0].feature_path));
  CHECK(f.features.dim(0) == 16);
  CHECK(f.features.dim(1) == 4);
  // digest is stable across loads
  CHECK(dataset_digest(m, dir.path.string()) == dataset_digest(m, dir.path.string()));
}
