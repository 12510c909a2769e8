#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "ttc/checkpoint.hpp"
#include "ttc/trainer.hpp"

using namespace ttc;
namespace fs = std::filesystem;

namespace {

struct TrainFixture {
  SyntheticDataset synth;
  Vocabulary vocab;
  LoadedDataset data;
  RunConfig rc;
  ModelConfig mc;
  Model model;
  ParamStore store;

  static SyntheticDataset make_synth(bool order_sensitive) {
    SyntheticSpec spec;
    spec.num_videos = 2;
    spec.pairs_per_video = 2;
    spec.T = 32;
    spec.C = 6;
    spec.noise = 0.05;
    spec.seed = 31;
    spec.order_sensitive = order_sensitive;
    return generate_synthetic(spec);
  }

  static RunConfig make_rc(std::uint64_t seed) {
    RunConfig rc;
    rc.batch_size = 4;
    rc.learning_rate = 0.001;
    rc.epochs_max = 3;
    rc.seed = seed;
    rc.eval_every = 1;
    rc.embed_dim = 5;
    rc.hidden_dim = 8;
    rc.clip_feature_dim = 9;
    rc.fc_hidden_dim = 4;
    rc.conv_dim = 6;
    rc.late_fusion_dim = 10;
    rc.roi_bins = 2;
    rc.anchor_stride = 4;
    rc.anchor_scales = {8, 16};
    return rc;
  }

  explicit TrainFixture(std::uint64_t seed = 5, bool order_sensitive = false)
      : synth(make_synth(order_sensitive)),
        vocab(build_vocab(manifest_sentences(synth.manifest), 1, 10)),
        data(dataset_from_synthetic(synth, vocab)),
        rc(make_rc(seed)),
        mc(ModelConfig::from_run_config(rc, vocab.size(), 6)),
        model(mc) {
    model.create_params(store);
    Rng rng = Rng::derive(rc.seed, "init");
    model.init_params(store, rng);
  }
};

bool stores_equal(const ParamStore& a, const ParamStore& b) {
  if (a.names() != b.names() || a.step() != b.step()) return false;
  for (const std::string& name : a.names()) {
    const auto& ea = a.entry(name);
    const auto& eb = b.entry(name);
    if (ea.value.values != eb.value.values || ea.m.values != eb.m.values ||
        ea.v.values != eb.v.values)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("epoch batches partition the dataset and are seed-deterministic") {
  const auto b1 = epoch_batches(32, 32, 7, 0);
  REQUIRE(b1.size() == 1);
  CHECK(b1[0].size() == 32);

  const auto b2 = epoch_batches(10, 4, 7, 3);
  CHECK(b2.size() == 3);
  std::set<int> seen;
  for (const auto& batch : b2)
    for (const int i : batch) CHECK(seen.insert(i).second);
  CHECK(seen.size() == 10);

  CHECK(epoch_batches(10, 4, 7, 3) == b2);       // same seed, same epoch
  CHECK(epoch_batches(10, 4, 7, 4) != b2);       // epochs differ
  CHECK(epoch_batches(10, 4, 8, 3) != b2);       // seeds differ
}

TEST_CASE("adam first step moves by -lr * sign(g); zero gradients are a no-op") {
  ParamStore store;
  store.create("w", {3});
  store.value("w") = []() {
    ad::Tensor t({3}, {1.0, -2.0, 0.5});
    t.requires_grad = true;
    return t;
  }();

  std::unordered_map<std::string, ad::Tensor> grads;
  grads.emplace("w", ad::Tensor({3}, {0.3, -4.0, 0.0}));
  adam_update(store, grads, 0.01);
  CHECK(store.step() == 1);
  // bias-corrected mhat/sqrt(vhat) = sign(g) at t=1 (up to eps)
  CHECK(store.value("w").at(0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(store.value("w").at(1) == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(store.value("w").at(2) == doctest::Approx(0.5).epsilon(1e-12));

  // zero gradient leaves parameters untouched
  ParamStore z;
  z.create("w", {2});
  z.value("w").at(0) = 3.0;
  std::unordered_map<std::string, ad::Tensor> zero;
  zero.emplace("w", ad::Tensor::zeros({2}));
  adam_update(z, zero, 0.5);
  CHECK(z.value("w").at(0) == 3.0);
  CHECK(z.value("w").at(1) == 0.0);

  // non-finite gradient rejects the step
  ParamStore bad;
  bad.create("w", {1});
  bad.value("w").at(0) = 1.0;
  std::unordered_map<std::string, ad::Tensor> nan_grads;
  nan_grads.emplace("w", ad::Tensor({1}, {std::numeric_limits<double>::quiet_NaN()}));
  adam_update(bad, nan_grads, 0.5);
  CHECK(bad.value("w").at(0) == 1.0);
  CHECK(bad.step() == 0);
}

TEST_CASE("adam drives a convex quadratic below 1e-6 within 2000 steps") {
  ParamStore store;
  store.create("x", {4});
  ad::Tensor& x = store.value("x");
  x.values = {5.0, -3.0, 2.0, 8.0};
  const std::vector<double> target{1.0, 2.0, -1.0, 0.5};

  double loss = 1e18;
  for (int step = 0; step < 2000 && loss >= 1e-6; ++step) {
    loss = 0.0;
    ad::Tensor g = ad::Tensor::zeros({4});
    for (int i = 0; i < 4; ++i) {
      const double d = store.value("x").at(i) - target[static_cast<std::size_t>(i)];
      loss += d * d;
      g.at(i) = 2.0 * d;
    }
    std::unordered_map<std::string, ad::Tensor> grads;
    grads.emplace("x", g);
    adam_update(store, grads, 0.05);
  }
  CHECK(loss < 1e-6);
}

TEST_CASE("gradient clipping bounds the global norm") {
  std::unordered_map<std::string, ad::Tensor> grads;
  grads.emplace("a", ad::Tensor({2}, {3.0, 4.0}));   // norm 5
  grads.emplace("b", ad::Tensor({1}, {12.0}));       // total norm 13
  clip_gradients(grads, 6.5);
  double sq = 0.0;
  for (const auto& [n, g] : grads)
    for (const double v : g.values) sq += v * v;
  CHECK(std::sqrt(sq) == doctest::Approx(6.5).epsilon(1e-12));
  // under the bound: untouched
  std::unordered_map<std::string, ad::Tensor> small;
  small.emplace("a", ad::Tensor({1}, {2.0}));
  clip_gradients(small, 6.5);
  CHECK(small.at("a").at(0) == 2.0);
}

TEST_CASE("early stopping logic") {
  CHECK(early_stopping_check({0.1, 0.2, 0.3}, 2) == StopDecision::Continue);
  CHECK(early_stopping_check({0.5, 0.5, 0.5}, 2) == StopDecision::Stop);
  CHECK(early_stopping_check({0.5}, 2) == StopDecision::Continue);
  CHECK(early_stopping_check({0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6}, 5) == StopDecision::Stop);
  CHECK(early_stopping_check({0.5, 0.6, 0.6, 0.6, 0.6, 0.7}, 5) == StopDecision::Continue);
  CHECK_THROWS_AS(early_stopping_check({}, 3), std::invalid_argument);
}

TEST_CASE("negative sampling: same-video low overlap preferred, provenance counted") {
  Rng rng(41);
  std::vector<Proposal> props;
  for (int i = 0; i < 6; ++i) {
    Proposal p;
    p.segment = {i * 4.0, i * 4.0 + 3.0};
    p.score = 0.5;
    props.push_back(p);
  }
  const ClipSegment gt{0.0, 3.0};

  int same = 0, other = 0, same_available = 0;
  std::vector<Proposal> other_props = props;
  for (int trial = 0; trial < 200; ++trial) {
    // alternate: all proposals overlap the gt heavily (forces cross-video)
    const bool force_cross = trial % 2 == 1;
    std::vector<Proposal> sv;
    if (force_cross) {
      Proposal p;
      p.segment = {0.5, 3.1};
      sv.push_back(p);
    } else {
      sv = props;
      ++same_available;
    }
    std::vector<std::pair<int, const std::vector<Proposal>*>> others{{1, &other_props}};
    const auto neg = Trainer::sample_negative(sv, gt, 0, others, rng);
    REQUIRE(neg.has_value());
    CHECK(tiou(neg->segment, gt) < (force_cross ? 1.1 : 0.5));
    if (neg->provenance == NegativeSample::SameVideo) ++same;
    else ++other;
  }
  CHECK(same == same_available);  // same-video negatives whenever available
  CHECK(other == 200 - same_available);

  // no candidates anywhere -> no sample
  std::vector<Proposal> overlapping{props[0]};
  overlapping[0].segment = {0.2, 3.2};
  const auto none = Trainer::sample_negative(overlapping, gt, 0, {}, rng);
  CHECK_FALSE(none.has_value());
}

TEST_CASE("one training batch lowers the combined loss on a toy set") {
  TrainFixture fx;
  Trainer trainer(fx.model, fx.store, fx.rc, fx.data);
  std::vector<int> all_pairs{0, 1, 2, 3};

  Rng rng = Rng::derive(1, "probe");
  const Trainer::BatchLosses first = trainer.train_batch(all_pairs, rng);
  Trainer::BatchLosses last = first;
  for (int step = 0; step < 50; ++step) {
    Rng step_rng = Rng::derive(static_cast<std::uint64_t>(step) + 2, "probe");
    last = trainer.train_batch(all_pairs, step_rng);
  }
  const double total_first = first.retrieval + first.caption * 0.5 + first.proposal;
  const double total_last = last.retrieval + last.caption * 0.5 + last.proposal;
  CHECK(total_last < total_first);
}

TEST_CASE("training run is deterministic for a fixed seed") {
  TrainFixture a(9);
  TrainFixture b(9);
  Trainer ta(a.model, a.store, a.rc, a.data);
  Trainer tb(b.model, b.store, b.rc, b.data);
  const std::vector<EpochStats> ha = ta.train("");
  const std::vector<EpochStats> hb = tb.train("");
  REQUIRE(ha.size() == hb.size());
  for (std::size_t i = 0; i < ha.size(); ++i) {
    CHECK(ha[i].mean_retrieval_loss == hb[i].mean_retrieval_loss);
    CHECK(ha[i].mean_caption_loss == hb[i].mean_caption_loss);
    CHECK(ha[i].mean_proposal_loss == hb[i].mean_proposal_loss);
    CHECK(ha[i].val_r1_at_05 == hb[i].val_r1_at_05);
  }
  CHECK(stores_equal(a.store, b.store));
}

TEST_CASE("lambda = 0 leaves caption parameters untouched") {
  TrainFixture fx(13);
  fx.rc.lambda = 0.0;
  const std::vector<double> before = fx.store.value("cap.out.W").values;
  Trainer trainer(fx.model, fx.store, fx.rc, fx.data);
  Rng rng = Rng::derive(3, "probe");
  trainer.train_batch({0, 1, 2, 3}, rng);
  trainer.train_batch({0, 1, 2, 3}, rng);
  CHECK(fx.store.value("cap.out.W").values == before);
  CHECK(fx.store.entry("cap.out.W").m.values == ad::Tensor::zeros(fx.store.value("cap.out.W").shape).values);
}

TEST_CASE("checkpoint round trip is bit-exact including optimizer state") {
  TrainFixture fx(17);
  Trainer trainer(fx.model, fx.store, fx.rc, fx.data);
  Rng rng = Rng::derive(4, "probe");
  trainer.train_batch({0, 1, 2, 3}, rng);  // non-trivial moments and step

  const fs::path dir = fs::temp_directory_path() / "ttc_ckpt_test";
  fs::create_directories(dir);
  const std::string p1 = (dir / "a.csk").string();
  const std::string p2 = (dir / "b.csk").string();
  save_checkpoint(fx.store, fx.rc.digest(), p1);
  LoadedCheckpoint loaded = load_checkpoint(p1);
  CHECK(loaded.config_digest == fx.rc.digest());
  CHECK(stores_equal(loaded.store, fx.store));

  // save -> load -> save produces identical bytes
  save_checkpoint(loaded.store, loaded.config_digest, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  // mismatched configuration is rejected naming the first offending tensor
  TrainFixture other(17);
  other.mc.hidden_dim = 16;
  Model wrong(other.mc);
  CHECK_THROWS_WITH_AS(wrong.validate_store(loaded.store), doctest::Contains("enc.lstm.W_x"),
                       std::invalid_argument);

  // truncated checkpoint is rejected
  {
    std::ifstream in(p1, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream out((dir / "trunc.csk").string(), std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "trunc.csk").string()), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("resumed training bitwise equals uninterrupted training") {
  // uninterrupted: two epochs
  TrainFixture a(23);
  a.rc.epochs_max = 2;
  a.rc.patience = 100;
  Trainer ta(a.model, a.store, a.rc, a.data);
  const std::vector<EpochStats> ha = ta.train("");

  // interrupted: one epoch, checkpoint, reload, one more epoch
  TrainFixture b(23);
  b.rc.epochs_max = 1;
  b.rc.patience = 100;
  Trainer tb(b.model, b.store, b.rc, b.data);
  tb.train("");

  const fs::path dir = fs::temp_directory_path() / "ttc_resume_test";
  fs::create_directories(dir);
  const std::string ck = (dir / "mid.csk").string();
  save_checkpoint(b.store, b.rc.digest(), ck);

  TrainFixture c(23);
  c.rc.epochs_max = 2;
  c.rc.patience = 100;
  LoadedCheckpoint resumed = load_checkpoint(ck);
  c.model.validate_store(resumed.store);
  Trainer tc(c.model, resumed.store, c.rc, c.data);
  const std::vector<EpochStats> hc = tc.train("");

  REQUIRE(hc.size() == 1);
  CHECK(hc[0].epoch == 1);
  CHECK(hc[0].mean_retrieval_loss == ha[1].mean_retrieval_loss);
  CHECK(hc[0].mean_caption_loss == ha[1].mean_caption_loss);
  CHECK(hc[0].mean_proposal_loss == ha[1].mean_proposal_loss);
  CHECK(hc[0].val_r1_at_05 == ha[1].val_r1_at_05);
  CHECK(stores_equal(a.store, resumed.store));
  fs::remove_all(dir);
}

TEST_CASE("variant flags keep the batch schedule identical") {
  // flags change losses, never data order
  for (const bool lf : {false, true}) {
    RunConfig rc;
    rc.seed = 99;
    rc.use_late_fusion = lf;
    const auto batches = epoch_batches(12, 5, rc.seed, 2);
    const auto again = epoch_batches(12, 5, 99, 2);
    CHECK(batches == again);
  }
}
