#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ttc/checkpoint.hpp"
#include "ttc/evaluator.hpp"
#include "ttc/gradcheck.hpp"
#include "ttc/trainer.hpp"

namespace fs = std::filesystem;
using namespace ttc;

namespace {

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    for (const std::string& kv : overrides) {
      const std::size_t eq = kv.find('=');
      TTC_REQUIRE(eq != std::string::npos, "--set expects key=value, got '" << kv << "'");
      apply_config_line(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
  }
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value run configuration file");
  cmd->add_option("--set", args.overrides, "override a config key, e.g. --set seed=3")
      ->take_all();
}

struct LoadedRun {
  RunConfig cfg;
  Vocabulary vocab;
  LoadedDataset data;
  Model model;
  ParamStore store;
};

Vocabulary vocab_for_manifest(const RunConfig& cfg, const std::string& manifest_path) {
  const DatasetManifest m = load_manifest(manifest_path);
  return build_vocab(manifest_sentences(m), cfg.min_frequency, cfg.max_sentence_length);
}

Model model_for(const RunConfig& cfg, const Vocabulary& vocab, const LoadedDataset& data) {
  TTC_REQUIRE(!data.features.empty(), "dataset has no videos");
  return Model(ModelConfig::from_run_config(cfg, vocab.size(), data.features.front().channels()));
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  TTC_REQUIRE_IO(f.good(), "cannot write " << path);
  f << content;
}

int cmd_synth(const std::string& out_dir, const SyntheticSpec& spec) {
  const SyntheticDataset ds = generate_synthetic(spec);
  write_synthetic(ds, out_dir);
  std::cout << "wrote " << ds.manifest.videos.size() << " videos, " << ds.manifest.pair_count()
            << " sentence-clip pairs to " << out_dir << "\n";
  return 0;
}

int cmd_train(const ConfigArgs& cargs) {
  const RunConfig cfg = cargs.resolve();
  TTC_REQUIRE(!cfg.train_manifest.empty(), "train: config needs train_manifest=<path>");
  const Vocabulary vocab = vocab_for_manifest(cfg, cfg.train_manifest);
  const LoadedDataset train_data = load_dataset(cfg.train_manifest, vocab);
  std::optional<LoadedDataset> val_data;
  if (!cfg.val_manifest.empty()) val_data = load_dataset(cfg.val_manifest, vocab);

  Model model = model_for(cfg, vocab, train_data);
  ParamStore store;
  model.create_params(store);
  Rng init_rng = Rng::derive(cfg.seed, "init");
  model.init_params(store, init_rng);

  fs::create_directories(cfg.out_dir);
  save_run_config(cfg, (fs::path(cfg.out_dir) / "config.cfg").string());
  save_vocab(vocab, (fs::path(cfg.out_dir) / "vocab.txt").string());
  std::ostringstream info;
  info << "version=" << kVersion << "\nconfig_digest=" << cfg.digest()
       << "\ntrain_dataset_digest=" << train_data.digest << "\n";
  if (val_data) info << "val_dataset_digest=" << val_data->digest << "\n";
  write_text_file((fs::path(cfg.out_dir) / "run_info.txt").string(), info.str());

  Trainer trainer(model, store, cfg, train_data, val_data ? &*val_data : nullptr);
  const std::vector<EpochStats> history = trainer.train(cfg.out_dir);
  TTC_REQUIRE(!history.empty(), "train: no epochs ran");

  const RecallTable train_recall = evaluate_dataset(model, store, train_data);
  write_text_file((fs::path(cfg.out_dir) / "recall_train.csv").string(),
                  train_recall.to_csv("dataset=" + train_data.digest + " split=train"));
  write_text_file((fs::path(cfg.out_dir) / "recall_train.txt").string(), train_recall.to_text());
  std::cout << "train R@K grid after " << history.size() << " epochs:\n"
            << train_recall.to_text();
  if (val_data) {
    const RecallTable val_recall = evaluate_dataset(model, store, *val_data);
    write_text_file((fs::path(cfg.out_dir) / "recall_val.csv").string(),
                    val_recall.to_csv("dataset=" + val_data->digest + " split=val"));
    write_text_file((fs::path(cfg.out_dir) / "recall_val.txt").string(), val_recall.to_text());
    std::cout << "validation R@K grid:\n" << val_recall.to_text();
  }
  std::cout << "run artifacts in " << cfg.out_dir << "\n";
  return 0;
}

LoadedRun open_run(const ConfigArgs& cargs, const std::string& checkpoint_path,
                   const std::string& manifest_path, std::string vocab_path) {
  TTC_REQUIRE_IO(fs::exists(checkpoint_path), "checkpoint not found: " << checkpoint_path);
  ConfigArgs effective = cargs;
  if (effective.config_path.empty()) {
    const fs::path sibling = fs::path(checkpoint_path).parent_path() / "config.cfg";
    if (fs::exists(sibling)) effective.config_path = sibling.string();
  }
  const RunConfig cfg = effective.resolve();
  if (vocab_path.empty()) {
    const fs::path sibling = fs::path(checkpoint_path).parent_path() / "vocab.txt";
    TTC_REQUIRE_IO(fs::exists(sibling),
                   "no --vocab given and " << sibling.string() << " does not exist");
    vocab_path = sibling.string();
  }
  const Vocabulary vocab = load_vocab(vocab_path, cfg.min_frequency, cfg.max_sentence_length);
  LoadedDataset data = load_dataset(manifest_path, vocab);
  Model model = model_for(cfg, vocab, data);
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  model.validate_store(ck.store);
  return LoadedRun{cfg, vocab, std::move(data), std::move(model), std::move(ck.store)};
}

int cmd_eval(const ConfigArgs& cargs, const std::string& checkpoint_path,
             const std::string& manifest_path, const std::string& vocab_path,
             const std::string& out_dir) {
  LoadedRun run = open_run(cargs, checkpoint_path, manifest_path, vocab_path);
  const RecallTable table = evaluate_dataset(run.model, run.store, run.data);
  std::cout << table.to_text();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "recall.csv").string(),
                    table.to_csv("dataset=" + run.data.digest));
    write_text_file((fs::path(out_dir) / "recall.txt").string(), table.to_text());
    std::cout << "wrote recall tables to " << out_dir << "\n";
  }
  return 0;
}

int find_video(const LoadedDataset& data, const std::string& video_id) {
  for (int v = 0; v < static_cast<int>(data.manifest.videos.size()); ++v)
    if (data.manifest.videos[static_cast<std::size_t>(v)].video_id == video_id) return v;
  TTC_REQUIRE(false, "video '" << video_id << "' not in manifest");
  return -1;
}

int cmd_retrieve(const ConfigArgs& cargs, const std::string& checkpoint_path,
                 const std::string& manifest_path, const std::string& vocab_path,
                 const std::string& video_id, const std::string& query, int top) {
  LoadedRun run = open_run(cargs, checkpoint_path, manifest_path, vocab_path);
  const int video_index = find_video(run.data, video_id);
  const TokenSequence tokens = encode_sentence(run.vocab, query);
  TTC_REQUIRE(tokens.length() >= 1, "query tokenizes to nothing: '" << query << "'");

  ad::Tape tape;
  ParamBinder params(tape, run.store, [](const std::string&) { return false; });
  const SentenceEncoding enc = run.model.encode_sentence(params, tokens);
  const FeatureSequence& video = run.data.video_features(video_index);
  const Model::VideoForward vf = run.model.video_pipeline(params, video, {enc});
  TTC_REQUIRE(!vf.proposals.empty(), "no proposals for video '" << video_id << "'");

  std::vector<ClipSegment> segments;
  std::vector<double> scores;
  for (const Proposal& p : vf.proposals) {
    segments.push_back(p.segment);
    double s = run.model
                   .similarity(params, enc, run.model.clip_feature(params, vf, video, p.segment))
                   .item();
    if (run.model.config().rank_with_objectness) s *= p.score;
    scores.push_back(s);
  }
  const RetrievalResult ranked = rank_proposals(segments, scores, 0, top);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(6);
  std::cout << "rank,start,end,score\n";
  for (std::size_t i = 0; i < ranked.ranked.size(); ++i)
    std::cout << i + 1 << ',' << ranked.ranked[i].first.start << ',' << ranked.ranked[i].first.end
              << ',' << ranked.ranked[i].second << '\n';
  return 0;
}

int cmd_propose(const ConfigArgs& cargs, const std::string& checkpoint_path,
                const std::string& manifest_path, const std::string& vocab_path,
                const std::string& video_id, const std::string& out_path) {
  LoadedRun run = open_run(cargs, checkpoint_path, manifest_path, vocab_path);
  const int video_index = find_video(run.data, video_id);

  ad::Tape tape;
  ParamBinder params(tape, run.store, [](const std::string&) { return false; });
  std::vector<SentenceEncoding> encodings;
  for (const LoadedDataset::Pair& p : run.data.pairs)
    if (p.video_index == video_index)
      encodings.push_back(run.model.encode_sentence(params, p.tokens));
  const Model::VideoForward vf =
      run.model.video_pipeline(params, run.data.video_features(video_index), encodings);
  const std::string csv = proposals_to_csv(video_id, vf.proposals);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    write_text_file(out_path, csv);
    std::cout << "wrote " << vf.proposals.size() << " proposals to " << out_path << "\n";
  }
  return 0;
}

// Gradient checks for every differentiable operation plus the composed
// multi-task loss; exit 0 only if all are below 1e-4.
int cmd_gradcheck(std::uint64_t seed) {
  Rng rng(seed);
  bool all_ok = true;
  const auto report = [&](const std::string& name, double err) {
    const bool ok = err < 1e-4;
    all_ok = all_ok && ok;
    std::cout << (ok ? "[pass] " : "[FAIL] ") << name << ": max rel error " << err << "\n";
  };
  const auto randn = [&](ad::Shape shape) {
    ad::Tensor t = ad::Tensor::zeros(std::move(shape));
    for (double& v : t.values) v = rng.normal();
    t.requires_grad = true;
    return t;
  };

  for (const auto op : {ad::UnaryOp::Tanh, ad::UnaryOp::Sigmoid, ad::UnaryOp::Relu,
                        ad::UnaryOp::Exp, ad::UnaryOp::Log}) {
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      ad::Tensor x = randn({4});
      for (double& v : x.values) {
        if (op == ad::UnaryOp::Log) v = std::abs(v) + 0.5;
        if (op == ad::UnaryOp::Relu && std::abs(v) < 0.05) v += 0.1;
      }
      auto f = [&](ad::Tape& t, const std::vector<ad::Tensor>& in) {
        return t.reduce(ad::ReduceOp::Sum, t.apply_unary(op, in[0]), 0);
      };
      worst = std::max(worst, ad::grad_check(f, {x}).max_rel_error);
    }
    report(std::string("unary ") + ad::op_name(op), worst);
  }

  {
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      ad::Tensor a = randn({3, 4});
      ad::Tensor b = randn({4, 2});
      auto f = [&](ad::Tape& t, const std::vector<ad::Tensor>& in) {
        ad::Tensor y = t.matmul(in[0], in[1]);
        return t.reduce(ad::ReduceOp::Sum, t.reduce(ad::ReduceOp::Sum, y, 0), 0);
      };
      worst = std::max(worst, ad::grad_check(f, {a, b}).max_rel_error);
    }
    report("binary matmul", worst);
  }

  {
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      ad::Tensor x = randn({6});
      const int target = rng.uniform_int(6);
      auto f = [&](ad::Tape& t, const std::vector<ad::Tensor>& in) {
        return t.cross_entropy(in[0], target);
      };
      worst = std::max(worst, ad::grad_check(f, {x}).max_rel_error);
    }
    report("cross_entropy", worst);
  }

  {
    SyntheticSpec spec;
    spec.num_videos = 2;
    spec.pairs_per_video = 2;
    spec.T = 16;
    spec.C = 4;
    spec.noise = 0.05;
    spec.seed = seed;
    const SyntheticDataset synth = generate_synthetic(spec);
    const Vocabulary vocab = build_vocab(manifest_sentences(synth.manifest), 1, 10);
    const LoadedDataset data = dataset_from_synthetic(synth, vocab);

    RunConfig rc;
    rc.embed_dim = 4;
    rc.hidden_dim = 5;
    rc.clip_feature_dim = 6;
    rc.fc_hidden_dim = 3;
    rc.conv_dim = 4;
    rc.late_fusion_dim = 7;
    rc.roi_bins = 2;
    rc.anchor_stride = 4;
    rc.anchor_scales = {6, 12};
    Model model(ModelConfig::from_run_config(rc, vocab.size(), spec.C));
    ParamStore store;
    model.create_params(store);
    Rng init_rng = Rng::derive(seed, "init");
    model.init_params(store, init_rng);

    std::vector<std::string> names = store.names();
    std::vector<ad::Tensor> inputs;
    for (const std::string& n : names) {
      ad::Tensor t = store.value(n);
      t.requires_grad = true;
      inputs.push_back(t);
    }
    const std::uint64_t sample_seed = rng.next_u64();
    auto f = [&](ad::Tape& tape, const std::vector<ad::Tensor>& bound) {
      ParamBinder params(tape, store);
      for (std::size_t i = 0; i < names.size(); ++i) params.inject(names[i], bound[i]);
      std::vector<SentenceEncoding> encs;
      for (int p = 0; p < 2; ++p)
        encs.push_back(model.encode_sentence(params, data.pairs[static_cast<std::size_t>(p)].tokens));
      const FeatureSequence& video = data.video_features(0);
      const Model::VideoForward vf = model.video_pipeline(params, video, encs);
      std::vector<ClipSegment> gts{data.pairs[0].gt, data.pairs[1].gt};
      const std::vector<AnchorLabel> labels = assign_anchor_labels(vf.anchor_segments, gts);
      Rng srng(sample_seed);
      ad::Tensor lprop = proposal_loss(params, vf.head, vf.anchor_segments, labels, gts, srng);
      ad::Tensor fpos = model.clip_feature(params, vf, video, data.pairs[0].gt);
      ad::Tensor fneg = model.clip_feature(params, vf, video, data.pairs[1].gt);
      ad::Tensor lret = triplet_loss(
          tape,
          {{model.similarity(params, encs[0], fpos), model.similarity(params, encs[0], fneg)}},
          0.2);
      CaptionStepOutput cap = model.fusion().caption_forward(params, model.encoder(), fpos,
                                                             data.pairs[0].caption_target);
      ad::Tensor lcap = caption_loss(tape, {cap});
      return tape.add(lprop, multitask_loss(tape, lret, lcap, 0.5));
    };
    report("composed multitask loss", ad::grad_check(f, inputs, 1e-4).max_rel_error);
  }

  std::cout << (all_ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  return all_ok ? 0 : 1;
}

int cmd_ablate(const ConfigArgs& cargs, const std::string& data_dir, const std::string& out_dir,
               int num_seeds) {
  RunConfig base = cargs.resolve();
  base.train_manifest = (fs::path(data_dir) / "manifest.json").string();
  const Vocabulary vocab = vocab_for_manifest(base, base.train_manifest);
  const LoadedDataset data = load_dataset(base.train_manifest, vocab);
  fs::create_directories(out_dir);

  struct Variant {
    const char* name;
    bool lf, qspn, cap;
  };
  const Variant variants[] = {{"lf", true, false, false},
                              {"lstm", false, false, false},
                              {"lstm_cap", false, false, true},
                              {"lstm_qspn", false, true, false},
                              {"lstm_qspn_cap", false, true, true}};

  std::ostringstream summary;
  summary << "variant,seed,r1_03,r1_05,r1_07,r5_05,r10_05\n";
  for (int s = 0; s < num_seeds; ++s) {
    for (const Variant& var : variants) {
      RunConfig cfg = base;
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      cfg.use_late_fusion = var.lf;
      cfg.use_qspn = var.qspn;
      cfg.use_caption = var.cap;
      Model model = model_for(cfg, vocab, data);
      ParamStore store;
      model.create_params(store);
      Rng init_rng = Rng::derive(cfg.seed, "init");
      model.init_params(store, init_rng);
      Trainer trainer(model, store, cfg, data);
      trainer.train("");
      const RecallTable t = evaluate_dataset(model, store, data);
      std::ostringstream name;
      name << var.name << "_seed" << cfg.seed << "_recall.csv";
      write_text_file((fs::path(out_dir) / name.str()).string(),
                      t.to_csv("dataset=" + data.digest + " variant=" + var.name +
                               " seed=" + std::to_string(cfg.seed)));
      summary << var.name << ',' << cfg.seed << ',' << t.at(0.3, 1) << ',' << t.at(0.5, 1) << ','
              << t.at(0.7, 1) << ',' << t.at(0.5, 5) << ',' << t.at(0.5, 10) << '\n';
      std::cout << var.name << " seed " << cfg.seed << ": R@1(0.5) = " << t.at(0.5, 1) << "\n";
    }
  }
  write_text_file((fs::path(out_dir) / "summary.csv").string(), summary.str());
  std::cout << "wrote per-variant tables and summary.csv to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text-to-clip retrieval over temporal feature sequences"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out = "data/synth";
  SyntheticSpec spec;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--videos", spec.num_videos, "number of videos");
  synth->add_option("--pairs", spec.pairs_per_video, "sentence-clip pairs per video");
  synth->add_option("--T", spec.T, "feature positions per video");
  synth->add_option("--C", spec.C, "feature channels");
  synth->add_option("--noise", spec.noise, "Gaussian noise sigma");
  synth->add_option("--seed", spec.seed, "generator seed");
  synth->add_option("--rate", spec.rate, "feature positions per second");
  synth->add_flag("--order-sensitive", spec.order_sensitive,
                  "paired events share nouns with opposed temporal profiles");

  auto* train = app.add_subcommand("train", "train a model from a run configuration");
  ConfigArgs train_cfg;
  add_config_options(train, train_cfg);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  ConfigArgs eval_cfg;
  std::string eval_ck, eval_manifest, eval_vocab, eval_out;
  add_config_options(eval, eval_cfg);
  eval->add_option("--checkpoint", eval_ck, "checkpoint file")->required();
  eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  eval->add_option("--vocab", eval_vocab, "vocabulary file (default: next to checkpoint)");
  eval->add_option("--out", eval_out, "directory for recall tables");

  auto* retrieve = app.add_subcommand("retrieve", "rank segments of one video for a query");
  ConfigArgs ret_cfg;
  std::string ret_ck, ret_manifest, ret_vocab, ret_video, ret_query;
  int ret_top = 10;
  add_config_options(retrieve, ret_cfg);
  retrieve->add_option("--checkpoint", ret_ck)->required();
  retrieve->add_option("--manifest", ret_manifest)->required();
  retrieve->add_option("--vocab", ret_vocab);
  retrieve->add_option("--video", ret_video, "video id")->required();
  retrieve->add_option("--query", ret_query, "natural-language query")->required();
  retrieve->add_option("--top", ret_top, "segments to print");

  auto* propose = app.add_subcommand("propose", "emit query-guided proposals for one video");
  ConfigArgs prop_cfg;
  std::string prop_ck, prop_manifest, prop_vocab, prop_video, prop_out;
  add_config_options(propose, prop_cfg);
  propose->add_option("--checkpoint", prop_ck)->required();
  propose->add_option("--manifest", prop_manifest)->required();
  propose->add_option("--vocab", prop_vocab);
  propose->add_option("--video", prop_video, "video id")->required();
  propose->add_option("--out", prop_out, "CSV output path (default: stdout)");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks for every op");
  std::uint64_t gc_seed = 1;
  gradcheck->add_option("--seed", gc_seed, "seed for random instances");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate the model-variant matrix");
  ConfigArgs abl_cfg;
  std::string abl_data, abl_out = "runs/ablate";
  int abl_seeds = 1;
  add_config_options(ablate, abl_cfg);
  ablate->add_option("--data", abl_data, "dataset directory (with manifest.json)")->required();
  ablate->add_option("--out", abl_out, "output directory");
  ablate->add_option("--seeds", abl_seeds, "number of consecutive seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_out, spec);
    if (train->parsed()) return cmd_train(train_cfg);
    if (eval->parsed()) return cmd_eval(eval_cfg, eval_ck, eval_manifest, eval_vocab, eval_out);
    if (retrieve->parsed())
      return cmd_retrieve(ret_cfg, ret_ck, ret_manifest, ret_vocab, ret_video, ret_query, ret_top);
    if (propose->parsed())
      return cmd_propose(prop_cfg, prop_ck, prop_manifest, prop_vocab, prop_video, prop_out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed);
    if (ablate->parsed()) return cmd_ablate(abl_cfg, abl_data, abl_out, abl_seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
