#include "ttc/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "ttc/checkpoint.hpp"

namespace ttc {

std::string EpochStats::csv_header() {
  return "epoch,mean_retrieval_loss,mean_caption_loss,mean_proposal_loss,val_r1_tiou0.5,wall_seconds";
}

std::string EpochStats::csv_row() const {
  std::ostringstream o;
  o.precision(12);
  o << epoch << ',' << mean_retrieval_loss << ',' << mean_caption_loss << ','
    << mean_proposal_loss << ',' << val_r1_at_05 << ',' << wall_seconds;
  return o.str();
}

std::vector<std::vector<int>> epoch_batches(int pair_count, int batch_size, std::uint64_t seed,
                                            int epoch) {
  TTC_REQUIRE(pair_count >= 1, "epoch_batches: empty dataset");
  TTC_REQUIRE(batch_size >= 1, "epoch_batches: batch_size must be >= 1");
  std::vector<int> order(static_cast<std::size_t>(pair_count));
  for (int i = 0; i < pair_count; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng = Rng::derive(seed * 1000003ULL + static_cast<std::uint64_t>(epoch), "batches");
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (int at = 0; at < pair_count; at += batch_size) {
    const int n = std::min(batch_size, pair_count - at);
    batches.emplace_back(order.begin() + at, order.begin() + at + n);
  }
  return batches;
}

void clip_gradients(std::unordered_map<std::string, ad::Tensor>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (const double v : g.values) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& [name, g] : grads)
    for (double& v : g.values) v *= scale;
}

void adam_update(ParamStore& store, const std::unordered_map<std::string, ad::Tensor>& grads,
                 double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  for (const std::string& name : store.names()) {
    const auto it = grads.find(name);
    if (it == grads.end()) continue;
    TTC_REQUIRE(it->second.shape == store.entry(name).value.shape,
                "adam_update: gradient shape mismatch for '" << name << "'");
    if (!it->second.all_finite()) {
      std::cerr << "adam_update: non-finite gradient for parameter '" << name << "'; step "
                << store.step() + 1 << " rejected\n";
      return;
    }
  }

  store.bump_step();
  const double t = static_cast<double>(store.step());
  const double bc1 = 1.0 - std::pow(kBeta1, t);
  const double bc2 = 1.0 - std::pow(kBeta2, t);
  for (const std::string& name : store.names()) {
    ParamStore::Entry& e = store.entry(name);
    const auto it = grads.find(name);
    for (int i = 0; i < e.value.size(); ++i) {
      const double g = it == grads.end() ? 0.0 : it->second.at(i);
      e.m.at(i) = kBeta1 * e.m.at(i) + (1.0 - kBeta1) * g;
      e.v.at(i) = kBeta2 * e.v.at(i) + (1.0 - kBeta2) * g * g;
      const double mhat = e.m.at(i) / bc1;
      const double vhat = e.v.at(i) / bc2;
      e.value.at(i) -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

StopDecision early_stopping_check(const std::vector<double>& validation_history, int patience) {
  TTC_REQUIRE(!validation_history.empty(), "early_stopping_check: empty history");
  double best = -1e308;
  int last_improvement = -1;
  for (int i = 0; i < static_cast<int>(validation_history.size()); ++i) {
    if (validation_history[static_cast<std::size_t>(i)] > best + 1e-6) {
      best = validation_history[static_cast<std::size_t>(i)];
      last_improvement = i;
    }
  }
  const int since = static_cast<int>(validation_history.size()) - 1 - last_improvement;
  return since >= patience ? StopDecision::Stop : StopDecision::Continue;
}

std::optional<NegativeSample> Trainer::sample_negative(
    const std::vector<Proposal>& same_video_proposals, const ClipSegment& gt, int video_index,
    const std::vector<std::pair<int, const std::vector<Proposal>*>>& other_videos, Rng& rng) {
  std::vector<const Proposal*> candidates;
  for (const Proposal& p : same_video_proposals)
    if (tiou(p.segment, gt) < 0.5) candidates.push_back(&p);
  if (!candidates.empty()) {
    const Proposal* pick = candidates[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(candidates.size())))];
    return NegativeSample{pick->segment, video_index, NegativeSample::SameVideo};
  }
  std::vector<std::pair<int, const std::vector<Proposal>*>> usable;
  for (const auto& [vid, props] : other_videos)
    if (vid != video_index && props && !props->empty()) usable.push_back({vid, props});
  if (usable.empty()) return std::nullopt;
  const auto& [vid, props] = usable[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(usable.size())))];
  const Proposal& pick = (*props)[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(props->size())))];
  return NegativeSample{pick.segment, vid, NegativeSample::OtherVideo};
}

Trainer::Trainer(Model& model, ParamStore& store, const RunConfig& cfg,
                 const LoadedDataset& train_data, const LoadedDataset* val_data)
    : model_(model), store_(store), cfg_(cfg), train_(train_data), val_(val_data) {
  TTC_REQUIRE(!train_.pairs.empty(), "trainer: empty training dataset");
}

Trainer::BatchLosses Trainer::train_batch(const std::vector<int>& pair_indices, Rng& sample_rng) {
  TTC_REQUIRE(!pair_indices.empty(), "train_batch: empty batch");
  ad::Tape tape;
  ParamBinder::TrainablePred pred = nullptr;
  if (cfg_.freeze_proposals)
    pred = [](const std::string& name) { return name.rfind("qspn.", 0) != 0; };
  ParamBinder params(tape, store_, pred);

  // group the batch by video, order of first appearance
  std::vector<int> videos;
  std::map<int, std::vector<int>> by_video;  // video -> batch positions
  for (std::size_t i = 0; i < pair_indices.size(); ++i) {
    const int v = train_.pairs[static_cast<std::size_t>(pair_indices[i])].video_index;
    if (!by_video.count(v)) videos.push_back(v);
    by_video[v].push_back(static_cast<int>(i));
  }

  // per-video pipeline with attention pooled over that video's batch queries
  std::vector<SentenceEncoding> encodings(pair_indices.size());
  std::map<int, Model::VideoForward> forwards;
  std::vector<ad::Tensor> proposal_losses;
  for (const int v : videos) {
    std::vector<SentenceEncoding> video_queries;
    for (const int bi : by_video[v]) {
      const LoadedDataset::Pair& pair = train_.pairs[static_cast<std::size_t>(pair_indices[static_cast<std::size_t>(bi)])];
      encodings[static_cast<std::size_t>(bi)] = model_.encode_sentence(params, pair.tokens);
      video_queries.push_back(encodings[static_cast<std::size_t>(bi)]);
    }
    const FeatureSequence& video = train_.video_features(v);
    forwards.emplace(v, model_.video_pipeline(params, video, video_queries));
    const Model::VideoForward& vf = forwards.at(v);

    std::vector<ClipSegment> gts;
    for (const PairAnnotation& p : train_.manifest.videos[static_cast<std::size_t>(v)].pairs)
      gts.push_back(p.gt);
    const std::vector<AnchorLabel> labels = assign_anchor_labels(vf.anchor_segments, gts);
    proposal_losses.push_back(
        proposal_loss(params, vf.head, vf.anchor_segments, labels, gts, sample_rng));
  }
  ad::Tensor prop_loss = proposal_losses.size() == 1
                             ? proposal_losses.front()
                             : tape.reduce(ad::ReduceOp::Mean, tape.concat(proposal_losses), 0);

  // triplets: positive feature from the gt segment, negative per the
  // low-overlap same-video rule with cross-video fallback
  std::vector<std::pair<ad::Tensor, ad::Tensor>> score_pairs;
  std::vector<CaptionStepOutput> captions;
  const bool with_caption = model_.config().use_caption && cfg_.lambda > 0.0;
  for (std::size_t i = 0; i < pair_indices.size(); ++i) {
    const LoadedDataset::Pair& pair = train_.pairs[static_cast<std::size_t>(pair_indices[i])];
    const int v = pair.video_index;
    const FeatureSequence& video = train_.video_features(v);
    const Model::VideoForward& vf = forwards.at(v);

    ad::Tensor f_pos = model_.clip_feature(params, vf, video, pair.gt);

    std::vector<std::pair<int, const std::vector<Proposal>*>> others;
    for (const int w : videos)
      if (w != v) others.push_back({w, &forwards.at(w).proposals});
    const std::optional<NegativeSample> neg =
        sample_negative(vf.proposals, pair.gt, v, others, sample_rng);
    TTC_REQUIRE(neg.has_value(), "train_batch: video '" << video.video_id
                                                        << "' cannot form a negative triplet "
                                                           "(single overlapping proposal, no other videos)");
    const Model::VideoForward& nvf = forwards.at(neg->video_index);
    ad::Tensor f_neg = model_.clip_feature(params, nvf, train_.video_features(neg->video_index),
                                           neg->segment);

    score_pairs.emplace_back(model_.similarity(params, encodings[i], f_pos),
                             model_.similarity(params, encodings[i], f_neg));
    if (with_caption)
      captions.push_back(
          model_.fusion().caption_forward(params, model_.encoder(), f_pos, pair.caption_target));
  }

  ad::Tensor l_ret = triplet_loss(tape, score_pairs, cfg_.margin);
  BatchLosses losses;
  losses.retrieval = l_ret.item();
  losses.proposal = prop_loss.item();

  ad::Tensor total;
  if (with_caption) {
    ad::Tensor l_cap = caption_loss(tape, captions);
    losses.caption = l_cap.item();
    total = tape.add(prop_loss, multitask_loss(tape, l_ret, l_cap, cfg_.lambda));
  } else {
    total = tape.add(prop_loss, l_ret);
  }

  const ad::GradientMap gmap = tape.backward(total);
  std::unordered_map<std::string, ad::Tensor> grads;
  for (const auto& [name, node_id] : params.bound()) {
    if (!tape.node_requires_grad(node_id)) continue;
    grads.emplace(name, gmap.grad(node_id));
  }
  clip_gradients(grads, cfg_.grad_clip_norm);
  adam_update(store_, grads, cfg_.learning_rate);
  return losses;
}

EpochStats Trainer::run_epoch(int epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::vector<int>> batches =
      epoch_batches(static_cast<int>(train_.pairs.size()), cfg_.batch_size, cfg_.seed, epoch);
  Rng sample_rng = Rng::derive(cfg_.seed * 7919ULL + static_cast<std::uint64_t>(epoch), "sampling");

  EpochStats stats;
  stats.epoch = epoch;
  for (const std::vector<int>& batch : batches) {
    const BatchLosses l = train_batch(batch, sample_rng);
    stats.mean_retrieval_loss += l.retrieval;
    stats.mean_caption_loss += l.caption;
    stats.mean_proposal_loss += l.proposal;
  }
  const double n = static_cast<double>(batches.size());
  stats.mean_retrieval_loss /= n;
  stats.mean_caption_loss /= n;
  stats.mean_proposal_loss /= n;
  TTC_REQUIRE(std::isfinite(stats.mean_retrieval_loss) && std::isfinite(stats.mean_caption_loss) &&
                  std::isfinite(stats.mean_proposal_loss),
              "run_epoch: non-finite epoch statistics");
  stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

std::vector<EpochStats> Trainer::train(const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::ofstream log;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log.open((fs::path(out_dir) / "training_log.csv").string(), std::ios::app);
    TTC_REQUIRE_IO(log.good(), "trainer: cannot open training log under " << out_dir);
    if (fs::file_size(fs::path(out_dir) / "training_log.csv") == 0)
      log << EpochStats::csv_header() << '\n';
  }

  std::vector<EpochStats> history;
  double last_val = 0.0;
  const int start_epoch = static_cast<int>(store_.step() /
                                           std::max<std::size_t>(1, epoch_batches(static_cast<int>(train_.pairs.size()),
                                                                                  cfg_.batch_size, cfg_.seed, 0)
                                                                        .size()));
  for (int epoch = start_epoch; epoch < cfg_.epochs_max; ++epoch) {
    EpochStats stats = run_epoch(epoch);
    const bool eval_now = ((epoch + 1) % std::max(1, cfg_.eval_every) == 0) ||
                          epoch + 1 == cfg_.epochs_max;
    if (eval_now) {
      const LoadedDataset& eval_set = val_ ? *val_ : train_;
      last_val = evaluate_dataset(model_, store_, eval_set).at(0.5, 1);
      val_history_.push_back(last_val);
    }
    stats.val_r1_at_05 = last_val;
    history.push_back(stats);
    if (log.is_open()) {
      log << stats.csv_row() << '\n';
      log.flush();
    }
    if (!out_dir.empty())
      save_checkpoint(store_, cfg_.digest(), (fs::path(out_dir) / "checkpoint.csk").string());
    if (!val_history_.empty() &&
        early_stopping_check(val_history_, cfg_.patience) == StopDecision::Stop)
      break;
  }
  return history;
}

}  // namespace ttc
