#include "ghost/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ghost/checkpoint.hpp"
#include "ghost/optim.hpp"

namespace ghost {

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kBase: return "base";
    case Mode::kGhost: return "ghost";
    case Mode::kGhostSvm: return "ghost-svm";
    case Mode::kGhostReal: return "ghost-real";
    case Mode::kJointOracle: return "joint-oracle";
  }
  throw std::logic_error("unknown mode");
}

Mode mode_from_name(const std::string& name) {
  if (name == "base") return Mode::kBase;
  if (name == "ghost") return Mode::kGhost;
  if (name == "ghost-svm") return Mode::kGhostSvm;
  if (name == "ghost-real") return Mode::kGhostReal;
  if (name == "joint-oracle") return Mode::kJointOracle;
  throw std::invalid_argument("unknown mode: " + name);
}

bool mode_uses_ghosts(Mode m) {
  return m == Mode::kGhost || m == Mode::kGhostSvm || m == Mode::kGhostReal;
}

void ExperimentConfig::validate(const LabeledDataset& data) const {
  losses.validate();
  if (optim.batch_size <= 0 || optim.epochs_main < 0 || optim.epochs_finetune < 0) {
    throw std::invalid_argument("config: bad optimizer settings");
  }
  if ((mode == Mode::kGhost || mode == Mode::kGhostSvm) && !data.attributes) {
    throw std::invalid_argument(
        "config: mode '" + mode_name(mode) +
        "' needs class attributes (generator conditioning)");
  }
  if (mode == Mode::kGhostSvm && svm.epochs <= 0) {
    throw std::invalid_argument("config: ghost-svm needs svm settings");
  }
  if (rehearsal.s == 0) {
    throw std::invalid_argument("config: rehearsal budget must be positive");
  }
}

double continual_accuracy(std::span<const AccuracyReport> reports) {
  if (reports.empty()) {
    throw std::invalid_argument("continual_accuracy: no reports");
  }
  double s = 0.0;
  for (const auto& r : reports) s += r.acc_all;
  return s / static_cast<double>(reports.size());
}

namespace {

ArchSpec resolve_arch(ArchSpec arch, const LabeledDataset& data) {
  if (arch.input_shape.empty()) arch.input_shape = data.input_shape;
  return arch;
}

Scenario resolve_scenario(const ExperimentConfig& cfg,
                          const LabeledDataset& data) {
  if (cfg.mode == Mode::kJointOracle) {
    SplitSpec joint;
    joint.initial = data.num_classes;
    joint.explicit_order = cfg.scenario.explicit_order;
    return build_scenario(data, joint);
  }
  return build_scenario(data, cfg.scenario);
}

std::vector<std::size_t> rows_of(const ProxyBank& bank,
                                 std::span<const int> classes) {
  std::vector<std::size_t> out;
  out.reserve(classes.size());
  for (int c : classes) out.push_back(bank.row_of(c));
  return out;
}

}  // namespace

ContinualEngine::ContinualEngine(const ExperimentConfig& config,
                                 const LabeledDataset& data)
    : cfg_(config),
      data_(data),
      scenario_(resolve_scenario(config, data)),
      rng_(config.seed),
      proxies_(resolve_arch(config.arch, data).feature_dim),
      memory_(config.rehearsal.s) {
  cfg_.arch = resolve_arch(cfg_.arch, data);
  cfg_.validate(data);
  data_.check_valid();
  scenario_.check_valid(data_.num_classes);
  extractor_ = FeatureExtractor(cfg_.arch, rng_);
}

Tensor ContinualEngine::extract_all(std::span<const std::size_t> indices,
                                    const FeatureExtractor& net,
                                    AccessChannel channel) const {
  const std::size_t d = static_cast<std::size_t>(net.feature_dim());
  Tensor out({indices.size(), d});
  if (indices.empty()) return out;
  constexpr std::size_t kEvalBatch = 256;
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const std::size_t stop = std::min(indices.size(), start + kEvalBatch);
    Tensor batch = data_.gather(indices.subspan(start, stop - start), channel);
    Tensor feats = net.extract(batch);
    std::copy(feats.data(), feats.data() + feats.size(),
              out.data() + start * d);
  }
  return out;
}

std::map<int, std::vector<std::size_t>> ContinualEngine::train_indices_by_class(
    std::span<const int> classes) const {
  std::map<int, std::vector<std::size_t>> out;
  std::set<int> want(classes.begin(), classes.end());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_.split[i] == Split::kTrain && want.count(data_.labels[i])) {
      out[data_.labels[i]].push_back(i);
    }
  }
  for (int c : classes) {
    if (!out.count(c)) {
      throw std::runtime_error("no training data for class " +
                               std::to_string(c));
    }
  }
  return out;
}

void ContinualEngine::start_task(std::size_t t) {
  if (cfg_.on_task_start) cfg_.on_task_start(static_cast<int>(t));
  const auto& group = scenario_.task_classes[t];
  if (t == 0) {
    proxies_.extend(group, /*seen=*/true, nullptr, rng_);
    if (mode_uses_ghosts(cfg_.mode)) {
      // Ghost operation keeps a proxy for every class of the scenario from
      // the start; rows without ghosts yet are random directions.
      std::vector<int> future;
      for (std::size_t i = 1; i < scenario_.task_count(); ++i) {
        const auto& g = scenario_.task_classes[i];
        future.insert(future.end(), g.begin(), g.end());
      }
      if (!future.empty()) {
        proxies_.extend(future, /*seen=*/false, nullptr, rng_);
      }
    }
  } else if (mode_uses_ghosts(cfg_.mode)) {
    proxies_.mark_seen(group);
  } else {
    proxies_.extend(group, /*seen=*/true, nullptr, rng_);
  }
}

void ContinualEngine::train_main(std::size_t t) {
  const std::vector<int> seen = scenario_.seen_after(t);
  const std::vector<int> unseen = scenario_.unseen_after(t);
  const bool last_task = (t + 1 == scenario_.task_count());
  const bool ghost_task =
      mode_uses_ghosts(cfg_.mode) && t > 0 && !last_task;
  if (ghost_task) {
    if (ghosts_.empty()) {
      throw std::runtime_error("ghost task without a ghost set");
    }
    for (int c : unseen) {
      if (!ghosts_.features_by_class.count(c)) {
        throw std::runtime_error("no ghosts for unseen class " +
                                 std::to_string(c));
      }
    }
  }
  const bool use_svm_reg = cfg_.mode == Mode::kGhostSvm && ghost_task;
  if (use_svm_reg && separators_.empty()) {
    throw std::runtime_error("ghost-svm task without separators");
  }
  const bool distill = t > 0 && has_previous_ &&
                       cfg_.losses.distill != LossConfig::Distill::kNone;

  // Training pool: the new task's data plus everything in rehearsal memory.
  std::vector<std::size_t> pool;
  for (const auto& [cls, idxs] : train_indices_by_class(scenario_.task_classes[t])) {
    pool.insert(pool.end(), idxs.begin(), idxs.end());
  }
  for (std::size_t idx : memory_.all_indices()) pool.push_back(idx);

  // Ghost pool flattened once; batches sample it uniformly.
  std::vector<const Tensor*> ghost_rows;
  std::vector<int> ghost_labels;
  std::vector<std::size_t> ghost_row_index;
  if (ghost_task) {
    for (const auto& [cls, feats] : ghosts_.features_by_class) {
      for (std::size_t r = 0; r < feats.rows(); ++r) {
        ghost_rows.push_back(&feats);
        ghost_labels.push_back(cls);
        ghost_row_index.push_back(r);
      }
    }
  }

  std::vector<ad::Var> params(extractor_.params().begin(),
                              extractor_.params().end());
  params.push_back(proxies_.matrix());

  std::map<int, std::size_t> seen_pos;
  for (std::size_t i = 0; i < seen.size(); ++i) seen_pos[seen[i]] = i;
  const std::vector<std::size_t> seen_rows = rows_of(proxies_, seen);
  const std::vector<std::size_t> unseen_rows = rows_of(proxies_, unseen);

  SgdOptimizer sgd(cfg_.optim.momentum, cfg_.optim.weight_decay);
  const std::size_t bs = static_cast<std::size_t>(cfg_.optim.batch_size);
  const std::size_t d = static_cast<std::size_t>(extractor_.feature_dim());

  for (int epoch = 0; epoch < cfg_.optim.epochs_main; ++epoch) {
    const double lr = cosine_lr(epoch, cfg_.optim.epochs_main, cfg_.optim.lr);
    rng_.shuffle(pool);
    for (std::size_t start = 0; start < pool.size(); start += bs) {
      const std::size_t stop = std::min(pool.size(), start + bs);
      std::span<const std::size_t> batch_idx(pool.data() + start, stop - start);
      Tensor x = data_.gather(batch_idx, AccessChannel::kTrain);
      ExtractOutput live = extractor_.forward(x);

      LossParts parts;
      if (ghost_task) {
        ad::Var scores = proxies_.scores(live.features);
        if (cfg_.losses.score_scale != 1.0) {
          scores = ad::scale(scores, cfg_.losses.score_scale);
        }
        std::vector<std::size_t> label_cols;
        label_cols.reserve(batch_idx.size());
        for (std::size_t idx : batch_idx) {
          label_cols.push_back(proxies_.row_of(data_.labels[idx]));
        }
        ad::Var cls_real = nca_ghost_loss(scores, label_cols, cfg_.losses.delta,
                                          seen_rows, unseen_rows);

        // Same-size batch of fixed ghost features, classification only.
        Tensor gx({bs, d});
        std::vector<std::size_t> glabel_cols(bs);
        for (std::size_t i = 0; i < bs; ++i) {
          const std::size_t pick = rng_.index(ghost_rows.size());
          const Tensor& src = *ghost_rows[pick];
          std::copy(src.data() + ghost_row_index[pick] * d,
                    src.data() + (ghost_row_index[pick] + 1) * d,
                    gx.data() + i * d);
          glabel_cols[i] = proxies_.row_of(ghost_labels[pick]);
        }
        ad::Var gscores = proxies_.scores(ad::constant(std::move(gx)));
        if (cfg_.losses.score_scale != 1.0) {
          gscores = ad::scale(gscores, cfg_.losses.score_scale);
        }
        ad::Var cls_ghost = nca_ghost_loss(gscores, glabel_cols,
                                           cfg_.losses.delta, seen_rows,
                                           unseen_rows);
        parts.classification = ad::add(cls_real, cls_ghost);
        if (use_svm_reg) {
          parts.svm_reg =
              svm_reg_loss(live.features, separators_, cfg_.losses.tau);
        }
      } else {
        ad::Var scores = proxies_.scores_for(live.features, seen);
        if (cfg_.losses.score_scale != 1.0) {
          scores = ad::scale(scores, cfg_.losses.score_scale);
        }
        std::vector<std::size_t> label_cols;
        label_cols.reserve(batch_idx.size());
        for (std::size_t idx : batch_idx) {
          label_cols.push_back(seen_pos.at(data_.labels[idx]));
        }
        parts.classification = nca_loss(scores, label_cols, cfg_.losses.delta);
      }

      if (distill) {
        ExtractOutput old = previous_.forward(x);
        if (cfg_.losses.distill == LossConfig::Distill::kPod) {
          parts.distill = pod_distill(old.taps, live.taps, old.features,
                                      live.features);
        } else {
          parts.distill = less_forget_distill(old.features, live.features);
        }
      }

      ad::Var total = total_loss(parts, cfg_.losses);
      if (!std::isfinite(total.value().item())) {
        throw std::runtime_error("non-finite training loss (diverged)");
      }
      ad::zero_grad(params);
      ad::backward(total);
      sgd.step(params, lr);
    }
  }
}

void ContinualEngine::finetune_classifier(std::size_t t) {
  if (cfg_.optim.epochs_finetune <= 0) return;
  const std::vector<int> seen = scenario_.seen_after(t);
  const std::vector<int> unseen = scenario_.unseen_after(t);
  const bool ghost_task =
      mode_uses_ghosts(cfg_.mode) && t > 0 && t + 1 < scenario_.task_count();

  // Extractor stays frozen: features of the task pool are computed once.
  std::vector<std::size_t> pool;
  for (const auto& [cls, idxs] : train_indices_by_class(scenario_.task_classes[t])) {
    pool.insert(pool.end(), idxs.begin(), idxs.end());
  }
  for (std::size_t idx : memory_.all_indices()) pool.push_back(idx);
  Tensor feats = extract_all(pool, extractor_, AccessChannel::kTrain);
  std::vector<int> labels(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) labels[i] = data_.labels[pool[i]];

  std::vector<Tensor> ghost_feat_rows;
  std::vector<int> ghost_labels;
  const std::size_t d = static_cast<std::size_t>(extractor_.feature_dim());
  if (ghost_task) {
    for (const auto& [cls, gfeats] : ghosts_.features_by_class) {
      for (std::size_t r = 0; r < gfeats.rows(); ++r) {
        Tensor row({1, d});
        std::copy(gfeats.data() + r * d, gfeats.data() + (r + 1) * d, row.data());
        ghost_feat_rows.push_back(std::move(row));
        ghost_labels.push_back(cls);
      }
    }
  }

  std::map<int, std::size_t> seen_pos;
  for (std::size_t i = 0; i < seen.size(); ++i) seen_pos[seen[i]] = i;
  const std::vector<std::size_t> seen_rows = rows_of(proxies_, seen);
  const std::vector<std::size_t> unseen_rows = rows_of(proxies_, unseen);

  std::vector<ad::Var> params{proxies_.matrix()};
  SgdOptimizer sgd(cfg_.optim.momentum, cfg_.optim.weight_decay);
  const std::size_t bs = static_cast<std::size_t>(cfg_.optim.batch_size);
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg_.optim.epochs_finetune; ++epoch) {
    rng_.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t stop = std::min(order.size(), start + bs);
      const std::size_t b = stop - start;
      Tensor x({b, d});
      std::vector<std::size_t> label_cols(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t row = order[start + i];
        std::copy(feats.data() + row * d, feats.data() + (row + 1) * d,
                  x.data() + i * d);
        label_cols[i] = ghost_task ? proxies_.row_of(labels[row])
                                   : seen_pos.at(labels[row]);
      }
      ad::Var fv = ad::constant(std::move(x));
      ad::Var scores = ghost_task ? proxies_.scores(fv)
                                  : proxies_.scores_for(fv, seen);
      if (cfg_.losses.score_scale != 1.0) {
        scores = ad::scale(scores, cfg_.losses.score_scale);
      }
      ad::Var cls = ghost_task
                        ? nca_ghost_loss(scores, label_cols, cfg_.losses.delta,
                                         seen_rows, unseen_rows)
                        : nca_loss(scores, label_cols, cfg_.losses.delta);
      if (ghost_task) {
        Tensor gx({bs, d});
        std::vector<std::size_t> gcols(bs);
        for (std::size_t i = 0; i < bs; ++i) {
          const std::size_t pick = rng_.index(ghost_feat_rows.size());
          std::copy(ghost_feat_rows[pick].data(),
                    ghost_feat_rows[pick].data() + d, gx.data() + i * d);
          gcols[i] = proxies_.row_of(ghost_labels[pick]);
        }
        ad::Var gscores = proxies_.scores(ad::constant(std::move(gx)));
        if (cfg_.losses.score_scale != 1.0) {
          gscores = ad::scale(gscores, cfg_.losses.score_scale);
        }
        cls = ad::add(cls, nca_ghost_loss(gscores, gcols, cfg_.losses.delta,
                                          seen_rows, unseen_rows));
      }
      if (!std::isfinite(cls.value().item())) {
        throw std::runtime_error("non-finite fine-tuning loss");
      }
      ad::zero_grad(params);
      ad::backward(cls);
      sgd.step(params, cfg_.optim.lr_finetune);
    }
  }
}

AccuracyReport ContinualEngine::evaluate(std::size_t t) const {
  const std::vector<std::size_t> test_idx = data_.indices_of(Split::kTest);
  if (test_idx.empty()) throw std::runtime_error("evaluate: empty test set");
  const std::vector<int> seen = scenario_.seen_after(t);
  const std::set<int> seen_set(seen.begin(), seen.end());

  Tensor feats = extract_all(test_idx, extractor_, AccessChannel::kEval);
  Tensor scores =
      proxies_.scores(ad::constant(std::move(feats))).value();
  const std::vector<int> pred = predict(scores, proxies_.class_ids());

  AccuracyReport rep;
  rep.task = static_cast<int>(t);
  std::vector<std::size_t> class_total(data_.num_classes, 0);
  std::vector<std::size_t> class_correct(data_.num_classes, 0);
  std::size_t all = 0, all_ok = 0, seen_n = 0, seen_ok = 0, uns_n = 0,
              uns_ok = 0;
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    const int label = data_.labels[test_idx[i]];
    const bool ok = pred[i] == label;
    ++all;
    all_ok += ok;
    ++class_total[label];
    class_correct[label] += ok;
    if (seen_set.count(label)) {
      ++seen_n;
      seen_ok += ok;
    } else {
      ++uns_n;
      uns_ok += ok;
    }
  }
  rep.acc_all = static_cast<double>(all_ok) / static_cast<double>(all);
  rep.acc_seen =
      seen_n ? static_cast<double>(seen_ok) / static_cast<double>(seen_n) : 0.0;
  if (uns_n > 0) {
    rep.acc_unseen = static_cast<double>(uns_ok) / static_cast<double>(uns_n);
  }
  rep.per_class.resize(data_.num_classes,
                       std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < data_.num_classes; ++c) {
    if (class_total[c] > 0) {
      rep.per_class[c] = static_cast<double>(class_correct[c]) /
                         static_cast<double>(class_total[c]);
    }
  }
  return rep;
}

void ContinualEngine::update_rehearsal(std::size_t t) {
  const auto candidates = train_indices_by_class(scenario_.task_classes[t]);
  std::map<int, Tensor> features;
  if (cfg_.rehearsal.policy == RehearsalPolicy::kClosestToMean) {
    for (const auto& [cls, idxs] : candidates) {
      if (idxs.size() > memory_.capacity_per_class()) {
        features[cls] = extract_all(idxs, extractor_, AccessChannel::kTrain);
      }
    }
  }
  memory_.admit_task(candidates, features, cfg_.rehearsal.policy, rng_);
}

void ContinualEngine::end_of_task_generation(std::size_t t) {
  if (!mode_uses_ghosts(cfg_.mode)) return;
  if (t + 3 > scenario_.task_count()) return;  // no task t+2 to cover
  std::vector<int> targets = scenario_.unseen_after(t + 1);

  std::map<int, std::vector<std::size_t>> source_indices =
      train_indices_by_class(scenario_.task_classes[t]);
  for (const auto& [cls, idxs] : memory_.per_class()) {
    if (!source_indices.count(cls)) source_indices[cls] = idxs;
  }
  std::size_t count = cfg_.generator.count_per_class;
  if (count == 0) {
    std::size_t total = 0;
    for (const auto& [cls, idxs] : source_indices) total += idxs.size();
    count = static_cast<std::size_t>(std::llround(
        static_cast<double>(total) / static_cast<double>(source_indices.size())));
    count = std::max<std::size_t>(count, 1);
  }

  GhostSet produced;
  std::map<int, Tensor> seen_features;
  if (cfg_.mode == Mode::kGhostReal) {
    // Oracle source: features of actual future-class samples, extracted once
    // through the frozen end-of-task extractor.
    for (int cls : targets) {
      std::vector<std::size_t> cand;
      for (std::size_t i = 0; i < data_.size(); ++i) {
        if (data_.split[i] == Split::kTrain && data_.labels[i] == cls) {
          cand.push_back(i);
        }
      }
      if (cand.empty()) {
        throw std::runtime_error("ghost-real: class " + std::to_string(cls) +
                                 " has no training samples to extract");
      }
      if (cand.size() > count) {
        rng_.shuffle(cand);
        cand.resize(count);
        std::sort(cand.begin(), cand.end());
      }
      produced.features_by_class[cls] =
          extract_all(cand, extractor_, AccessChannel::kOracle);
    }
  } else {
    for (const auto& [cls, idxs] : source_indices) {
      seen_features[cls] = extract_all(idxs, extractor_, AccessChannel::kTrain);
    }
    // Pool every seen feature for the scaler fit.
    std::size_t rows = 0;
    const std::size_t d = static_cast<std::size_t>(extractor_.feature_dim());
    for (const auto& [cls, f] : seen_features) rows += f.rows();
    Tensor pooled({rows, d});
    std::size_t w = 0;
    for (const auto& [cls, f] : seen_features) {
      std::copy(f.data(), f.data() + f.size(), pooled.data() + w * d);
      w += f.rows();
    }
    scaler_ = FeatureScaler::fit(pooled);

    std::map<int, Tensor> scaled;
    std::map<int, std::vector<double>> attrs;
    for (const auto& [cls, f] : seen_features) {
      scaled[cls] = scaler_.apply(f);
      attrs[cls] = class_attribute_vector(data_, cls);
    }
    if (!gmmn_.initialized()) {
      GmmnSpec spec;
      spec.noise_len = cfg_.generator.noise_len;
      spec.hidden = cfg_.generator.hidden;
      spec.attr_dim = static_cast<int>(data_.attributes->cols());
      spec.out_dim = extractor_.feature_dim();
      gmmn_ = Gmmn(spec, rng_);
    }
    fit_generator(gmmn_, scaled, attrs, cfg_.generator.epochs,
                  cfg_.generator.lr, cfg_.losses.mmd_bandwidths, rng_);

    std::map<int, std::vector<double>> target_attrs;
    for (int cls : targets) {
      target_attrs[cls] = class_attribute_vector(data_, cls);
    }
    produced = produce_ghosts(gmmn_, scaler_, targets, target_attrs, count, rng_);
  }
  produced.produced_after_task = static_cast<int>(t);
  ghosts_ = std::move(produced);
  proxies_.reinit_unseen_from_ghosts(ghosts_);

  if (cfg_.mode == Mode::kGhostSvm) {
    if (seen_features.empty()) {
      throw std::logic_error("ghost-svm requires generator-source features");
    }
    std::size_t rows = 0;
    const std::size_t d = static_cast<std::size_t>(extractor_.feature_dim());
    for (const auto& [cls, f] : seen_features) rows += f.rows();
    Tensor pooled({rows, d});
    std::size_t w = 0;
    for (const auto& [cls, f] : seen_features) {
      std::copy(f.data(), f.data() + f.size(), pooled.data() + w * d);
      w += f.rows();
    }
    separators_ = train_separators(pooled, ghosts_, cfg_.svm, rng_);
  }
}

void ContinualEngine::write_checkpoint(std::size_t t) const {
  if (cfg_.checkpoint_dir.empty()) return;
  std::filesystem::create_directories(cfg_.checkpoint_dir);
  Checkpoint ckpt;
  ckpt.kind = "model";
  for (const auto& [name, tensor] : extractor_.named_params()) {
    ckpt.names.push_back("extractor." + name);
    ckpt.tensors.push_back(*tensor);
  }
  ckpt.names.push_back("proxies");
  ckpt.tensors.push_back(proxies_.matrix().value());

  nlohmann::json meta;
  meta["task"] = t;
  meta["mode"] = mode_name(cfg_.mode);
  meta["seed"] = cfg_.seed;
  meta["feature_dim"] = cfg_.arch.feature_dim;
  meta["arch"] = {{"preset", cfg_.arch.preset},
                  {"input_shape", cfg_.arch.input_shape},
                  {"conv_channels", cfg_.arch.conv_channels},
                  {"hidden", cfg_.arch.hidden},
                  {"feature_dim", cfg_.arch.feature_dim}};
  meta["class_ids"] = proxies_.class_ids();
  meta["seen"] = proxies_.seen_flags();
  ckpt.meta_json = meta.dump();
  save_checkpoint(cfg_.checkpoint_dir + "/task_" + std::to_string(t + 1) +
                      "_model.ckpt",
                  ckpt);

  if (gmmn_.initialized()) {
    Checkpoint gen;
    gen.kind = "generator";
    for (const auto& [name, tensor] : gmmn_.named_params()) {
      gen.names.push_back("gmmn." + name);
      gen.tensors.push_back(*tensor);
    }
    nlohmann::json gmeta;
    gmeta["task"] = t;
    gmeta["noise_len"] = gmmn_.spec().noise_len;
    gmeta["attr_dim"] = gmmn_.spec().attr_dim;
    gmeta["out_dim"] = gmmn_.spec().out_dim;
    gmeta["hidden"] = gmmn_.spec().hidden;
    gmeta["scaler_min"] = scaler_.minima();
    gmeta["scaler_max"] = scaler_.maxima();
    gen.meta_json = gmeta.dump();
    save_checkpoint(cfg_.checkpoint_dir + "/task_" + std::to_string(t + 1) +
                        "_generator.ckpt",
                    gen);
  }
}

AccuracyReport ContinualEngine::run_task(std::size_t t) {
  if (t != next_task_) {
    throw std::logic_error("tasks must run strictly in order");
  }
  if (t >= scenario_.task_count()) throw std::out_of_range("task index");
  start_task(t);
  train_main(t);
  if (t + 1 < scenario_.task_count()) finetune_classifier(t);
  AccuracyReport rep = evaluate(t);
  write_checkpoint(t);
  update_rehearsal(t);
  end_of_task_generation(t);
  previous_ = extractor_.snapshot();
  has_previous_ = true;
  if (cfg_.on_task_done) cfg_.on_task_done(static_cast<int>(t));
  ++next_task_;
  return rep;
}

MetricsLog ContinualEngine::run_all() {
  MetricsLog log;
  log.mode = cfg_.mode;
  log.seed = cfg_.seed;
  for (std::size_t t = 0; t < scenario_.task_count(); ++t) {
    const auto begin = std::chrono::steady_clock::now();
    log.reports.push_back(run_task(t));
    const auto end = std::chrono::steady_clock::now();
    log.wallclock_s.push_back(
        std::chrono::duration<double>(end - begin).count());
  }
  log.continual_acc = continual_accuracy(log.reports);
  log.final_acc = log.reports.back().acc_all;
  return log;
}

MetricsLog run_experiment(const ExperimentConfig& config,
                          const LabeledDataset& data) {
  ContinualEngine engine(config, data);
  return engine.run_all();
}

}  // namespace ghost
