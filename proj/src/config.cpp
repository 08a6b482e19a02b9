#include "ghost/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace ghost {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  std::set<std::string> ok;
  for (const char* k : allowed) ok.insert(k);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) {
      throw std::invalid_argument("config: unknown key '" + it.key() +
                                  "' in section '" + section + "'");
    }
  }
}

std::string resolve_path(const std::string& p, const std::string& base_dir) {
  if (p.empty() || base_dir.empty()) return p;
  std::filesystem::path fp(p);
  if (fp.is_absolute()) return p;
  return (std::filesystem::path(base_dir) / fp).lexically_normal().string();
}

RehearsalPolicy policy_from_name(const std::string& name) {
  if (name == "closest-to-mean") return RehearsalPolicy::kClosestToMean;
  if (name == "first-k") return RehearsalPolicy::kFirstK;
  if (name == "random") return RehearsalPolicy::kRandom;
  throw std::invalid_argument("config: unknown rehearsal policy " + name);
}

std::string policy_name(RehearsalPolicy p) {
  switch (p) {
    case RehearsalPolicy::kClosestToMean: return "closest-to-mean";
    case RehearsalPolicy::kFirstK: return "first-k";
    case RehearsalPolicy::kRandom: return "random";
  }
  throw std::logic_error("unknown policy");
}

LossConfig::Distill distill_from_name(const std::string& name) {
  if (name == "pod") return LossConfig::Distill::kPod;
  if (name == "less-forget") return LossConfig::Distill::kLessForget;
  if (name == "none") return LossConfig::Distill::kNone;
  throw std::invalid_argument("config: unknown distill kind " + name);
}

std::string distill_name(LossConfig::Distill d) {
  switch (d) {
    case LossConfig::Distill::kPod: return "pod";
    case LossConfig::Distill::kLessForget: return "less-forget";
    case LossConfig::Distill::kNone: return "none";
  }
  throw std::logic_error("unknown distill");
}

}  // namespace

RunConfig parse_run_config(const json& j, const std::string& base_dir) {
  check_keys(j, "(root)",
             {"dataset", "scenario", "mode", "arch", "losses", "optimizer",
              "generator", "svm", "rehearsal", "seed"});
  RunConfig rc;

  const json& jd = j.at("dataset");
  check_keys(jd, "dataset",
             {"type", "train_images", "train_labels", "test_images",
              "test_labels", "val_count", "max_train_per_class", "num_classes",
              "attr_dim", "input_dim", "samples_per_class", "noise_scale",
              "test_fraction", "val_fraction", "data_seed"});
  DatasetSpec& ds = rc.dataset;
  ds.type = jd.value("type", "synthetic");
  if (ds.type == "mnist") {
    ds.train_images = resolve_path(jd.at("train_images"), base_dir);
    ds.train_labels = resolve_path(jd.at("train_labels"), base_dir);
    ds.test_images = resolve_path(jd.at("test_images"), base_dir);
    ds.test_labels = resolve_path(jd.at("test_labels"), base_dir);
    ds.val_count = jd.value("val_count", 1000);
    ds.max_train_per_class = jd.value("max_train_per_class", 0);
  } else if (ds.type == "synthetic") {
    ds.synthetic.num_classes = jd.value("num_classes", 8);
    ds.synthetic.attr_dim = jd.value("attr_dim", 16);
    ds.synthetic.input_dim = jd.value("input_dim", 32);
    ds.synthetic.samples_per_class = jd.value("samples_per_class", 200);
    ds.synthetic.noise_scale = jd.value("noise_scale", 0.1);
    ds.synthetic.test_fraction = jd.value("test_fraction", 0.25);
    ds.synthetic.val_fraction = jd.value("val_fraction", 0.2);
    ds.data_seed = jd.value("data_seed", 7777);
  } else {
    throw std::invalid_argument("config: unknown dataset type " + ds.type);
  }

  ExperimentConfig& ec = rc.experiment;
  ec.mode = mode_from_name(j.value("mode", "base"));
  ec.seed = j.value("seed", 1);

  const json& js = j.at("scenario");
  check_keys(js, "scenario", {"initial", "increments", "order"});
  ec.scenario.initial = js.at("initial");
  ec.scenario.increments = js.value("increments", std::vector<int>{});
  ec.scenario.explicit_order = js.value("order", std::vector<int>{});

  const json& ja = j.at("arch");
  check_keys(ja, "arch", {"preset", "conv_channels", "hidden", "feature_dim"});
  ec.arch.preset = ja.at("preset");
  ec.arch.conv_channels = ja.value("conv_channels", std::vector<int>{8, 16});
  ec.arch.hidden = ja.value("hidden", std::vector<int>{64, 64});
  ec.arch.feature_dim = ja.at("feature_dim");

  if (j.contains("losses")) {
    const json& jl = j.at("losses");
    check_keys(jl, "losses",
               {"delta", "tau", "lambda1", "lambda2", "distill",
                "mmd_bandwidths", "score_scale"});
    ec.losses.delta = jl.value("delta", 0.6);
    ec.losses.tau = jl.value("tau", 1.0);
    ec.losses.lambda1 = jl.value("lambda1", 3.0);
    ec.losses.lambda2 = jl.value("lambda2", 1e-3);
    ec.losses.distill = distill_from_name(jl.value("distill", "pod"));
    ec.losses.mmd_bandwidths =
        jl.value("mmd_bandwidths", std::vector<double>{1, 2, 4, 8, 16});
    ec.losses.score_scale = jl.value("score_scale", 1.0);
  }
  if (j.contains("optimizer")) {
    const json& jo = j.at("optimizer");
    check_keys(jo, "optimizer",
               {"lr", "momentum", "weight_decay", "batch_size", "epochs_main",
                "epochs_finetune", "lr_finetune"});
    ec.optim.lr = jo.value("lr", 0.1);
    ec.optim.momentum = jo.value("momentum", 0.9);
    ec.optim.weight_decay = jo.value("weight_decay", 1e-4);
    ec.optim.batch_size = jo.value("batch_size", 128);
    ec.optim.epochs_main = jo.value("epochs_main", 90);
    ec.optim.epochs_finetune = jo.value("epochs_finetune", 60);
    ec.optim.lr_finetune = jo.value("lr_finetune", 1e-4);
  }
  if (j.contains("generator")) {
    const json& jg = j.at("generator");
    check_keys(jg, "generator",
               {"noise_len", "hidden", "epochs", "lr", "count_per_class"});
    ec.generator.noise_len = jg.value("noise_len", 15);
    ec.generator.hidden = jg.value("hidden", std::vector<int>{64, 128});
    ec.generator.epochs = jg.value("epochs", 1200);
    ec.generator.lr = jg.value("lr", 1e-5);
    ec.generator.count_per_class = jg.value("count_per_class", 0);
  }
  if (j.contains("svm")) {
    const json& jv = j.at("svm");
    check_keys(jv, "svm", {"reg_c", "epochs", "max_per_class"});
    ec.svm.reg_c = jv.value("reg_c", 1.0);
    ec.svm.epochs = jv.value("epochs", 200);
    ec.svm.max_per_class = jv.value("max_per_class", 500);
  }
  if (j.contains("rehearsal")) {
    const json& jr = j.at("rehearsal");
    check_keys(jr, "rehearsal", {"s", "policy"});
    ec.rehearsal.s = jr.value("s", 20);
    ec.rehearsal.policy = policy_from_name(jr.value("policy", "closest-to-mean"));
  }

  // Normalized snapshot with every default made explicit.
  json snap;
  if (ds.type == "mnist") {
    snap["dataset"] = {{"type", "mnist"},
                       {"train_images", ds.train_images},
                       {"train_labels", ds.train_labels},
                       {"test_images", ds.test_images},
                       {"test_labels", ds.test_labels},
                       {"val_count", ds.val_count},
                       {"max_train_per_class", ds.max_train_per_class}};
  } else {
    snap["dataset"] = {{"type", "synthetic"},
                       {"num_classes", ds.synthetic.num_classes},
                       {"attr_dim", ds.synthetic.attr_dim},
                       {"input_dim", ds.synthetic.input_dim},
                       {"samples_per_class", ds.synthetic.samples_per_class},
                       {"noise_scale", ds.synthetic.noise_scale},
                       {"test_fraction", ds.synthetic.test_fraction},
                       {"val_fraction", ds.synthetic.val_fraction},
                       {"data_seed", ds.data_seed}};
  }
  snap["scenario"] = {{"initial", ec.scenario.initial},
                      {"increments", ec.scenario.increments},
                      {"order", ec.scenario.explicit_order}};
  snap["mode"] = mode_name(ec.mode);
  snap["arch"] = {{"preset", ec.arch.preset},
                  {"conv_channels", ec.arch.conv_channels},
                  {"hidden", ec.arch.hidden},
                  {"feature_dim", ec.arch.feature_dim}};
  snap["losses"] = {{"delta", ec.losses.delta},
                    {"tau", ec.losses.tau},
                    {"lambda1", ec.losses.lambda1},
                    {"lambda2", ec.losses.lambda2},
                    {"distill", distill_name(ec.losses.distill)},
                    {"mmd_bandwidths", ec.losses.mmd_bandwidths},
                    {"score_scale", ec.losses.score_scale}};
  snap["optimizer"] = {{"lr", ec.optim.lr},
                       {"momentum", ec.optim.momentum},
                       {"weight_decay", ec.optim.weight_decay},
                       {"batch_size", ec.optim.batch_size},
                       {"epochs_main", ec.optim.epochs_main},
                       {"epochs_finetune", ec.optim.epochs_finetune},
                       {"lr_finetune", ec.optim.lr_finetune}};
  snap["generator"] = {{"noise_len", ec.generator.noise_len},
                       {"hidden", ec.generator.hidden},
                       {"epochs", ec.generator.epochs},
                       {"lr", ec.generator.lr},
                       {"count_per_class", ec.generator.count_per_class}};
  snap["svm"] = {{"reg_c", ec.svm.reg_c},
                 {"epochs", ec.svm.epochs},
                 {"max_per_class", ec.svm.max_per_class}};
  snap["rehearsal"] = {{"s", ec.rehearsal.s},
                       {"policy", policy_name(ec.rehearsal.policy)}};
  snap["seed"] = ec.seed;
  rc.snapshot = std::move(snap);
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config parse error in " + path + ": " +
                                e.what());
  }
  return parse_run_config(
      j, std::filesystem::path(path).parent_path().string());
}

LabeledDataset build_dataset(const DatasetSpec& spec) {
  if (spec.type == "mnist") {
    return load_mnist(spec.train_images, spec.train_labels, spec.test_images,
                      spec.test_labels, spec.val_count,
                      spec.max_train_per_class);
  }
  Rng rng(spec.data_seed);
  return make_synthetic_attribute_dataset(spec.synthetic, rng);
}

}  // namespace ghost
