#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpr/bank.hpp"
#include "dpr/losses.hpp"
#include "dpr/model.hpp"
#include "dpr/retrieval.hpp"
#include "dpr/trainer.hpp"

namespace dpr::config {

using json = nlohmann::json;

enum class Task { retrieval, cooccurrence, both };

struct DataConfig {
  std::optional<train::SyntheticTaskConfig> synthetic;
  std::string bank_path;   // used when synthetic is absent
  std::string tasks_path;  // JSONL of task samples; may be empty for cooccurrence-only runs
};

struct RetrievalSection {
  double tau = 0.1;
  double eval_tau = 0.01;
  int k = 5;
  ret::QueryInit query_init = ret::QueryInit::given_feature;
  ret::NoiseMode noise = ret::NoiseMode::gumbel;
};

struct ExperimentConfig {
  Task task = Task::both;
  DataConfig data;
  model::ModelDims dims;  // vocab_size filled from the bank
  double cooc_margin = 0.2;
  losses::LossWeights weights;
  std::vector<train::OptimConfig> optim_phases;  // applied in order
  train::OptimConfig cooc_optim;                 // for the co-occurrence phase
  int cooc_steps_per_epoch = 32;
  RetrievalSection retrieval;
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known,
                           const std::string& where) {
  for (auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

inline double num_or(const json& j, const char* key, double dflt) {
  return j.contains(key) ? j.at(key).get<double>() : dflt;
}

inline int int_or(const json& j, const char* key, int dflt) {
  return j.contains(key) ? j.at(key).get<int>() : dflt;
}

inline train::OptimConfig parse_optim(const json& j, const std::string& where) {
  reject_unknown(j, {"learning_rate", "beta1", "beta2", "batch_size", "epochs", "seed"}, where);
  train::OptimConfig oc;
  oc.learning_rate = num_or(j, "learning_rate", oc.learning_rate);
  oc.beta1 = num_or(j, "beta1", oc.beta1);
  oc.beta2 = num_or(j, "beta2", oc.beta2);
  oc.batch_size = int_or(j, "batch_size", oc.batch_size);
  oc.epochs = int_or(j, "epochs", oc.epochs);
  if (j.contains("seed")) oc.seed = j.at("seed").get<std::uint64_t>();
  train::validate(oc);
  return oc;
}

inline void parse_losses(const json& j, losses::LossWeights& w) {
  reject_unknown(j,
                 {"sel_gt", "sel_occur", "bbx", "img_adv", "img_recon", "img_p", "obj_adv",
                  "obj_ac", "obj_p"},
                 "losses");
  w.sel_gt = num_or(j, "sel_gt", w.sel_gt);
  w.sel_occur = num_or(j, "sel_occur", w.sel_occur);
  w.bbx = num_or(j, "bbx", w.bbx);
  // Generator-side terms are out of scope here; they are accepted only at 0.
  for (const char* key : {"img_adv", "img_recon", "img_p", "obj_adv", "obj_ac", "obj_p"})
    if (num_or(j, key, 0.0) != 0.0)
      throw UnsupportedTermError(std::string("loss term '") + key +
                                 "' is outside the retrieval scope and must be 0");
  losses::validate(w);
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  detail::reject_unknown(j, {"task", "bank", "model", "losses", "optim", "retrieval"}, "config");
  ExperimentConfig cfg;

  if (j.contains("task")) {
    std::string t = j.at("task");
    if (t == "retrieval")
      cfg.task = Task::retrieval;
    else if (t == "cooccurrence")
      cfg.task = Task::cooccurrence;
    else if (t == "both")
      cfg.task = Task::both;
    else
      throw ConfigError("task must be retrieval, cooccurrence or both");
  }

  if (!j.contains("bank")) throw ConfigError("config needs a 'bank' section");
  const json& bj = j.at("bank");
  detail::reject_unknown(bj, {"synthetic", "path", "tasks"}, "bank");
  if (bj.contains("synthetic")) {
    const json& sj = bj.at("synthetic");
    detail::reject_unknown(sj,
                           {"images", "per_image", "clusters", "d_feat", "sigma", "sigma_image",
                            "categories", "objects_per_graph", "seed"},
                           "bank.synthetic");
    train::SyntheticTaskConfig tc;
    tc.bank.num_images = detail::int_or(sj, "images", tc.bank.num_images);
    tc.bank.patches_per_image = detail::int_or(sj, "per_image", tc.bank.patches_per_image);
    tc.bank.clusters = detail::int_or(sj, "clusters", tc.bank.clusters);
    tc.bank.d_feat = detail::int_or(sj, "d_feat", tc.bank.d_feat);
    tc.bank.sigma = detail::num_or(sj, "sigma", tc.bank.sigma);
    tc.bank.sigma_image = detail::num_or(sj, "sigma_image", tc.bank.sigma_image);
    tc.bank.num_categories = detail::int_or(sj, "categories", tc.bank.num_categories);
    tc.objects_per_graph = detail::int_or(sj, "objects_per_graph", tc.objects_per_graph);
    if (sj.contains("seed")) tc.seed = sj.at("seed").get<std::uint64_t>();
    cfg.data.synthetic = tc;
  } else {
    if (!bj.contains("path")) throw ConfigError("bank section needs 'synthetic' or 'path'");
    cfg.data.bank_path = bj.at("path").get<std::string>();
    if (bj.contains("tasks")) cfg.data.tasks_path = bj.at("tasks").get<std::string>();
  }

  if (j.contains("model")) {
    const json& mj = j.at("model");
    detail::reject_unknown(mj,
                           {"obj_dim", "gcn_layers", "bbox_hidden", "embed_hidden", "embed_dim",
                            "cooc_hidden", "cooc_dim", "cooc_margin"},
                           "model");
    cfg.dims.obj_dim = detail::int_or(mj, "obj_dim", cfg.dims.obj_dim);
    cfg.dims.gcn_layers = detail::int_or(mj, "gcn_layers", cfg.dims.gcn_layers);
    cfg.dims.bbox_hidden = detail::int_or(mj, "bbox_hidden", cfg.dims.bbox_hidden);
    cfg.dims.embed_hidden = detail::int_or(mj, "embed_hidden", cfg.dims.embed_hidden);
    cfg.dims.embed_dim = detail::int_or(mj, "embed_dim", cfg.dims.embed_dim);
    cfg.dims.cooc_hidden = detail::int_or(mj, "cooc_hidden", cfg.dims.cooc_hidden);
    cfg.dims.cooc_dim = detail::int_or(mj, "cooc_dim", cfg.dims.cooc_dim);
    cfg.cooc_margin = detail::num_or(mj, "cooc_margin", cfg.cooc_margin);
    if (cfg.cooc_margin <= 0) throw ConfigError("cooc_margin must be positive");
  }

  if (j.contains("losses")) detail::parse_losses(j.at("losses"), cfg.weights);

  if (j.contains("optim")) {
    const json& oj = j.at("optim");
    if (oj.is_array()) {
      if (oj.empty()) throw ConfigError("optim phase list is empty");
      for (std::size_t i = 0; i < oj.size(); ++i)
        cfg.optim_phases.push_back(detail::parse_optim(oj[i], "optim[" + std::to_string(i) + "]"));
    } else {
      cfg.optim_phases.push_back(detail::parse_optim(oj, "optim"));
    }
  } else {
    cfg.optim_phases.push_back(train::OptimConfig{});
  }
  cfg.cooc_optim = cfg.optim_phases.front();

  if (j.contains("retrieval")) {
    const json& rj = j.at("retrieval");
    detail::reject_unknown(rj, {"tau", "eval_tau", "k", "query_init", "noise"}, "retrieval");
    cfg.retrieval.tau = detail::num_or(rj, "tau", cfg.retrieval.tau);
    cfg.retrieval.eval_tau = detail::num_or(rj, "eval_tau", cfg.retrieval.eval_tau);
    cfg.retrieval.k = detail::int_or(rj, "k", cfg.retrieval.k);
    if (cfg.retrieval.tau <= 0 || cfg.retrieval.eval_tau <= 0 || cfg.retrieval.k <= 0)
      throw ConfigError("retrieval tau/eval_tau/k must be positive");
    if (rj.contains("query_init")) {
      std::string q = rj.at("query_init");
      if (q == "graph")
        cfg.retrieval.query_init = ret::QueryInit::given_feature;
      else if (q == "random")
        cfg.retrieval.query_init = ret::QueryInit::random_candidate;
      else
        throw ConfigError("query_init must be graph or random");
    }
    if (rj.contains("noise")) {
      std::string nz = rj.at("noise");
      if (nz == "gumbel")
        cfg.retrieval.noise = ret::NoiseMode::gumbel;
      else if (nz == "disabled")
        cfg.retrieval.noise = ret::NoiseMode::disabled;
      else
        throw ConfigError("noise must be gumbel or disabled");
    }
  }
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config is not a JSON object");
  return parse_config(j);
}

// ----- external task files: JSON lines -----

/// Each line: {"graph": "<scene graph text>", "gt_patches": [...], "gt_boxes": [[x0,y0,x1,y1],...]}
inline std::vector<train::TaskSample> load_task_samples(const std::string& path,
                                                        const sg::Vocabulary& vocab) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open tasks file '" + path + "'");
  std::vector<train::TaskSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw ConfigError("tasks line " + std::to_string(lineno) + ": invalid JSON");
    detail::reject_unknown(j, {"graph", "gt_patches", "gt_boxes"},
                           "tasks line " + std::to_string(lineno));
    train::TaskSample s;
    s.graph = sg::parse_scene_graph(j.at("graph").get<std::string>(), vocab);
    if (j.contains("gt_patches")) s.gt_patch_ids = j.at("gt_patches").get<std::vector<int>>();
    if (j.contains("gt_boxes")) {
      for (const auto& b : j.at("gt_boxes")) {
        auto v = b.get<std::vector<double>>();
        if (v.size() != 4)
          throw ConfigError("tasks line " + std::to_string(lineno) + ": boxes need 4 coordinates");
        s.gt_boxes.push_back(sg::BBox{v[0], v[1], v[2], v[3]});
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dpr::config
