#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dpr/bank.hpp"
#include "dpr/encoder.hpp"
#include "dpr/losses.hpp"
#include "dpr/model.hpp"
#include "dpr/retrieval.hpp"
#include "dpr/rng.hpp"
#include "dpr/scenegraph.hpp"

namespace dpr::train {

using ad::Tape;
using ad::Var;
using model::ModelParams;

struct OptimConfig {
  double learning_rate = 0.00025;
  double beta1 = 0.0;
  double beta2 = 0.9;
  int batch_size = 16;
  int epochs = 50;
  std::uint64_t seed = 1;
};

inline void validate(const OptimConfig& oc) {
  if (oc.learning_rate < 0) throw std::invalid_argument("optim: learning_rate must be nonnegative");
  if (oc.beta1 < 0 || oc.beta1 >= 1 || oc.beta2 < 0 || oc.beta2 >= 1)
    throw std::invalid_argument("optim: betas must lie in [0, 1)");
  if (oc.batch_size < 1) throw std::invalid_argument("optim: batch_size must be positive");
  if (oc.epochs < 0) throw std::invalid_argument("optim: epochs must be nonnegative");
}

using ParamRegistry = std::vector<std::pair<std::string, Vec*>>;

inline ParamRegistry registry_of(ModelParams& p, bool include_cooc = true) {
  ParamRegistry reg;
  model::visit_params(p, [&reg, include_cooc](const std::string& name, Vec& v) {
    if (!include_cooc && name.rfind("cooc.", 0) == 0) return;
    reg.push_back({name, &v});
  });
  return reg;
}

inline ParamRegistry registry_of(losses::CoocParams& p) {
  return ParamRegistry{{"cooc.fc1.w", &p.net.fc1.w},
                       {"cooc.fc1.b", &p.net.fc1.b},
                       {"cooc.fc2.w", &p.net.fc2.w},
                       {"cooc.fc2.b", &p.net.fc2.b}};
}

/// Moment-based adaptive gradient steps. With beta1 = 0 a zero gradient
/// leaves parameters bitwise unchanged, whatever the second-moment history.
class Adam {
 public:
  explicit Adam(const OptimConfig& oc) : oc_(oc) { validate(oc); }

  void step(const ParamRegistry& params, const std::map<std::string, Vec>& grads) {
    ++t_;
    if (oc_.learning_rate == 0.0) return;
    double bc1 = 1.0 - std::pow(oc_.beta1, t_);
    double bc2 = 1.0 - std::pow(oc_.beta2, t_);
    for (const auto& [name, vec] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const Vec& g = git->second;
      auto& [m, v] = state_[name];
      if (m.empty()) {
        m.assign(vec->size(), 0.0);
        v.assign(vec->size(), 0.0);
      }
      for (std::size_t i = 0; i < vec->size(); ++i) {
        m[i] = oc_.beta1 * m[i] + (1.0 - oc_.beta1) * g[i];
        v[i] = oc_.beta2 * v[i] + (1.0 - oc_.beta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        (*vec)[i] -= oc_.learning_rate * mhat / (std::sqrt(vhat) + 1e-8);
      }
    }
  }

 private:
  OptimConfig oc_;
  long t_ = 0;
  std::map<std::string, std::pair<Vec, Vec>> state_;
};

namespace detail {

inline void accumulate_grads(Tape& tape, const std::map<std::string, Var>& leaves,
                             std::map<std::string, Vec>& into) {
  for (const auto& [name, var] : leaves) {
    const Vec& g = tape.grad(var);
    Vec& dst = into[name];
    if (dst.empty()) dst.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
}

inline void scale_grads(std::map<std::string, Vec>& grads, double c) {
  for (auto& [name, g] : grads)
    for (double& x : g) x *= c;
}

}  // namespace detail

// ----- model binding -----

struct BoundModel {
  sg::BoundEncoder encoder;
  sg::BoundBboxHead bbox;
  Var query_w, query_b;
  losses::BoundMlp2 embed;
  losses::BoundMlp2 cooc;
  std::map<std::string, Var> leaves;
};

inline BoundModel bind_model(Tape& tape, ModelParams& p) {
  BoundModel b;
  model::visit_params(p, [&](const std::string& name, Vec& v) { b.leaves[name] = tape.leaf(v); });
  b.encoder.obj_table = b.leaves.at("encoder.obj_table");
  b.encoder.rel_table = b.leaves.at("encoder.rel_table");
  for (std::size_t l = 0; l < p.encoder.gcn.layers.size(); ++l)
    b.encoder.layers.push_back(sg::GcnLayerVars{b.leaves.at("encoder.gcn." + std::to_string(l) + ".w"),
                                                b.leaves.at("encoder.gcn." + std::to_string(l) + ".b"),
                                                p.encoder.gcn.dim});
  b.encoder.dim = p.encoder.dim;
  b.encoder.vocab_size = p.encoder.vocab_size;
  b.bbox = sg::BoundBboxHead{b.leaves.at("bbox.fc1.w"), b.leaves.at("bbox.fc1.b"),
                             b.leaves.at("bbox.fc2.w"), b.leaves.at("bbox.fc2.b"), &p.bbox};
  b.query_w = b.leaves.at("query.w");
  b.query_b = b.leaves.at("query.b");
  b.embed = losses::BoundMlp2{b.leaves.at("embed.fc1.w"), b.leaves.at("embed.fc1.b"),
                              b.leaves.at("embed.fc2.w"), b.leaves.at("embed.fc2.b"), &p.embed};
  b.cooc = losses::BoundMlp2{b.leaves.at("cooc.fc1.w"), b.leaves.at("cooc.fc1.b"),
                             b.leaves.at("cooc.fc2.w"), b.leaves.at("cooc.fc2.b"), &p.cooc.net};
  return b;
}

// ----- task data -----

/// One training/evaluation item: a scene graph plus its ground-truth patch
/// ids and boxes, aligned with the graph's user objects.
struct TaskSample {
  sg::SceneGraph graph;
  std::vector<int> gt_patch_ids;
  std::vector<sg::BBox> gt_boxes;
};

/// Deterministic box for a raw synthetic category: a 4x4 grid cell.
inline sg::BBox box_for_category(int raw_category) {
  int col = raw_category % 4;
  int row = (raw_category / 4) % 4;
  double x0 = 0.05 + 0.225 * col;
  double y0 = 0.05 + 0.225 * row;
  return sg::BBox{x0, y0, x0 + 0.2, y0 + 0.2};
}

struct SyntheticTaskConfig {
  bank::SynthBankConfig bank;
  int objects_per_graph = 3;
  std::uint64_t seed = 1;
};

struct SyntheticTask {
  bank::PatchBank bank;
  std::vector<TaskSample> samples;
  int clusters = 0;
};

/// Clustered retrieval task: one graph per image over that image's first
/// categories; the image's own patches are the ground truth. Category windows
/// differ per image, so a graph identifies its source image.
inline SyntheticTask make_synthetic_task(const SyntheticTaskConfig& cfg) {
  if (cfg.objects_per_graph <= 0 || cfg.objects_per_graph > cfg.bank.patches_per_image)
    throw std::invalid_argument("synthetic task: objects_per_graph must be in [1, patches_per_image]");
  SyntheticTask task;
  Rng rng(cfg.seed);
  task.bank = bank::synth_bank(rng, cfg.bank);
  task.clusters = cfg.bank.clusters;
  for (int i = 0; i < cfg.bank.num_images; ++i) {
    std::string text;
    for (int p = 0; p < cfg.objects_per_graph; ++p) {
      char line[48];
      std::snprintf(line, sizeof line, "obj %d cat%03d\n", p, bank::synth_category(cfg.bank, i, p));
      text += line;
    }
    for (int p = 0; p + 1 < cfg.objects_per_graph; ++p)
      text += "rel " + std::to_string(p) + " near " + std::to_string(p + 1) + "\n";
    TaskSample s;
    s.graph = sg::parse_scene_graph(text, task.bank.header.vocabulary);
    for (int p = 0; p < cfg.objects_per_graph; ++p) {
      s.gt_patch_ids.push_back(i * cfg.bank.patches_per_image + p);
      s.gt_boxes.push_back(box_for_category(bank::synth_category(cfg.bank, i, p)));
    }
    task.samples.push_back(std::move(s));
  }
  return task;
}

// ----- shared forward pipeline -----

struct PipelineConfig {
  ret::RetrievalConfig retrieval;
  losses::LossWeights weights;
  bool inject_gt = true;
};

struct SampleForward {
  Var sel_loss, occur_loss, bbox_loss, total;
  ret::SelectionResult sel;
  bank::CandidateSet cs;
  std::vector<int> picked_records;  // bank record index per selection round
  int n_objects = 0;
};

/// Encode -> predict boxes -> prefilter (+ gt injection) -> embed -> retrieve
/// -> losses. The initial query in given_feature mode is the embedded mean of
/// the per-object query projections, so selection gradients reach the query
/// head and the graph encoder.
inline SampleForward forward_sample(Tape& tape, const ModelParams& params, const BoundModel& bound,
                                    const bank::PatchBank& pb, const TaskSample& sample,
                                    const PipelineConfig& cfg, Rng& rng) {
  SampleForward out;
  auto feats = sg::encode_graph(tape, bound.encoder, sample.graph);
  out.n_objects = static_cast<int>(feats.size());
  if (out.n_objects == 0) throw std::invalid_argument("forward_sample: graph has no objects");

  std::vector<Var> queries;
  std::vector<std::pair<Vec, int>> objects;
  std::vector<Var> boxes;
  for (int i = 0; i < out.n_objects; ++i) {
    Var q = tape.affine(bound.query_w, bound.query_b, feats[i].feature, params.query_fc);
    queries.push_back(q);
    objects.push_back({tape.val(q), sample.graph.objects[i].category});
    boxes.push_back(sg::predict_bbox(tape, bound.bbox, feats[i].feature));
  }
  out.bbox_loss = losses::bbox_l1_loss(tape, boxes, sample.gt_boxes);

  out.cs = bank::build_candidates(pb, objects, cfg.retrieval.k,
                                  cfg.inject_gt ? &sample.gt_patch_ids : nullptr);
  std::vector<Var> raw_feats;
  std::vector<Var> embedded;
  for (int rec : out.cs.flat) {
    Var leaf = tape.leaf(pb.records[rec].feature);
    raw_feats.push_back(leaf);
    embedded.push_back(losses::mlp2_forward(tape, bound.embed, leaf));
  }

  std::optional<Var> init_query;
  if (cfg.retrieval.query_init == ret::QueryInit::given_feature)
    init_query = losses::mlp2_forward(tape, bound.embed, tape.avg_pool(queries));

  out.sel = ret::iterative_retrieve(tape, out.cs, embedded, cfg.retrieval, rng, init_query);
  for (int fi : out.sel.selected_hard) out.picked_records.push_back(out.cs.flat[fi]);

  if (cfg.inject_gt) {
    out.sel_loss = losses::selection_gt_loss(tape, out.sel.scores_var, out.cs.gt_flat);
  } else {
    out.sel_loss = tape.leaf(Vec{0.0});
  }
  auto soft = ret::soft_group_features(tape, out.cs, raw_feats, out.sel.scores_var);
  out.occur_loss = losses::cooccurrence_loss(tape, bound.cooc, soft);
  out.total = losses::total_retrieval_loss(tape, cfg.weights, out.sel_loss, out.occur_loss,
                                           out.bbox_loss);
  return out;
}

// ----- evaluation -----

struct MetricsReport {
  double gt_hit_rate = 0.0;
  double cluster_purity = 0.0;
  double mean_cooc_loss = 0.0;
  Vec loss_curve;   // per-epoch mean total loss (training runs)
  Vec bbox_curve;   // per-epoch mean bbox term
};

/// Deterministic evaluation: noise disabled, graph-derived query, ground
/// truth injected so hit rates are well defined.
inline MetricsReport evaluate(const bank::PatchBank& pb, const std::vector<TaskSample>& samples,
                              ModelParams& params, const ret::RetrievalConfig& eval_cfg,
                              int clusters) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  MetricsReport rep;
  ret::RetrievalConfig cfg = eval_cfg;
  cfg.noise = ret::NoiseMode::disabled;
  cfg.query_init = ret::QueryInit::given_feature;
  PipelineConfig pcfg{cfg, losses::LossWeights{}, true};

  int groups_total = 0, groups_hit = 0, pure = 0;
  double cooc_sum = 0.0;
  Rng rng(0);  // unused: noise off, query given
  for (const auto& sample : samples) {
    Tape tape;
    auto bound = bind_model(tape, params);
    auto fwd = forward_sample(tape, params, bound, pb, sample, pcfg, rng);

    for (int fi : fwd.sel.selected_hard) {
      int g = fwd.cs.group_of[fi];
      ++groups_total;
      if (fwd.cs.gt_flat[g] == fi) ++groups_hit;
    }
    std::set<int> pick_clusters;
    for (int rec : fwd.picked_records) {
      int image = pb.records[rec].image;
      pick_clusters.insert(clusters > 0 ? image % clusters : image);
    }
    if (pick_clusters.size() == 1) ++pure;

    std::vector<Var> picked_feats;
    for (int rec : fwd.picked_records) picked_feats.push_back(tape.leaf(pb.records[rec].feature));
    cooc_sum += tape.val(losses::cooccurrence_loss(tape, bound.cooc, picked_feats))[0];
  }
  rep.gt_hit_rate = static_cast<double>(groups_hit) / groups_total;
  rep.cluster_purity = static_cast<double>(pure) / samples.size();
  rep.mean_cooc_loss = cooc_sum / samples.size();
  return rep;
}

/// Mean absolute per-coordinate box error of the current parameters.
inline double mean_bbox_error(const std::vector<TaskSample>& samples, ModelParams& params) {
  double err = 0.0;
  int count = 0;
  for (const auto& s : samples) {
    Tape tape;
    auto bound = bind_model(tape, params);
    auto feats = sg::encode_graph(tape, bound.encoder, s.graph);
    for (std::size_t i = 0; i < feats.size(); ++i) {
      const Vec& v = tape.val(sg::predict_bbox(tape, bound.bbox, feats[i].feature));
      const sg::BBox& g = s.gt_boxes[i];
      err += std::abs(v[0] - g.x0) + std::abs(v[1] - g.y0) + std::abs(v[2] - g.x1) +
             std::abs(v[3] - g.y1);
      count += 4;
    }
  }
  return err / count;
}

// ----- co-occurrence pre-training -----

struct CoocTrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  Vec loss_curve;  // probe loss after each epoch
};

struct Triplet {
  int anchor, positive, negative;  // record indices
};

namespace detail {

inline std::vector<int> images_with_pairs(const bank::PatchBank& pb,
                                          std::map<int, std::vector<int>>& by_image) {
  for (std::size_t i = 0; i < pb.records.size(); ++i)
    by_image[pb.records[i].image].push_back(static_cast<int>(i));
  std::vector<int> ok;
  for (const auto& [img, recs] : by_image)
    if (recs.size() >= 2) ok.push_back(img);
  return ok;
}

inline Triplet draw_triplet(const bank::PatchBank& pb,
                            const std::map<int, std::vector<int>>& by_image,
                            const std::vector<int>& anchor_images, Rng& rng) {
  int img = anchor_images[rng.uniform_int(static_cast<int>(anchor_images.size()))];
  const auto& recs = by_image.at(img);
  int a = recs[rng.uniform_int(static_cast<int>(recs.size()))];
  int p = a;
  while (p == a) p = recs[rng.uniform_int(static_cast<int>(recs.size()))];
  int n = a;
  while (pb.records[n].image == img)
    n = rng.uniform_int(static_cast<int>(pb.records.size()));
  return Triplet{a, p, n};
}

inline double probe_loss(const bank::PatchBank& pb, losses::CoocParams& cooc,
                         const std::vector<Triplet>& probe) {
  Tape tape;
  auto F = losses::bind_mlp2(tape, cooc.net);
  double total = 0.0;
  for (const auto& tr : probe) {
    Var l = losses::triplet_loss(tape, F, tape.leaf(pb.records[tr.anchor].feature),
                                 tape.leaf(pb.records[tr.positive].feature),
                                 tape.leaf(pb.records[tr.negative].feature), cooc.margin);
    total += tape.val(l)[0];
  }
  return total / probe.size();
}

}  // namespace detail

/// Minimizes the mean triplet loss over same-image positives and cross-image
/// negatives, then fills every record's co-occurrence feature.
inline CoocTrainReport train_cooccurrence(bank::PatchBank& pb, losses::CoocParams& cooc,
                                          const OptimConfig& oc, int steps_per_epoch = 32,
                                          int probe_size = 256) {
  validate(oc);
  std::map<int, std::vector<int>> by_image;
  auto anchor_images = detail::images_with_pairs(pb, by_image);
  if (anchor_images.size() < 2 || by_image.size() < 2)
    throw std::invalid_argument("train_cooccurrence: need >= 2 images with >= 2 patches each");

  Rng probe_rng(derive_seed(oc.seed, 0xC00C));
  std::vector<Triplet> probe;
  for (int i = 0; i < probe_size; ++i)
    probe.push_back(detail::draw_triplet(pb, by_image, anchor_images, probe_rng));

  CoocTrainReport rep;
  rep.initial_loss = detail::probe_loss(pb, cooc, probe);

  Adam adam(oc);
  auto reg = registry_of(cooc);
  Rng rng(derive_seed(oc.seed, 0x7121));
  for (int epoch = 0; epoch < oc.epochs; ++epoch) {
    for (int step = 0; step < steps_per_epoch; ++step) {
      Tape tape;
      auto F = losses::bind_mlp2(tape, cooc.net);
      Var acc;
      for (int b = 0; b < oc.batch_size; ++b) {
        auto tr = detail::draw_triplet(pb, by_image, anchor_images, rng);
        Var l = losses::triplet_loss(tape, F, tape.leaf(pb.records[tr.anchor].feature),
                                     tape.leaf(pb.records[tr.positive].feature),
                                     tape.leaf(pb.records[tr.negative].feature), cooc.margin);
        acc = acc.valid() ? tape.add(acc, l) : l;
      }
      Var mean = tape.scale(acc, 1.0 / oc.batch_size);
      tape.backward(mean);
      std::map<std::string, Vec> grads;
      std::map<std::string, Var> leaves{{"cooc.fc1.w", F.w1},
                                        {"cooc.fc1.b", F.b1},
                                        {"cooc.fc2.w", F.w2},
                                        {"cooc.fc2.b", F.b2}};
      detail::accumulate_grads(tape, leaves, grads);
      adam.step(reg, grads);
    }
    rep.loss_curve.push_back(detail::probe_loss(pb, cooc, probe));
  }
  rep.final_loss = rep.loss_curve.empty() ? rep.initial_loss : rep.loss_curve.back();
  for (auto& r : pb.records) r.cooc = losses::mlp2_apply(cooc.net, r.feature);
  return rep;
}

// ----- retrieval training -----

struct RetrievalTrainReport {
  MetricsReport before;
  MetricsReport after;
  Vec loss_curve;       // per-epoch mean total loss
  Vec bbox_curve;       // per-epoch mean bbox term
  Vec sel_curve;        // per-epoch mean selection term
  Vec occur_curve;      // per-epoch mean co-occurrence term
};

/// End-to-end training through the differentiable retrieval: gradients reach
/// the patch embedding, query head, encoder tables/GCN and bbox head; the
/// co-occurrence embedding stays frozen.
inline RetrievalTrainReport train_retrieval(const bank::PatchBank& pb,
                                            const std::vector<TaskSample>& samples,
                                            ModelParams& params, const losses::LossWeights& weights,
                                            const OptimConfig& oc,
                                            const ret::RetrievalConfig& train_cfg,
                                            const ret::RetrievalConfig& eval_cfg, int clusters) {
  validate(oc);
  losses::validate(weights);
  if (samples.empty()) throw std::invalid_argument("train_retrieval: no samples");
  for (const auto& s : samples) {
    std::size_t n = s.graph.user_object_count;
    if (s.gt_patch_ids.size() != n || s.gt_boxes.size() != n)
      throw std::invalid_argument("train_retrieval: sample lacks gt patches or boxes");
  }

  RetrievalTrainReport rep;
  rep.before = evaluate(pb, samples, params, eval_cfg, clusters);

  Adam adam(oc);
  auto reg = registry_of(params, /*include_cooc=*/false);
  Rng rng(derive_seed(oc.seed, 0x5EED));
  PipelineConfig pcfg{train_cfg, weights, true};
  std::size_t global_step = 0;

  for (int epoch = 0; epoch < oc.epochs; ++epoch) {
    double ep_total = 0, ep_bbox = 0, ep_sel = 0, ep_occur = 0;
    std::map<std::string, Vec> grads;
    int in_batch = 0;
    for (std::size_t si = 0; si < samples.size(); ++si) {
      Tape tape;
      auto bound = bind_model(tape, params);
      auto fwd = forward_sample(tape, params, bound, pb, samples[si], pcfg, rng);
      double total = tape.val(fwd.total)[0];
      if (!std::isfinite(total)) throw TrainingDivergedError(global_step, "non-finite loss");
      ep_total += total;
      ep_bbox += tape.val(fwd.bbox_loss)[0];
      ep_sel += tape.val(fwd.sel_loss)[0];
      ep_occur += tape.val(fwd.occur_loss)[0];
      tape.backward(fwd.total);
      detail::accumulate_grads(tape, bound.leaves, grads);
      ++in_batch;
      ++global_step;
      if (in_batch == oc.batch_size || si + 1 == samples.size()) {
        detail::scale_grads(grads, 1.0 / in_batch);
        adam.step(reg, grads);
        grads.clear();
        in_batch = 0;
      }
    }
    rep.loss_curve.push_back(ep_total / samples.size());
    rep.bbox_curve.push_back(ep_bbox / samples.size());
    rep.sel_curve.push_back(ep_sel / samples.size());
    rep.occur_curve.push_back(ep_occur / samples.size());
  }

  rep.after = evaluate(pb, samples, params, eval_cfg, clusters);
  rep.after.loss_curve = rep.loss_curve;
  rep.after.bbox_curve = rep.bbox_curve;
  return rep;
}

}  // namespace dpr::train
