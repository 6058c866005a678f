#pragma once

#include <fstream>
#include <functional>
#include <string>

#include "json.hpp"

#include "dpr/encoder.hpp"
#include "dpr/losses.hpp"
#include "dpr/rng.hpp"

namespace dpr::model {

using ad::AffineParams;
using losses::CoocParams;
using losses::Mlp2;

inline constexpr int kCheckpointVersion = 1;

struct ModelDims {
  int vocab_size = 0;
  int obj_dim = 64;        // embedding and GCN width
  int gcn_layers = 5;
  int bbox_hidden = 32;
  int d_feat = 16;         // bank feature dimension
  int embed_hidden = 32;   // patch embedding head
  int embed_dim = 16;
  int cooc_hidden = 32;    // co-occurrence embedding head
  int cooc_dim = 16;

  bool operator==(const ModelDims&) const = default;
};

/// Every trainable block of the retrieval pipeline.
struct ModelParams {
  ModelDims dims;
  sg::EncoderParams encoder;       // embedding tables + GCN stack
  sg::BboxHeadParams bbox;         // object feature -> box logits
  AffineParams query_fc;           // object feature -> bank feature space
  Mlp2 embed;                      // patch embedding head (bank -> match space)
  CoocParams cooc;                 // co-occurrence embedding + margin
};

/// Visits (name, vector) for every parameter block in a fixed order.
template <typename Fn>
void visit_params(ModelParams& p, Fn&& fn) {
  fn("encoder.obj_table", p.encoder.obj_table);
  fn("encoder.rel_table", p.encoder.rel_table);
  for (std::size_t l = 0; l < p.encoder.gcn.layers.size(); ++l) {
    fn("encoder.gcn." + std::to_string(l) + ".w", p.encoder.gcn.layers[l].w);
    fn("encoder.gcn." + std::to_string(l) + ".b", p.encoder.gcn.layers[l].b);
  }
  fn("bbox.fc1.w", p.bbox.fc1.w);
  fn("bbox.fc1.b", p.bbox.fc1.b);
  fn("bbox.fc2.w", p.bbox.fc2.w);
  fn("bbox.fc2.b", p.bbox.fc2.b);
  fn("query.w", p.query_fc.w);
  fn("query.b", p.query_fc.b);
  fn("embed.fc1.w", p.embed.fc1.w);
  fn("embed.fc1.b", p.embed.fc1.b);
  fn("embed.fc2.w", p.embed.fc2.w);
  fn("embed.fc2.b", p.embed.fc2.b);
  fn("cooc.fc1.w", p.cooc.net.fc1.w);
  fn("cooc.fc1.b", p.cooc.net.fc1.b);
  fn("cooc.fc2.w", p.cooc.net.fc2.w);
  fn("cooc.fc2.b", p.cooc.net.fc2.b);
}

namespace detail {

inline AffineParams init_affine(Rng& rng, int out, int in, double scale = 1.0) {
  AffineParams a;
  a.out = out;
  a.in = in;
  double bound = scale / std::sqrt(static_cast<double>(in));
  a.w.resize(static_cast<std::size_t>(out) * in);
  for (double& x : a.w) x = rng.uniform(-bound, bound);
  a.b.assign(out, 0.0);
  return a;
}

inline Mlp2 init_mlp2(Rng& rng, int in, int hidden, int out, double scale = 1.0) {
  Mlp2 m;
  m.fc1 = init_affine(rng, hidden, in, scale);
  m.fc2 = init_affine(rng, out, hidden, scale);
  return m;
}

}  // namespace detail

/// Small-scale start for the co-occurrence head: with a metric-learning
/// objective the hinge must begin active, which needs near-collapsed initial
/// distances.
inline constexpr double kCoocInitScale = 0.01;

inline ModelParams init_model(const ModelDims& dims, Rng& rng) {
  if (dims.vocab_size <= 0) throw std::invalid_argument("init_model: vocab_size must be positive");
  ModelParams p;
  p.dims = dims;
  p.encoder.vocab_size = dims.vocab_size;
  p.encoder.dim = dims.obj_dim;
  std::size_t table = static_cast<std::size_t>(dims.vocab_size) * dims.obj_dim;
  p.encoder.obj_table.resize(table);
  p.encoder.rel_table.resize(table);
  double eb = 1.0 / std::sqrt(static_cast<double>(dims.obj_dim));
  for (double& x : p.encoder.obj_table) x = rng.uniform(-eb, eb);
  for (double& x : p.encoder.rel_table) x = rng.uniform(-eb, eb);
  p.encoder.gcn.dim = dims.obj_dim;
  for (int l = 0; l < dims.gcn_layers; ++l)
    p.encoder.gcn.layers.push_back(detail::init_affine(rng, 3 * dims.obj_dim, 3 * dims.obj_dim));
  p.bbox.fc1 = detail::init_affine(rng, dims.bbox_hidden, dims.obj_dim);
  p.bbox.fc2 = detail::init_affine(rng, 4, dims.bbox_hidden);
  p.query_fc = detail::init_affine(rng, dims.d_feat, dims.obj_dim);
  p.embed = detail::init_mlp2(rng, dims.d_feat, dims.embed_hidden, dims.embed_dim);
  p.cooc.net = detail::init_mlp2(rng, dims.d_feat, dims.cooc_hidden, dims.cooc_dim, kCoocInitScale);
  return p;
}

// ----- checkpoint i/o: versioned JSON with named blocks -----

inline nlohmann::json dims_to_json(const ModelDims& d) {
  return nlohmann::json{{"vocab_size", d.vocab_size}, {"obj_dim", d.obj_dim},
                        {"gcn_layers", d.gcn_layers}, {"bbox_hidden", d.bbox_hidden},
                        {"d_feat", d.d_feat},         {"embed_hidden", d.embed_hidden},
                        {"embed_dim", d.embed_dim},   {"cooc_hidden", d.cooc_hidden},
                        {"cooc_dim", d.cooc_dim}};
}

inline ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  d.vocab_size = j.at("vocab_size");
  d.obj_dim = j.at("obj_dim");
  d.gcn_layers = j.at("gcn_layers");
  d.bbox_hidden = j.at("bbox_hidden");
  d.d_feat = j.at("d_feat");
  d.embed_hidden = j.at("embed_hidden");
  d.embed_dim = j.at("embed_dim");
  d.cooc_hidden = j.at("cooc_hidden");
  d.cooc_dim = j.at("cooc_dim");
  return d;
}

inline void save_checkpoint(ModelParams& p, const std::string& path) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["dims"] = dims_to_json(p.dims);
  j["cooc_margin"] = p.cooc.margin;
  j["blocks"] = nlohmann::json::object();
  visit_params(p, [&j](const std::string& name, Vec& v) { j["blocks"][name] = v; });
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open checkpoint '" + path + "' for writing");
  os << j.dump(2) << "\n";
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open checkpoint '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded()) throw ConfigError("checkpoint '" + path + "' is not valid JSON");
  if (!j.contains("version") || j["version"] != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version");
  Rng dummy(0);
  ModelParams p = init_model(dims_from_json(j.at("dims")), dummy);
  p.cooc.margin = j.at("cooc_margin");
  visit_params(p, [&j](const std::string& name, Vec& v) {
    const auto& blocks = j.at("blocks");
    if (!blocks.contains(name)) throw ConfigError("checkpoint lacks block '" + name + "'");
    Vec loaded = blocks.at(name).get<Vec>();
    if (loaded.size() != v.size())
      throw ConfigError("checkpoint block '" + name + "' has wrong size");
    v = std::move(loaded);
  });
  return p;
}

}  // namespace dpr::model
