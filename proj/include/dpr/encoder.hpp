#pragma once

#include <string>
#include <vector>

#include "dpr/scenegraph.hpp"
#include "dpr/tape.hpp"

namespace dpr::sg {

using ad::AffineParams;
using ad::Tape;
using ad::Var;

/// Stack of graph-convolution layers. Each layer maps the concatenated edge
/// triple (subject, relation, object), 3*dim wide, through one dense layer
/// and splits the result back into per-slot update vectors.
struct GcnParams {
  int dim = 64;
  std::vector<AffineParams> layers;  // each (3*dim x 3*dim)

  static GcnParams zeros(int dim_, int layer_count = 5) {
    GcnParams p;
    p.dim = dim_;
    for (int i = 0; i < layer_count; ++i) p.layers.push_back(AffineParams::zeros(3 * dim_, 3 * dim_));
    return p;
  }
};

/// Category/relation embedding tables plus the GCN stack.
struct EncoderParams {
  int vocab_size = 0;
  int dim = 64;
  Vec obj_table;  // vocab_size x dim, row-major
  Vec rel_table;
  GcnParams gcn;
};

/// Tape handles for one layer's parameters.
struct GcnLayerVars {
  Var w;
  Var b;
  int dim;
};

/// Per-graph feature state threaded through the layers; aligned with
/// graph.objects / graph.edges.
struct GraphFeatures {
  std::vector<Var> object_feats;
  std::vector<Var> edge_feats;
};

/// One message-passing step: every edge proposes candidate vectors for its
/// three slots; an object's next feature is the mean of its candidates over
/// all incident edges, and relation features are replaced directly.
inline GraphFeatures gcn_layer(Tape& tape, const GcnLayerVars& layer, const SceneGraph& graph,
                               const GraphFeatures& in) {
  const int dim = layer.dim;
  if (in.object_feats.size() != graph.objects.size() || in.edge_feats.size() != graph.edges.size())
    throw std::invalid_argument("gcn_layer: feature list does not match graph");

  std::vector<std::vector<Var>> candidates(graph.objects.size());
  GraphFeatures out;
  out.edge_feats.reserve(graph.edges.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const SceneEdge& edge = graph.edges[e];
    int si = graph.index_of(edge.subject);
    int oi = graph.index_of(edge.object);
    Var triple = tape.concat({in.object_feats[si], in.edge_feats[e], in.object_feats[oi]});
    Var mapped = tape.affine(layer.w, layer.b, triple, 3 * dim, 3 * dim);
    candidates[si].push_back(tape.slice(mapped, 0, dim));
    out.edge_feats.push_back(tape.slice(mapped, dim, dim));
    candidates[oi].push_back(tape.slice(mapped, 2 * dim, dim));
  }

  out.object_feats.reserve(graph.objects.size());
  for (std::size_t i = 0; i < graph.objects.size(); ++i) {
    if (candidates[i].empty())
      throw std::logic_error("gcn_layer: object " + std::to_string(graph.objects[i].id) +
                             " has no incident edge (augmentation violated)");
    out.object_feats.push_back(tape.avg_pool(candidates[i]));
  }
  return out;
}

struct BoundEncoder {
  Var obj_table;
  Var rel_table;
  std::vector<GcnLayerVars> layers;
  int dim;
  int vocab_size;
};

inline BoundEncoder bind_encoder(Tape& tape, const EncoderParams& p) {
  BoundEncoder b;
  b.obj_table = tape.leaf(p.obj_table);
  b.rel_table = tape.leaf(p.rel_table);
  for (const auto& l : p.gcn.layers)
    b.layers.push_back(GcnLayerVars{tape.leaf(l.w), tape.leaf(l.b), p.gcn.dim});
  b.dim = p.dim;
  b.vocab_size = p.vocab_size;
  return b;
}

struct ObjectFeature {
  int object_id;
  Var feature;
};

/// Embeds category/relation ids and applies the full GCN stack; returns one
/// feature per user object (the anchor stays internal).
inline std::vector<ObjectFeature> encode_graph(Tape& tape, const BoundEncoder& enc,
                                               const SceneGraph& graph) {
  GraphFeatures f;
  for (const auto& o : graph.objects) {
    if (o.category < 0 || o.category >= enc.vocab_size)
      throw ValidationError("category id " + std::to_string(o.category) + " outside vocabulary");
    f.object_feats.push_back(tape.slice(enc.obj_table, o.category * enc.dim, enc.dim));
  }
  for (const auto& e : graph.edges) {
    if (e.relation < 0 || e.relation >= enc.vocab_size)
      throw ValidationError("relation id " + std::to_string(e.relation) + " outside vocabulary");
    f.edge_feats.push_back(tape.slice(enc.rel_table, e.relation * enc.dim, enc.dim));
  }
  for (const auto& layer : enc.layers) f = gcn_layer(tape, layer, graph, f);

  std::vector<ObjectFeature> out;
  for (int i = 0; i < graph.user_object_count; ++i)
    out.push_back(ObjectFeature{graph.objects[i].id, f.object_feats[i]});
  return out;
}

// ----- bounding boxes -----

/// Normalized corner box; invariants 0 <= x0 < x1 <= 1 (same for y) hold by
/// construction of the decode below.
struct BBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool valid() const { return 0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0; }
};

inline constexpr double kMinBoxSide = 1e-3;

struct BboxHeadParams {
  AffineParams fc1;  // dim -> hidden
  AffineParams fc2;  // hidden -> 4
};

struct BoundBboxHead {
  Var w1, b1, w2, b2;
  const BboxHeadParams* shape;
};

inline BoundBboxHead bind_bbox_head(Tape& tape, const BboxHeadParams& p) {
  return BoundBboxHead{tape.leaf(p.fc1.w), tape.leaf(p.fc1.b), tape.leaf(p.fc2.w), tape.leaf(p.fc2.b), &p};
}

/// Head output (cx, cy, w, h) goes through a sigmoid, sides get a floor, and
/// the box decodes as x0 = cx*(1-w), x1 = x0 + w. Valid for any head output.
inline Var predict_bbox(Tape& tape, const BoundBboxHead& head, Var feature) {
  Var h = tape.affine(head.w1, head.b1, feature, head.shape->fc1);
  Var raw = tape.affine(head.w2, head.b2, h, head.shape->fc2);
  Var s = tape.sigmoid(raw);
  Var cx = tape.slice(s, 0, 1);
  Var cy = tape.slice(s, 1, 1);
  Var w = tape.clamp_min(tape.slice(s, 2, 1), kMinBoxSide);
  Var hh = tape.clamp_min(tape.slice(s, 3, 1), kMinBoxSide);
  Var x0 = tape.mul(cx, tape.add_const(tape.neg(w), 1.0));
  Var y0 = tape.mul(cy, tape.add_const(tape.neg(hh), 1.0));
  Var x1 = tape.add(x0, w);
  Var y1 = tape.add(y0, hh);
  return tape.concat({x0, y0, x1, y1});
}

inline BBox decode_bbox(const Vec& v) {
  if (v.size() != 4) throw std::invalid_argument("decode_bbox: expected 4 coordinates");
  return BBox{v[0], v[1], v[2], v[3]};
}

}  // namespace dpr::sg
