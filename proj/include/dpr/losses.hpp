#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dpr/encoder.hpp"
#include "dpr/errors.hpp"
#include "dpr/tape.hpp"

namespace dpr::losses {

using ad::AffineParams;
using ad::Tape;
using ad::Var;

inline constexpr double kScoreEps = 1e-12;

/// Weights of the in-scope training objectives. The generator-side terms are
/// not representable here; configs carrying them nonzero are rejected before
/// this struct is built.
struct LossWeights {
  double sel_gt = 0.1;
  double sel_occur = 0.001;
  double bbx = 10.0;
};

inline void validate(const LossWeights& w) {
  if (w.sel_gt < 0 || w.sel_occur < 0 || w.bbx < 0)
    throw std::invalid_argument("loss weights must be nonnegative");
}

/// Two dense layers, no activation in between; enough capacity for the
/// embedding heads used here while keeping every loss surface kink-free.
struct Mlp2 {
  AffineParams fc1;
  AffineParams fc2;
};

struct BoundMlp2 {
  Var w1, b1, w2, b2;
  const Mlp2* shape = nullptr;
};

inline BoundMlp2 bind_mlp2(Tape& tape, const Mlp2& m) {
  return BoundMlp2{tape.leaf(m.fc1.w), tape.leaf(m.fc1.b), tape.leaf(m.fc2.w), tape.leaf(m.fc2.b),
                   &m};
}

inline Var mlp2_forward(Tape& tape, const BoundMlp2& m, Var x) {
  Var h = tape.affine(m.w1, m.b1, x, m.shape->fc1);
  return tape.affine(m.w2, m.b2, h, m.shape->fc2);
}

inline Vec mlp2_apply(const Mlp2& m, const Vec& x) {
  return ad::affine_apply(m.fc2, ad::affine_apply(m.fc1, x));
}

/// Co-occurrence embedding head plus its triplet margin.
struct CoocParams {
  Mlp2 net;
  double margin = 0.2;
};

/// Mean negative log score of the ground-truth candidate per group.
inline Var selection_gt_loss(Tape& tape, Var scores, std::span<const int> gt_flat) {
  if (gt_flat.empty()) throw std::invalid_argument("selection_gt_loss: one gt index per group required");
  Var acc;
  for (int gt : gt_flat) {
    Var term = tape.vlog(tape.add_const(tape.pick(scores, gt), kScoreEps));
    acc = acc.valid() ? tape.add(acc, term) : term;
  }
  return tape.scale(acc, -1.0 / static_cast<double>(gt_flat.size()));
}

/// Hinge on embedded distances: max(0, d(F a, F p) - d(F a, F n) + margin).
inline Var triplet_loss(Tape& tape, const BoundMlp2& embed, Var anchor, Var positive, Var negative,
                        double margin) {
  if (!(margin > 0.0)) throw std::invalid_argument("triplet_loss: margin must be positive");
  Var fa = mlp2_forward(tape, embed, anchor);
  Var fp = mlp2_forward(tape, embed, positive);
  Var fn = mlp2_forward(tape, embed, negative);
  Var gap = tape.sub(tape.l2_dist(fa, fp), tape.l2_dist(fa, fn));
  return tape.relu(tape.add_const(gap, margin));
}

/// Sum of pairwise embedded distances over the selected patches; zero for a
/// single selection.
inline Var cooccurrence_loss(Tape& tape, const BoundMlp2& embed, std::span<const Var> selected) {
  if (selected.empty()) throw std::invalid_argument("cooccurrence_loss: empty selection");
  std::vector<Var> mapped;
  mapped.reserve(selected.size());
  for (Var s : selected) mapped.push_back(mlp2_forward(tape, embed, s));
  Var acc;
  for (std::size_t i = 0; i < mapped.size(); ++i)
    for (std::size_t j = i + 1; j < mapped.size(); ++j) {
      Var d = tape.l2_dist(mapped[i], mapped[j]);
      acc = acc.valid() ? tape.add(acc, d) : d;
    }
  return acc.valid() ? acc : tape.leaf(Vec{0.0});
}

/// Sum over objects of the four-coordinate absolute differences.
inline Var bbox_l1_loss(Tape& tape, std::span<const Var> predicted,
                        std::span<const sg::BBox> target) {
  if (predicted.size() != target.size())
    throw std::invalid_argument("bbox_l1_loss: prediction/target length mismatch");
  if (predicted.empty()) throw std::invalid_argument("bbox_l1_loss: empty batch");
  Var acc;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& b = target[i];
    Var t = tape.leaf(Vec{b.x0, b.y0, b.x1, b.y1});
    Var d = tape.l1_dist(predicted[i], t);
    acc = acc.valid() ? tape.add(acc, d) : d;
  }
  return acc;
}

/// Weighted sum of the three retrieval-path objectives.
inline Var total_retrieval_loss(Tape& tape, const LossWeights& w, Var sel_gt, Var sel_occur,
                                Var bbx) {
  validate(w);
  for (Var part : {sel_gt, sel_occur, bbx})
    if (!std::isfinite(tape.val(part)[0]))
      throw TrainingDivergedError(0, "non-finite loss part");
  Var total = tape.scale(sel_gt, w.sel_gt);
  total = tape.add(total, tape.scale(sel_occur, w.sel_occur));
  return tape.add(total, tape.scale(bbx, w.bbx));
}

}  // namespace dpr::losses
