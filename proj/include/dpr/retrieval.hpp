#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dpr/bank.hpp"
#include "dpr/rng.hpp"
#include "dpr/tape.hpp"
#include "dpr/vec.hpp"

namespace dpr::ret {

using ad::Tape;
using ad::Var;

enum class QueryInit { random_candidate, given_feature };
enum class NoiseMode { gumbel, disabled };

struct RetrievalConfig {
  double tau = 0.1;
  int k = 10;
  QueryInit query_init = QueryInit::random_candidate;
  NoiseMode noise = NoiseMode::gumbel;
};

/// Clamp floor for the exclusion penalty argument: log(max(1 - s, eps)).
inline constexpr double kExclusionEps = 1e-12;

/// Relaxed n-hot selection over flat candidates, plus the per-iteration
/// softmax vectors and the hard (sentinel-exclusion) reading.
struct SelectionResult {
  Vec scores;                        // accumulated over iterations, sums to n
  std::vector<Vec> per_iteration;    // one softmax vector per iteration
  std::vector<Vec> per_iteration_logits;  // raw perturbed logits driving each round
  std::vector<int> selected_hard;    // one flat index per iteration, groups distinct
  Var scores_var;                    // tape handles for the differentiable path
  std::vector<Var> per_iteration_vars;
  int init_candidate = -1;           // flat index used for a random query start
};

/// Similarity weights of candidates against a query: exp(-||q - f_i||_2),
/// in (0, 1], larger for closer candidates.
inline Var similarity_weights(Tape& tape, Var query, std::span<const Var> feats) {
  if (feats.empty()) throw std::invalid_argument("similarity_weights: no candidates");
  std::vector<Var> ws;
  ws.reserve(feats.size());
  for (Var f : feats) ws.push_back(tape.vexp(tape.neg(tape.l2_dist(query, f))));
  return tape.concat(ws);
}

/// Relaxed categorical draw: softmax((g + log pi) / tau) with standard Gumbel
/// noise g (or zeros when disabled). Differentiable in pi.
inline Var select_one(Tape& tape, Var pi, double tau, NoiseMode noise, Rng& rng) {
  if (!(tau > 0.0)) throw std::invalid_argument("select_one: tau must be positive");
  Var logits = tape.vlog(pi);
  if (noise == NoiseMode::gumbel)
    logits = tape.add_vec(logits, gumbel_noise(rng, tape.val(pi).size()));
  return tape.softmax_tau(logits, tau);
}

/// Plain (value-only) variant of select_one; `noise` may be null.
inline Vec select_one(const Vec& pi, double tau, const Vec* noise) {
  Vec logits(pi.size());
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (!(pi[i] > 0.0)) throw std::invalid_argument("select_one: pi entries must be positive");
    logits[i] = std::log(pi[i]) + (noise ? (*noise)[i] : 0.0);
  }
  return softmax_tau(logits, tau);
}

namespace detail {

/// Argmax of `raw` over candidates whose group is still unselected.
inline int masked_argmax(const Vec& raw, const std::vector<int>& group_of,
                         const std::vector<bool>& taken) {
  int best = -1;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (taken[group_of[i]]) continue;
    if (best < 0 || raw[i] > raw[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace detail

/// Iterative group-constrained retrieval. Each round recomputes similarity
/// weights from the current query, perturbs them with fresh Gumbel noise,
/// applies the accumulated group-exclusion penalty log(1 - max_group s), takes
/// the temperature softmax, and folds the score-weighted candidate average
/// back into the query: q <- avg(q, sum_i s_i f_i).
///
/// The hard reading per round is the argmax of the raw perturbed logits over
/// groups not yet selected (the sentinel-exclusion limit of the soft
/// penalty), so its picks cover n distinct groups for every tau.
inline SelectionResult iterative_retrieve(Tape& tape, const bank::CandidateSet& cs,
                                          std::span<const Var> feats, const RetrievalConfig& cfg,
                                          Rng& rng, std::optional<Var> init_query = std::nullopt) {
  const std::size_t n = cs.group_count();
  const std::size_t m = cs.flat.size();
  if (n == 0) throw std::invalid_argument("iterative_retrieve: no groups");
  for (const auto& g : cs.groups)
    if (g.empty()) throw std::invalid_argument("iterative_retrieve: empty group");
  if (feats.size() != m)
    throw std::invalid_argument("iterative_retrieve: features misaligned with candidates");
  if (!(cfg.tau > 0.0)) throw std::invalid_argument("iterative_retrieve: tau must be positive");

  SelectionResult out;
  Var query;
  if (cfg.query_init == QueryInit::given_feature) {
    if (!init_query) throw std::invalid_argument("iterative_retrieve: given_feature needs a query");
    query = *init_query;
  } else {
    out.init_candidate = rng.uniform_int(static_cast<int>(m));
    query = feats[out.init_candidate];
  }

  Var exclusion = tape.leaf(Vec(m, 0.0));  // accumulated penalties, zero at round one
  std::vector<bool> taken(n, false);
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<Var> neg_dists;
    neg_dists.reserve(m);
    for (Var f : feats) neg_dists.push_back(tape.neg(tape.l2_dist(query, f)));
    Var logits = tape.concat(neg_dists);  // log of exp(-d) without the round trip
    if (cfg.noise == NoiseMode::gumbel) logits = tape.add_vec(logits, gumbel_noise(rng, m));

    out.per_iteration_logits.push_back(tape.val(logits));
    int pick = detail::masked_argmax(tape.val(logits), cs.group_of, taken);
    out.selected_hard.push_back(pick);
    taken[cs.group_of[pick]] = true;

    Var s = tape.softmax_tau(tape.add(logits, exclusion), cfg.tau);
    out.per_iteration_vars.push_back(s);
    out.per_iteration.push_back(tape.val(s));
    out.scores_var = t == 0 ? s : tape.add(out.scores_var, s);

    if (t + 1 < n) {
      std::vector<Var> penalties;
      penalties.reserve(n);
      for (const auto& grp : cs.groups)
        penalties.push_back(tape.log1m_clamped(tape.max_subset(s, grp), kExclusionEps));
      exclusion = tape.add(exclusion, tape.scatter_groups(penalties, cs.groups, static_cast<int>(m)));
      query = tape.scale(tape.add(query, tape.weighted_sum(feats, s)), 0.5);
    }
  }
  out.scores = tape.val(out.scores_var);
  return out;
}

/// Subset selection by weighted reservoir sampling: perturb all logits once,
/// then run n rounds of softmax plus the elementwise exclusion penalty
/// (iterative softmax) with no groups and no query update.
inline SelectionResult wrs_subset(Tape& tape, Var pi, int n, double tau, NoiseMode noise,
                                  Rng& rng) {
  const std::size_t m = tape.val(pi).size();
  if (n <= 0 || static_cast<std::size_t>(n) > m)
    throw std::invalid_argument("wrs_subset: need 0 < n <= |pi|");
  if (!(tau > 0.0)) throw std::invalid_argument("wrs_subset: tau must be positive");

  Var perturbed = tape.vlog(pi);
  if (noise == NoiseMode::gumbel) perturbed = tape.add_vec(perturbed, gumbel_noise(rng, m));
  const Vec raw = tape.val(perturbed);

  SelectionResult out;
  std::vector<bool> taken_idx(m, false);
  std::vector<int> identity(m);
  for (std::size_t i = 0; i < m; ++i) identity[i] = static_cast<int>(i);

  Var logits = perturbed;
  for (int t = 0; t < n; ++t) {
    int best = -1;
    for (std::size_t i = 0; i < m; ++i)
      if (!taken_idx[i] && (best < 0 || raw[i] > raw[best])) best = static_cast<int>(i);
    out.per_iteration_logits.push_back(raw);
    out.selected_hard.push_back(best);
    taken_idx[best] = true;

    Var s = tape.softmax_tau(logits, tau);
    out.per_iteration_vars.push_back(s);
    out.per_iteration.push_back(tape.val(s));
    out.scores_var = t == 0 ? s : tape.add(out.scores_var, s);
    if (t + 1 < n) logits = tape.add(logits, tape.log1m_clamped(s, kExclusionEps));
  }
  out.scores = tape.val(out.scores_var);
  return out;
}

/// Score-weighted soft feature per group: sum over the group's candidates of
/// scores[i] * f_i. Keeps downstream losses differentiable in the scores.
inline std::vector<Var> soft_group_features(Tape& tape, const bank::CandidateSet& cs,
                                            std::span<const Var> feats, Var scores) {
  std::vector<Var> out;
  out.reserve(cs.group_count());
  for (const auto& grp : cs.groups) {
    std::vector<Var> members;
    members.reserve(grp.size());
    for (int fi : grp) members.push_back(feats[fi]);
    out.push_back(tape.weighted_sum_subset(members, scores, grp));
  }
  return out;
}

/// Inference reading of the iterative retrieval: one patch record per
/// iteration, in selection order. Deterministic once noise is disabled.
inline std::vector<const bank::PatchRecord*> hard_retrieve(
    Tape& tape, const bank::PatchBank& bank, const bank::CandidateSet& cs,
    std::span<const Var> feats, const RetrievalConfig& cfg, Rng& rng,
    std::optional<Var> init_query = std::nullopt) {
  auto sel = iterative_retrieve(tape, cs, feats, cfg, rng, init_query);
  std::vector<const bank::PatchRecord*> records;
  records.reserve(sel.selected_hard.size());
  for (int fi : sel.selected_hard) records.push_back(&bank.records[cs.flat[fi]]);
  return records;
}

}  // namespace dpr::ret
