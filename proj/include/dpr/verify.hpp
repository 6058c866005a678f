#pragma once

// Verification suites behind `dpr verify`: distribution checks for the
// relaxed sampling, brute-force oracle comparisons, gradient checks, and
// structural property sweeps. Every expected value is produced by an
// independent oracle inside this module, never by the code under test.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dpr/bank.hpp"
#include "dpr/gradcheck.hpp"
#include "dpr/losses.hpp"
#include "dpr/retrieval.hpp"
#include "dpr/rng.hpp"

namespace dpr::verify {

using ad::Tape;
using ad::Var;

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline Vec random_vec(Rng& rng, std::size_t n, double lo, double hi) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline std::vector<int> top_n_indices(const Vec& values, int n) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&values](int a, int b) { return values[a] > values[b]; });
  idx.resize(n);
  return idx;
}

/// Hard greedy nearest-neighbor selection with midpoint query update.
inline std::vector<int> greedy_nn_oracle(const std::vector<Vec>& feats,
                                         const std::vector<int>& group_of, int n_groups,
                                         Vec query) {
  std::vector<bool> taken(n_groups, false);
  std::vector<int> picks;
  for (int t = 0; t < n_groups; ++t) {
    int best = -1;
    double best_v = 0.0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      if (taken[group_of[i]]) continue;
      double v = -l2_dist(query, feats[i]);
      if (best < 0 || v > best_v) {
        best = static_cast<int>(i);
        best_v = v;
      }
    }
    picks.push_back(best);
    taken[group_of[best]] = true;
    for (std::size_t j = 0; j < query.size(); ++j) query[j] = 0.5 * (query[j] + feats[best][j]);
  }
  return picks;
}

inline bank::CandidateSet grid_candidates(int n, int k) {
  bank::CandidateSet cs;
  for (int g = 0; g < n; ++g) {
    std::vector<int> grp;
    for (int j = 0; j < k; ++j) {
      cs.flat.push_back(g * k + j);
      cs.group_of.push_back(g);
      grp.push_back(g * k + j);
    }
    cs.groups.push_back(grp);
  }
  return cs;
}

inline CheckResult make_result(const std::string& name, bool pass, const std::string& detail) {
  return CheckResult{name, pass, detail};
}

}  // namespace detail

// ----- gradcheck suite -----

inline std::vector<CheckResult> gradcheck_suite(std::uint64_t seed, int points = 50) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(seed, 0x6C));

  // Core kernels at random double-precision points.
  {
    double worst = 0.0;
    int n = std::max(points, 20);
    for (int i = 0; i < n; ++i) {
      Vec c4 = detail::random_vec(rng, 4, -1, 1);
      Vec head = detail::random_vec(rng, 4, -1, 1);
      Vec b2 = detail::random_vec(rng, 2, -1, 1);
      std::vector<ad::ScalarMap> fns{
          [&](Tape& t, Var x) { return t.l2_dist(x, t.leaf(c4)); },
          [&](Tape& t, Var x) { return t.l1_dist(x, t.leaf(c4)); },
          [&](Tape& t, Var x) { return t.dot(t.leaf(head), t.softmax_tau(x, 0.7)); },
          [&](Tape& t, Var x) { return t.sum(t.affine(x, t.leaf(b2), t.leaf(c4), 2, 4)); },
          [&](Tape& t, Var x) { return t.sum(t.vlog(t.add_const(t.vexp(x), 1.0))); },
          [&](Tape& t, Var x) { return t.dot(t.leaf(head), t.sigmoid(x)); },
          [&](Tape& t, Var x) {
            Var s = t.softmax_tau(x, 0.7);
            return t.log1m_clamped(t.max_subset(s, std::vector<int>{0, 2}), 1e-12);
          },
      };
      std::size_t dims[]{4, 4, 4, 8, 4, 4, 4};
      for (std::size_t f = 0; f < fns.size(); ++f) {
        Vec p = detail::random_vec(rng, dims[f], 0.1, 1.1);
        worst = std::max(worst, ad::grad_check(fns[f], p, 1e-6));
      }
    }
    out.push_back(detail::make_result("kernel-gradients", worst < 1e-5,
                                      "max rel err " + std::to_string(worst)));
  }

  // Relaxed single selection through the similarity weights.
  {
    double worst = 0.0;
    for (int i = 0; i < points; ++i) {
      int k = 2 + rng.uniform_int(5);
      int dim = 3;
      Vec head = detail::random_vec(rng, k, -1, 1);
      Vec noise = gumbel_noise(rng, k);
      auto fn = [&](Tape& t, Var x) {
        Var query = t.slice(x, 0, dim);
        std::vector<Var> feats;
        for (int j = 0; j < k; ++j) feats.push_back(t.slice(x, dim * (j + 1), dim));
        Var pi = ret::similarity_weights(t, query, feats);
        Var logits = t.add_vec(t.vlog(pi), noise);
        return t.dot(t.leaf(head), t.softmax_tau(logits, 0.5));
      };
      Vec p = detail::random_vec(rng, dim * (k + 1), 0.0, 1.0);
      worst = std::max(worst, ad::grad_check(fn, p, 1e-6));
    }
    out.push_back(detail::make_result("single-selection-gradient", worst < 1e-4,
                                      "max rel err " + std::to_string(worst)));
  }

  // Full iterative retrieval (n=3, k=4) feeding the selection and
  // co-occurrence objectives, gradient w.r.t. every candidate feature.
  {
    const int n = 3, k = 4, dim = 3;
    auto cs = detail::grid_candidates(n, k);
    Rng net_rng(derive_seed(seed, 0xF0));
    losses::Mlp2 cooc_net;
    cooc_net.fc1.out = 4;
    cooc_net.fc1.in = dim;
    cooc_net.fc1.w = detail::random_vec(net_rng, 12, -0.5, 0.5);
    cooc_net.fc1.b = detail::random_vec(net_rng, 4, -0.2, 0.2);
    cooc_net.fc2.out = 3;
    cooc_net.fc2.in = 4;
    cooc_net.fc2.w = detail::random_vec(net_rng, 12, -0.5, 0.5);
    cooc_net.fc2.b = detail::random_vec(net_rng, 3, -0.2, 0.2);
    std::vector<int> gt{0, k + 1, 2 * k + 2};

    double worst = 0.0;
    for (int i = 0; i < points; ++i) {
      Vec q0 = detail::random_vec(rng, dim, 0.0, 1.0);
      std::uint64_t noise_seed = rng.next_u64();
      auto fn = [&](Tape& t, Var x) {
        std::vector<Var> feats;
        for (int j = 0; j < n * k; ++j) feats.push_back(t.slice(x, j * dim, dim));
        ret::RetrievalConfig cfg;
        cfg.tau = 0.5;
        cfg.noise = ret::NoiseMode::gumbel;
        cfg.query_init = ret::QueryInit::given_feature;
        Rng run(noise_seed);
        auto sel = ret::iterative_retrieve(t, cs, feats, cfg, run, t.leaf(q0));
        Var loss = losses::selection_gt_loss(t, sel.scores_var, gt);
        auto soft = ret::soft_group_features(t, cs, feats, sel.scores_var);
        auto F = losses::bind_mlp2(t, cooc_net);
        return t.add(loss, losses::cooccurrence_loss(t, F, soft));
      };
      Vec p = detail::random_vec(rng, n * k * dim, 0.0, 1.0);
      worst = std::max(worst, ad::grad_check(fn, p, 1e-6));
    }
    out.push_back(detail::make_result("full-retrieval-gradient", worst < 1e-4,
                                      "max rel err " + std::to_string(worst)));
  }

  // Negative control: a doubled gradient must be flagged.
  {
    Vec point{1.0, 2.0};
    Tape t;
    Var x = t.leaf(point);
    t.backward(t.sum(t.mul(x, x)));
    Vec wrong = t.grad(x);
    for (double& g : wrong) g *= 2.0;
    double err = ad::max_rel_error(
        wrong,
        [](const Vec& p) {
          double s = 0;
          for (double v : p) s += v * v;
          return s;
        },
        point, 1e-5);
    out.push_back(detail::make_result("negative-control", err > 0.4,
                                      "doubled gradient error " + std::to_string(err)));
  }
  return out;
}

// ----- sampling suite -----

inline std::vector<CheckResult> sampling_suite(std::uint64_t seed, int trials = 100000) {
  std::vector<CheckResult> out;

  // Empirical Gumbel mean against the Euler-Mascheroni constant.
  {
    Rng rng(derive_seed(seed, 0x91));
    Vec g = gumbel_noise(rng, trials);
    double mean = sum(g) / g.size();
    out.push_back(detail::make_result("gumbel-mean", std::abs(mean - 0.5772156649) < 0.02,
                                      "mean " + std::to_string(mean)));
  }

  // Hard argmax of (g + log pi) samples the categorical exactly: fixed grid
  // of weight vectors over k <= 8.
  {
    std::vector<Vec> grid{{1, 1},
                          {0.7, 0.3},
                          {0.9, 0.1},
                          {0.5, 0.3, 0.2},
                          {0.4, 0.3, 0.2, 0.1},
                          {0.25, 0.25, 0.25, 0.25},
                          {1, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125},
                          {0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125},
                          {0.3, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}};
    Rng rng(derive_seed(seed, 0x92));
    double worst = 0.0;
    for (const Vec& pi : grid) {
      double total = sum(pi);
      Vec freq(pi.size(), 0.0);
      for (int t = 0; t < trials; ++t) {
        int best = 0;
        double best_v = -1e300;
        for (std::size_t i = 0; i < pi.size(); ++i) {
          double v = rng.gumbel() + std::log(pi[i]);
          if (v > best_v) {
            best_v = v;
            best = static_cast<int>(i);
          }
        }
        freq[best] += 1.0 / trials;
      }
      for (std::size_t i = 0; i < pi.size(); ++i)
        worst = std::max(worst, std::abs(freq[i] - pi[i] / total));
    }
    out.push_back(detail::make_result("gumbel-max-exactness", worst < 0.01,
                                      "max frequency deviation " + std::to_string(worst)));
  }

  // Relaxation limit: at tau = 0.01 the soft selection concentrates on the
  // perturbed argmax. Instances are resampled until the top-2 perturbed gap
  // clears 0.1, the separation under which 0.999 mass is guaranteed.
  {
    Rng rng(derive_seed(seed, 0x93));
    int agree = 0, massed = 0, n = 1000;
    for (int t = 0; t < n; ++t) {
      int k = 2 + rng.uniform_int(7);
      Vec pi, noise, perturbed;
      double gap = 0.0;
      do {
        pi = detail::random_vec(rng, k, 0.05, 2.0);
        noise = gumbel_noise(rng, k);
        perturbed.assign(k, 0.0);
        for (int i = 0; i < k; ++i) perturbed[i] = noise[i] + std::log(pi[i]);
        Vec sorted = perturbed;
        std::sort(sorted.rbegin(), sorted.rend());
        gap = sorted[0] - sorted[1];
      } while (gap < 0.1);
      Vec s = ret::select_one(pi, 0.01, &noise);
      int am = argmax(s);
      if (am == argmax(perturbed)) ++agree;
      if (s[am] >= 0.999) ++massed;
    }
    out.push_back(detail::make_result(
        "relaxation-limit", agree == n && massed == n,
        "argmax agreement " + std::to_string(agree) + "/" + std::to_string(n) + ", mass>=0.999 " +
            std::to_string(massed) + "/" + std::to_string(n)));
  }

  // Frequency of the first category under repeated relaxed draws.
  {
    Rng rng(derive_seed(seed, 0x94));
    Vec pi{0.7, 0.3};
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
      Vec noise = gumbel_noise(rng, 2);
      if (argmax(ret::select_one(pi, 0.1, &noise)) == 0) ++hits;
    }
    double freq = static_cast<double>(hits) / trials;
    out.push_back(detail::make_result("categorical-frequency", std::abs(freq - 0.7) < 0.01,
                                      "frequency " + std::to_string(freq)));
  }
  return out;
}

// ----- oracle suite -----

inline std::vector<CheckResult> oracle_suite(std::uint64_t seed, int instances = 1000) {
  std::vector<CheckResult> out;

  // Reservoir subset hard reading vs exhaustive sort of the perturbed logits.
  {
    Rng rng(derive_seed(seed, 0xA1));
    int agree = 0;
    for (int t = 0; t < instances; ++t) {
      int m = 2 + rng.uniform_int(31);
      int n = 1 + rng.uniform_int(std::min(m, 8));
      Vec pi = detail::random_vec(rng, m, 0.05, 2.0);
      std::uint64_t run_seed = rng.next_u64();

      Tape tape;
      Rng run(run_seed);
      auto sel = ret::wrs_subset(tape, tape.leaf(pi), n, 0.01, ret::NoiseMode::gumbel, run);

      Rng oracle(run_seed);
      Vec noise = gumbel_noise(oracle, m);
      Vec perturbed(m);
      for (int i = 0; i < m; ++i) perturbed[i] = std::log(pi[i]) + noise[i];
      if (sel.selected_hard == detail::top_n_indices(perturbed, n)) ++agree;
    }
    out.push_back(detail::make_result("wrs-top-n", agree == instances,
                                      std::to_string(agree) + "/" + std::to_string(instances) +
                                          " instances agree"));
  }

  // Noise-free iterative retrieval vs the greedy nearest-neighbor oracle on
  // margin-separated instances.
  {
    Rng rng(derive_seed(seed, 0xA2));
    int target = std::max(instances / 2, 100);
    int agree = 0, accepted = 0, attempts = 0;
    while (accepted < target && attempts < target * 100) {
      ++attempts;
      int n = 1 + rng.uniform_int(3);
      int k = 1 + rng.uniform_int(3);
      auto cs = detail::grid_candidates(n, k);
      std::vector<Vec> feats;
      for (int i = 0; i < n * k; ++i) feats.push_back(detail::random_vec(rng, 4, 0.0, 1.0));
      Vec q0 = detail::random_vec(rng, 4, 0.0, 1.0);

      Tape tape;
      std::vector<Var> leaves;
      for (const Vec& f : feats) leaves.push_back(tape.leaf(f));
      ret::RetrievalConfig cfg;
      cfg.tau = 0.01;
      cfg.noise = ret::NoiseMode::disabled;
      cfg.query_init = ret::QueryInit::given_feature;
      Rng run(1);
      auto sel = ret::iterative_retrieve(tape, cs, leaves, cfg, run, tape.leaf(q0));

      // Margin filter on the raw per-round logits.
      bool separated = true;
      std::vector<bool> taken(n, false);
      for (std::size_t it = 0; it < sel.per_iteration_logits.size() && separated; ++it) {
        const Vec& raw = sel.per_iteration_logits[it];
        double top = -1e18, second = -1e18;
        for (std::size_t i = 0; i < raw.size(); ++i) {
          if (taken[cs.group_of[i]]) continue;
          if (raw[i] > top) {
            second = top;
            top = raw[i];
          } else if (raw[i] > second) {
            second = raw[i];
          }
        }
        if (second > -1e17 && top - second < 0.15) separated = false;
        taken[cs.group_of[sel.selected_hard[it]]] = true;
      }
      if (!separated) continue;
      ++accepted;
      if (sel.selected_hard == detail::greedy_nn_oracle(feats, cs.group_of, n, q0)) ++agree;
    }
    out.push_back(detail::make_result("greedy-equivalence", accepted == target && agree == accepted,
                                      std::to_string(agree) + "/" + std::to_string(accepted) +
                                          " separated instances agree"));
  }

  // Exact k-NN prefilter vs an exhaustive scan.
  {
    Rng rng(derive_seed(seed, 0xA3));
    bool ok = true;
    for (int t = 0; t < 20 && ok; ++t) {
      bank::SynthBankConfig cfg;
      cfg.num_images = 50;
      cfg.patches_per_image = 5;
      cfg.clusters = 5;
      cfg.d_feat = 4;
      cfg.num_categories = 3;
      auto pb = bank::synth_bank(rng, cfg);
      Vec q = detail::random_vec(rng, 4, -2, 2);
      int cat = bank::kReservedTokens + rng.uniform_int(3);
      int k = 1 + rng.uniform_int(10);
      auto got = bank::prefilter(pb, q, cat, k);
      std::vector<std::pair<std::pair<double, int>, int>> order;
      for (std::size_t i = 0; i < pb.records.size(); ++i)
        if (pb.records[i].category == cat)
          order.push_back({{l2_dist(q, pb.records[i].feature), pb.records[i].id},
                           static_cast<int>(i)});
      std::sort(order.begin(), order.end());
      for (std::size_t i = 0; i < got.record_indices.size(); ++i)
        if (got.record_indices[i] != order[i].second) ok = false;
    }
    out.push_back(detail::make_result("knn-prefilter", ok, "20 random banks vs exhaustive scan"));
  }

  // Inclusion frequencies of the reservoir subset vs an independent
  // Gumbel-top-n simulation.
  {
    int trials = 100000;
    Vec pi{0.1, 0.2, 0.3, 0.4};
    Vec freq_impl(4, 0.0), freq_sim(4, 0.0);
    Rng impl(derive_seed(seed, 0xA4));
    for (int t = 0; t < trials; ++t) {
      Tape tape;
      auto sel = ret::wrs_subset(tape, tape.leaf(pi), 2, 0.05, ret::NoiseMode::gumbel, impl);
      for (int i : sel.selected_hard) freq_impl[i] += 1.0 / trials;
    }
    Rng sim(derive_seed(seed, 0xA5));
    for (int t = 0; t < trials; ++t) {
      Vec noise = gumbel_noise(sim, 4);
      Vec perturbed(4);
      for (int i = 0; i < 4; ++i) perturbed[i] = std::log(pi[i]) + noise[i];
      for (int i : detail::top_n_indices(perturbed, 2)) freq_sim[i] += 1.0 / trials;
    }
    double worst = 0.0;
    for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(freq_impl[i] - freq_sim[i]));
    out.push_back(detail::make_result("wrs-inclusion", worst < 0.01,
                                      "max inclusion deviation " + std::to_string(worst)));
  }
  return out;
}

// ----- properties suite -----

inline std::vector<CheckResult> properties_suite(std::uint64_t seed, int runs = 10000) {
  std::vector<CheckResult> out;

  // Group exclusivity and total score mass across temperatures.
  {
    Rng rng(derive_seed(seed, 0xB1));
    bool ok = true;
    double taus[]{0.01, 0.1, 1.0};
    for (int t = 0; t < runs && ok; ++t) {
      int n = 1 + rng.uniform_int(6);
      int k = 1 + rng.uniform_int(8);
      auto cs = detail::grid_candidates(n, k);
      Tape tape;
      std::vector<Var> feats;
      for (int i = 0; i < n * k; ++i) feats.push_back(tape.leaf(detail::random_vec(rng, 4, -1, 1)));
      ret::RetrievalConfig cfg;
      cfg.tau = taus[t % 3];
      cfg.noise = ret::NoiseMode::gumbel;
      cfg.query_init = ret::QueryInit::random_candidate;
      Rng run(rng.next_u64());
      auto sel = ret::iterative_retrieve(tape, cs, feats, cfg, run);
      std::set<int> groups;
      for (int fi : sel.selected_hard) groups.insert(cs.group_of[fi]);
      if (groups.size() != static_cast<std::size_t>(n)) ok = false;
      if (std::abs(sum(sel.scores) - n) > 1e-6) ok = false;
    }
    out.push_back(detail::make_result("group-exclusivity", ok,
                                      std::to_string(runs) + " randomized retrievals"));
  }

  // Softmax family: normalization, permutation equivariance, exact tau
  // scaling, sharpening, sentinel handling.
  {
    Rng rng(derive_seed(seed, 0xB2));
    bool ok = true;
    for (int t = 0; t < 500 && ok; ++t) {
      int n = 2 + rng.uniform_int(7);
      Vec l = detail::random_vec(rng, n, -3, 3);
      double tau = std::exp(rng.uniform(std::log(0.02), std::log(2.0)));
      Vec s = softmax_tau(l, tau);
      if (std::abs(sum(s) - 1.0) > 1e-9) ok = false;
      Vec rotated(l.begin() + 1, l.end());
      rotated.push_back(l[0]);
      Vec sr = softmax_tau(rotated, tau);
      for (int i = 0; i + 1 < n; ++i)
        if (std::abs(sr[i] - s[i + 1]) > 1e-12) ok = false;
      Vec scaled = l;
      for (double& x : scaled) x /= tau;
      if (softmax_tau(scaled, 1.0) != s) ok = false;
      l[0] = kNegInf;
      if (softmax_tau(l, tau)[0] != 0.0) ok = false;
    }
    out.push_back(detail::make_result("softmax-family", ok, "500 random logit vectors"));
  }

  // Bank persistence round-trip, bitwise.
  {
    Rng rng(derive_seed(seed, 0xB3));
    bank::SynthBankConfig cfg;
    cfg.num_images = 100;
    cfg.patches_per_image = 5;
    cfg.clusters = 8;
    cfg.d_feat = 6;
    auto pb = bank::synth_bank(rng, cfg);
    pb.records[1].cooc = Vec{1.0 / 3.0, -0.125, 5e-17};
    std::stringstream ss;
    bank::save_bank(pb, ss);
    bool ok = bank::load_bank(ss) == pb;
    out.push_back(detail::make_result("bank-round-trip", ok, "500 records, bitwise"));
  }

  // Candidate set structural consistency, with and without gt injection.
  {
    Rng rng(derive_seed(seed, 0xB4));
    bool ok = true;
    bank::SynthBankConfig cfg;
    cfg.num_images = 12;
    cfg.patches_per_image = 4;
    cfg.clusters = 3;
    cfg.d_feat = 3;
    cfg.num_categories = 4;
    auto pb = bank::synth_bank(rng, cfg);
    for (int t = 0; t < 100 && ok; ++t) {
      std::vector<std::pair<Vec, int>> objects;
      std::vector<int> gt;
      int n = 1 + rng.uniform_int(4);
      for (int i = 0; i < n; ++i) {
        int cat = bank::kReservedTokens + rng.uniform_int(4);
        objects.push_back({detail::random_vec(rng, 3, -2, 2), cat});
        const auto& recs = pb.category_records(cat);
        gt.push_back(pb.records[recs[rng.uniform_int(static_cast<int>(recs.size()))]].id);
      }
      auto cs = bank::build_candidates(pb, objects, 1 + rng.uniform_int(6),
                                       t % 2 ? &gt : nullptr);
      if (!cs.consistent()) ok = false;
      for (const auto& grp : cs.groups) {
        std::set<int> ids;
        for (int fi : grp)
          if (!ids.insert(pb.records[cs.flat[fi]].id).second) ok = false;
      }
    }
    out.push_back(detail::make_result("candidate-consistency", ok, "100 random candidate sets"));
  }

  // Box decode invariants for arbitrary head outputs.
  {
    Rng rng(derive_seed(seed, 0xB5));
    bool ok = true;
    for (int t = 0; t < 1000 && ok; ++t) {
      sg::BboxHeadParams head;
      head.fc1.out = 5;
      head.fc1.in = 4;
      head.fc1.w = detail::random_vec(rng, 20, -4, 4);
      head.fc1.b = detail::random_vec(rng, 5, -4, 4);
      head.fc2.out = 4;
      head.fc2.in = 5;
      head.fc2.w = detail::random_vec(rng, 20, -4, 4);
      head.fc2.b = detail::random_vec(rng, 4, -4, 4);
      Tape tape;
      auto bound = sg::bind_bbox_head(tape, head);
      Var box = sg::predict_bbox(tape, bound, tape.leaf(detail::random_vec(rng, 4, -3, 3)));
      if (!sg::decode_bbox(tape.val(box)).valid()) ok = false;
    }
    out.push_back(detail::make_result("bbox-invariants", ok, "1000 random heads"));
  }
  return out;
}

inline std::vector<CheckResult> run_suite(const std::string& name, std::uint64_t seed,
                                          int trials) {
  if (name == "gradcheck") return gradcheck_suite(seed);
  if (name == "sampling") return sampling_suite(seed, trials);
  if (name == "oracle") return oracle_suite(seed);
  if (name == "properties") return properties_suite(seed);
  if (name == "all") {
    std::vector<CheckResult> all;
    for (const char* s : {"gradcheck", "sampling", "oracle", "properties"}) {
      auto part = run_suite(s, seed, trials);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  throw ConfigError("unknown verify suite '" + name + "'");
}

}  // namespace dpr::verify
