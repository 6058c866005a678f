#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <sstream>

#include "dpr/bank.hpp"
#include "dpr/rng.hpp"

using namespace dpr;
using namespace dpr::bank;

namespace {

PatchBank tiny_bank(int d = 2) {
  PatchBank b;
  b.header.d_feat = d;
  b.header.vocabulary = synth_vocabulary(4);
  return b;
}

PatchRecord rec(int id, int category, int image, Vec f) {
  PatchRecord r;
  r.id = id;
  r.category = category;
  r.image = image;
  r.feature = std::move(f);
  return r;
}

}  // namespace

TEST_CASE("bank round-trip: empty") {
  PatchBank b = tiny_bank();
  std::stringstream ss;
  save_bank(b, ss);
  PatchBank loaded = load_bank(ss);
  CHECK(loaded == b);
}

TEST_CASE("bank round-trip: 1000 synthetic records, bit exact") {
  Rng rng(5);
  SynthBankConfig cfg;
  cfg.num_images = 200;
  cfg.patches_per_image = 5;
  cfg.clusters = 8;
  cfg.d_feat = 7;
  PatchBank b = synth_bank(rng, cfg);
  REQUIRE(b.records.size() == 1000);
  b.records[3].cooc = Vec{0.25, -1.0 / 3.0, 1e-17};
  std::stringstream ss;
  save_bank(b, ss);
  PatchBank loaded = load_bank(ss);
  CHECK(loaded == b);  // floats compare bitwise through ==
}

TEST_CASE("bank load errors") {
  // Duplicate patch id names the offender.
  std::string text =
      R"({"version":1,"d_feat":1,"vocabulary":{"__image__":0,"in_image":1,"a":2}})"
      "\n"
      R"({"id":7,"category":2,"image":0,"feature":[0.0],"cooc":null})"
      "\n"
      R"({"id":7,"category":2,"image":1,"feature":[1.0],"cooc":null})"
      "\n";
  std::stringstream ss(text);
  CHECK_THROWS_WITH_AS(load_bank(ss), doctest::Contains("7"), BankLoadError);

  std::stringstream bad_version(R"({"version":9,"d_feat":1,"vocabulary":{}})" "\n");
  CHECK_THROWS_AS(load_bank(bad_version), BankLoadError);

  std::stringstream truncated(
      R"({"version":1,"d_feat":1,"vocabulary":{"a":0}})" "\n" R"({"id":1,"categ)");
  CHECK_THROWS_AS(load_bank(truncated), BankLoadError);

  std::stringstream wrong_dim(
      R"({"version":1,"d_feat":3,"vocabulary":{"a":0}})" "\n"
      R"({"id":1,"category":0,"image":0,"feature":[1.0],"cooc":null})" "\n");
  CHECK_THROWS_AS(load_bank(wrong_dim), BankLoadError);

  std::stringstream empty("");
  CHECK_THROWS_AS(load_bank(empty), BankLoadError);
}

TEST_CASE("prefilter: exact match ranks first") {
  PatchBank b = tiny_bank();
  b.records = {rec(0, 3, 0, {0.0, 0.0}), rec(1, 3, 0, {1.0, 0.0}), rec(2, 3, 1, {0.0, 2.0})};
  b.rebuild_index();
  auto r = prefilter(b, {1.0, 0.0}, 3, 2);
  CHECK(b.records[r.record_indices[0]].id == 1);
  CHECK_FALSE(r.shortfall);
}

TEST_CASE("prefilter: matches exhaustive sort oracle") {
  PatchBank b = tiny_bank();
  b.records = {rec(0, 3, 0, {0.0, 0.0}), rec(1, 3, 0, {3.0, 0.0}), rec(2, 3, 1, {1.0, 0.0}),
               rec(3, 3, 1, {0.5, 0.5}), rec(4, 3, 2, {-2.0, 0.0})};
  b.rebuild_index();
  Vec q{0.6, 0.1};
  auto r = prefilter(b, q, 3, 3);
  // Oracle: order every candidate by distance.
  std::vector<std::pair<double, int>> order;
  for (int i = 0; i < 5; ++i) order.push_back({l2_dist(q, b.records[i].feature), i});
  std::sort(order.begin(), order.end());
  for (int i = 0; i < 3; ++i) CHECK(r.record_indices[i] == order[i].second);
}

TEST_CASE("prefilter: random banks equal the exhaustive oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    SynthBankConfig cfg;
    cfg.num_images = 40;
    cfg.patches_per_image = 5;
    cfg.clusters = 4;
    cfg.d_feat = 4;
    cfg.num_categories = 3;
    PatchBank b = synth_bank(rng, cfg);
    Vec q(4);
    for (double& x : q) x = rng.uniform(-2, 2);
    int cat = kReservedTokens + rng.uniform_int(3);
    int k = 1 + rng.uniform_int(8);
    auto got = prefilter(b, q, cat, k);

    std::vector<std::pair<std::pair<double, int>, int>> order;  // ((dist, id), idx)
    for (std::size_t i = 0; i < b.records.size(); ++i)
      if (b.records[i].category == cat)
        order.push_back({{l2_dist(q, b.records[i].feature), b.records[i].id}, static_cast<int>(i)});
    std::sort(order.begin(), order.end());
    REQUIRE(got.record_indices.size() == std::min<std::size_t>(k, order.size()));
    for (std::size_t i = 0; i < got.record_indices.size(); ++i)
      CHECK(got.record_indices[i] == order[i].second);
    // Nondecreasing distances.
    for (std::size_t i = 1; i < got.record_indices.size(); ++i)
      CHECK(l2_dist(q, b.records[got.record_indices[i]].feature) >=
            l2_dist(q, b.records[got.record_indices[i - 1]].feature));
  }
}

TEST_CASE("prefilter: equals the exhaustive oracle on a 1e4-record bank") {
  Rng rng(51);
  SynthBankConfig cfg;
  cfg.num_images = 2000;
  cfg.patches_per_image = 5;
  cfg.clusters = 16;
  cfg.d_feat = 4;
  cfg.num_categories = 5;
  PatchBank b = synth_bank(rng, cfg);
  REQUIRE(b.records.size() == 10000);
  for (int trial = 0; trial < 3; ++trial) {
    Vec q(4);
    for (double& x : q) x = rng.uniform(-2, 2);
    int cat = kReservedTokens + trial % 5;
    auto got = prefilter(b, q, cat, 25);
    std::vector<std::pair<std::pair<double, int>, int>> order;
    for (std::size_t i = 0; i < b.records.size(); ++i)
      if (b.records[i].category == cat)
        order.push_back({{l2_dist(q, b.records[i].feature), b.records[i].id}, static_cast<int>(i)});
    std::sort(order.begin(), order.end());
    REQUIRE(got.record_indices.size() == 25);
    for (int i = 0; i < 25; ++i) CHECK(got.record_indices[i] == order[i].second);
  }
}

TEST_CASE("prefilter: ties break toward the lower patch id") {
  PatchBank b = tiny_bank();
  b.records = {rec(9, 3, 0, {1.0, 0.0}), rec(4, 3, 0, {-1.0, 0.0}), rec(7, 3, 1, {0.0, 1.0})};
  b.rebuild_index();
  auto r = prefilter(b, {0.0, 0.0}, 3, 3);  // all at distance 1
  CHECK(b.records[r.record_indices[0]].id == 4);
  CHECK(b.records[r.record_indices[1]].id == 7);
  CHECK(b.records[r.record_indices[2]].id == 9);
}

TEST_CASE("prefilter: errors and shortfall") {
  PatchBank b = tiny_bank();
  b.records = {rec(0, 3, 0, {0.0, 0.0})};
  b.rebuild_index();
  CHECK_THROWS_WITH_AS(prefilter(b, {0.0, 0.0}, 5, 1), doctest::Contains("5"), NoCandidatesError);
  auto r = prefilter(b, {0.0, 0.0}, 3, 4);
  CHECK(r.shortfall);
  CHECK(r.record_indices.size() == 1);
}

TEST_CASE("build_candidates: single object, single candidate") {
  PatchBank b = tiny_bank();
  b.records = {rec(0, 3, 0, {0.0, 0.0})};
  b.rebuild_index();
  auto cs = build_candidates(b, {{Vec{0.0, 0.0}, 3}}, 1);
  CHECK(cs.flat.size() == 1);
  CHECK(cs.group_of == std::vector<int>{0});
  CHECK(cs.consistent());
}

TEST_CASE("build_candidates: ground truth injected exactly once") {
  PatchBank b = tiny_bank();
  // Category 3 patches at increasing distance from origin; gt is the farthest.
  b.records = {rec(0, 3, 0, {1.0, 0.0}), rec(1, 3, 1, {2.0, 0.0}), rec(2, 3, 2, {3.0, 0.0}),
               rec(3, 3, 3, {9.0, 0.0}),
               rec(4, 4, 0, {0.0, 1.0}), rec(5, 4, 1, {0.0, 2.0}), rec(6, 4, 2, {0.0, 3.0}),
               rec(7, 4, 3, {0.0, 9.0})};
  b.rebuild_index();
  std::vector<int> gt{3, 4};  // group 0: patch 3 (far, must replace); group 1: patch 4 (already nearest)
  auto cs = build_candidates(b, {{Vec{0.0, 0.0}, 3}, {Vec{0.0, 0.0}, 4}}, 3, &gt);
  CHECK(cs.flat.size() == 6);
  CHECK(cs.consistent());
  REQUIRE(cs.gt_flat.size() == 2);
  // Each group contains its gt exactly once.
  for (int g = 0; g < 2; ++g) {
    int count = 0;
    for (int fi : cs.groups[g])
      if (b.records[cs.flat[fi]].id == gt[g]) ++count;
    CHECK(count == 1);
    CHECK(b.records[cs.flat[cs.gt_flat[g]]].id == gt[g]);
  }
  // Group 0 lost its farthest pre-filtered candidate (patch 2).
  bool has_2 = false;
  for (int fi : cs.groups[0]) has_2 |= (b.records[cs.flat[fi]].id == 2);
  CHECK_FALSE(has_2);
  // No group holds the same patch twice.
  for (const auto& grp : cs.groups) {
    std::set<int> ids;
    for (int fi : grp) CHECK(ids.insert(b.records[cs.flat[fi]].id).second);
  }
}

TEST_CASE("build_candidates: group_of consistency on random instances") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    SynthBankConfig cfg;
    cfg.num_images = 12;
    cfg.patches_per_image = 4;
    cfg.clusters = 3;
    cfg.d_feat = 3;
    cfg.num_categories = 4;
    PatchBank b = synth_bank(rng, cfg);
    std::vector<std::pair<Vec, int>> objects;
    std::vector<int> gt;
    int n = 1 + rng.uniform_int(4);
    for (int i = 0; i < n; ++i) {
      Vec q(3);
      for (double& x : q) x = rng.uniform(-2, 2);
      int c = rng.uniform_int(4);
      objects.push_back({q, kReservedTokens + c});
      const auto& cands = b.category_records(kReservedTokens + c);
      gt.push_back(b.records[cands[rng.uniform_int(static_cast<int>(cands.size()))]].id);
    }
    bool with_gt = rng.uniform01() < 0.5;
    auto cs = build_candidates(b, objects, 1 + rng.uniform_int(6), with_gt ? &gt : nullptr);
    CHECK(cs.consistent());
    for (std::size_t fi = 0; fi < cs.flat.size(); ++fi) {
      const auto& grp = cs.groups[cs.group_of[fi]];
      CHECK(std::find(grp.begin(), grp.end(), static_cast<int>(fi)) != grp.end());
    }
  }
}

TEST_CASE("synth_bank: sigma 0 collapses an image onto its center") {
  Rng rng(3);
  SynthBankConfig cfg;
  cfg.num_images = 4;
  cfg.patches_per_image = 3;
  cfg.clusters = 2;
  cfg.d_feat = 5;
  cfg.sigma = 0.0;
  PatchBank b = synth_bank(rng, cfg);
  for (int i = 0; i < 4; ++i) {
    Vec first;
    for (const auto& r : b.records)
      if (r.image == i) {
        if (first.empty())
          first = r.feature;
        else
          CHECK(r.feature == first);
      }
  }
}

TEST_CASE("synth_bank: within-image distances stay below cross-image ones") {
  Rng rng(9);
  SynthBankConfig cfg;
  cfg.num_images = 8;
  cfg.patches_per_image = 4;
  cfg.clusters = 8;  // one image per cluster: centers well separated
  cfg.d_feat = 8;
  cfg.sigma = 0.01;
  cfg.sigma_image = 0.0;
  PatchBank b = synth_bank(rng, cfg);
  double max_within = 0.0, min_cross = 1e9;
  for (const auto& a : b.records)
    for (const auto& c : b.records) {
      if (a.id >= c.id) continue;
      double d = l2_dist(a.feature, c.feature);
      if (a.image == c.image)
        max_within = std::max(max_within, d);
      else
        min_cross = std::min(min_cross, d);
    }
  CHECK(max_within < min_cross);
}

TEST_CASE("synth_bank: same seed, bitwise identical banks") {
  SynthBankConfig cfg;
  Rng a(77), b(77);
  PatchBank ba = synth_bank(a, cfg);
  PatchBank bb = synth_bank(b, cfg);
  CHECK(ba == bb);
  CHECK_THROWS_AS(synth_bank(a, SynthBankConfig{0, 1, 1, 1}), std::invalid_argument);
}

TEST_CASE("synth_bank: categories are round-robin within an image") {
  Rng rng(4);
  SynthBankConfig cfg;
  cfg.num_images = 6;
  cfg.patches_per_image = 3;
  cfg.clusters = 2;
  cfg.d_feat = 2;
  cfg.num_categories = 4;
  PatchBank b = synth_bank(rng, cfg);
  for (const auto& r : b.records) {
    int p = r.id % cfg.patches_per_image;
    CHECK(r.category == kReservedTokens + (r.image + p) % 4);
  }
}
