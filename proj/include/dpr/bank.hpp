#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "dpr/errors.hpp"
#include "dpr/rng.hpp"
#include "dpr/scenegraph.hpp"
#include "dpr/vec.hpp"

namespace dpr::bank {

using json = nlohmann::json;
using sg::Vocabulary;

/// One feature-embedded patch with source-image provenance. Pixels never
/// enter the bank; the base feature is externally computed or synthetic.
struct PatchRecord {
  int id = 0;
  int category = 0;
  int image = 0;
  Vec feature;               // dimension = header d_feat
  std::optional<Vec> cooc;   // filled by the co-occurrence embedder

  bool operator==(const PatchRecord&) const = default;
};

struct BankHeader {
  int version = 1;
  int d_feat = 0;
  Vocabulary vocabulary;

  bool operator==(const BankHeader&) const = default;
};

class PatchBank {
 public:
  BankHeader header;
  std::vector<PatchRecord> records;

  void rebuild_index() {
    by_category_.clear();
    by_id_.clear();
    for (std::size_t i = 0; i < records.size(); ++i) {
      by_category_[records[i].category].push_back(static_cast<int>(i));
      by_id_[records[i].id] = static_cast<int>(i);
    }
    for (auto& [cat, idxs] : by_category_)
      std::sort(idxs.begin(), idxs.end(),
                [this](int a, int b) { return records[a].id < records[b].id; });
  }

  const std::vector<int>& category_records(int category) const {
    static const std::vector<int> empty;
    auto it = by_category_.find(category);
    return it == by_category_.end() ? empty : it->second;
  }

  const PatchRecord* find(int patch_id) const {
    auto it = by_id_.find(patch_id);
    return it == by_id_.end() ? nullptr : &records[it->second];
  }

  int record_index(int patch_id) const {
    auto it = by_id_.find(patch_id);
    return it == by_id_.end() ? -1 : it->second;
  }

  int vocab_size() const { return sg::vocab_size(header.vocabulary); }

  std::string token_of(int category) const { return sg::token_of(header.vocabulary, category); }

  bool operator==(const PatchBank& o) const {
    return header == o.header && records == o.records;
  }

 private:
  std::map<int, std::vector<int>> by_category_;
  std::unordered_map<int, int> by_id_;
};

// ----- persistence: JSON lines, header first -----

inline void save_bank(const PatchBank& b, std::ostream& os) {
  json header{{"version", b.header.version}, {"d_feat", b.header.d_feat}, {"vocabulary", json::object()}};
  for (const auto& [tok, id] : b.header.vocabulary) header["vocabulary"][tok] = id;
  os << header.dump() << "\n";
  for (const auto& r : b.records) {
    json rec{{"id", r.id}, {"category", r.category}, {"image", r.image}, {"feature", r.feature}};
    rec["cooc"] = r.cooc ? json(*r.cooc) : json(nullptr);
    os << rec.dump() << "\n";
  }
}

inline void save_bank(const PatchBank& b, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw BankLoadError("cannot open '" + path + "' for writing");
  save_bank(b, os);
}

inline PatchBank load_bank(std::istream& is) {
  PatchBank b;
  std::string line;
  if (!std::getline(is, line)) throw BankLoadError("empty bank file");
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object())
    throw BankLoadError("header line is not a JSON object");
  if (!header.contains("version") || header["version"] != 1)
    throw BankLoadError("unsupported bank version");
  if (!header.contains("d_feat") || !header["d_feat"].is_number_integer())
    throw BankLoadError("header lacks d_feat");
  b.header.d_feat = header["d_feat"];
  if (!header.contains("vocabulary") || !header["vocabulary"].is_object())
    throw BankLoadError("header lacks vocabulary");
  for (auto& [tok, id] : header["vocabulary"].items())
    b.header.vocabulary[tok] = id.get<int>();

  int lineno = 1;
  std::unordered_map<int, int> seen;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object())
      throw BankLoadError("record line " + std::to_string(lineno) + " is truncated or invalid");
    for (auto& [key, _] : rec.items())
      if (key != "id" && key != "category" && key != "image" && key != "feature" && key != "cooc")
        throw BankLoadError("record line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    PatchRecord r;
    try {
      r.id = rec.at("id").get<int>();
      r.category = rec.at("category").get<int>();
      r.image = rec.at("image").get<int>();
      r.feature = rec.at("feature").get<Vec>();
      if (!rec.at("cooc").is_null()) r.cooc = rec["cooc"].get<Vec>();
    } catch (const json::exception& e) {
      throw BankLoadError("record line " + std::to_string(lineno) + ": " + e.what());
    }
    if (static_cast<int>(r.feature.size()) != b.header.d_feat)
      throw BankLoadError("record id " + std::to_string(r.id) + ": feature dimension " +
                          std::to_string(r.feature.size()) + " != d_feat " +
                          std::to_string(b.header.d_feat));
    if (r.category < 0 || r.category >= sg::vocab_size(b.header.vocabulary))
      throw BankLoadError("record id " + std::to_string(r.id) + ": category outside vocabulary");
    if (!seen.emplace(r.id, lineno).second)
      throw BankLoadError("duplicate patch_id " + std::to_string(r.id));
    b.records.push_back(std::move(r));
  }
  b.rebuild_index();
  return b;
}

inline PatchBank load_bank(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw BankLoadError("cannot open '" + path + "'");
  return load_bank(is);
}

// ----- pre-filtering -----

struct PrefilterResult {
  std::vector<int> record_indices;  // into bank.records, nearest first
  bool shortfall = false;           // category had fewer than k patches
};

/// The k records of `category` nearest to `query` under the l2 distance on
/// base features; ties break toward the smaller patch id.
inline PrefilterResult prefilter(const PatchBank& bank, const Vec& query, int category, int k) {
  if (k <= 0) throw std::invalid_argument("prefilter: k must be positive");
  if (static_cast<int>(query.size()) != bank.header.d_feat)
    throw std::invalid_argument("prefilter: query dimension != d_feat");
  const auto& idxs = bank.category_records(category);
  if (idxs.empty())
    throw NoCandidatesError(category, "no patches for category " + std::to_string(category) + " ('" +
                                          bank.token_of(category) + "')");
  std::vector<std::pair<double, int>> scored;  // (distance, record index)
  scored.reserve(idxs.size());
  for (int i : idxs) scored.push_back({l2_dist(query, bank.records[i].feature), i});
  std::sort(scored.begin(), scored.end(), [&bank](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return bank.records[a.second].id < bank.records[b.second].id;
  });
  PrefilterResult out;
  out.shortfall = static_cast<int>(scored.size()) < k;
  int take = std::min<int>(k, static_cast<int>(scored.size()));
  for (int i = 0; i < take; ++i) out.record_indices.push_back(scored[i].second);
  return out;
}

// ----- candidate sets -----

/// n groups of pre-filtered candidates plus the flat-index -> group map. When
/// ground truth is injected, gt_flat[g] is the flat position of group g's
/// ground-truth patch.
struct CandidateSet {
  std::vector<int> flat;                  // record indices into the bank
  std::vector<std::vector<int>> groups;   // flat indices per group
  std::vector<int> group_of;              // size |flat|
  std::vector<int> gt_flat;               // empty when no ground truth given

  std::size_t group_count() const { return groups.size(); }

  bool consistent() const {
    if (group_of.size() != flat.size()) return false;
    std::size_t counted = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (int fi : groups[g]) {
        if (fi < 0 || static_cast<std::size_t>(fi) >= flat.size()) return false;
        if (group_of[fi] != static_cast<int>(g)) return false;
      }
      counted += groups[g].size();
    }
    if (counted != flat.size()) return false;
    if (!gt_flat.empty() && gt_flat.size() != groups.size()) return false;
    for (std::size_t g = 0; g < gt_flat.size(); ++g)
      if (group_of[gt_flat[g]] != static_cast<int>(g)) return false;
    return true;
  }
};

/// Builds per-object candidate groups via prefilter. With ground truth, each
/// group holds its gt patch exactly once, replacing the farthest candidate
/// when the group is already full.
inline CandidateSet build_candidates(const PatchBank& bank,
                                     const std::vector<std::pair<Vec, int>>& objects, int k,
                                     const std::vector<int>* gt_patch_ids = nullptr) {
  if (gt_patch_ids && gt_patch_ids->size() != objects.size())
    throw std::invalid_argument("build_candidates: one gt patch per object required");
  CandidateSet cs;
  for (std::size_t g = 0; g < objects.size(); ++g) {
    auto pre = prefilter(bank, objects[g].first, objects[g].second, k);
    std::vector<int> members = pre.record_indices;  // nearest first
    int gt_member = -1;
    if (gt_patch_ids) {
      int gt_rec = bank.record_index((*gt_patch_ids)[g]);
      if (gt_rec < 0)
        throw ValidationError("ground-truth patch id " + std::to_string((*gt_patch_ids)[g]) +
                              " not in bank");
      auto it = std::find(members.begin(), members.end(), gt_rec);
      if (it != members.end()) {
        gt_member = static_cast<int>(it - members.begin());
      } else if (static_cast<int>(members.size()) < k) {
        members.push_back(gt_rec);
        gt_member = static_cast<int>(members.size()) - 1;
      } else {
        members.back() = gt_rec;  // farthest is last after the sort
        gt_member = static_cast<int>(members.size()) - 1;
      }
    }
    std::vector<int> flat_ids;
    for (int rec : members) {
      cs.flat.push_back(rec);
      cs.group_of.push_back(static_cast<int>(g));
      flat_ids.push_back(static_cast<int>(cs.flat.size()) - 1);
    }
    if (gt_patch_ids) cs.gt_flat.push_back(flat_ids[gt_member]);
    cs.groups.push_back(std::move(flat_ids));
  }
  return cs;
}

// ----- synthetic bank -----

struct SynthBankConfig {
  int num_images = 16;
  int patches_per_image = 5;
  int clusters = 8;
  int d_feat = 16;
  double sigma = 0.05;        // patch noise around the image center
  double sigma_image = 0.3;   // image offset around its cluster center
  int num_categories = 0;     // 0: one category offset per image (= num_images)
};

inline constexpr int kReservedTokens = 3;  // __image__, in_image, near

inline Vocabulary synth_vocabulary(int num_categories) {
  Vocabulary v{{sg::kImageToken, 0}, {sg::kInImageToken, 1}, {"near", 2}};
  for (int c = 0; c < num_categories; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "cat%03d", c);
    v[buf] = kReservedTokens + c;
  }
  return v;
}

/// Raw (non-vocabulary) category of patch p in image i: round-robin within
/// the image, offset by the image index.
inline int synth_category(const SynthBankConfig& cfg, int image, int patch) {
  int v = cfg.num_categories > 0 ? cfg.num_categories : cfg.num_images;
  return (image + patch) % v;
}

inline int synth_cluster(const SynthBankConfig& cfg, int image) { return image % cfg.clusters; }

/// Images are cluster draws: each image offsets its cluster center, and its
/// patches share that image center up to Gaussian noise sigma.
inline PatchBank synth_bank(Rng& rng, const SynthBankConfig& cfg) {
  if (cfg.num_images <= 0 || cfg.patches_per_image <= 0 || cfg.clusters <= 0 || cfg.d_feat <= 0)
    throw std::invalid_argument("synth_bank: all counts must be positive");
  int v = cfg.num_categories > 0 ? cfg.num_categories : cfg.num_images;
  PatchBank b;
  b.header.d_feat = cfg.d_feat;
  b.header.vocabulary = synth_vocabulary(v);

  std::vector<Vec> centers(cfg.clusters);
  for (auto& c : centers) {
    c.resize(cfg.d_feat);
    for (double& x : c) x = rng.gaussian();
  }
  int next_id = 0;
  for (int i = 0; i < cfg.num_images; ++i) {
    Vec image_center = centers[synth_cluster(cfg, i)];
    for (double& x : image_center) x += cfg.sigma_image * rng.gaussian();
    for (int p = 0; p < cfg.patches_per_image; ++p) {
      PatchRecord r;
      r.id = next_id++;
      r.category = kReservedTokens + synth_category(cfg, i, p);
      r.image = i;
      r.feature = image_center;
      for (double& x : r.feature) x += cfg.sigma * rng.gaussian();
      b.records.push_back(std::move(r));
    }
  }
  b.rebuild_index();
  return b;
}

}  // namespace dpr::bank
