#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dpr/errors.hpp"

namespace dpr::sg {

struct SceneObject {
  int id;
  int category;
};

struct SceneEdge {
  int subject;   // object id
  int relation;  // vocabulary id
  int object;    // object id
};

/// Token -> id table shared by object categories and relation predicates.
/// std::map keeps serialization order deterministic.
using Vocabulary = std::map<std::string, int>;

inline int vocab_size(const Vocabulary& v) {
  int m = 0;
  for (const auto& [tok, id] : v) m = std::max(m, id + 1);
  return m;
}

inline std::string token_of(const Vocabulary& v, int id) {
  for (const auto& [tok, tid] : v)
    if (tid == id) return tok;
  return "#" + std::to_string(id);
}

/// Objects plus directed relation triples. After parsing, a synthetic
/// `__image__` anchor (category 0) is appended and every user object gets an
/// `in_image` edge to it, so message passing never sees an isolated node.
struct SceneGraph {
  std::vector<SceneObject> objects;  // user objects first, anchor last
  std::vector<SceneEdge> edges;
  int image_object_id = -1;  // -1 while the graph is empty
  int user_object_count = 0;

  int index_of(int object_id) const {
    for (std::size_t i = 0; i < objects.size(); ++i)
      if (objects[i].id == object_id) return static_cast<int>(i);
    return -1;
  }

  bool has_object(int object_id) const { return index_of(object_id) >= 0; }
};

inline constexpr const char* kImageToken = "__image__";
inline constexpr const char* kInImageToken = "in_image";

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline int parse_int(const std::string& tok, int lineno, const char* what) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(lineno, std::string("expected integer ") + what + ", got '" + tok + "'");
  }
}

}  // namespace detail

/// Parses the line format `obj <id> <category>` / `rel <sub> <pred> <obj>`
/// with `#` comments, validates references, and appends the anchor object.
inline SceneGraph parse_scene_graph(const std::string& text, const Vocabulary& vocab) {
  SceneGraph g;
  const int vsize = vocab_size(vocab);
  std::set<int> seen_ids;

  std::istringstream stream(text);
  std::string line;
  int lineno = 0;
  std::vector<std::pair<SceneEdge, int>> pending_edges;  // edge + line for diagnostics
  while (std::getline(stream, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "obj") {
      if (toks.size() != 3) throw ParseError(lineno, "obj takes <id> <category>");
      int id = detail::parse_int(toks[1], lineno, "object id");
      auto it = vocab.find(toks[2]);
      if (it == vocab.end())
        throw ParseError(lineno, "unknown category token '" + toks[2] + "'");
      if (!seen_ids.insert(id).second)
        throw ParseError(lineno, "duplicate object id " + std::to_string(id));
      g.objects.push_back(SceneObject{id, it->second});
    } else if (toks[0] == "rel") {
      if (toks.size() != 4) throw ParseError(lineno, "rel takes <subject> <predicate> <object>");
      int sub = detail::parse_int(toks[1], lineno, "subject id");
      auto it = vocab.find(toks[2]);
      if (it == vocab.end())
        throw ParseError(lineno, "unknown predicate token '" + toks[2] + "'");
      int obj = detail::parse_int(toks[3], lineno, "object id");
      pending_edges.push_back({SceneEdge{sub, it->second, obj}, lineno});
    } else {
      throw ParseError(lineno, "unknown statement '" + toks[0] + "'");
    }
  }

  for (const auto& [e, ln] : pending_edges) {
    if (!seen_ids.count(e.subject))
      throw ValidationError("edge references missing object id " + std::to_string(e.subject));
    if (!seen_ids.count(e.object))
      throw ValidationError("edge references missing object id " + std::to_string(e.object));
    g.edges.push_back(e);
  }

  g.user_object_count = static_cast<int>(g.objects.size());
  if (g.user_object_count == 0) return g;

  auto in_image = vocab.find(kInImageToken);
  if (in_image == vocab.end())
    throw ValidationError(std::string("vocabulary lacks the '") + kInImageToken + "' predicate");
  if (vsize < 1) throw ValidationError("vocabulary has no category 0 for the anchor object");

  int anchor_id = 0;
  for (int id : seen_ids) anchor_id = std::max(anchor_id, id + 1);
  g.image_object_id = anchor_id;
  g.objects.push_back(SceneObject{anchor_id, 0});
  for (int i = 0; i < g.user_object_count; ++i)
    g.edges.push_back(SceneEdge{g.objects[i].id, in_image->second, anchor_id});

  // Augmentation guarantee: every node, anchor included, touches an edge.
  for (const auto& o : g.objects) {
    bool touched = false;
    for (const auto& e : g.edges)
      if (e.subject == o.id || e.object == o.id) {
        touched = true;
        break;
      }
    if (!touched)
      throw ValidationError("object " + std::to_string(o.id) + " has no incident edge");
  }
  return g;
}

}  // namespace dpr::sg
