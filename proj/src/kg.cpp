#include "curec/kg.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "curec/common.hpp"

namespace curec {

int64_t KnowledgeGraph::add_entity(const std::string& name) {
  auto it = entity_by_name_.find(name);
  if (it != entity_by_name_.end()) return it->second;
  const int64_t id = num_entities();
  entity_names_.push_back(name);
  entity_by_name_.emplace(name, id);
  item_flags_.push_back(0);
  for (auto& rel : in_lists_) rel.emplace_back();
  for (auto& rel : out_lists_) rel.emplace_back();
  return id;
}

int64_t KnowledgeGraph::add_relation(const std::string& name) {
  auto it = relation_by_name_.find(name);
  if (it != relation_by_name_.end()) return it->second;
  const int64_t id = num_relations();
  relation_names_.push_back(name);
  relation_by_name_.emplace(name, id);
  in_lists_.emplace_back(entity_names_.size());
  out_lists_.emplace_back(entity_names_.size());
  return id;
}

bool KnowledgeGraph::add_triple(int64_t head, int64_t relation, int64_t tail) {
  validate_entity(head);
  validate_relation(relation);
  validate_entity(tail);
  const uint64_t key = (static_cast<uint64_t>(head) * 0x9e3779b1u) ^
                       (static_cast<uint64_t>(relation) << 40) ^
                       (static_cast<uint64_t>(tail) * 0x85ebca6bu);
  auto& bucket = triple_seen_[key];
  const Triple t{head, relation, tail};
  for (const auto& seen : bucket)
    if (seen == t) return false;
  bucket.push_back(t);
  triples_.push_back(t);
  in_lists_[static_cast<size_t>(relation)][static_cast<size_t>(tail)].push_back(head);
  out_lists_[static_cast<size_t>(relation)][static_cast<size_t>(head)].push_back(tail);
  return true;
}

void KnowledgeGraph::flag_item(int64_t entity) {
  validate_entity(entity);
  if (!item_flags_[static_cast<size_t>(entity)]) {
    item_flags_[static_cast<size_t>(entity)] = 1;
    item_ids_.push_back(entity);
  }
}

const std::string& KnowledgeGraph::entity_name(int64_t id) const {
  validate_entity(id);
  return entity_names_[static_cast<size_t>(id)];
}

const std::string& KnowledgeGraph::relation_name(int64_t id) const {
  validate_relation(id);
  return relation_names_[static_cast<size_t>(id)];
}

int64_t KnowledgeGraph::entity_id(const std::string& name) const {
  auto it = entity_by_name_.find(name);
  return it == entity_by_name_.end() ? -1 : it->second;
}

int64_t KnowledgeGraph::relation_id(const std::string& name) const {
  auto it = relation_by_name_.find(name);
  return it == relation_by_name_.end() ? -1 : it->second;
}

bool KnowledgeGraph::is_item(int64_t entity) const {
  validate_entity(entity);
  return item_flags_[static_cast<size_t>(entity)] != 0;
}

std::vector<int64_t> KnowledgeGraph::neighbors(int64_t entity, int64_t relation) const {
  auto out = in_list(relation, entity);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const std::vector<int64_t>& KnowledgeGraph::in_list(int64_t relation, int64_t entity) const {
  validate_relation(relation);
  validate_entity(entity);
  return in_lists_[static_cast<size_t>(relation)][static_cast<size_t>(entity)];
}

std::vector<int64_t> KnowledgeGraph::undirected_within(int64_t entity, int hops) const {
  validate_entity(entity);
  std::vector<int> dist(static_cast<size_t>(num_entities()), -1);
  std::deque<int64_t> queue;
  dist[static_cast<size_t>(entity)] = 0;
  queue.push_back(entity);
  std::vector<int64_t> reached;
  while (!queue.empty()) {
    const int64_t cur = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<size_t>(cur)];
    if (d >= hops) continue;
    for (int64_t r = 0; r < num_relations(); ++r) {
      for (const auto& lists : {&in_lists_, &out_lists_}) {
        for (int64_t next : (*lists)[static_cast<size_t>(r)][static_cast<size_t>(cur)]) {
          if (dist[static_cast<size_t>(next)] >= 0) continue;
          dist[static_cast<size_t>(next)] = d + 1;
          queue.push_back(next);
          reached.push_back(next);
        }
      }
    }
  }
  std::sort(reached.begin(), reached.end());
  return reached;
}

void KnowledgeGraph::validate_entity(int64_t id) const {
  if (id < 0 || id >= num_entities())
    throw DataError("kg: unknown entity id " + std::to_string(id));
}

void KnowledgeGraph::validate_relation(int64_t id) const {
  if (id < 0 || id >= num_relations())
    throw DataError("kg: unknown relation id " + std::to_string(id));
}

KnowledgeGraph load_kg(const std::string& path, KgLoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("kg: cannot open " + path);
  KnowledgeGraph g;
  int64_t dropped = 0;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line[0] == '#') continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw DataError("kg: malformed line " + std::to_string(line_no) + " in " + path +
                      " (expected head<TAB>relation<TAB>tail)");
    const std::string head = line.substr(0, t1);
    const std::string rel = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string tail = line.substr(t2 + 1);
    if (head.empty() || rel.empty() || tail.empty())
      throw DataError("kg: empty field on line " + std::to_string(line_no) + " in " + path);
    const int64_t h = g.add_entity(head);
    const int64_t r = g.add_relation(rel);
    const int64_t t = g.add_entity(tail);
    if (!g.add_triple(h, r, t)) ++dropped;
  }
  if (g.num_triples() == 0) throw DataError("kg: no triples in " + path);
  if (dropped > 0)
    warn("kg: dropped " + std::to_string(dropped) + " duplicate triple(s) from " + path);
  if (stats) {
    stats->entities = g.num_entities();
    stats->relations = g.num_relations();
    stats->triples = g.num_triples();
    stats->duplicates_dropped = dropped;
  }
  return g;
}

void save_kg(const KnowledgeGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("kg: cannot write " + path);
  for (const auto& t : g.triples())
    out << g.entity_name(t.head) << '\t' << g.relation_name(t.relation) << '\t'
        << g.entity_name(t.tail) << '\n';
}

void load_items(KnowledgeGraph& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("kg: cannot open item list " + path);
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const int64_t id = g.entity_id(line);
    if (id < 0)
      throw DataError("kg: item list line " + std::to_string(line_no) + ": unknown entity '" +
                      line + "'");
    g.flag_item(id);
  }
}

void save_items(const KnowledgeGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("kg: cannot write " + path);
  for (int64_t id : g.item_ids()) out << g.entity_name(id) << '\n';
}

KnowledgeGraph with_inverse_relations(const KnowledgeGraph& g) {
  KnowledgeGraph out;
  for (int64_t e = 0; e < g.num_entities(); ++e) out.add_entity(g.entity_name(e));
  for (int64_t r = 0; r < g.num_relations(); ++r) out.add_relation(g.relation_name(r));
  std::vector<int64_t> inverse_ids;
  for (int64_t r = 0; r < g.num_relations(); ++r)
    inverse_ids.push_back(out.add_relation(g.relation_name(r) + "__inv"));
  for (const auto& t : g.triples()) {
    out.add_triple(t.head, t.relation, t.tail);
    out.add_triple(t.tail, inverse_ids[static_cast<size_t>(t.relation)], t.head);
  }
  for (int64_t id : g.item_ids()) out.flag_item(id);
  return out;
}

Tensor apply_activation(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::kRelu: return relu(x);
    case Activation::kTanh: return tanh_op(x);
    case Activation::kIdentity: return x;
  }
  throw ConfigError("unknown activation");
}

RgcnLayer RgcnLayer::init(int64_t d_in, int64_t d_out, int64_t n_relations, Rng& rng) {
  RgcnLayer layer;
  const double stddev = std::sqrt(2.0 / static_cast<double>(d_in + d_out));
  for (int64_t r = 0; r < n_relations; ++r)
    layer.w_rel.push_back(Tensor::randn({d_in, d_out}, rng, stddev));
  layer.w_self = Tensor::randn({d_in, d_out}, rng, stddev);
  return layer;
}

void RgcnLayer::set_trainable(bool on) {
  for (auto& w : w_rel) w.set_requires_grad(on);
  w_self.set_requires_grad(on);
}

namespace {

using NeighborLists = std::vector<std::vector<int64_t>>;

// Differentiable per-relation neighbor mean. Accumulation follows the triple
// insertion order stored in the adjacency lists.
Tensor neighbor_mean(const Tensor& h, const std::shared_ptr<const NeighborLists>& lists) {
  const int64_t n = h.extent(0), d = h.extent(1);
  Tensor out = Tensor::zeros({n, d});
  for (int64_t i = 0; i < n; ++i) {
    const auto& nbrs = (*lists)[static_cast<size_t>(i)];
    if (nbrs.empty()) continue;
    double* orow = out.data().data() + i * d;
    for (int64_t j : nbrs) {
      const double* hrow = h.data().data() + j * d;
      for (int64_t c = 0; c < d; ++c) orow[c] += hrow[c];
    }
    const double inv = 1.0 / static_cast<double>(nbrs.size());
    for (int64_t c = 0; c < d; ++c) orow[c] *= inv;
  }
  if (Tape::active() && h.requires_grad()) {
    h.impl()->ensure_grad();
    out.set_requires_grad(true);
    Tape::active()->record([hi = h.impl(), oi = out.impl(), lists, n, d] {
      for (int64_t i = 0; i < n; ++i) {
        const auto& nbrs = (*lists)[static_cast<size_t>(i)];
        if (nbrs.empty()) continue;
        const double inv = 1.0 / static_cast<double>(nbrs.size());
        const double* grow = oi->grad.data() + i * d;
        for (int64_t j : nbrs) {
          double* hrow = hi->grad.data() + j * d;
          for (int64_t c = 0; c < d; ++c) hrow[c] += grow[c] * inv;
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor rgcn_forward(const RgcnLayer& layer, const KnowledgeGraph& g, const Tensor& h_in) {
  if (h_in.rank() != 2 || h_in.extent(0) != g.num_entities())
    throw NumericError("rgcn: h_in rows " + shape_str(h_in.shape()) + " != |E| " +
                       std::to_string(g.num_entities()));
  if (static_cast<int64_t>(layer.w_rel.size()) != g.num_relations())
    throw NumericError("rgcn: layer has " + std::to_string(layer.w_rel.size()) +
                       " relation weights, graph has " + std::to_string(g.num_relations()));
  if (layer.w_self.extent(0) != h_in.extent(1))
    throw NumericError("rgcn: weight input extent " + shape_str(layer.w_self.shape()) +
                       " does not match h_in " + shape_str(h_in.shape()));

  Tensor acc = matmul(h_in, layer.w_self);
  for (int64_t r = 0; r < g.num_relations(); ++r) {
    auto lists = std::make_shared<NeighborLists>(static_cast<size_t>(g.num_entities()));
    for (int64_t e = 0; e < g.num_entities(); ++e)
      (*lists)[static_cast<size_t>(e)] = g.in_list(r, e);
    Tensor msg = neighbor_mean(h_in, lists);
    acc = add(acc, matmul(msg, layer.w_rel[static_cast<size_t>(r)]));
  }
  return apply_activation(acc, layer.activation);
}

Tensor item_embedding(const Tensor& h, const std::vector<int64_t>& ids) {
  return gather_rows(h, ids);
}

KnowledgeGraph generate_synthetic_kg(const SyntheticKgParams& params) {
  if (params.n_items < 2 || params.n_entities <= params.n_items)
    throw ConfigError("synthetic kg: need n_entities > n_items >= 2");
  if (params.n_relations < 2) throw ConfigError("synthetic kg: need >= 2 relations");

  Rng rng(params.seed);
  KnowledgeGraph g;

  static const char* kAdjectives[] = {"crimson", "silent",  "golden", "broken", "electric",
                                      "midnight", "paper",  "iron",   "hollow", "wild",
                                      "frozen",   "violet", "lucky",  "savage", "quiet"};
  static const char* kNouns[] = {"tide",   "mirror", "garden", "signal", "harbor",
                                 "engine", "orchid", "canyon", "ember",  "compass",
                                 "lantern", "meadow", "static", "voyage", "crown"};
  const int64_t n_adj = static_cast<int64_t>(std::size(kAdjectives));
  const int64_t n_noun = static_cast<int64_t>(std::size(kNouns));

  std::vector<int64_t> items;
  for (int64_t i = 0; i < params.n_items; ++i) {
    std::string name = std::string(kAdjectives[(i / n_noun) % n_adj]) + " " +
                       kNouns[i % n_noun];
    if (i >= n_adj * n_noun) name += " " + std::to_string(i);
    const int64_t id = g.add_entity(name);
    g.flag_item(id);
    items.push_back(id);
  }

  static const char* kAttrFamilies[] = {"genre", "director", "star", "place", "theme",
                                        "era",   "studio",   "mood"};
  const int64_t n_attr_relations = params.n_relations - 1;  // relation 0 is item-item
  std::vector<int64_t> relations;
  relations.push_back(g.add_relation("related_to"));
  for (int64_t r = 0; r < n_attr_relations; ++r)
    relations.push_back(g.add_relation(
        std::string("has_") + kAttrFamilies[r % static_cast<int64_t>(std::size(kAttrFamilies))]));

  const int64_t n_attrs = params.n_entities - params.n_items;
  std::vector<std::vector<int64_t>> attrs_by_family(static_cast<size_t>(n_attr_relations));
  for (int64_t a = 0; a < n_attrs; ++a) {
    const int64_t fam = a % n_attr_relations;
    const auto& family = kAttrFamilies[fam % static_cast<int64_t>(std::size(kAttrFamilies))];
    const int64_t id = g.add_entity(std::string(family) + " " +
                                    std::to_string(a / n_attr_relations));
    attrs_by_family[static_cast<size_t>(fam)].push_back(id);
  }

  // every item links to 1-2 attributes per family; round-robin base keeps
  // every attribute connected to at least one item
  for (size_t fam = 0; fam < attrs_by_family.size(); ++fam) {
    const auto& attrs = attrs_by_family[fam];
    if (attrs.empty()) continue;
    const int64_t rel = relations[fam + 1];
    for (size_t i = 0; i < items.size(); ++i) {
      const int64_t base = attrs[i % attrs.size()];
      g.add_triple(items[i], rel, base);
      if (rng.uniform() < 0.5) {
        const int64_t extra = attrs[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(attrs.size()) - 1))];
        g.add_triple(items[i], rel, extra);
      }
    }
  }

  // item-item edges between items sharing their round-robin genre slot
  for (size_t i = 0; i < items.size(); ++i) {
    const int64_t n_links = rng.uniform_int(0, 2);
    for (int64_t l = 0; l < n_links; ++l) {
      const int64_t other = items[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(items.size()) - 1))];
      if (other != items[i]) g.add_triple(items[i], relations[0], other);
    }
  }

  // guarantee: every entity sees an item within 2 undirected hops
  for (int64_t e = 0; e < g.num_entities(); ++e) {
    bool ok = false;
    for (int64_t n : g.undirected_within(e, 2))
      if (g.is_item(n)) {
        ok = true;
        break;
      }
    if (!ok) {
      const int64_t item = items[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(items.size()) - 1))];
      if (g.is_item(e) && e != item)
        g.add_triple(e, relations[0], item);
      else if (!g.is_item(e))
        g.add_triple(item, relations[1], e);
    }
  }
  return g;
}

}  // namespace curec
