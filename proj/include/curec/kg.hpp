#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "curec/rng.hpp"
#include "curec/tensor.hpp"

namespace curec {

struct Triple {
  int64_t head;
  int64_t relation;
  int64_t tail;
  bool operator==(const Triple&) const = default;
};

// Entity/relation/triple store with per-relation in-neighbor adjacency.
// Immutable after construction; safe for concurrent reads.
class KnowledgeGraph {
 public:
  int64_t add_entity(const std::string& name);      // returns existing id if known
  int64_t add_relation(const std::string& name);
  // Returns false when the triple is a duplicate (dropped).
  bool add_triple(int64_t head, int64_t relation, int64_t tail);
  void flag_item(int64_t entity);

  int64_t num_entities() const { return static_cast<int64_t>(entity_names_.size()); }
  int64_t num_relations() const { return static_cast<int64_t>(relation_names_.size()); }
  int64_t num_triples() const { return static_cast<int64_t>(triples_.size()); }

  const std::string& entity_name(int64_t id) const;
  const std::string& relation_name(int64_t id) const;
  int64_t entity_id(const std::string& name) const;    // -1 if unknown
  int64_t relation_id(const std::string& name) const;  // -1 if unknown
  bool is_item(int64_t entity) const;
  const std::vector<int64_t>& item_ids() const { return item_ids_; }
  const std::vector<Triple>& triples() const { return triples_; }

  // Sorted, duplicate-free in-neighbors: entities j with (j, r, n) in T.
  std::vector<int64_t> neighbors(int64_t entity, int64_t relation) const;

  // In-neighbors of `entity` under `relation` in triple insertion order.
  // RGCN aggregation iterates this order, which makes entity relabeling an
  // exact permutation of the output.
  const std::vector<int64_t>& in_list(int64_t relation, int64_t entity) const;

  // Undirected k-hop neighborhood (excluding the start entity).
  std::vector<int64_t> undirected_within(int64_t entity, int hops) const;

  void validate_entity(int64_t id) const;
  void validate_relation(int64_t id) const;

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, int64_t> entity_by_name_;
  std::unordered_map<std::string, int64_t> relation_by_name_;
  std::vector<Triple> triples_;
  std::unordered_map<uint64_t, std::vector<Triple>> triple_seen_;  // dedup buckets
  std::vector<uint8_t> item_flags_;
  std::vector<int64_t> item_ids_;
  // in_lists_[r][n] = heads j of triples (j, r, n), in insertion order
  std::vector<std::vector<std::vector<int64_t>>> in_lists_;
  std::vector<std::vector<std::vector<int64_t>>> out_lists_;
};

struct KgLoadStats {
  int64_t entities = 0;
  int64_t relations = 0;
  int64_t triples = 0;
  int64_t duplicates_dropped = 0;
};

// TSV loader: `head<TAB>relation<TAB>tail`, UTF-8, `#` comments, blank lines
// ignored. Ids are assigned by first appearance.
KnowledgeGraph load_kg(const std::string& path, KgLoadStats* stats = nullptr);
void save_kg(const KnowledgeGraph& g, const std::string& path);

// Companion item list: one entity name per line.
void load_items(KnowledgeGraph& g, const std::string& path);
void save_items(const KnowledgeGraph& g, const std::string& path);

// Adds a distinct inverse relation `<name>__inv` with edges reversed, so the
// convolution can pass messages both ways.
KnowledgeGraph with_inverse_relations(const KnowledgeGraph& g);

enum class Activation { kRelu, kTanh, kIdentity };

Tensor apply_activation(const Tensor& x, Activation act);

// One relational graph convolution layer: per-relation weights plus a
// self-loop weight, all [D_in x D_out].
struct RgcnLayer {
  std::vector<Tensor> w_rel;
  Tensor w_self;
  Activation activation = Activation::kRelu;

  static RgcnLayer init(int64_t d_in, int64_t d_out, int64_t n_relations, Rng& rng);
  void set_trainable(bool on);
};

// h_out[n] = act( sum_r mean_{j in N_r(n)} h[j] W_r + h[n] W_self ).
// Nodes with no in-neighbors under any relation reduce to act(h[n] W_self).
Tensor rgcn_forward(const RgcnLayer& layer, const KnowledgeGraph& g, const Tensor& h_in);

// Differentiable row gather from the embedding table.
Tensor item_embedding(const Tensor& h, const std::vector<int64_t>& ids);

struct SyntheticKgParams {
  int64_t n_entities = 128;
  int64_t n_relations = 5;
  int64_t n_items = 48;
  uint64_t seed = 0;
};

// Random item/attribute graph in which every entity has at least one item
// within two undirected hops, so neighborhood-conditioned corpora are
// guaranteed to have reachable gold items.
KnowledgeGraph generate_synthetic_kg(const SyntheticKgParams& params);

}  // namespace curec
