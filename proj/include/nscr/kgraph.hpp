#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "nscr/tensor.hpp"

namespace nscr {

enum class NodeType : std::uint8_t { Object, Attribute, Affordance };

bool is_leaf_type(NodeType t);
std::string node_type_name(NodeType t);
NodeType node_type_from_name(const std::string& s);
std::array<double, 3> node_type_one_hot(NodeType t);

struct ConceptNode {
    int id = -1;
    std::string name;
    NodeType type = NodeType::Object;
    double bias = 0.0;
    std::vector<double> embedding;
};

enum class AdjMode { In, Out, Both };

// Typed concept graph with directed edges. Attribute and affordance nodes are
// leaves: they never appear as an edge source.
class KnowledgeGraph {
public:
    int add_node(const std::string& name, NodeType type, std::vector<double> embedding,
                 double bias = 0.0);

    // Removes a node and its incident edges; remaining ids are re-densified.
    // Returns the old->new id map (-1 marks the removed id).
    std::vector<int> remove_node(int id);

    // Idempotent; throws on self-loops, unknown endpoints, or a leaf source.
    void add_edge(int src, int dst);
    void remove_edge(int src, int dst);
    bool has_edge(int src, int dst) const;

    std::vector<int> neighbors(int id, AdjMode mode) const;

    // 0/1 adjacency over the listed nodes in the given order, mode Both.
    Tensor2 adjacency_rows(const std::vector<int>& active) const;

    int node_count() const { return static_cast<int>(nodes_.size()); }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    const ConceptNode& node(int id) const;
    ConceptNode& node_mut(int id);
    bool has_name(const std::string& name) const { return by_name_.count(name) != 0; }
    int id_of(const std::string& name) const;
    const std::vector<ConceptNode>& nodes() const { return nodes_; }
    const std::set<std::pair<int, int>>& edges() const { return edges_; }
    int embedding_width() const { return embedding_width_; }

    // Canonical structured-text form; serialize(deserialize(x)) == x.
    std::string serialize() const;
    static KnowledgeGraph deserialize(const std::string& text);
    void save(const std::string& path) const;
    static KnowledgeGraph load(const std::string& path);

    bool operator==(const KnowledgeGraph& o) const;

private:
    void check_id(int id) const;

    std::vector<ConceptNode> nodes_;
    std::set<std::pair<int, int>> edges_;
    std::map<std::string, int> by_name_;
    int embedding_width_ = -1;
};

// Activation record of one inference: which nodes became active, when, and
// through which parents.
struct PartialGraph {
    struct Edge {
        int parent = -1;
        int child = -1;
        int step = 0;
        bool operator==(const Edge&) const = default;
    };

    std::vector<int> active; // activation order
    std::map<int, int> step_of;
    std::vector<Edge> edges;

    bool is_active(int id) const { return step_of.count(id) != 0; }
    void activate(int id, int step);
};

} // namespace nscr
