#include "nscr/kgraph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nscr/error.hpp"
#include "nscr/textio.hpp"

namespace nscr {

bool is_leaf_type(NodeType t) { return t == NodeType::Attribute || t == NodeType::Affordance; }

std::string node_type_name(NodeType t) {
    switch (t) {
    case NodeType::Object: return "object";
    case NodeType::Attribute: return "attribute";
    case NodeType::Affordance: return "affordance";
    }
    throw DataError("unknown node type");
}

NodeType node_type_from_name(const std::string& s) {
    if (s == "object") return NodeType::Object;
    if (s == "attribute") return NodeType::Attribute;
    if (s == "affordance") return NodeType::Affordance;
    throw DataError("unknown node type: '" + s + "'");
}

std::array<double, 3> node_type_one_hot(NodeType t) {
    std::array<double, 3> v{0.0, 0.0, 0.0};
    v[static_cast<std::size_t>(t)] = 1.0;
    return v;
}

void KnowledgeGraph::check_id(int id) const {
    if (id < 0 || id >= node_count()) throw DataError("unknown node id " + std::to_string(id));
}

int KnowledgeGraph::add_node(const std::string& name, NodeType type, std::vector<double> embedding,
                             double bias) {
    if (!valid_name(name)) throw DataError("invalid node name: '" + name + "'");
    if (has_name(name)) throw DataError("duplicate node name: '" + name + "'");
    if (!std::isfinite(bias)) throw DataError("non-finite node bias");
    for (double v : embedding)
        if (!std::isfinite(v)) throw DataError("non-finite embedding entry for '" + name + "'");
    if (embedding_width_ < 0)
        embedding_width_ = static_cast<int>(embedding.size());
    else if (static_cast<int>(embedding.size()) != embedding_width_)
        throw DataError("embedding width mismatch for '" + name + "'");
    ConceptNode n;
    n.id = node_count();
    n.name = name;
    n.type = type;
    n.bias = bias;
    n.embedding = std::move(embedding);
    by_name_[name] = n.id;
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
}

std::vector<int> KnowledgeGraph::remove_node(int id) {
    check_id(id);
    std::vector<int> old_to_new(nodes_.size(), -1);
    int next = 0;
    for (int i = 0; i < node_count(); ++i)
        if (i != id) old_to_new[i] = next++;

    by_name_.erase(nodes_[id].name);
    nodes_.erase(nodes_.begin() + id);
    for (auto& [name, nid] : by_name_) nid = old_to_new[nid];
    for (int i = 0; i < node_count(); ++i) nodes_[i].id = i;

    std::set<std::pair<int, int>> remapped;
    for (const auto& [s, d] : edges_) {
        if (s == id || d == id) continue;
        remapped.emplace(old_to_new[s], old_to_new[d]);
    }
    edges_ = std::move(remapped);
    if (nodes_.empty()) embedding_width_ = -1;
    return old_to_new;
}

void KnowledgeGraph::add_edge(int src, int dst) {
    check_id(src);
    check_id(dst);
    if (src == dst) throw DataError("self-loop rejected on node " + std::to_string(src));
    if (is_leaf_type(nodes_[src].type))
        throw DataError("leaf constraint: '" + nodes_[src].name + "' cannot be an edge source");
    edges_.emplace(src, dst);
}

void KnowledgeGraph::remove_edge(int src, int dst) {
    if (edges_.erase({src, dst}) == 0)
        throw DataError("no such edge " + std::to_string(src) + "->" + std::to_string(dst));
}

bool KnowledgeGraph::has_edge(int src, int dst) const { return edges_.count({src, dst}) != 0; }

std::vector<int> KnowledgeGraph::neighbors(int id, AdjMode mode) const {
    check_id(id);
    std::set<int> out;
    for (const auto& [s, d] : edges_) {
        if (s == id && (mode == AdjMode::Out || mode == AdjMode::Both)) out.insert(d);
        if (d == id && (mode == AdjMode::In || mode == AdjMode::Both)) out.insert(s);
    }
    return {out.begin(), out.end()};
}

Tensor2 KnowledgeGraph::adjacency_rows(const std::vector<int>& active) const {
    const int n = static_cast<int>(active.size());
    Tensor2 adj(n, n);
    for (int i = 0; i < n; ++i) check_id(active[i]);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (has_edge(active[i], active[j]) || has_edge(active[j], active[i]))
                adj.at(i, j) = 1.0;
        }
    return adj;
}

const ConceptNode& KnowledgeGraph::node(int id) const {
    check_id(id);
    return nodes_[id];
}

ConceptNode& KnowledgeGraph::node_mut(int id) {
    check_id(id);
    return nodes_[id];
}

int KnowledgeGraph::id_of(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw DataError("unknown concept name: '" + name + "'");
    return it->second;
}

std::string KnowledgeGraph::serialize() const {
    std::ostringstream out;
    out << "kgraph v1\n";
    out << "counts nodes " << node_count() << " edges " << edge_count() << " embedding_width "
        << std::max(embedding_width_, 0) << "\n";
    for (const ConceptNode& n : nodes_) {
        out << "node " << n.id << " " << quote_name(n.name) << " " << node_type_name(n.type)
            << " bias " << fmt_double(n.bias) << " embedding";
        for (double v : n.embedding) out << " " << fmt_double(v);
        out << "\n";
    }
    for (const auto& [s, d] : edges_) out << "edge " << s << " " << d << "\n";
    return out.str();
}

KnowledgeGraph KnowledgeGraph::deserialize(const std::string& text) {
    KnowledgeGraph g;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    long long want_nodes = -1;
    long long want_edges = -1;
    auto fail = [&](const std::string& msg) {
        throw DataError("graph parse error at line " + std::to_string(line_no) + ": " + msg);
    };
    std::vector<std::pair<int, int>> pending_edges;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto tok = tokenize_line(line);
        if (tok.empty()) continue;
        if (tok[0] == "kgraph") {
            if (tok.size() != 2 || tok[1] != "v1") fail("unsupported graph version");
        } else if (tok[0] == "counts") {
            if (tok.size() != 7) fail("bad counts record");
            want_nodes = parse_int(tok[2]);
            want_edges = parse_int(tok[4]);
        } else if (tok[0] == "node") {
            if (tok.size() < 7 || tok[4] != "bias" || tok[6] != "embedding")
                fail("bad node record");
            const int id = static_cast<int>(parse_int(tok[1]));
            if (id != g.node_count()) fail("node ids must be dense and in order");
            std::vector<double> emb;
            for (std::size_t i = 7; i < tok.size(); ++i) emb.push_back(parse_double(tok[i]));
            g.add_node(tok[2], node_type_from_name(tok[3]), std::move(emb), parse_double(tok[5]));
        } else if (tok[0] == "edge") {
            if (tok.size() != 3) fail("bad edge record");
            pending_edges.emplace_back(static_cast<int>(parse_int(tok[1])),
                                       static_cast<int>(parse_int(tok[2])));
        } else {
            fail("unknown record '" + tok[0] + "'");
        }
    }
    line_no = -1;
    for (const auto& [s, d] : pending_edges) {
        if (s < 0 || s >= g.node_count() || d < 0 || d >= g.node_count())
            throw DataError("graph parse error: dangling edge " + std::to_string(s) + "->" +
                            std::to_string(d));
        g.add_edge(s, d);
    }
    if (want_nodes >= 0 && want_nodes != g.node_count())
        throw DataError("graph parse error: node count mismatch");
    if (want_edges >= 0 && want_edges != g.edge_count())
        throw DataError("graph parse error: edge count mismatch");
    return g;
}

void KnowledgeGraph::save(const std::string& path) const { write_text_file(path, serialize()); }

KnowledgeGraph KnowledgeGraph::load(const std::string& path) {
    return deserialize(read_text_file(path));
}

bool KnowledgeGraph::operator==(const KnowledgeGraph& o) const {
    if (edges_ != o.edges_ || nodes_.size() != o.nodes_.size()) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const ConceptNode& a = nodes_[i];
        const ConceptNode& b = o.nodes_[i];
        if (a.id != b.id || a.name != b.name || a.type != b.type || a.bias != b.bias ||
            a.embedding != b.embedding)
            return false;
    }
    return true;
}

void PartialGraph::activate(int id, int step) {
    if (is_active(id)) return;
    active.push_back(id);
    step_of[id] = step;
}

} // namespace nscr
