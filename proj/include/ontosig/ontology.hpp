#pragma once
// Label DAG with superclass edges (parent -> child means parent is a
// superclass of child). Immutable after construction; ancestor sets and a
// global topological order are precomputed.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ontosig {

class OntologyError : public std::runtime_error {
public:
    explicit OntologyError(const std::string& what) : std::runtime_error(what) {}
};

struct AssumptionReport {
    bool is_tree = true;
    std::vector<std::string> multi_parent_labels;
};

class Ontology {
public:
    Ontology() = default;

    // nodes may list labels with no edges; edge endpoints are added to the
    // node set automatically. Duplicate edges collapse. Throws on cycles.
    static Ontology from_edges(std::vector<std::string> nodes,
                               const std::vector<std::pair<std::string, std::string>>& edges);

    // One "parent<TAB>child" per line, '#' comments, LF or CRLF.
    static Ontology from_edge_list(std::string_view text);

    // Minimal OBO subset: [Term] stanzas with id:, is_a:, is_obsolete: true.
    // Dangling is_a targets are dropped with a warning unless strict.
    static Ontology from_obo(std::string_view text, bool strict = false,
                             std::vector<std::string>* warnings = nullptr);

    std::size_t node_count() const { return names_.size(); }
    std::size_t edge_count() const { return edge_count_; }
    const std::vector<std::string>& nodes() const { return names_; }

    bool contains(std::string_view label) const;
    int index_of(std::string_view label) const;  // throws OntologyError if unknown
    const std::string& name(int idx) const { return names_[static_cast<std::size_t>(idx)]; }

    const std::vector<int>& parents(int idx) const { return parents_[static_cast<std::size_t>(idx)]; }
    const std::vector<int>& children(int idx) const { return children_[static_cast<std::size_t>(idx)]; }

    // Sorted index set of all nodes with a directed path to idx (self excluded).
    const std::vector<int>& ancestors(int idx) const { return ancestors_[static_cast<std::size_t>(idx)]; }
    std::vector<std::string> ancestors(std::string_view label) const;

    // {label} + ancestors in topological order (ancestors before descendants,
    // target label last).
    std::vector<int> closure_indices(int idx) const;
    std::vector<std::string> ancestral_closure(std::string_view label) const;

    // Position of each node in the precomputed global topological order.
    int topo_rank(int idx) const { return topo_rank_[static_cast<std::size_t>(idx)]; }

    AssumptionReport assumption_diagnostic() const;

    // Longest root-to-node path length per node (roots are depth 0).
    std::vector<int> depths() const;

private:
    void finalize();  // topo sort (cycle check) + ancestor closure

    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::vector<int>> parents_;
    std::vector<std::vector<int>> children_;
    std::vector<std::vector<int>> ancestors_;
    std::vector<int> topo_rank_;
    std::size_t edge_count_ = 0;
};

}  // namespace ontosig
