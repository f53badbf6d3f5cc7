#include "ontosig/ontology.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace ontosig {

namespace {

int intern(std::vector<std::string>& names, std::unordered_map<std::string, int>& index,
           std::vector<std::vector<int>>& parents, std::vector<std::vector<int>>& children,
           const std::string& label) {
    auto it = index.find(label);
    if (it != index.end()) return it->second;
    int idx = static_cast<int>(names.size());
    names.push_back(label);
    index.emplace(label, idx);
    parents.emplace_back();
    children.emplace_back();
    return idx;
}

std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

}  // namespace

Ontology Ontology::from_edges(std::vector<std::string> nodes,
                              const std::vector<std::pair<std::string, std::string>>& edges) {
    Ontology ont;
    for (const auto& n : nodes)
        intern(ont.names_, ont.index_, ont.parents_, ont.children_, n);
    for (const auto& [parent, child] : edges) {
        int p = intern(ont.names_, ont.index_, ont.parents_, ont.children_, parent);
        int c = intern(ont.names_, ont.index_, ont.parents_, ont.children_, child);
        auto& ps = ont.parents_[static_cast<std::size_t>(c)];
        if (std::find(ps.begin(), ps.end(), p) != ps.end()) continue;  // duplicate edge
        ps.push_back(p);
        ont.children_[static_cast<std::size_t>(p)].push_back(c);
        ++ont.edge_count_;
    }
    ont.finalize();
    return ont;
}

Ontology Ontology::from_edge_list(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> edges;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        ++lineno;
        line = strip_cr(line);
        if (line.empty() || line.front() == '#') continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos)
            throw OntologyError("edge list line " + std::to_string(lineno) +
                                ": expected exactly two tab-separated labels");
        std::string_view parent = line.substr(0, tab);
        std::string_view child = line.substr(tab + 1);
        if (parent.empty() || child.empty())
            throw OntologyError("edge list line " + std::to_string(lineno) + ": empty label");
        edges.emplace_back(std::string(parent), std::string(child));
    }
    return from_edges({}, edges);
}

Ontology Ontology::from_obo(std::string_view text, bool strict,
                            std::vector<std::string>* warnings) {
    struct Stanza {
        std::string id;
        std::vector<std::string> is_a;
        bool obsolete = false;
        std::size_t lineno = 0;
    };
    std::vector<Stanza> stanzas;
    Stanza* current = nullptr;
    bool in_term = false;

    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        ++lineno;
        std::string_view line = trim(strip_cr(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            in_term = (line == "[Term]");
            if (in_term) {
                stanzas.push_back(Stanza{});
                stanzas.back().lineno = lineno;
                current = &stanzas.back();
            } else {
                current = nullptr;
            }
            continue;
        }
        if (!in_term || current == nullptr) continue;
        std::size_t colon = line.find(':');
        if (colon == std::string_view::npos) continue;
        std::string_view key = line.substr(0, colon);
        std::string_view value = trim(line.substr(colon + 1));
        if (key == "id") {
            current->id = std::string(value);
        } else if (key == "is_a") {
            std::size_t bang = value.find('!');
            if (bang != std::string_view::npos) value = trim(value.substr(0, bang));
            if (!value.empty()) current->is_a.emplace_back(value);
        } else if (key == "is_obsolete") {
            current->obsolete = (value == "true");
        }
        // all other keys ignored
    }

    std::vector<std::string> node_names;
    std::unordered_map<std::string, bool> defined;
    for (const auto& s : stanzas) {
        if (s.id.empty())
            throw OntologyError("OBO [Term] stanza at line " + std::to_string(s.lineno) +
                                " has no id:");
        if (s.obsolete) continue;
        if (!defined.count(s.id)) {
            defined.emplace(s.id, true);
            node_names.push_back(s.id);
        }
    }
    std::vector<std::pair<std::string, std::string>> edges;
    for (const auto& s : stanzas) {
        if (s.obsolete) continue;
        for (const auto& parent : s.is_a) {
            if (!defined.count(parent)) {
                std::string msg = "dangling is_a target '" + parent + "' for term '" + s.id + "'";
                if (strict) throw OntologyError(msg);
                if (warnings) warnings->push_back(msg);
                continue;
            }
            edges.emplace_back(parent, s.id);
        }
    }
    return from_edges(std::move(node_names), edges);
}

void Ontology::finalize() {
    const std::size_t n = names_.size();
    std::vector<int> indegree(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        indegree[i] = static_cast<int>(parents_[i].size());

    std::deque<int> queue;
    for (std::size_t i = 0; i < n; ++i)
        if (indegree[i] == 0) queue.push_back(static_cast<int>(i));

    std::vector<int> order;
    order.reserve(n);
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        order.push_back(u);
        for (int v : children_[static_cast<std::size_t>(u)])
            if (--indegree[static_cast<std::size_t>(v)] == 0) queue.push_back(v);
    }
    if (order.size() != n) {
        // Recover one cycle for the error message by walking unresolved parents.
        std::vector<char> resolved(n, 0);
        for (int u : order) resolved[static_cast<std::size_t>(u)] = 1;
        int start = -1;
        for (std::size_t i = 0; i < n; ++i)
            if (!resolved[i]) { start = static_cast<int>(i); break; }
        std::vector<int> path;
        std::vector<int> seen_at(n, -1);
        int cur = start;
        while (seen_at[static_cast<std::size_t>(cur)] < 0) {
            seen_at[static_cast<std::size_t>(cur)] = static_cast<int>(path.size());
            path.push_back(cur);
            for (int p : parents_[static_cast<std::size_t>(cur)])
                if (!resolved[static_cast<std::size_t>(p)]) { cur = p; break; }
        }
        std::string cycle;
        for (std::size_t i = static_cast<std::size_t>(seen_at[static_cast<std::size_t>(cur)]);
             i < path.size(); ++i) {
            if (!cycle.empty()) cycle += " -> ";
            cycle += names_[static_cast<std::size_t>(path[i])];
        }
        throw OntologyError("ontology contains a cycle: " + cycle);
    }

    topo_rank_.assign(n, 0);
    for (std::size_t r = 0; r < n; ++r)
        topo_rank_[static_cast<std::size_t>(order[r])] = static_cast<int>(r);

    // Ancestor sets in topo order: anc(v) = union over parents p of {p} + anc(p).
    ancestors_.assign(n, {});
    for (int u : order) {
        std::vector<int>& anc = ancestors_[static_cast<std::size_t>(u)];
        for (int p : parents_[static_cast<std::size_t>(u)]) {
            anc.push_back(p);
            const auto& pa = ancestors_[static_cast<std::size_t>(p)];
            anc.insert(anc.end(), pa.begin(), pa.end());
        }
        std::sort(anc.begin(), anc.end());
        anc.erase(std::unique(anc.begin(), anc.end()), anc.end());
    }
}

bool Ontology::contains(std::string_view label) const {
    return index_.find(std::string(label)) != index_.end();
}

int Ontology::index_of(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) throw OntologyError("unknown label '" + std::string(label) + "'");
    return it->second;
}

std::vector<std::string> Ontology::ancestors(std::string_view label) const {
    std::vector<std::string> out;
    for (int a : ancestors(index_of(label))) out.push_back(name(a));
    return out;
}

std::vector<int> Ontology::closure_indices(int idx) const {
    std::vector<int> members = ancestors(idx);
    members.push_back(idx);
    std::sort(members.begin(), members.end(),
              [this](int a, int b) { return topo_rank(a) < topo_rank(b); });
    return members;
}

std::vector<std::string> Ontology::ancestral_closure(std::string_view label) const {
    std::vector<std::string> out;
    for (int i : closure_indices(index_of(label))) out.push_back(name(i));
    return out;
}

AssumptionReport Ontology::assumption_diagnostic() const {
    AssumptionReport report;
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (parents_[i].size() >= 2) {
            report.is_tree = false;
            report.multi_parent_labels.push_back(names_[i]);
        }
    }
    return report;
}

std::vector<int> Ontology::depths() const {
    std::vector<int> depth(names_.size(), 0);
    std::vector<int> order(names_.size());
    for (std::size_t i = 0; i < names_.size(); ++i)
        order[static_cast<std::size_t>(topo_rank_[i])] = static_cast<int>(i);
    for (int u : order)
        for (int p : parents_[static_cast<std::size_t>(u)])
            depth[static_cast<std::size_t>(u)] =
                std::max(depth[static_cast<std::size_t>(u)], depth[static_cast<std::size_t>(p)] + 1);
    return depth;
}

}  // namespace ontosig
