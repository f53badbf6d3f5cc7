#include <doctest.h>

#include <algorithm>
#include <deque>
#include <random>
#include <set>

#include "ontosig/ontology.hpp"
#include "ontosig/rng.hpp"

using namespace ontosig;

namespace {

// Independent BFS reachability oracle over the raw edge list.
std::set<std::string> bfs_ancestors(const std::vector<std::pair<std::string, std::string>>& edges,
                                    const std::string& label) {
    std::set<std::string> out;
    std::deque<std::string> queue{label};
    while (!queue.empty()) {
        auto cur = queue.front();
        queue.pop_front();
        for (const auto& [p, c] : edges)
            if (c == cur && !out.count(p) && p != label) {
                out.insert(p);
                queue.push_back(p);
            }
    }
    return out;
}

struct RandomDag {
    std::vector<std::string> nodes;
    std::vector<std::pair<std::string, std::string>> edges;
};

RandomDag random_dag(std::mt19937_64& rng, int max_nodes) {
    std::uniform_int_distribution<int> size(1, max_nodes);
    const int n = size(rng);
    RandomDag dag;
    for (int i = 0; i < n; ++i) dag.nodes.push_back("N" + std::to_string(i));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const double p = std::min(1.0, 3.0 / std::max(1, n));
    // edges only from lower to higher index, so acyclic by construction
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (coin(rng) < p) dag.edges.emplace_back(dag.nodes[i], dag.nodes[j]);
    return dag;
}

}  // namespace

TEST_CASE("edge list parsing: figure-style cancer graph") {
    auto ont = Ontology::from_edge_list("Cancer\tLungCancer\nCancer\tSkinCancer");
    CHECK(ont.node_count() == 3);
    CHECK(ont.edge_count() == 2);
    auto anc = ont.ancestors("LungCancer");
    REQUIRE(anc.size() == 1);
    CHECK(anc[0] == "Cancer");
}

TEST_CASE("edge list parsing: empty input, comments, CRLF") {
    CHECK(Ontology::from_edge_list("").node_count() == 0);
    auto ont = Ontology::from_edge_list("# comment\r\nA\tB\r\n\r\n");
    CHECK(ont.node_count() == 2);
    CHECK(ont.edge_count() == 1);
}

TEST_CASE("edge list parsing: malformed lines report line numbers") {
    CHECK_THROWS_WITH_AS(Ontology::from_edge_list("A\tB\nBAD LINE"),
                         doctest::Contains("line 2"), OntologyError);
    CHECK_THROWS_AS(Ontology::from_edge_list("A\tB\tC"), OntologyError);
}

TEST_CASE("duplicate edges collapse") {
    auto ont = Ontology::from_edge_list("A\tB\nA\tB\nA\tB");
    CHECK(ont.edge_count() == 1);
}

TEST_CASE("cycle rejection names the cycle") {
    try {
        Ontology::from_edge_list("A\tB\nB\tA");
        FAIL("expected cycle error");
    } catch (const OntologyError& e) {
        std::string what = e.what();
        CHECK(what.find("cycle") != std::string::npos);
        CHECK(what.find("A") != std::string::npos);
        CHECK(what.find("B") != std::string::npos);
    }
}

TEST_CASE("OBO parsing: minimal is_a with trailing comment") {
    auto ont = Ontology::from_obo("[Term]\nid: GO:2\nis_a: GO:1 ! parent\n\n[Term]\nid: GO:1\n");
    CHECK(ont.node_count() == 2);
    auto anc = ont.ancestors("GO:2");
    REQUIRE(anc.size() == 1);
    CHECK(anc[0] == "GO:1");
}

TEST_CASE("OBO parsing: obsolete terms skipped") {
    auto ont = Ontology::from_obo(
        "[Term]\nid: GO:1\n\n[Term]\nid: GO:2\nis_obsolete: true\nis_a: GO:1\n");
    CHECK(ont.node_count() == 1);
    CHECK_FALSE(ont.contains("GO:2"));
}

TEST_CASE("OBO parsing: dangling is_a dropped with warning, strict mode throws") {
    std::vector<std::string> warnings;
    auto ont = Ontology::from_obo("[Term]\nid: GO:2\nis_a: GO:404\n", false, &warnings);
    CHECK(ont.node_count() == 1);
    CHECK(ont.edge_count() == 0);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("GO:404") != std::string::npos);
    CHECK_THROWS_AS(Ontology::from_obo("[Term]\nid: GO:2\nis_a: GO:404\n", true), OntologyError);
}

TEST_CASE("OBO parsing: stanza without id throws") {
    CHECK_THROWS_AS(Ontology::from_obo("[Term]\nname: nameless\n"), OntologyError);
}

TEST_CASE("OBO parsing: diamond fixture, ancestor set of the bottom term") {
    // GO:10 reachable via two is_a paths; ancestors = {GO:1, GO:2, GO:3}
    std::string obo;
    obo += "[Term]\nid: GO:1\n\n";
    obo += "[Term]\nid: GO:2\nis_a: GO:1\n\n";
    obo += "[Term]\nid: GO:3\nis_a: GO:1\n\n";
    obo += "[Term]\nid: GO:10\nis_a: GO:2\nis_a: GO:3\n\n";
    for (int i = 4; i <= 9; ++i) obo += "[Term]\nid: GO:" + std::to_string(i) + "\n\n";
    auto ont = Ontology::from_obo(obo);
    CHECK(ont.node_count() == 10);
    auto anc = ont.ancestors("GO:10");
    std::set<std::string> expected{"GO:1", "GO:2", "GO:3"};
    CHECK(std::set<std::string>(anc.begin(), anc.end()) == expected);
    // cross-check with the BFS oracle
    std::vector<std::pair<std::string, std::string>> edges{
        {"GO:1", "GO:2"}, {"GO:1", "GO:3"}, {"GO:2", "GO:10"}, {"GO:3", "GO:10"}};
    CHECK(std::set<std::string>(anc.begin(), anc.end()) == bfs_ancestors(edges, "GO:10"));
}

TEST_CASE("ancestors: chain, root, diamond") {
    auto chain = Ontology::from_edge_list("A\tB\nB\tC");
    auto anc = chain.ancestors("C");
    CHECK(std::set<std::string>(anc.begin(), anc.end()) == std::set<std::string>{"A", "B"});
    CHECK(chain.ancestors("A").empty());

    auto diamond = Ontology::from_edge_list("A\tB\nA\tC\nB\tD\nC\tD");
    auto d_anc = diamond.ancestors("D");
    CHECK(std::set<std::string>(d_anc.begin(), d_anc.end()) ==
          std::set<std::string>{"A", "B", "C"});
    CHECK_THROWS_AS(diamond.ancestors("Z"), OntologyError);
}

TEST_CASE("ancestral closure: chain gives the unique topological order") {
    auto chain = Ontology::from_edge_list("A\tB\nB\tC");
    CHECK(chain.ancestral_closure("C") == std::vector<std::string>{"A", "B", "C"});
}

TEST_CASE("ancestral closure: isolated node") {
    auto ont = Ontology::from_edges({"X"}, {});
    CHECK(ont.ancestral_closure("X") == std::vector<std::string>{"X"});
}

TEST_CASE("ancestral closure: diamond accepts both valid orders") {
    auto diamond = Ontology::from_edge_list("A\tB\nA\tC\nB\tD\nC\tD");
    auto closure = diamond.ancestral_closure("D");
    const std::vector<std::string> abcd{"A", "B", "C", "D"};
    const std::vector<std::string> acbd{"A", "C", "B", "D"};
    CHECK((closure == abcd || closure == acbd));
}

TEST_CASE("assumption diagnostic") {
    auto tree = Ontology::from_edge_list("R\tA\nR\tB\nA\tA1\nA\tA2");
    auto rep = tree.assumption_diagnostic();
    CHECK(rep.is_tree);
    CHECK(rep.multi_parent_labels.empty());

    auto diamond = Ontology::from_edge_list("A\tB\nA\tC\nB\tD\nC\tD");
    auto rep2 = diamond.assumption_diagnostic();
    CHECK_FALSE(rep2.is_tree);
    CHECK(rep2.multi_parent_labels == std::vector<std::string>{"D"});

    CHECK(Ontology::from_edge_list("").assumption_diagnostic().is_tree);
}

TEST_CASE("edge-list and OBO parsing agree on equivalent graphs") {
    auto a = Ontology::from_edge_list("GO:1\tGO:2\nGO:2\tGO:3");
    auto b = Ontology::from_obo(
        "[Term]\nid: GO:1\n\n[Term]\nid: GO:2\nis_a: GO:1\n\n[Term]\nid: GO:3\nis_a: GO:2\n");
    REQUIRE(a.node_count() == b.node_count());
    CHECK(a.edge_count() == b.edge_count());
    for (const auto& n : a.nodes()) {
        REQUIRE(b.contains(n));
        CHECK(a.ancestors(n) == b.ancestors(n));
    }
}

TEST_CASE("property: ancestor sets match BFS oracle on random DAGs <= 50 nodes") {
    auto rng = make_rng(20240817, "test/ontology-oracle");
    for (int trial = 0; trial < 200; ++trial) {
        auto dag = random_dag(rng, 50);
        auto ont = Ontology::from_edges(dag.nodes, dag.edges);
        for (const auto& node : dag.nodes) {
            auto got = ont.ancestors(node);
            auto expected = bfs_ancestors(dag.edges, node);
            REQUIRE(std::set<std::string>(got.begin(), got.end()) == expected);
        }
    }
}

TEST_CASE("property: closures are topologically ordered and contain the right members") {
    auto rng = make_rng(20240817, "test/closure-order");
    for (int trial = 0; trial < 100; ++trial) {
        auto dag = random_dag(rng, 30);
        auto ont = Ontology::from_edges(dag.nodes, dag.edges);
        for (const auto& node : dag.nodes) {
            auto closure = ont.ancestral_closure(node);
            REQUIRE(closure.back() == node);
            auto expected = bfs_ancestors(dag.edges, node);
            expected.insert(node);
            REQUIRE(std::set<std::string>(closure.begin(), closure.end()) == expected);
            // every edge within the closure points forward in the order
            std::unordered_map<std::string, std::size_t> pos;
            for (std::size_t i = 0; i < closure.size(); ++i) pos[closure[i]] = i;
            for (const auto& [p, c] : dag.edges)
                if (pos.count(p) && pos.count(c)) REQUIRE(pos[p] < pos[c]);
        }
    }
}

TEST_CASE("property: parent ancestry nesting") {
    auto rng = make_rng(20240817, "test/parent-nesting");
    for (int trial = 0; trial < 50; ++trial) {
        auto dag = random_dag(rng, 40);
        auto ont = Ontology::from_edges(dag.nodes, dag.edges);
        for (const auto& node : dag.nodes) {
            int idx = ont.index_of(node);
            const auto& anc = ont.ancestors(idx);
            for (int p : ont.parents(idx)) {
                REQUIRE(std::binary_search(anc.begin(), anc.end(), p));
                for (int pa : ont.ancestors(p))
                    REQUIRE(std::binary_search(anc.begin(), anc.end(), pa));
            }
        }
    }
}

TEST_CASE("property: one back-edge on a random DAG is rejected") {
    auto rng = make_rng(20240817, "test/back-edge");
    int tested = 0;
    for (int trial = 0; trial < 200 && tested < 100; ++trial) {
        auto dag = random_dag(rng, 20);
        if (dag.edges.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, dag.edges.size() - 1);
        auto [p, c] = dag.edges[pick(rng)];
        dag.edges.emplace_back(c, p);  // close a 2-cycle
        REQUIRE_THROWS_AS(Ontology::from_edges(dag.nodes, dag.edges), OntologyError);
        ++tested;
    }
    CHECK(tested >= 100);
}
