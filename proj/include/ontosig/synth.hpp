#pragma once
// Synthetic ontology-consistent data. The generative process samples labels
// top-down through the DAG so a label can only be positive when all of its
// parents are, and the exact marginal P(L|X) is the product of conditionals
// along the ancestral closure.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ontosig/dataset.hpp"
#include "ontosig/ontology.hpp"

namespace ontosig {

struct SynthSpec {
    int feature_dim = 64;
    int features_per_instance = 8;
    double true_embedding_scale = 1.0;
    int instance_count = 1000;
    std::uint64_t seed = 0;
    // Additive logit bias per node depth (last entry reused for deeper
    // nodes); shapes how rare the leaves are. Empty means no bias.
    std::vector<double> depth_bias;
    // Multiplier on the weight range per node depth (last entry reused);
    // lets deep labels inherit most of their signal from their ancestors.
    // Empty means 1.0 everywhere.
    std::vector<double> depth_weight_scale;

    void validate() const;  // throws DatasetError on non-positive counts
};

// Ground-truth conditional parameters; one weight row and bias per node.
struct TrueModel {
    std::vector<std::string> labels;  // ontology node order
    int feature_dim = 0;
    std::vector<std::vector<double>> weights;  // labels x feature_dim
    std::vector<double> biases;

    double logit(int label_idx, std::span<const int> features) const;
    double conditional(int label_idx, std::span<const int> features) const;
    // Exact P(L|X): product of conditionals over the ancestral closure.
    double marginal(const Ontology& ont, int label_idx, std::span<const int> features) const;

    void save(const std::string& path) const;
    static TrueModel load(const std::string& path);
};

struct SynthResult {
    Dataset dataset;
    TrueModel truth;
};

std::string synth_feature_name(int index);
int synth_feature_index(const std::string& name);  // -1 if not a synthetic id

SynthResult synth_generate(const Ontology& ont, const SynthSpec& spec);

// Random tree ontology: n_nodes labels under a set of roots, each non-root
// attached to a uniformly chosen earlier node subject to max_depth.
Ontology make_random_tree(int n_nodes, int n_roots, int max_depth, std::uint64_t seed);

}  // namespace ontosig
