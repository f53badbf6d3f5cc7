#include "ontosig/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ontosig/rng.hpp"

namespace ontosig {

using nlohmann::json;

namespace {
constexpr double kProbEps = 1e-7;

double clamped_sigmoid(double logit) {
    double p = 1.0 / (1.0 + std::exp(-logit));
    return std::clamp(p, kProbEps, 1.0 - kProbEps);
}
}  // namespace

void SynthSpec::validate() const {
    if (feature_dim <= 0 || features_per_instance <= 0 || instance_count <= 0 ||
        true_embedding_scale <= 0.0)
        throw DatasetError("SynthSpec: all counts and the embedding scale must be positive");
}

std::string synth_feature_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "F%06d", index);
    return buf;
}

int synth_feature_index(const std::string& name) {
    if (name.size() != 7 || name[0] != 'F') return -1;
    int v = 0;
    for (std::size_t i = 1; i < name.size(); ++i) {
        if (name[i] < '0' || name[i] > '9') return -1;
        v = v * 10 + (name[i] - '0');
    }
    return v;
}

double TrueModel::logit(int label_idx, std::span<const int> features) const {
    const auto& w = weights[static_cast<std::size_t>(label_idx)];
    double sum = 0.0;
    for (int f : features) sum += w[static_cast<std::size_t>(f)];
    return biases[static_cast<std::size_t>(label_idx)] +
           sum / static_cast<double>(features.size());
}

double TrueModel::conditional(int label_idx, std::span<const int> features) const {
    return clamped_sigmoid(logit(label_idx, features));
}

double TrueModel::marginal(const Ontology& ont, int label_idx,
                           std::span<const int> features) const {
    double log_p = 0.0;
    for (int member : ont.closure_indices(label_idx))
        log_p += std::log(conditional(member, features));
    return std::exp(log_p);
}

void TrueModel::save(const std::string& path) const {
    json j;
    j["labels"] = labels;
    j["feature_dim"] = feature_dim;
    j["weights"] = weights;
    j["biases"] = biases;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot open '" + path + "' for writing");
    out << j.dump() << '\n';
}

TrueModel TrueModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open '" + path + "'");
    json j;
    in >> j;
    TrueModel tm;
    tm.labels = j.at("labels").get<std::vector<std::string>>();
    tm.feature_dim = j.at("feature_dim").get<int>();
    tm.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    tm.biases = j.at("biases").get<std::vector<double>>();
    return tm;
}

SynthResult synth_generate(const Ontology& ont, const SynthSpec& spec) {
    spec.validate();

    TrueModel tm;
    tm.labels = ont.nodes();
    tm.feature_dim = spec.feature_dim;
    const std::size_t n = ont.node_count();
    tm.weights.resize(n);
    tm.biases.resize(n, 0.0);

    auto depth = ont.depths();
    auto weight_rng = make_rng(spec.seed, "synth/true-weights");
    std::uniform_real_distribution<double> uni(-spec.true_embedding_scale,
                                               spec.true_embedding_scale);
    for (std::size_t i = 0; i < n; ++i) {
        tm.weights[i].resize(static_cast<std::size_t>(spec.feature_dim));
        double wscale = 1.0;
        if (!spec.depth_weight_scale.empty()) {
            std::size_t d = std::min(static_cast<std::size_t>(depth[i]),
                                     spec.depth_weight_scale.size() - 1);
            wscale = spec.depth_weight_scale[d];
        }
        for (auto& w : tm.weights[i]) w = wscale * uni(weight_rng);
        if (!spec.depth_bias.empty()) {
            std::size_t d = std::min(static_cast<std::size_t>(depth[i]),
                                     spec.depth_bias.size() - 1);
            tm.biases[i] = spec.depth_bias[d];
        }
    }

    // nodes in topological order so parents are sampled before children
    std::vector<int> topo(n);
    for (std::size_t i = 0; i < n; ++i) topo[static_cast<std::size_t>(ont.topo_rank(static_cast<int>(i)))] = static_cast<int>(i);

    auto data_rng = make_rng(spec.seed, "synth/instances");
    std::uniform_int_distribution<int> feat(0, spec.feature_dim - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    Dataset ds;
    ds.reserve(static_cast<std::size_t>(spec.instance_count));
    std::vector<char> positive(n);
    std::vector<int> features(static_cast<std::size_t>(spec.features_per_instance));
    for (int i = 0; i < spec.instance_count; ++i) {
        for (auto& f : features) f = feat(data_rng);

        std::fill(positive.begin(), positive.end(), 0);
        Instance inst;
        char idbuf[24];
        std::snprintf(idbuf, sizeof(idbuf), "synth-%06d", i);
        inst.id = idbuf;
        inst.bags.emplace_back();
        for (int f : features) inst.bags.back().push_back(synth_feature_name(f));

        for (int node : topo) {
            bool parents_on = true;
            for (int p : ont.parents(node))
                if (!positive[static_cast<std::size_t>(p)]) { parents_on = false; break; }
            if (!parents_on) continue;
            double p = tm.conditional(node, features);
            if (coin(data_rng) < p) {
                positive[static_cast<std::size_t>(node)] = 1;
                inst.labels.push_back(ont.name(node));
            }
        }
        std::sort(inst.labels.begin(), inst.labels.end());
        ds.push_back(std::move(inst));
    }
    return SynthResult{std::move(ds), std::move(tm)};
}

Ontology make_random_tree(int n_nodes, int n_roots, int max_depth, std::uint64_t seed) {
    if (n_nodes <= 0 || n_roots <= 0 || n_roots > n_nodes)
        throw OntologyError("make_random_tree: invalid node/root counts");
    auto rng = make_rng(seed, "synth/tree");
    std::vector<std::string> names(static_cast<std::size_t>(n_nodes));
    for (int i = 0; i < n_nodes; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "L%04d", i);
        names[static_cast<std::size_t>(i)] = buf;
    }
    std::vector<int> depth(static_cast<std::size_t>(n_nodes), 0);
    std::vector<std::pair<std::string, std::string>> edges;
    for (int i = n_roots; i < n_nodes; ++i) {
        // pick an earlier node that still has room below max_depth
        std::uniform_int_distribution<int> pick(0, i - 1);
        int parent = pick(rng);
        for (int tries = 0; tries < 64 && depth[static_cast<std::size_t>(parent)] + 1 > max_depth;
             ++tries)
            parent = pick(rng);
        if (depth[static_cast<std::size_t>(parent)] + 1 > max_depth) parent = 0;
        depth[static_cast<std::size_t>(i)] = depth[static_cast<std::size_t>(parent)] + 1;
        edges.emplace_back(names[static_cast<std::size_t>(parent)], names[static_cast<std::size_t>(i)]);
    }
    return Ontology::from_edges(names, edges);
}

}  // namespace ontosig
