#pragma once
// Encoder + label-embedding scorer. Each conditional P(L | X, parents(L)) is
// a sigmoid of encoder(X) . e_L; bayesian mode multiplies conditionals along
// the ancestral closure, flat mode scores each target directly.
//
// Templated on the scalar type: production code uses float, test oracles and
// finite-difference checks use double.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ontosig/dataset.hpp"
#include "ontosig/ontology.hpp"
#include "ontosig/rng.hpp"

namespace ontosig {

class ModelError : public std::runtime_error {
public:
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

enum class Activation { identity, relu };
enum class OutputMode { flat, bayesian };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }
inline const char* to_string(OutputMode m) { return m == OutputMode::bayesian ? "bayesian" : "flat"; }
Activation activation_from_string(const std::string& s);
OutputMode mode_from_string(const std::string& s);

inline constexpr double kProbClamp = 1e-7;

struct ModelConfig {
    int d = 64;                    // embedding size
    int n_bags = 1;                // time-bin bags; metadata bag is extra
    int n_additional_layers = 0;   // 0..2 hidden layers before the projection
    int layer_size = 128;
    Activation activation = Activation::identity;
    bool shared_weights = true;
    OutputMode mode = OutputMode::bayesian;
};

template <typename Scalar>
struct Mat {
    int rows = 0, cols = 0;
    std::vector<Scalar> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, Scalar(0)) {}
    Scalar* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
    const Scalar* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
};

// Per-head loss term: binary cross-entropy on one conditional classifier.
template <typename Scalar>
struct LossHead {
    int cond_idx = 0;   // row into label embeddings
    Scalar target = 0;  // 0/1
    Scalar weight = 1;
};

template <typename Scalar>
struct Gradients {
    Mat<Scalar> vocab_emb;
    Mat<Scalar> label_emb;
    std::vector<Mat<Scalar>> layer_w;
    std::vector<std::vector<Scalar>> layer_b;

    void zero() {
        std::fill(vocab_emb.a.begin(), vocab_emb.a.end(), Scalar(0));
        std::fill(label_emb.a.begin(), label_emb.a.end(), Scalar(0));
        for (auto& w : layer_w) std::fill(w.a.begin(), w.a.end(), Scalar(0));
        for (auto& b : layer_b) std::fill(b.begin(), b.end(), Scalar(0));
    }
    std::vector<std::vector<Scalar>*> tensors() {
        std::vector<std::vector<Scalar>*> out{&vocab_emb.a, &label_emb.a};
        for (auto& w : layer_w) out.push_back(&w.a);
        for (auto& b : layer_b) out.push_back(&b);
        return out;
    }
};

template <typename Scalar>
class BasicModel {
public:
    struct Layer {
        Mat<Scalar> w;  // in x out, z = a_prev * w + b
        std::vector<Scalar> b;
        Activation act = Activation::identity;
    };

    ModelConfig config;
    std::vector<std::string> vocab;
    std::vector<std::string> conditionals;  // label_emb row order
    std::unordered_map<std::string, int> vocab_index;
    std::unordered_map<std::string, int> cond_index;

    Mat<Scalar> vocab_emb;  // vocab x d
    Mat<Scalar> label_emb;  // conditionals x d
    std::vector<Layer> layers;

    static BasicModel create(const ModelConfig& cfg, std::vector<std::string> vocab_in,
                             std::vector<std::string> conditionals_in, std::uint64_t seed);

    int concat_width() const { return (config.n_bags + 1) * config.d; }

    // Row of the embedding matrix used for a feature; with shared weights a
    // feature whose id is a conditional label reuses that label's row.
    std::pair<bool, int> feature_row(const std::string& feature) const;  // {is_label_row, row}

    std::vector<Scalar> encode(const Instance& inst) const;

    Scalar conditional_prob(std::span<const Scalar> x, int cond_idx) const;
    Scalar conditional_prob(std::span<const Scalar> x, const std::string& label) const;

    Scalar predict_marginal(std::span<const Scalar> x, const std::string& label,
                            const Ontology& ont) const;

    struct PredictStats {
        std::size_t conditional_evals = 0;
    };
    // Scores every dict target; each conditional logit is evaluated once.
    std::vector<Scalar> predict_all(std::span<const Scalar> x, const LabelDict& dict,
                                    const Ontology& ont, PredictStats* stats = nullptr) const;

    Gradients<Scalar> make_gradients() const;
    // Accumulates gradients of sum_h weight * BCE(sigmoid(x . e_h), target)
    // into grads; returns the loss contribution.
    Scalar forward_backward(const Instance& inst, std::span<const LossHead<Scalar>> heads,
                            Gradients<Scalar>& grads) const;

    std::vector<std::vector<Scalar>*> tensors();

    void save(const std::string& path) const;
    static BasicModel load(const std::string& path);

    int cond_row(const std::string& label) const;

private:
    struct EncodeCache {
        std::vector<std::pair<bool, int>> rows;  // resolved feature rows, flat
        std::vector<int> bag_sizes;              // per segment (n_bags + metadata)
        std::vector<Scalar> concat;
        std::vector<std::vector<Scalar>> pre;   // per-layer pre-activations
        std::vector<std::vector<Scalar>> post;  // per-layer activations
    };
    std::vector<Scalar> encode_impl(const Instance& inst, EncodeCache* cache) const;
};

using Model = BasicModel<float>;

// ---- implementation -------------------------------------------------------

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    throw ModelError("unknown activation '" + s + "'");
}

inline OutputMode mode_from_string(const std::string& s) {
    if (s == "flat") return OutputMode::flat;
    if (s == "bayesian") return OutputMode::bayesian;
    throw ModelError("unknown output mode '" + s + "'");
}

template <typename Scalar>
BasicModel<Scalar> BasicModel<Scalar>::create(const ModelConfig& cfg,
                                              std::vector<std::string> vocab_in,
                                              std::vector<std::string> conditionals_in,
                                              std::uint64_t seed) {
    if (cfg.d <= 0 || cfg.n_bags <= 0 || cfg.n_additional_layers < 0 ||
        cfg.n_additional_layers > 2)
        throw ModelError("invalid model config");
    BasicModel m;
    m.config = cfg;
    m.vocab = std::move(vocab_in);
    m.conditionals = std::move(conditionals_in);
    for (std::size_t i = 0; i < m.vocab.size(); ++i)
        m.vocab_index.emplace(m.vocab[i], static_cast<int>(i));
    for (std::size_t i = 0; i < m.conditionals.size(); ++i)
        m.cond_index.emplace(m.conditionals[i], static_cast<int>(i));

    auto rng = make_rng(seed, "model/init");
    const Scalar bound = Scalar(1) / std::sqrt(Scalar(cfg.d));
    std::uniform_real_distribution<double> uni(-double(bound), double(bound));
    auto fill = [&](std::vector<Scalar>& v) {
        for (auto& x : v) x = Scalar(uni(rng));
    };

    m.vocab_emb = Mat<Scalar>(static_cast<int>(m.vocab.size()), cfg.d);
    m.label_emb = Mat<Scalar>(static_cast<int>(m.conditionals.size()), cfg.d);
    fill(m.vocab_emb.a);
    fill(m.label_emb.a);

    int in = m.concat_width();
    for (int l = 0; l < cfg.n_additional_layers; ++l) {
        Layer layer;
        layer.w = Mat<Scalar>(in, cfg.layer_size);
        layer.b.assign(static_cast<std::size_t>(cfg.layer_size), Scalar(0));
        layer.act = cfg.activation;
        fill(layer.w.a);
        m.layers.push_back(std::move(layer));
        in = cfg.layer_size;
    }
    Layer proj;
    proj.w = Mat<Scalar>(in, cfg.d);
    proj.b.assign(static_cast<std::size_t>(cfg.d), Scalar(0));
    proj.act = Activation::identity;
    fill(proj.w.a);
    m.layers.push_back(std::move(proj));
    return m;
}

template <typename Scalar>
std::pair<bool, int> BasicModel<Scalar>::feature_row(const std::string& feature) const {
    if (config.shared_weights) {
        auto it = cond_index.find(feature);
        if (it != cond_index.end()) return {true, it->second};
    }
    auto it = vocab_index.find(feature);
    if (it == vocab_index.end()) throw ModelError("unknown feature id '" + feature + "'");
    return {false, it->second};
}

template <typename Scalar>
int BasicModel<Scalar>::cond_row(const std::string& label) const {
    auto it = cond_index.find(label);
    if (it == cond_index.end())
        throw ModelError("label '" + label + "' has no conditional embedding");
    return it->second;
}

template <typename Scalar>
std::vector<Scalar> BasicModel<Scalar>::encode_impl(const Instance& inst,
                                                    EncodeCache* cache) const {
    if (static_cast<int>(inst.bags.size()) != config.n_bags)
        throw ModelError("instance '" + inst.id + "' has " + std::to_string(inst.bags.size()) +
                         " bags, model expects " + std::to_string(config.n_bags));
    const int d = config.d;
    std::vector<Scalar> concat(static_cast<std::size_t>(concat_width()), Scalar(0));

    auto pool = [&](const std::vector<std::string>& bag, int segment) {
        Scalar* out = concat.data() + static_cast<std::size_t>(segment) * d;
        for (const auto& feature : bag) {
            auto [is_label, row] = feature_row(feature);
            const Scalar* e = is_label ? label_emb.row(row) : vocab_emb.row(row);
            for (int k = 0; k < d; ++k) out[k] += e[k];
            if (cache) cache->rows.emplace_back(is_label, row);
        }
        if (!bag.empty()) {
            const Scalar inv = Scalar(1) / Scalar(bag.size());
            for (int k = 0; k < d; ++k) out[k] *= inv;
        }
        if (cache) cache->bag_sizes.push_back(static_cast<int>(bag.size()));
    };
    for (int b = 0; b < config.n_bags; ++b) pool(inst.bags[static_cast<std::size_t>(b)], b);
    pool(inst.metadata, config.n_bags);

    if (cache) cache->concat = concat;
    std::vector<Scalar> act = std::move(concat);
    for (const auto& layer : layers) {
        std::vector<Scalar> z(layer.b.begin(), layer.b.end());
        for (int i = 0; i < layer.w.rows; ++i) {
            const Scalar ai = act[static_cast<std::size_t>(i)];
            if (ai == Scalar(0)) continue;
            const Scalar* wrow = layer.w.row(i);
            for (int j = 0; j < layer.w.cols; ++j) z[static_cast<std::size_t>(j)] += ai * wrow[j];
        }
        if (cache) cache->pre.push_back(z);
        if (layer.act == Activation::relu)
            for (auto& v : z) v = v > Scalar(0) ? v : Scalar(0);
        if (cache) cache->post.push_back(z);
        act = std::move(z);
    }
    for (Scalar v : act)
        if (!std::isfinite(double(v)))
            throw ModelError("non-finite encoder output for instance '" + inst.id + "'");
    return act;
}

template <typename Scalar>
std::vector<Scalar> BasicModel<Scalar>::encode(const Instance& inst) const {
    return encode_impl(inst, nullptr);
}

template <typename Scalar>
Scalar BasicModel<Scalar>::conditional_prob(std::span<const Scalar> x, int cond_idx) const {
    const Scalar* e = label_emb.row(cond_idx);
    Scalar dot = 0;
    for (std::size_t k = 0; k < x.size(); ++k) dot += x[k] * e[k];
    Scalar p = Scalar(1) / (Scalar(1) + std::exp(-dot));
    const Scalar lo = Scalar(kProbClamp), hi = Scalar(1) - Scalar(kProbClamp);
    return p < lo ? lo : (p > hi ? hi : p);
}

template <typename Scalar>
Scalar BasicModel<Scalar>::conditional_prob(std::span<const Scalar> x,
                                            const std::string& label) const {
    return conditional_prob(x, cond_row(label));
}

template <typename Scalar>
Scalar BasicModel<Scalar>::predict_marginal(std::span<const Scalar> x, const std::string& label,
                                            const Ontology& ont) const {
    auto closure = ont.closure_indices(ont.index_of(label));
    if (closure.size() == 1) return conditional_prob(x, cond_row(label));
    Scalar log_p = 0;
    for (int member : closure)
        log_p += std::log(conditional_prob(x, cond_row(ont.name(member))));
    return std::exp(log_p);
}

template <typename Scalar>
std::vector<Scalar> BasicModel<Scalar>::predict_all(std::span<const Scalar> x,
                                                    const LabelDict& dict, const Ontology& ont,
                                                    PredictStats* stats) const {
    std::vector<Scalar> out(dict.targets.size(), Scalar(0));
    if (config.mode == OutputMode::flat) {
        for (std::size_t t = 0; t < dict.targets.size(); ++t) {
            out[t] = conditional_prob(x, cond_row(dict.targets[t]));
            if (stats) ++stats->conditional_evals;
        }
        return out;
    }
    // one logit per conditional, then sum logs along each closure
    std::vector<Scalar> log_cond(conditionals.size());
    std::vector<Scalar> cond(conditionals.size());
    for (std::size_t c = 0; c < conditionals.size(); ++c) {
        cond[c] = conditional_prob(x, static_cast<int>(c));
        log_cond[c] = std::log(cond[c]);
        if (stats) ++stats->conditional_evals;
    }
    for (std::size_t t = 0; t < dict.targets.size(); ++t) {
        int node = ont.index_of(dict.targets[t]);
        const auto& anc = ont.ancestors(node);
        int self_row = cond_row(dict.targets[t]);
        if (anc.empty()) {
            out[t] = cond[static_cast<std::size_t>(self_row)];
            continue;
        }
        Scalar log_p = log_cond[static_cast<std::size_t>(self_row)];
        for (int a : anc) log_p += log_cond[static_cast<std::size_t>(cond_row(ont.name(a)))];
        out[t] = std::exp(log_p);
    }
    return out;
}

template <typename Scalar>
Gradients<Scalar> BasicModel<Scalar>::make_gradients() const {
    Gradients<Scalar> g;
    g.vocab_emb = Mat<Scalar>(vocab_emb.rows, vocab_emb.cols);
    g.label_emb = Mat<Scalar>(label_emb.rows, label_emb.cols);
    for (const auto& layer : layers) {
        g.layer_w.emplace_back(layer.w.rows, layer.w.cols);
        g.layer_b.emplace_back(layer.b.size(), Scalar(0));
    }
    return g;
}

template <typename Scalar>
Scalar BasicModel<Scalar>::forward_backward(const Instance& inst,
                                            std::span<const LossHead<Scalar>> heads,
                                            Gradients<Scalar>& grads) const {
    EncodeCache cache;
    std::vector<Scalar> x = encode_impl(inst, &cache);
    const int d = config.d;

    Scalar loss = 0;
    std::vector<Scalar> gx(static_cast<std::size_t>(d), Scalar(0));
    for (const auto& head : heads) {
        const Scalar* e = label_emb.row(head.cond_idx);
        Scalar dot = 0;
        for (int k = 0; k < d; ++k) dot += x[static_cast<std::size_t>(k)] * e[k];
        Scalar p = Scalar(1) / (Scalar(1) + std::exp(-dot));
        const Scalar lo = Scalar(kProbClamp), hi = Scalar(1) - Scalar(kProbClamp);
        Scalar pc = p < lo ? lo : (p > hi ? hi : p);
        loss -= head.weight *
                (head.target * std::log(pc) + (Scalar(1) - head.target) * std::log(Scalar(1) - pc));
        Scalar g = head.weight * (p - head.target);  // d loss / d logit
        Scalar* ge = grads.label_emb.row(head.cond_idx);
        for (int k = 0; k < d; ++k) {
            ge[k] += g * x[static_cast<std::size_t>(k)];
            gx[static_cast<std::size_t>(k)] += g * e[k];
        }
    }
    if (!std::isfinite(double(loss)))
        throw ModelError("non-finite loss on instance '" + inst.id + "' (head logits)");

    // back through layers
    std::vector<Scalar> g_out = std::move(gx);
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        const auto& layer = layers[static_cast<std::size_t>(l)];
        const auto& pre = cache.pre[static_cast<std::size_t>(l)];
        std::vector<Scalar> gz = g_out;
        if (layer.act == Activation::relu)
            for (std::size_t j = 0; j < gz.size(); ++j)
                if (pre[j] <= Scalar(0)) gz[j] = Scalar(0);
        const std::vector<Scalar>& a_prev =
            (l == 0) ? cache.concat : cache.post[static_cast<std::size_t>(l - 1)];
        auto& gw = grads.layer_w[static_cast<std::size_t>(l)];
        auto& gb = grads.layer_b[static_cast<std::size_t>(l)];
        for (std::size_t j = 0; j < gz.size(); ++j) gb[j] += gz[j];
        std::vector<Scalar> g_prev(a_prev.size(), Scalar(0));
        for (int i = 0; i < layer.w.rows; ++i) {
            const Scalar ai = a_prev[static_cast<std::size_t>(i)];
            const Scalar* wrow = layer.w.row(i);
            Scalar* gwrow = gw.row(i);
            Scalar acc = 0;
            for (int j = 0; j < layer.w.cols; ++j) {
                gwrow[j] += ai * gz[static_cast<std::size_t>(j)];
                acc += wrow[j] * gz[static_cast<std::size_t>(j)];
            }
            g_prev[static_cast<std::size_t>(i)] = acc;
        }
        g_out = std::move(g_prev);
    }

    // split concat gradient back into bag means
    std::size_t row_cursor = 0;
    int n_segments = config.n_bags + 1;
    for (int s = 0; s < n_segments; ++s) {
        int size = cache.bag_sizes[static_cast<std::size_t>(s)];
        const Scalar* gseg = g_out.data() + static_cast<std::size_t>(s) * d;
        if (size == 0) continue;
        const Scalar inv = Scalar(1) / Scalar(size);
        for (int f = 0; f < size; ++f) {
            auto [is_label, row] = cache.rows[row_cursor++];
            Scalar* ge = is_label ? grads.label_emb.row(row) : grads.vocab_emb.row(row);
            for (int k = 0; k < d; ++k) ge[k] += inv * gseg[k];
        }
    }
    return loss;
}

template <typename Scalar>
std::vector<std::vector<Scalar>*> BasicModel<Scalar>::tensors() {
    std::vector<std::vector<Scalar>*> out{&vocab_emb.a, &label_emb.a};
    for (auto& layer : layers) out.push_back(&layer.w.a);
    for (auto& layer : layers) out.push_back(&layer.b);
    return out;
}

// Checkpoint: text header, then row-major little-endian float32 arrays in
// declared order (vocab_emb, label_emb, then each layer's w and b).
template <typename Scalar>
void BasicModel<Scalar>::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError("cannot open '" + path + "' for writing");
    out << "ontosig-checkpoint 1\n";
    out << "d " << config.d << "\n";
    out << "n_bags " << config.n_bags << "\n";
    out << "mode " << to_string(config.mode) << "\n";
    out << "shared_weights " << (config.shared_weights ? 1 : 0) << "\n";
    out << "n_additional_layers " << config.n_additional_layers << "\n";
    out << "layer_size " << config.layer_size << "\n";
    out << "activation " << to_string(config.activation) << "\n";
    out << "layers " << layers.size() << "\n";
    for (const auto& layer : layers)
        out << "layer " << layer.w.rows << " " << layer.w.cols << " " << to_string(layer.act)
            << "\n";
    out << "conditionals " << conditionals.size() << "\n";
    for (const auto& c : conditionals) out << c << "\n";
    out << "vocab " << vocab.size() << "\n";
    for (const auto& v : vocab) out << v << "\n";
    out << "arrays\n";
    auto write_array = [&](const std::vector<Scalar>& v) {
        for (Scalar s : v) {
            float f = static_cast<float>(s);
            out.write(reinterpret_cast<const char*>(&f), sizeof(float));
        }
    };
    write_array(vocab_emb.a);
    write_array(label_emb.a);
    for (const auto& layer : layers) {
        write_array(layer.w.a);
        write_array(layer.b);
    }
    if (!out) throw ModelError("write failure on '" + path + "'");
}

template <typename Scalar>
BasicModel<Scalar> BasicModel<Scalar>::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open '" + path + "'");
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "ontosig-checkpoint" || version != 1)
        throw ModelError("'" + path + "' is not a version-1 checkpoint");
    auto expect = [&](const char* key) {
        std::string k;
        in >> k;
        if (k != key) throw ModelError("checkpoint header: expected '" + std::string(key) +
                                       "', got '" + k + "'");
    };
    ModelConfig cfg;
    std::string word;
    expect("d"), in >> cfg.d;
    expect("n_bags"), in >> cfg.n_bags;
    expect("mode"), in >> word, cfg.mode = mode_from_string(word);
    expect("shared_weights");
    int shared = 0;
    in >> shared;
    cfg.shared_weights = shared != 0;
    expect("n_additional_layers"), in >> cfg.n_additional_layers;
    expect("layer_size"), in >> cfg.layer_size;
    expect("activation"), in >> word, cfg.activation = activation_from_string(word);
    expect("layers");
    std::size_t n_layers = 0;
    in >> n_layers;
    struct Shape { int rows, cols; Activation act; };
    std::vector<Shape> shapes;
    for (std::size_t l = 0; l < n_layers; ++l) {
        expect("layer");
        Shape s{};
        in >> s.rows >> s.cols >> word;
        s.act = activation_from_string(word);
        shapes.push_back(s);
    }
    auto read_names = [&](const char* key) {
        expect(key);
        std::size_t n = 0;
        in >> n;
        in.ignore();  // trailing newline
        std::vector<std::string> names(n);
        for (auto& s : names)
            if (!std::getline(in, s)) throw ModelError("checkpoint truncated in name list");
        return names;
    };
    std::vector<std::string> conds = read_names("conditionals");
    std::vector<std::string> vocab = read_names("vocab");
    std::string marker;
    std::getline(in, marker);
    if (marker != "arrays") throw ModelError("checkpoint missing 'arrays' marker");

    BasicModel m;
    m.config = cfg;
    m.conditionals = std::move(conds);
    m.vocab = std::move(vocab);
    for (std::size_t i = 0; i < m.vocab.size(); ++i)
        m.vocab_index.emplace(m.vocab[i], static_cast<int>(i));
    for (std::size_t i = 0; i < m.conditionals.size(); ++i)
        m.cond_index.emplace(m.conditionals[i], static_cast<int>(i));

    auto read_array = [&](std::vector<Scalar>& v, std::size_t n) {
        v.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            float f = 0;
            in.read(reinterpret_cast<char*>(&f), sizeof(float));
            if (!in) throw ModelError("checkpoint truncated in arrays");
            v[i] = static_cast<Scalar>(f);
        }
    };
    m.vocab_emb = Mat<Scalar>(static_cast<int>(m.vocab.size()), cfg.d);
    m.label_emb = Mat<Scalar>(static_cast<int>(m.conditionals.size()), cfg.d);
    read_array(m.vocab_emb.a, m.vocab_emb.a.size());
    read_array(m.label_emb.a, m.label_emb.a.size());
    int expected_in = m.concat_width();
    for (const auto& s : shapes) {
        if (s.rows != expected_in) throw ModelError("checkpoint layer shape mismatch");
        Layer layer;
        layer.w = Mat<Scalar>(s.rows, s.cols);
        layer.act = s.act;
        read_array(layer.w.a, layer.w.a.size());
        read_array(layer.b, static_cast<std::size_t>(s.cols));
        m.layers.push_back(std::move(layer));
        expected_in = s.cols;
    }
    if (expected_in != cfg.d) throw ModelError("checkpoint final layer does not project to d");
    return m;
}

}  // namespace ontosig
