#pragma once
// Conditional-masked and flat losses, Adam, the training loop, grid search,
// and the per-label logistic baseline.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ontosig/dataset.hpp"
#include "ontosig/metrics.hpp"
#include "ontosig/model.hpp"
#include "ontosig/ontology.hpp"

namespace ontosig {

enum class LabelWeighting { none, inv_sqrt_freq };
inline const char* to_string(LabelWeighting w) {
    return w == LabelWeighting::inv_sqrt_freq ? "inv_sqrt_freq" : "none";
}
LabelWeighting weighting_from_string(const std::string& s);

struct TrainConfig {
    double learning_rate = 1e-3;
    int d = 64;
    int n_additional_layers = 0;
    int layer_size = 128;
    Activation activation = Activation::identity;
    bool shared_weights = true;
    OutputMode mode = OutputMode::bayesian;
    LabelWeighting weighting = LabelWeighting::none;
    int batch_size = 32;
    int epochs = 10;
    std::uint64_t seed = 0;
    int patience = 5;  // early stopping on validation micro-AP
};

class TrainError : public std::runtime_error {
public:
    explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

// mask[i][c]: head for conditional c is trained on instance i, i.e. the
// instance carries every parent label of c.
std::vector<std::vector<char>> head_inclusion_mask(const Dataset& batch, const LabelDict& dict,
                                                   const Ontology& ont);

// Per-target weights for the flat loss; inv_sqrt_freq uses
// positive_count^(-1/2) normalized to mean 1 over targets.
std::vector<double> flat_label_weights(const LabelDict& dict, LabelWeighting weighting);

template <typename Scalar>
struct MaskedLossResult {
    Scalar loss = 0;
    std::size_t included_heads = 0;
    std::vector<std::vector<char>> mask;
};

// Forward-only losses (normalized by head count); gradients go through
// BasicModel::forward_backward with the same heads in the training loop.
template <typename Scalar>
MaskedLossResult<Scalar> masked_loss(const BasicModel<Scalar>& m, const Dataset& batch,
                                     const LabelDict& dict, const Ontology& ont);
template <typename Scalar>
Scalar flat_loss(const BasicModel<Scalar>& m, const Dataset& batch, const LabelDict& dict,
                 LabelWeighting weighting);

template <typename Scalar>
struct AdamState {
    std::vector<std::vector<Scalar>> m, v;
    std::int64_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState like(const std::vector<std::vector<Scalar>*>& params) {
        AdamState s;
        for (const auto* p : params) {
            s.m.emplace_back(p->size(), Scalar(0));
            s.v.emplace_back(p->size(), Scalar(0));
        }
        return s;
    }
};

template <typename Scalar>
void adam_step(const std::vector<std::vector<Scalar>*>& params,
               const std::vector<std::vector<Scalar>*>& grads, AdamState<Scalar>& state,
               double lr);

struct LogEntry {
    int epoch = 0;
    std::string split;   // "train" | "valid"
    std::string metric;  // "loss" | "micro_ap" | "micro_auroc"
    double value = 0;
};

struct TrainResult {
    Model model;  // checkpoint of the best validation micro-AP epoch
    std::vector<LogEntry> log;
    double best_valid_micro_ap = 0;
    int best_epoch = -1;
    int epochs_run = 0;
};

std::vector<std::string> build_vocabulary(std::span<const Dataset* const> datasets);

TrainResult train(const TrainConfig& config, const Dataset& train_ds, const Dataset& valid_ds,
                  const LabelDict& dict, const Ontology& ont);

struct MicroScores {
    double micro_auroc = 0;
    double micro_ap = 0;
};

// Validation micro metrics of a model on a dataset (scores via predict_all).
MicroScores valid_micro_scores(const Model& m, const Dataset& ds, const LabelDict& dict,
                               const Ontology& ont);

// Scores every instance against every dict target.
ScoreMatrix score_dataset(const Model& m, const Dataset& ds, const LabelDict& dict,
                          const Ontology& ont);

struct GridSpace {
    std::vector<double> learning_rates;
    std::vector<int> embedding_sizes;
    std::vector<int> n_additional_layers;
    std::vector<int> layer_sizes;
    std::vector<Activation> activations;
    std::vector<bool> shared_weights;

    std::size_t cardinality() const;
    std::vector<TrainConfig> enumerate(const TrainConfig& base) const;
    static GridSpace from_json_file(const std::string& path);
};

struct GridRun {
    TrainConfig config;
    std::optional<double> valid_micro_ap;  // empty when the run failed
    std::string error;
    int best_epoch = -1;
};

struct GridResult {
    std::vector<GridRun> leaderboard;  // sorted by valid micro-AP, best first
    int best_index = -1;               // into leaderboard
    TrainResult best;                  // retrained best run's result
};

GridResult grid_search(const GridSpace& space, const TrainConfig& base, const Dataset& train_ds,
                       const Dataset& valid_ds, const LabelDict& dict, const Ontology& ont);

// ---- logistic baseline ----------------------------------------------------

struct LogisticModel {
    std::string target_label;
    std::vector<std::string> features;  // indicator feature order
    std::vector<double> weights;
    double intercept = 0;
    double lambda = 0;  // selected by cross-validation

    double predict(const Instance& inst) const;
};

struct LogisticFit {
    LogisticModel model;
    std::size_t n_positives = 0;
    std::size_t n_negatives = 0;  // after subsampling
    std::vector<std::pair<double, double>> cv_loss;  // (lambda, mean CV log-loss)
};

// 1:10 negative subsampling (seeded), lambda by 5-fold CV, refit on the
// subsampled set. Throws on zero positives.
LogisticFit train_logistic_baseline(const Dataset& ds, const std::string& target_label,
                                    std::span<const double> lambda_grid, std::uint64_t seed,
                                    int neg_ratio = 10, int folds = 5);

// ---- templated implementations -------------------------------------------

template <typename Scalar>
MaskedLossResult<Scalar> masked_loss(const BasicModel<Scalar>& m, const Dataset& batch,
                                     const LabelDict& dict, const Ontology& ont) {
    MaskedLossResult<Scalar> result;
    result.mask = head_inclusion_mask(batch, dict, ont);
    for (const auto& row : result.mask)
        for (char c : row) result.included_heads += c ? 1 : 0;

    Scalar total = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto x = m.encode(batch[i]);
        for (std::size_t c = 0; c < dict.conditionals.size(); ++c) {
            if (!result.mask[i][c]) continue;
            Scalar p = m.conditional_prob(x, m.cond_row(dict.conditionals[c]));
            bool pos = batch[i].has_label(dict.conditionals[c]);
            total -= pos ? std::log(p) : std::log(Scalar(1) - p);
        }
    }
    result.loss = result.included_heads == 0 ? Scalar(0) : total / Scalar(result.included_heads);
    return result;
}

template <typename Scalar>
Scalar flat_loss(const BasicModel<Scalar>& m, const Dataset& batch, const LabelDict& dict,
                 LabelWeighting weighting) {
    auto weights = flat_label_weights(dict, weighting);
    Scalar total = 0;
    for (const auto& inst : batch) {
        auto x = m.encode(inst);
        for (std::size_t t = 0; t < dict.targets.size(); ++t) {
            Scalar p = m.conditional_prob(x, m.cond_row(dict.targets[t]));
            bool pos = inst.has_label(dict.targets[t]);
            total -= Scalar(weights[t]) * (pos ? std::log(p) : std::log(Scalar(1) - p));
        }
    }
    std::size_t heads = batch.size() * dict.targets.size();
    return heads == 0 ? Scalar(0) : total / Scalar(heads);
}

template <typename Scalar>
void adam_step(const std::vector<std::vector<Scalar>*>& params,
               const std::vector<std::vector<Scalar>*>& grads, AdamState<Scalar>& state,
               double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw TrainError("adam_step: tensor count mismatch");
    ++state.t;
    const double b1t = 1.0 - std::pow(state.beta1, double(state.t));
    const double b2t = 1.0 - std::pow(state.beta2, double(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        const auto& g = *grads[k];
        if (p.size() != g.size()) throw TrainError("adam_step: shape mismatch");
        auto& mm = state.m[k];
        auto& vv = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = double(g[i]);
            if (!std::isfinite(gi)) throw TrainError("adam_step: non-finite gradient");
            mm[i] = Scalar(state.beta1 * double(mm[i]) + (1.0 - state.beta1) * gi);
            vv[i] = Scalar(state.beta2 * double(vv[i]) + (1.0 - state.beta2) * gi * gi);
            const double mhat = double(mm[i]) / b1t;
            const double vhat = double(vv[i]) / b2t;
            p[i] = Scalar(double(p[i]) - lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

}  // namespace ontosig
