#include "ontosig/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "ontosig/rng.hpp"

namespace ontosig {

using nlohmann::json;

LabelWeighting weighting_from_string(const std::string& s) {
    if (s == "none") return LabelWeighting::none;
    if (s == "inv_sqrt_freq") return LabelWeighting::inv_sqrt_freq;
    throw TrainError("unknown label weighting '" + s + "'");
}

std::vector<std::vector<char>> head_inclusion_mask(const Dataset& batch, const LabelDict& dict,
                                                   const Ontology& ont) {
    // parent label names per conditional, resolved once
    std::vector<std::vector<std::string>> parent_names(dict.conditionals.size());
    for (std::size_t c = 0; c < dict.conditionals.size(); ++c) {
        if (!ont.contains(dict.conditionals[c])) continue;
        for (int p : ont.parents(ont.index_of(dict.conditionals[c])))
            parent_names[c].push_back(ont.name(p));
    }
    std::vector<std::vector<char>> mask(batch.size(),
                                        std::vector<char>(dict.conditionals.size(), 0));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t c = 0; c < dict.conditionals.size(); ++c) {
            bool included = true;
            for (const auto& p : parent_names[c])
                if (!batch[i].has_label(p)) { included = false; break; }
            mask[i][c] = included ? 1 : 0;
        }
    }
    return mask;
}

std::vector<double> flat_label_weights(const LabelDict& dict, LabelWeighting weighting) {
    std::vector<double> w(dict.targets.size(), 1.0);
    if (weighting == LabelWeighting::none || dict.targets.empty()) return w;
    double sum = 0;
    for (std::size_t t = 0; t < dict.targets.size(); ++t) {
        auto count = std::max<std::int64_t>(1, dict.count(dict.targets[t]));
        w[t] = 1.0 / std::sqrt(double(count));
        sum += w[t];
    }
    const double scale = double(dict.targets.size()) / sum;  // mean 1 over targets
    for (auto& v : w) v *= scale;
    return w;
}

std::vector<std::string> build_vocabulary(std::span<const Dataset* const> datasets) {
    std::set<std::string> vocab;
    for (const auto* ds : datasets)
        for (const auto& inst : *ds) {
            for (const auto& bag : inst.bags) vocab.insert(bag.begin(), bag.end());
            vocab.insert(inst.metadata.begin(), inst.metadata.end());
        }
    return {vocab.begin(), vocab.end()};
}

ScoreMatrix score_dataset(const Model& m, const Dataset& ds, const LabelDict& dict,
                          const Ontology& ont) {
    ScoreMatrix sm;
    sm.label_ids = dict.targets;
    sm.instance_ids.reserve(ds.size());
    sm.scores.reserve(ds.size() * dict.targets.size());
    sm.truths.reserve(ds.size() * dict.targets.size());
    for (const auto& inst : ds) {
        sm.instance_ids.push_back(inst.id);
        auto x = m.encode(inst);
        auto probs = m.predict_all(x, dict, ont);
        for (std::size_t t = 0; t < dict.targets.size(); ++t) {
            sm.scores.push_back(double(probs[t]));
            sm.truths.push_back(inst.has_label(dict.targets[t]) ? 1 : 0);
        }
    }
    return sm;
}

MicroScores valid_micro_scores(const Model& m, const Dataset& ds, const LabelDict& dict,
                               const Ontology& ont) {
    auto sm = score_dataset(m, ds, dict, ont);
    auto micro = micro_metrics(sm);
    MicroScores out;
    out.micro_auroc = micro.auroc.value_or(0.5);
    out.micro_ap = micro.ap.value_or(0.0);
    return out;
}

namespace {

int bag_count_of(const Dataset& ds, const char* which) {
    if (ds.empty()) throw TrainError(std::string(which) + " dataset is empty");
    const int n = static_cast<int>(ds[0].bags.size());
    for (const auto& inst : ds)
        if (static_cast<int>(inst.bags.size()) != n)
            throw TrainError("instance '" + inst.id + "' has inconsistent bag count");
    return n;
}

struct BatchHeads {
    std::vector<std::vector<LossHead<float>>> per_instance;
    std::size_t included = 0;
};

BatchHeads build_batch_heads(const Model& m, const Dataset& ds, std::span<const std::size_t> idx,
                             const LabelDict& dict, const Ontology& ont,
                             const std::vector<std::vector<std::string>>& parent_names,
                             const std::vector<double>& flat_w) {
    BatchHeads out;
    out.per_instance.resize(idx.size());
    if (m.config.mode == OutputMode::flat) {
        out.included = idx.size() * dict.targets.size();
        const float norm = out.included ? 1.0f / float(out.included) : 0.0f;
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const Instance& inst = ds[idx[b]];
            auto& heads = out.per_instance[b];
            heads.reserve(dict.targets.size());
            for (std::size_t t = 0; t < dict.targets.size(); ++t)
                heads.push_back({m.cond_row(dict.targets[t]),
                                 inst.has_label(dict.targets[t]) ? 1.0f : 0.0f,
                                 float(flat_w[t]) * norm});
        }
        return out;
    }
    // bayesian: include a head only when all parent labels are present
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const Instance& inst = ds[idx[b]];
        auto& heads = out.per_instance[b];
        for (std::size_t c = 0; c < dict.conditionals.size(); ++c) {
            bool included = true;
            for (const auto& p : parent_names[c])
                if (!inst.has_label(p)) { included = false; break; }
            if (!included) continue;
            heads.push_back({m.cond_row(dict.conditionals[c]),
                             inst.has_label(dict.conditionals[c]) ? 1.0f : 0.0f, 1.0f});
        }
        out.included += heads.size();
    }
    const float norm = out.included ? 1.0f / float(out.included) : 0.0f;
    for (auto& heads : out.per_instance)
        for (auto& h : heads) h.weight = norm;
    return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& train_ds, const Dataset& valid_ds,
                  const LabelDict& dict, const Ontology& ont) {
    const int n_bags = bag_count_of(train_ds, "train");
    if (bag_count_of(valid_ds, "valid") != n_bags)
        throw TrainError("train/valid bag counts differ");

    ModelConfig mc;
    mc.d = config.d;
    mc.n_bags = n_bags;
    mc.n_additional_layers = config.n_additional_layers;
    mc.layer_size = config.layer_size;
    mc.activation = config.activation;
    mc.shared_weights = config.shared_weights;
    mc.mode = config.mode;

    const std::array<const Dataset*, 2> all{&train_ds, &valid_ds};
    auto vocab = build_vocabulary(all);
    auto conditionals =
        config.mode == OutputMode::bayesian ? dict.conditionals : dict.targets;
    Model model = Model::create(mc, std::move(vocab), std::move(conditionals),
                                derive_seed(config.seed, "train/init"));

    TrainResult result;
    result.model = model;
    if (config.epochs == 0) return result;

    std::vector<std::vector<std::string>> parent_names(dict.conditionals.size());
    for (std::size_t c = 0; c < dict.conditionals.size(); ++c)
        if (ont.contains(dict.conditionals[c]))
            for (int p : ont.parents(ont.index_of(dict.conditionals[c])))
                parent_names[c].push_back(ont.name(p));
    auto flat_w = flat_label_weights(dict, config.weighting);

    auto params = model.tensors();
    auto state = AdamState<float>::like(params);
    auto grads = model.make_gradients();
    auto grad_tensors = grads.tensors();

    std::vector<std::size_t> order(train_ds.size());
    std::iota(order.begin(), order.end(), 0);

    Model best = model;
    double best_ap = -1.0;
    int since_best = 0;
    const int batch_size = std::max(1, config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto rng = make_rng(config.seed, "train/epoch-" + std::to_string(epoch));
        std::shuffle(order.begin(), order.end(), rng);

        double epoch_loss = 0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            auto heads = build_batch_heads(model, train_ds, idx, dict, ont, parent_names, flat_w);
            grads.zero();
            double batch_loss = 0;
            try {
                for (std::size_t b = 0; b < idx.size(); ++b)
                    batch_loss += double(model.forward_backward(
                        train_ds[idx[b]], heads.per_instance[b], grads));
                adam_step(params, grad_tensors, state, config.learning_rate);
            } catch (const std::exception& e) {
                throw TrainError("epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(n_batches) + ": " + e.what());
            }
            epoch_loss += batch_loss;
            ++n_batches;
        }
        result.log.push_back({epoch, "train", "loss", epoch_loss / double(n_batches)});

        auto micro = valid_micro_scores(model, valid_ds, dict, ont);
        result.log.push_back({epoch, "valid", "micro_ap", micro.micro_ap});
        result.log.push_back({epoch, "valid", "micro_auroc", micro.micro_auroc});
        result.epochs_run = epoch + 1;

        if (micro.micro_ap > best_ap) {
            best_ap = micro.micro_ap;
            best = model;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    result.model = std::move(best);
    result.best_valid_micro_ap = best_ap;
    return result;
}

std::size_t GridSpace::cardinality() const {
    auto dim = [](std::size_t n) { return n == 0 ? std::size_t(1) : n; };
    return dim(learning_rates.size()) * dim(embedding_sizes.size()) *
           dim(n_additional_layers.size()) * dim(layer_sizes.size()) * dim(activations.size()) *
           dim(shared_weights.size());
}

std::vector<TrainConfig> GridSpace::enumerate(const TrainConfig& base) const {
    auto lrs = learning_rates.empty() ? std::vector<double>{base.learning_rate} : learning_rates;
    auto ds = embedding_sizes.empty() ? std::vector<int>{base.d} : embedding_sizes;
    auto nls =
        n_additional_layers.empty() ? std::vector<int>{base.n_additional_layers} : n_additional_layers;
    auto lss = layer_sizes.empty() ? std::vector<int>{base.layer_size} : layer_sizes;
    auto acts = activations.empty() ? std::vector<Activation>{base.activation} : activations;
    auto shares = shared_weights.empty() ? std::vector<bool>{base.shared_weights} : shared_weights;

    std::vector<TrainConfig> out;
    for (double lr : lrs)
        for (int d : ds)
            for (int nl : nls)
                for (int ls : lss)
                    for (Activation act : acts)
                        for (bool share : shares) {
                            TrainConfig c = base;
                            c.learning_rate = lr;
                            c.d = d;
                            c.n_additional_layers = nl;
                            c.layer_size = ls;
                            c.activation = act;
                            c.shared_weights = share;
                            out.push_back(c);
                        }
    return out;
}

GridSpace GridSpace::from_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TrainError("cannot open grid file '" + path + "'");
    json j;
    in >> j;
    GridSpace space;
    if (j.contains("learning_rates"))
        space.learning_rates = j["learning_rates"].get<std::vector<double>>();
    if (j.contains("embedding_sizes"))
        space.embedding_sizes = j["embedding_sizes"].get<std::vector<int>>();
    if (j.contains("n_additional_layers"))
        space.n_additional_layers = j["n_additional_layers"].get<std::vector<int>>();
    if (j.contains("layer_sizes")) space.layer_sizes = j["layer_sizes"].get<std::vector<int>>();
    if (j.contains("activations"))
        for (const auto& a : j["activations"])
            space.activations.push_back(activation_from_string(a.get<std::string>()));
    if (j.contains("shared_weights"))
        space.shared_weights = j["shared_weights"].get<std::vector<bool>>();
    return space;
}

GridResult grid_search(const GridSpace& space, const TrainConfig& base, const Dataset& train_ds,
                       const Dataset& valid_ds, const LabelDict& dict, const Ontology& ont) {
    GridResult result;
    double best_ap = -1.0;
    for (const auto& config : space.enumerate(base)) {
        GridRun run;
        run.config = config;
        try {
            auto r = train(config, train_ds, valid_ds, dict, ont);
            run.valid_micro_ap = r.best_valid_micro_ap;
            run.best_epoch = r.best_epoch;
            if (r.best_valid_micro_ap > best_ap) {
                best_ap = r.best_valid_micro_ap;
                result.best = std::move(r);
            }
        } catch (const std::exception& e) {
            run.error = e.what();  // keep going; failures stay on the leaderboard
        }
        result.leaderboard.push_back(std::move(run));
    }
    std::stable_sort(result.leaderboard.begin(), result.leaderboard.end(),
                     [](const GridRun& a, const GridRun& b) {
                         return a.valid_micro_ap.value_or(-1.0) > b.valid_micro_ap.value_or(-1.0);
                     });
    for (std::size_t i = 0; i < result.leaderboard.size(); ++i)
        if (result.leaderboard[i].valid_micro_ap &&
            *result.leaderboard[i].valid_micro_ap == best_ap) {
            result.best_index = static_cast<int>(i);
            break;
        }
    return result;
}

// ---- logistic baseline ----------------------------------------------------

namespace {

struct SparseRow {
    std::vector<int> features;  // sorted unique indicator indices
    double y = 0;
};

double logistic_objective(const std::vector<SparseRow>& rows, const std::vector<double>& w,
                          double b, double lambda) {
    double loss = 0;
    for (const auto& row : rows) {
        double z = b;
        for (int f : row.features) z += w[static_cast<std::size_t>(f)];
        // log(1 + exp(-y'z)) with y' in {-1, +1}, numerically stable
        const double yz = (row.y > 0.5 ? 1.0 : -1.0) * z;
        loss += yz > 0 ? std::log1p(std::exp(-yz)) : -yz + std::log1p(std::exp(yz));
    }
    loss /= double(rows.size());
    double penalty = 0;
    for (double wi : w) penalty += wi * wi;
    return loss + 0.5 * lambda * penalty;
}

void logistic_gradient(const std::vector<SparseRow>& rows, const std::vector<double>& w, double b,
                       double lambda, std::vector<double>& gw, double& gb) {
    std::fill(gw.begin(), gw.end(), 0.0);
    gb = 0;
    const double inv_n = 1.0 / double(rows.size());
    for (const auto& row : rows) {
        double z = b;
        for (int f : row.features) z += w[static_cast<std::size_t>(f)];
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double g = (p - row.y) * inv_n;
        gb += g;
        for (int f : row.features) gw[static_cast<std::size_t>(f)] += g;
    }
    for (std::size_t i = 0; i < w.size(); ++i) gw[i] += lambda * w[i];
}

// Full-batch gradient descent with backtracking; converges on the strictly
// convex L2 objective to gradient norm 1e-6.
void fit_logistic(const std::vector<SparseRow>& rows, double lambda, std::vector<double>& w,
                  double& b) {
    std::vector<double> gw(w.size(), 0.0);
    double gb = 0;
    double step = 1.0;
    double obj = logistic_objective(rows, w, b, lambda);
    for (int iter = 0; iter < 5000; ++iter) {
        logistic_gradient(rows, w, b, lambda, gw, gb);
        double gnorm2 = gb * gb;
        for (double g : gw) gnorm2 += g * g;
        if (std::sqrt(gnorm2) <= 1e-6) break;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            std::vector<double> w_new(w.size());
            for (std::size_t i = 0; i < w.size(); ++i) w_new[i] = w[i] - step * gw[i];
            const double b_new = b - step * gb;
            const double obj_new = logistic_objective(rows, w_new, b_new, lambda);
            if (obj_new <= obj - 1e-4 * step * gnorm2) {
                w = std::move(w_new);
                b = b_new;
                obj = obj_new;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // step underflow: at numerical optimum
    }
}

double holdout_logloss(const std::vector<SparseRow>& rows, const std::vector<double>& w,
                       double b) {
    return logistic_objective(rows, w, b, 0.0);
}

}  // namespace

double LogisticModel::predict(const Instance& inst) const {
    std::unordered_set<std::string> present;
    for (const auto& bag : inst.bags) present.insert(bag.begin(), bag.end());
    present.insert(inst.metadata.begin(), inst.metadata.end());
    double z = intercept;
    for (std::size_t f = 0; f < features.size(); ++f)
        if (present.count(features[f])) z += weights[f];
    return 1.0 / (1.0 + std::exp(-z));
}

LogisticFit train_logistic_baseline(const Dataset& ds, const std::string& target_label,
                                    std::span<const double> lambda_grid, std::uint64_t seed,
                                    int neg_ratio, int folds) {
    std::vector<std::size_t> positives, negatives;
    for (std::size_t i = 0; i < ds.size(); ++i)
        (ds[i].has_label(target_label) ? positives : negatives).push_back(i);
    if (positives.empty())
        throw TrainError("logistic baseline: no positives for '" + target_label + "'");
    if (lambda_grid.empty()) throw TrainError("logistic baseline: empty lambda grid");

    auto rng = make_rng(seed, "logistic/subsample/" + target_label);
    std::shuffle(negatives.begin(), negatives.end(), rng);
    const std::size_t keep = std::min(negatives.size(), positives.size() * std::size_t(neg_ratio));
    negatives.resize(keep);

    std::vector<std::size_t> selected = positives;
    selected.insert(selected.end(), negatives.begin(), negatives.end());
    std::sort(selected.begin(), selected.end());

    // indicator feature space from the subsampled training set
    std::set<std::string> feature_set;
    for (std::size_t i : selected) {
        for (const auto& bag : ds[i].bags) feature_set.insert(bag.begin(), bag.end());
        feature_set.insert(ds[i].metadata.begin(), ds[i].metadata.end());
    }
    std::vector<std::string> features(feature_set.begin(), feature_set.end());
    std::unordered_map<std::string, int> feature_index;
    for (std::size_t f = 0; f < features.size(); ++f)
        feature_index.emplace(features[f], static_cast<int>(f));

    std::vector<SparseRow> rows;
    rows.reserve(selected.size());
    for (std::size_t i : selected) {
        SparseRow row;
        std::set<int> fs;
        for (const auto& bag : ds[i].bags)
            for (const auto& feat : bag) fs.insert(feature_index.at(feat));
        for (const auto& feat : ds[i].metadata) fs.insert(feature_index.at(feat));
        row.features.assign(fs.begin(), fs.end());
        row.y = ds[i].has_label(target_label) ? 1.0 : 0.0;
        rows.push_back(std::move(row));
    }

    // k-fold assignment on a seeded shuffle of the subsampled rows
    std::vector<std::size_t> cv_order(rows.size());
    std::iota(cv_order.begin(), cv_order.end(), 0);
    auto cv_rng = make_rng(seed, "logistic/folds/" + target_label);
    std::shuffle(cv_order.begin(), cv_order.end(), cv_rng);
    std::vector<int> fold_of(rows.size());
    for (std::size_t r = 0; r < cv_order.size(); ++r)
        fold_of[cv_order[r]] = static_cast<int>(r % std::size_t(folds));

    LogisticFit fit;
    double best_loss = std::numeric_limits<double>::infinity();
    double best_lambda = lambda_grid[0];
    for (double lambda : lambda_grid) {
        double total = 0;
        int used_folds = 0;
        for (int k = 0; k < folds; ++k) {
            std::vector<SparseRow> train_rows, valid_rows;
            for (std::size_t r = 0; r < rows.size(); ++r)
                (fold_of[r] == k ? valid_rows : train_rows).push_back(rows[r]);
            if (train_rows.empty() || valid_rows.empty()) continue;
            std::vector<double> w(features.size(), 0.0);
            double b = 0;
            fit_logistic(train_rows, lambda, w, b);
            total += holdout_logloss(valid_rows, w, b);
            ++used_folds;
        }
        const double mean_loss = used_folds ? total / used_folds
                                            : std::numeric_limits<double>::infinity();
        fit.cv_loss.emplace_back(lambda, mean_loss);
        if (mean_loss < best_loss) {
            best_loss = mean_loss;
            best_lambda = lambda;
        }
    }

    std::vector<double> w(features.size(), 0.0);
    double b = 0;
    fit_logistic(rows, best_lambda, w, b);
    fit.model.target_label = target_label;
    fit.model.features = std::move(features);
    fit.model.weights = std::move(w);
    fit.model.intercept = b;
    fit.model.lambda = best_lambda;
    fit.n_positives = positives.size();
    fit.n_negatives = negatives.size();
    return fit;
}

}  // namespace ontosig
