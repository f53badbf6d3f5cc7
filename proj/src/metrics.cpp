#include "ontosig/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "ontosig/rng.hpp"

namespace ontosig {

using nlohmann::json;

std::optional<double> auroc(std::span<const double> scores, std::span<const std::uint8_t> truths) {
    if (scores.size() != truths.size()) throw std::invalid_argument("auroc: shape mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (auto t : truths) n_pos += t ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks over tie groups
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (truths[order[k]]) pos_rank_sum += midrank;
        i = j;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> truths) {
    if (scores.size() != truths.size())
        throw std::invalid_argument("average_precision: shape mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (auto t : truths) n_pos += t ? 1 : 0;
    if (n_pos == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, seen = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::size_t group_tp = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (truths[order[j]]) ++group_tp;
            ++j;
        }
        tp += group_tp;
        seen += j - i;
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

MicroMetrics micro_metrics(const ScoreMatrix& sm) {
    MicroMetrics micro;
    micro.auroc = auroc(sm.scores, sm.truths);
    micro.ap = average_precision(sm.scores, sm.truths);
    return micro;
}

std::vector<PerLabelStats> per_label_stats(
    const ScoreMatrix& sm, const std::unordered_map<std::string, std::int64_t>& train_counts) {
    const std::size_t n_labels = sm.n_labels();
    const std::size_t n_inst = sm.n_instances();
    std::vector<PerLabelStats> out(n_labels);
    std::vector<double> col_scores(n_inst);
    std::vector<std::uint8_t> col_truths(n_inst);
    for (std::size_t l = 0; l < n_labels; ++l) {
        for (std::size_t i = 0; i < n_inst; ++i) {
            col_scores[i] = sm.score(i, l);
            col_truths[i] = sm.truth(i, l);
        }
        PerLabelStats& s = out[l];
        s.label = sm.label_ids[l];
        s.auroc = auroc(col_scores, col_truths);
        s.ap = average_precision(col_scores, col_truths);
        s.test_positives = std::count(col_truths.begin(), col_truths.end(), std::uint8_t(1));
        auto it = train_counts.find(s.label);
        s.train_positives = it == train_counts.end() ? 0 : it->second;
    }
    return out;
}

namespace {
constexpr std::array<std::pair<std::int64_t, std::int64_t>, 7> kBins{{
    {5, 10}, {11, 25}, {26, 50}, {51, 100}, {101, 250}, {251, 500}, {501, 1000}}};

// no gaps or overlaps across [5, 1000]
static_assert([] {
    for (std::size_t i = 0; i + 1 < kBins.size(); ++i)
        if (kBins[i + 1].first != kBins[i].second + 1) return false;
    return kBins.front().first == 5 && kBins.back().second == 1000;
}());

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.empty()) return std::nan("");
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}
}  // namespace

std::span<const std::pair<std::int64_t, std::int64_t>> frequency_bins() { return kBins; }

int bin_of(std::int64_t train_positives) {
    for (std::size_t b = 0; b < kBins.size(); ++b)
        if (train_positives >= kBins[b].first && train_positives <= kBins[b].second)
            return static_cast<int>(b);
    return -1;
}

std::vector<FrequencyBin> bin_report(const std::vector<PerLabelStats>& per_label) {
    std::vector<FrequencyBin> bins(kBins.size());
    std::vector<double> auroc_sum(kBins.size(), 0.0), ap_sum(kBins.size(), 0.0);
    std::vector<int> auroc_n(kBins.size(), 0), ap_n(kBins.size(), 0), label_n(kBins.size(), 0);
    for (const auto& s : per_label) {
        int b = bin_of(s.train_positives);
        if (b < 0) continue;
        bool defined = false;
        if (s.auroc) {
            auroc_sum[static_cast<std::size_t>(b)] += *s.auroc;
            ++auroc_n[static_cast<std::size_t>(b)];
            defined = true;
        }
        if (s.ap) {
            ap_sum[static_cast<std::size_t>(b)] += *s.ap;
            ++ap_n[static_cast<std::size_t>(b)];
            defined = true;
        }
        if (defined) ++label_n[static_cast<std::size_t>(b)];
    }
    for (std::size_t b = 0; b < kBins.size(); ++b) {
        bins[b].lo = kBins[b].first;
        bins[b].hi = kBins[b].second;
        bins[b].n_labels = label_n[b];
        if (auroc_n[b] > 0) bins[b].mean_auroc = auroc_sum[b] / auroc_n[b];
        if (ap_n[b] > 0) bins[b].mean_ap = ap_sum[b] / ap_n[b];
    }
    return bins;
}

BootstrapInterval bootstrap_ci(const ScoreMatrix& sm, const MatrixStatistic& statistic,
                               int n_resamples, double level, std::uint64_t seed) {
    const std::size_t n = sm.n_instances();
    auto rng = make_rng(seed, "bootstrap");
    std::uniform_int_distribution<std::size_t> pick(0, n == 0 ? 0 : n - 1);

    std::vector<double> values;
    int undefined = 0;
    ScoreMatrix resampled;
    resampled.label_ids = sm.label_ids;
    for (int r = 0; r < n_resamples; ++r) {
        resampled.instance_ids.clear();
        resampled.scores.clear();
        resampled.truths.clear();
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t src = pick(rng);
            resampled.instance_ids.push_back(sm.instance_ids[src]);
            const std::size_t base = src * sm.n_labels();
            resampled.scores.insert(resampled.scores.end(), sm.scores.begin() + base,
                                    sm.scores.begin() + base + sm.n_labels());
            resampled.truths.insert(resampled.truths.end(), sm.truths.begin() + base,
                                    sm.truths.begin() + base + sm.n_labels());
        }
        auto v = statistic(resampled);
        if (v)
            values.push_back(*v);
        else
            ++undefined;
    }
    BootstrapInterval ci;
    ci.unstable = n_resamples > 0 && undefined * 10 > n_resamples;
    if (!values.empty()) {
        const double alpha = 1.0 - level;
        ci.low = quantile(values, alpha / 2.0);
        ci.high = quantile(values, 1.0 - alpha / 2.0);
    }
    return ci;
}

EvalReport evaluate(const ScoreMatrix& sm,
                    const std::unordered_map<std::string, std::int64_t>& train_counts,
                    int n_resamples, double level, std::uint64_t seed) {
    EvalReport report;
    report.per_label = per_label_stats(sm, train_counts);
    report.bins = bin_report(report.per_label);
    report.micro = micro_metrics(sm);
    if (n_resamples <= 0) return report;

    // shared resamples across all bins: one pass of per-label stats each
    const std::size_t n = sm.n_instances();
    auto rng = make_rng(seed, "bootstrap");
    std::uniform_int_distribution<std::size_t> pick(0, n == 0 ? 0 : n - 1);
    std::vector<std::vector<double>> auroc_dist(kBins.size()), ap_dist(kBins.size());
    ScoreMatrix resampled;
    resampled.label_ids = sm.label_ids;
    for (int r = 0; r < n_resamples; ++r) {
        resampled.instance_ids.clear();
        resampled.scores.clear();
        resampled.truths.clear();
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t src = pick(rng);
            resampled.instance_ids.push_back(sm.instance_ids[src]);
            const std::size_t base = src * sm.n_labels();
            resampled.scores.insert(resampled.scores.end(), sm.scores.begin() + base,
                                    sm.scores.begin() + base + sm.n_labels());
            resampled.truths.insert(resampled.truths.end(), sm.truths.begin() + base,
                                    sm.truths.begin() + base + sm.n_labels());
        }
        auto stats = per_label_stats(resampled, train_counts);
        auto bins = bin_report(stats);
        for (std::size_t b = 0; b < kBins.size(); ++b) {
            if (bins[b].mean_auroc) auroc_dist[b].push_back(*bins[b].mean_auroc);
            if (bins[b].mean_ap) ap_dist[b].push_back(*bins[b].mean_ap);
        }
    }
    const double alpha = 1.0 - level;
    for (std::size_t b = 0; b < kBins.size(); ++b) {
        if (!auroc_dist[b].empty()) {
            report.bins[b].auroc_ci_low = quantile(auroc_dist[b], alpha / 2.0);
            report.bins[b].auroc_ci_high = quantile(auroc_dist[b], 1.0 - alpha / 2.0);
        }
        if (!ap_dist[b].empty()) {
            report.bins[b].ap_ci_low = quantile(ap_dist[b], alpha / 2.0);
            report.bins[b].ap_ci_high = quantile(ap_dist[b], 1.0 - alpha / 2.0);
        }
    }
    return report;
}

namespace {
json opt_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}
std::optional<double> json_to_opt(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}
std::string opt_to_csv(const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string("NA");
}
}  // namespace

void emit_report(const EvalReport& report, const std::string& json_path,
                 const std::string& csv_path) {
    json j;
    j["micro"] = {{"auroc", opt_to_json(report.micro.auroc)}, {"ap", opt_to_json(report.micro.ap)}};
    j["per_label"] = json::array();
    for (const auto& s : report.per_label)
        j["per_label"].push_back({{"label", s.label},
                                  {"auroc", opt_to_json(s.auroc)},
                                  {"ap", opt_to_json(s.ap)},
                                  {"test_positives", s.test_positives},
                                  {"train_positives", s.train_positives}});
    j["bins"] = json::array();
    for (const auto& b : report.bins)
        j["bins"].push_back({{"lo", b.lo},
                             {"hi", b.hi},
                             {"n_labels", b.n_labels},
                             {"mean_auroc", opt_to_json(b.mean_auroc)},
                             {"mean_ap", opt_to_json(b.mean_ap)},
                             {"auroc_ci_low", opt_to_json(b.auroc_ci_low)},
                             {"auroc_ci_high", opt_to_json(b.auroc_ci_high)},
                             {"ap_ci_low", opt_to_json(b.ap_ci_low)},
                             {"ap_ci_high", opt_to_json(b.ap_ci_high)}});
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + json_path + "' for writing");
    out << j.dump(2) << '\n';

    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot open '" + csv_path + "' for writing");
    csv << "bin_lo,bin_hi,metric,n_labels,mean,ci_low,ci_high\n";
    for (const auto& b : report.bins) {
        csv << b.lo << ',' << b.hi << ",auroc," << b.n_labels << ',' << opt_to_csv(b.mean_auroc)
            << ',' << opt_to_csv(b.auroc_ci_low) << ',' << opt_to_csv(b.auroc_ci_high) << '\n';
        csv << b.lo << ',' << b.hi << ",ap," << b.n_labels << ',' << opt_to_csv(b.mean_ap) << ','
            << opt_to_csv(b.ap_ci_low) << ',' << opt_to_csv(b.ap_ci_high) << '\n';
    }
}

EvalReport read_report(const std::string& json_path) {
    std::ifstream in(json_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + json_path + "'");
    json j;
    in >> j;
    EvalReport report;
    report.micro.auroc = json_to_opt(j.at("micro").at("auroc"));
    report.micro.ap = json_to_opt(j.at("micro").at("ap"));
    for (const auto& e : j.at("per_label")) {
        PerLabelStats s;
        s.label = e.at("label").get<std::string>();
        s.auroc = json_to_opt(e.at("auroc"));
        s.ap = json_to_opt(e.at("ap"));
        s.test_positives = e.at("test_positives").get<std::int64_t>();
        s.train_positives = e.at("train_positives").get<std::int64_t>();
        report.per_label.push_back(std::move(s));
    }
    for (const auto& e : j.at("bins")) {
        FrequencyBin b;
        b.lo = e.at("lo").get<std::int64_t>();
        b.hi = e.at("hi").get<std::int64_t>();
        b.n_labels = e.at("n_labels").get<int>();
        b.mean_auroc = json_to_opt(e.at("mean_auroc"));
        b.mean_ap = json_to_opt(e.at("mean_ap"));
        b.auroc_ci_low = json_to_opt(e.at("auroc_ci_low"));
        b.auroc_ci_high = json_to_opt(e.at("auroc_ci_high"));
        b.ap_ci_low = json_to_opt(e.at("ap_ci_low"));
        b.ap_ci_high = json_to_opt(e.at("ap_ci_high"));
        report.bins.push_back(b);
    }
    return report;
}

}  // namespace ontosig
