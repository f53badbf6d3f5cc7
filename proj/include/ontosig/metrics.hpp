#pragma once
// Per-label AUROC / average precision, frequency-binned aggregates with
// bootstrap confidence intervals, and micro metrics over flattened pairs.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ontosig {

// Mann-Whitney AUROC with midrank tie handling. Empty class -> nullopt.
std::optional<double> auroc(std::span<const double> scores, std::span<const std::uint8_t> truths);

// Step-wise AP; equal scores enter the positive set together (threshold
// grouping), so the value is independent of within-tie order. No positives
// -> nullopt.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> truths);

struct ScoreMatrix {
    std::vector<std::string> instance_ids;
    std::vector<std::string> label_ids;
    std::vector<double> scores;        // row-major, instances x labels
    std::vector<std::uint8_t> truths;  // same shape

    std::size_t n_instances() const { return instance_ids.size(); }
    std::size_t n_labels() const { return label_ids.size(); }
    double score(std::size_t i, std::size_t l) const { return scores[i * n_labels() + l]; }
    std::uint8_t truth(std::size_t i, std::size_t l) const { return truths[i * n_labels() + l]; }
};

struct MicroMetrics {
    std::optional<double> auroc;
    std::optional<double> ap;
};
MicroMetrics micro_metrics(const ScoreMatrix& sm);

struct PerLabelStats {
    std::string label;
    std::optional<double> auroc;
    std::optional<double> ap;
    std::int64_t test_positives = 0;
    std::int64_t train_positives = 0;
};
std::vector<PerLabelStats> per_label_stats(
    const ScoreMatrix& sm, const std::unordered_map<std::string, std::int64_t>& train_counts);

struct FrequencyBin {
    std::int64_t lo = 0, hi = 0;  // inclusive train-positive-count range
    int n_labels = 0;             // labels with defined metrics
    std::optional<double> mean_auroc;
    std::optional<double> mean_ap;
    std::optional<double> auroc_ci_low, auroc_ci_high;
    std::optional<double> ap_ci_low, ap_ci_high;
};

// The fixed bin edges: 5-10, 11-25, 26-50, 51-100, 101-250, 251-500, 501-1000.
std::span<const std::pair<std::int64_t, std::int64_t>> frequency_bins();
int bin_of(std::int64_t train_positives);  // -1 when outside [5, 1000]

std::vector<FrequencyBin> bin_report(const std::vector<PerLabelStats>& per_label);

struct EvalReport {
    std::vector<PerLabelStats> per_label;
    std::vector<FrequencyBin> bins;
    MicroMetrics micro;
};

// Builds per-label stats, bin means and (when n_resamples > 0) bootstrap CIs
// over instance resamples for the bin means.
EvalReport evaluate(const ScoreMatrix& sm,
                    const std::unordered_map<std::string, std::int64_t>& train_counts,
                    int n_resamples = 500, double level = 0.95, std::uint64_t seed = 0);

struct BootstrapInterval {
    double low = 0, high = 0;
    bool unstable = false;  // statistic undefined on >10% of resamples
};
using MatrixStatistic = std::function<std::optional<double>(const ScoreMatrix&)>;
BootstrapInterval bootstrap_ci(const ScoreMatrix& sm, const MatrixStatistic& statistic,
                               int n_resamples = 500, double level = 0.95,
                               std::uint64_t seed = 0);

// report.json (machine readable) + report.csv (one row per bin x metric).
void emit_report(const EvalReport& report, const std::string& json_path,
                 const std::string& csv_path);
EvalReport read_report(const std::string& json_path);

}  // namespace ontosig
