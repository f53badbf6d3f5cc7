#pragma once
// Sparse multi-bag instances, rollup expansion, label dictionaries, and the
// line-delimited dataset format (one JSON object per line).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "ontosig/ontology.hpp"

namespace ontosig {

struct Instance {
    std::string id;
    std::vector<std::vector<std::string>> bags;  // ordered time bins; multisets
    std::vector<std::string> metadata;           // metadata bag
    std::vector<std::string> labels;             // sorted, unique

    bool has_label(const std::string& label) const;
};

using Dataset = std::vector<Instance>;

class DatasetError : public std::runtime_error {
public:
    explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

struct LabelDict {
    std::vector<std::string> targets;       // predicted labels, ordered
    std::vector<std::string> conditionals;  // targets first, then extra ancestors
    std::unordered_map<std::string, std::int64_t> positive_counts;

    std::int64_t count(const std::string& label) const {
        auto it = positive_counts.find(label);
        return it == positive_counts.end() ? 0 : it->second;
    }
};

// Adds, per bag, one feature per ancestor of every mapped feature's label.
// Original features are kept; added ancestors are deduplicated per bag.
Instance rollup_expand(const Instance& inst, const Ontology& ont,
                       const std::unordered_map<std::string, std::string>& code_to_label);

// targets = labels seen >= min_count times; with closure, conditionals also
// pull in every ancestor of a target (counted even when below min_count).
LabelDict build_label_dictionary(const Dataset& train, const Ontology& ont, int min_count,
                                 bool closure);

void write_dataset(const Dataset& ds, const std::string& path);
void write_dataset(const Dataset& ds, std::ostream& out);
// ont, when given, validates that every instance label is an ontology node.
Dataset read_dataset(const std::string& path, const Ontology* ont = nullptr);
Dataset read_dataset(std::istream& in, const Ontology* ont = nullptr);

void write_label_counts(const LabelDict& dict, const std::string& path);
LabelDict read_label_counts(const std::string& path);

}  // namespace ontosig
