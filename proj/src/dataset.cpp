#include "ontosig/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ontosig {

using nlohmann::json;

bool Instance::has_label(const std::string& label) const {
    return std::binary_search(labels.begin(), labels.end(), label);
}

Instance rollup_expand(const Instance& inst, const Ontology& ont,
                       const std::unordered_map<std::string, std::string>& code_to_label) {
    Instance out = inst;
    for (auto& bag : out.bags) {
        std::vector<std::string> added;
        for (const auto& feature : bag) {
            auto it = code_to_label.find(feature);
            if (it == code_to_label.end()) continue;
            if (!ont.contains(it->second))
                throw DatasetError("rollup: mapped label '" + it->second +
                                   "' is not an ontology node");
            for (int a : ont.ancestors(ont.index_of(it->second)))
                added.push_back(ont.name(a));
        }
        std::sort(added.begin(), added.end());
        added.erase(std::unique(added.begin(), added.end()), added.end());
        // keep only ancestors not already present in the bag
        for (const auto& a : added)
            if (std::find(bag.begin(), bag.end(), a) == bag.end()) bag.push_back(a);
    }
    return out;
}

LabelDict build_label_dictionary(const Dataset& train, const Ontology& ont, int min_count,
                                 bool closure) {
    std::unordered_map<std::string, std::int64_t> counts;
    for (const auto& inst : train)
        for (const auto& label : inst.labels) ++counts[label];

    LabelDict dict;
    // deterministic order: sorted label names
    std::vector<std::string> observed;
    observed.reserve(counts.size());
    for (const auto& [label, c] : counts) observed.push_back(label);
    std::sort(observed.begin(), observed.end());

    for (const auto& label : observed)
        if (counts[label] >= min_count) dict.targets.push_back(label);

    dict.conditionals = dict.targets;
    if (closure) {
        std::vector<std::string> extra;
        std::unordered_map<std::string, bool> is_target;
        for (const auto& t : dict.targets) is_target.emplace(t, true);
        for (const auto& t : dict.targets) {
            if (!ont.contains(t)) continue;
            for (int a : ont.ancestors(ont.index_of(t))) {
                const std::string& name = ont.name(a);
                if (!is_target.count(name)) extra.push_back(name);
            }
        }
        std::sort(extra.begin(), extra.end());
        extra.erase(std::unique(extra.begin(), extra.end()), extra.end());
        dict.conditionals.insert(dict.conditionals.end(), extra.begin(), extra.end());
    }
    for (const auto& label : dict.conditionals) dict.positive_counts[label] = counts[label];
    return dict;
}

void write_dataset(const Dataset& ds, std::ostream& out) {
    for (const auto& inst : ds) {
        json j;
        j["id"] = inst.id;
        j["bags"] = inst.bags;
        j["metadata"] = inst.metadata;
        j["labels"] = inst.labels;
        out << j.dump() << '\n';
    }
}

void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot open '" + path + "' for writing");
    write_dataset(ds, out);
}

Dataset read_dataset(std::istream& in, const Ontology* ont) {
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DatasetError("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("bags"))
            throw DatasetError("dataset line " + std::to_string(lineno) + ": missing 'bags' field");
        Instance inst;
        try {
            inst.id = j.value("id", "");
            inst.bags = j.at("bags").get<std::vector<std::vector<std::string>>>();
            inst.metadata = j.value("metadata", std::vector<std::string>{});
            inst.labels = j.value("labels", std::vector<std::string>{});
        } catch (const json::exception& e) {
            throw DatasetError("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
        if (inst.bags.empty())
            throw DatasetError("dataset line " + std::to_string(lineno) + ": needs at least one bag");
        std::sort(inst.labels.begin(), inst.labels.end());
        inst.labels.erase(std::unique(inst.labels.begin(), inst.labels.end()), inst.labels.end());
        if (ont != nullptr)
            for (const auto& label : inst.labels)
                if (!ont->contains(label))
                    throw DatasetError("dataset line " + std::to_string(lineno) +
                                       ": unknown label '" + label + "'");
        ds.push_back(std::move(inst));
    }
    return ds;
}

Dataset read_dataset(const std::string& path, const Ontology* ont) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open '" + path + "'");
    return read_dataset(in, ont);
}

void write_label_counts(const LabelDict& dict, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot open '" + path + "' for writing");
    std::unordered_map<std::string, bool> is_target;
    for (const auto& t : dict.targets) is_target.emplace(t, true);
    for (const auto& label : dict.conditionals)
        out << label << '\t' << dict.count(label) << '\t'
            << (is_target.count(label) ? "target" : "ancestor") << '\n';
}

LabelDict read_label_counts(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open '" + path + "'");
    LabelDict dict;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string label, role;
        std::int64_t count = 0;
        if (!(ss >> label >> count >> role) || (role != "target" && role != "ancestor"))
            throw DatasetError("label counts line " + std::to_string(lineno) + ": malformed record");
        dict.conditionals.push_back(label);
        if (role == "target") dict.targets.push_back(label);
        dict.positive_counts[label] = count;
    }
    return dict;
}

}  // namespace ontosig
