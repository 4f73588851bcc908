#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "fedgram/error.hpp"
#include "fedgram/mathcore.hpp"

namespace fedgram {

using ClassId = std::size_t;

struct Sample {
    Vec features;
    ClassId label = 0;

    friend bool operator==(const Sample&, const Sample&) = default;
    friend auto operator<=>(const Sample&, const Sample&) = default;
};

/// Labelled samples with a fixed feature dimension and class count.
struct Dataset {
    std::vector<Sample> samples;
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    void validate() const {
        for (const auto& s : samples) {
            require(s.label < num_classes, "label out of range");
            require(s.features.size() == feature_dim, "feature dimension mismatch");
        }
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(num_classes, 0);
        for (const auto& s : samples) {
            ++counts[s.label];
        }
        return counts;
    }

    Dataset empty_like() const { return Dataset{{}, num_classes, feature_dim}; }
};

/// A client's private shard. Same shape as any other dataset.
using ClientDataset = Dataset;

/// Server-held probe set: at most one sample per class.
struct AuxiliaryDataset {
    std::map<ClassId, Vec> entries;
    std::size_t num_classes = 0;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
    double coverage() const {
        return num_classes == 0 ? 0.0 : static_cast<double>(entries.size()) / static_cast<double>(num_classes);
    }
};

}  // namespace fedgram
