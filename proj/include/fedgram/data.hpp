#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fedgram/dataset.hpp"
#include "fedgram/error.hpp"
#include "fedgram/mathcore.hpp"
#include "fedgram/rng.hpp"

namespace fedgram {

struct BlobsConfig {
    std::size_t num_classes = 10;
    std::size_t feature_dim = 20;
    std::size_t samples_per_class = 250;
    double radius = 5.0;
    double noise_sigma = 1.0;
};

struct TrainTest {
    Dataset train;
    Dataset test;
};

/// Gaussian class blobs around means drawn uniformly on a sphere.
///
/// Each class contributes round(0.2 * n) test samples and the rest to train,
/// so both splits are exactly stratified.
inline TrainTest make_blobs(const BlobsConfig& cfg, RngStream& rng) {
    require(cfg.num_classes >= 1 && cfg.feature_dim >= 1 && cfg.samples_per_class >= 1, "counts must be >= 1");
    require(cfg.radius > 0.0 && cfg.noise_sigma > 0.0, "radius and noise_sigma must be positive");

    TrainTest out;
    out.train = Dataset{{}, cfg.num_classes, cfg.feature_dim};
    out.test = Dataset{{}, cfg.num_classes, cfg.feature_dim};

    std::vector<Vec> means(cfg.num_classes, Vec(cfg.feature_dim));
    for (auto& m : means) {
        double n = 0.0;
        do {
            for (auto& x : m) {
                x = rng.normal();
            }
            n = norm(m);
        } while (n == 0.0);
        for (auto& x : m) {
            x *= cfg.radius / n;
        }
    }

    const auto n_test = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(cfg.samples_per_class)));
    for (ClassId c = 0; c < cfg.num_classes; ++c) {
        for (std::size_t i = 0; i < cfg.samples_per_class; ++i) {
            Sample s{Vec(cfg.feature_dim), c};
            for (std::size_t j = 0; j < cfg.feature_dim; ++j) {
                s.features[j] = means[c][j] + cfg.noise_sigma * rng.normal();
            }
            (i < n_test ? out.test : out.train).samples.push_back(std::move(s));
        }
    }
    return out;
}

/// Reads `d` comma-separated feature columns followed by an integer label per
/// row. Blank lines are skipped; row numbers in errors are 1-based.
inline Dataset load_csv(const std::string& path, std::size_t num_classes, std::size_t feature_dim) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open " + path);
    Dataset ds{{}, num_classes, feature_dim};
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        if (line.back() == ',') {
            fields.emplace_back();
        }
        const auto where = path + " row " + std::to_string(row);
        require(fields.size() == feature_dim + 1, where + ": expected " + std::to_string(feature_dim + 1) +
                                                      " columns, got " + std::to_string(fields.size()));
        Sample s{Vec(feature_dim), 0};
        try {
            for (std::size_t j = 0; j < feature_dim; ++j) {
                std::size_t used = 0;
                s.features[j] = std::stod(fields[j], &used);
                require(fields[j].find_first_not_of(" \t", used) == std::string::npos, "trailing characters");
                require(std::isfinite(s.features[j]), "non-finite feature");
            }
            std::size_t used = 0;
            const long long label = std::stoll(fields[feature_dim], &used);
            require(fields[feature_dim].find_first_not_of(" \t", used) == std::string::npos, "label is not an integer");
            require(label >= 0, "negative label");
            s.label = static_cast<ClassId>(label);
        } catch (const std::logic_error&) {
            throw Error(where + ": malformed number");
        } catch (const Error& e) {
            throw Error(where + ": " + e.what());
        }
        require(s.label < num_classes, where + ": label " + std::to_string(s.label) + " >= " +
                                           std::to_string(num_classes) + " classes");
        ds.samples.push_back(std::move(s));
    }
    require(!ds.empty(), "no samples in " + path);
    return ds;
}

struct PartitionConfig {
    std::size_t num_clients = 50;
    double beta = 1.0;
    std::size_t min_samples_per_client = 8;
};

/// Label-skewed split: each class's samples are divided among the clients in
/// proportions drawn from Dir(beta), then clients under the floor receive
/// samples from the currently largest client until every client meets it.
/// Every training sample ends up with exactly one client.
inline std::vector<ClientDataset> dirichlet_partition(const Dataset& train, const PartitionConfig& cfg,
                                                      RngStream& rng) {
    require(!train.empty(), "training set is empty");
    require(cfg.num_clients >= 1, "num_clients must be >= 1");
    require(cfg.beta > 0.0, "beta must be positive");
    require(cfg.num_clients * cfg.min_samples_per_client <= train.size(), "infeasible floor");

    const std::size_t n_clients = cfg.num_clients;
    std::vector<ClientDataset> clients(n_clients, train.empty_like());

    std::vector<std::vector<std::size_t>> by_class(train.num_classes);
    for (std::size_t i = 0; i < train.size(); ++i) {
        by_class[train.samples[i].label].push_back(i);
    }

    for (auto& members : by_class) {
        if (members.empty()) {
            continue;
        }
        rng.shuffle(members);
        const auto props = rng.dirichlet(cfg.beta, n_clients);
        // Split points at floor(cumulative proportion * class size).
        const double total = static_cast<double>(members.size());
        double cumulative = 0.0;
        std::size_t begin = 0;
        for (std::size_t c = 0; c < n_clients; ++c) {
            cumulative += props[c];
            std::size_t end = (c + 1 == n_clients)
                                  ? members.size()
                                  : std::min(members.size(), static_cast<std::size_t>(std::floor(cumulative * total)));
            end = std::max(end, begin);
            for (std::size_t i = begin; i < end; ++i) {
                clients[c].samples.push_back(train.samples[members[i]]);
            }
            begin = end;
        }
    }

    // Floor repair: round-robin over deficient clients, each time taking the
    // last sample of the largest client (lowest index on ties).
    for (;;) {
        bool moved = false;
        for (std::size_t c = 0; c < n_clients; ++c) {
            if (clients[c].size() >= cfg.min_samples_per_client) {
                continue;
            }
            std::size_t largest = 0;
            for (std::size_t j = 1; j < n_clients; ++j) {
                if (clients[j].size() > clients[largest].size()) {
                    largest = j;
                }
            }
            clients[c].samples.push_back(std::move(clients[largest].samples.back()));
            clients[largest].samples.pop_back();
            moved = true;
        }
        if (!moved) {
            break;
        }
    }
    return clients;
}

struct AuxiliarySplit {
    AuxiliaryDataset aux;
    Dataset remaining;
};

/// Picks ceil(coverage * K) distinct classes uniformly and one uniform sample
/// from each; those samples are removed from the returned remainder.
inline AuxiliarySplit build_auxiliary(const Dataset& train, double coverage, RngStream& rng) {
    require(coverage > 0.0 && coverage <= 1.0, "coverage must be in (0, 1]");
    const std::size_t k = train.num_classes;
    const std::size_t n_classes = std::max<std::size_t>(1, ceil_count(coverage, k));

    std::vector<ClassId> classes(k);
    for (ClassId c = 0; c < k; ++c) {
        classes[c] = c;
    }
    rng.shuffle(classes);
    classes.resize(n_classes);
    std::sort(classes.begin(), classes.end());

    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t i = 0; i < train.size(); ++i) {
        by_class[train.samples[i].label].push_back(i);
    }

    AuxiliarySplit out{AuxiliaryDataset{{}, k}, train.empty_like()};
    std::vector<bool> taken(train.size(), false);
    for (ClassId c : classes) {
        require(!by_class[c].empty(), "class " + std::to_string(c) + " has no samples for the auxiliary set");
        const auto pick = by_class[c][rng.below(by_class[c].size())];
        out.aux.entries.emplace(c, train.samples[pick].features);
        taken[pick] = true;
    }
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (!taken[i]) {
            out.remaining.samples.push_back(train.samples[i]);
        }
    }
    return out;
}

struct HeldOutSplit {
    Dataset held_out;
    Dataset remaining;
};

/// Class-balanced draw of `size` samples without replacement (classes take
/// turns; a class that runs dry is skipped). Used for the server's root and
/// validation data.
inline HeldOutSplit take_balanced(const Dataset& train, std::size_t size, RngStream& rng) {
    require(size <= train.size(), "held-out set larger than the training set");
    std::vector<std::vector<std::size_t>> by_class(train.num_classes);
    for (std::size_t i = 0; i < train.size(); ++i) {
        by_class[train.samples[i].label].push_back(i);
    }
    for (auto& members : by_class) {
        rng.shuffle(members);
    }
    std::vector<bool> taken(train.size(), false);
    HeldOutSplit out{train.empty_like(), train.empty_like()};
    std::size_t depth = 0;
    while (out.held_out.size() < size) {
        for (const auto& members : by_class) {
            if (depth < members.size() && out.held_out.size() < size) {
                taken[members[depth]] = true;
                out.held_out.samples.push_back(train.samples[members[depth]]);
            }
        }
        ++depth;
    }
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (!taken[i]) {
            out.remaining.samples.push_back(train.samples[i]);
        }
    }
    return out;
}

/// Label l becomes K - l - 1; features are untouched.
inline ClientDataset flip_labels_static(const ClientDataset& data) {
    ClientDataset out = data;
    for (auto& s : out.samples) {
        require(s.label < data.num_classes, "label out of range");
        s.label = data.num_classes - s.label - 1;
    }
    return out;
}

/// Shannon entropy (nats) of a dataset's label histogram.
inline double label_entropy(const Dataset& data) {
    if (data.empty()) {
        return 0.0;
    }
    double h = 0.0;
    const double n = static_cast<double>(data.size());
    for (auto count : data.class_counts()) {
        if (count > 0) {
            const double p = static_cast<double>(count) / n;
            h -= p * std::log(p);
        }
    }
    return h;
}

}  // namespace fedgram
