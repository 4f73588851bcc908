#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedgram/data.hpp"
#include "fedgram/dataset.hpp"
#include "fedgram/error.hpp"
#include "fedgram/mathcore.hpp"
#include "fedgram/model.hpp"
#include "fedgram/param_vector.hpp"
#include "fedgram/rng.hpp"

namespace fedgram {

enum class AttackKind {
    none,
    lie,
    fang,
    minmax,
    minsum,
    mpaf,
    label_flip,
    dynamic_label_flip,
    adaptive_uniformity,
};

inline constexpr std::string_view to_string(AttackKind k) {
    switch (k) {
        case AttackKind::none: return "none";
        case AttackKind::lie: return "lie";
        case AttackKind::fang: return "fang";
        case AttackKind::minmax: return "minmax";
        case AttackKind::minsum: return "minsum";
        case AttackKind::mpaf: return "mpaf";
        case AttackKind::label_flip: return "label_flip";
        case AttackKind::dynamic_label_flip: return "dynamic_label_flip";
        case AttackKind::adaptive_uniformity: return "adaptive_uniformity";
    }
    return "?";
}

inline std::optional<AttackKind> parse_attack_kind(std::string_view s) {
    for (auto k : {AttackKind::none, AttackKind::lie, AttackKind::fang, AttackKind::minmax, AttackKind::minsum,
                   AttackKind::mpaf, AttackKind::label_flip, AttackKind::dynamic_label_flip,
                   AttackKind::adaptive_uniformity}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

/// Crafted-vector attacks: malicious clients submit a vector computed from
/// what they observe rather than a trained model.
inline constexpr bool is_model_poisoning(AttackKind k) {
    return k == AttackKind::lie || k == AttackKind::fang || k == AttackKind::minmax || k == AttackKind::minsum ||
           k == AttackKind::mpaf;
}

inline constexpr bool is_data_poisoning(AttackKind k) {
    return k == AttackKind::label_flip || k == AttackKind::dynamic_label_flip;
}

/// What the coalition sees when crafting.
enum class AttackerKnowledge {
    /// The true benign submissions of the current round.
    full,
    /// Only the coalition's own models from an honest training run.
    coalition,
};

/// Right-hand side of the MinSum feasibility test.
enum class MinSumBound {
    /// max_i sum_j ||b_i - b_j||^2: the largest total squared distance of any
    /// benign update to the others.
    max_sum,
    /// max_{i,j} ||b_i - b_j||^2: the largest single pairwise squared distance.
    pairwise_max,
};

/// Which (n, m) pair feeds the LIE z_max computation.
enum class LiePopulation {
    /// n = all clients, m = all malicious clients.
    total,
    /// n = clients sampled this round, m = malicious among them.
    round,
};

struct AttackSpec {
    AttackKind kind = AttackKind::none;
    AttackerKnowledge knowledge = AttackerKnowledge::full;
    LiePopulation lie_population = LiePopulation::total;
    double fang_b = 2.0;
    double mpaf_lambda = 10.0;
    double gamma_hi = 100.0;
    double tau = 1e-3;
    MinSumBound minsum_bound = MinSumBound::max_sum;
    std::size_t surrogate_epochs = 5;
};

/// The coalition's observation for one round.
struct BenignView {
    std::vector<ParamVector> benign_models;
    ParamVector global_model;

    std::vector<Vec> updates() const {
        std::vector<Vec> out;
        out.reserve(benign_models.size());
        for (const auto& m : benign_models) {
            out.push_back(subtract(m.values(), global_model.values()));
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// LIE

/// z_max = Phi^-1((n - m - s) / (n - m)) with s = floor(n/2 + 1) - m.
inline double lie_z_max(std::size_t n, std::size_t m) {
    require(m >= 1 && n > m, "LIE requires n > m >= 1");
    const auto half = static_cast<long long>(n / 2 + 1);
    const long long s = half - static_cast<long long>(m);
    const double fraction = static_cast<double>(static_cast<long long>(n - m) - s) / static_cast<double>(n - m);
    require(fraction > 0.0 && fraction < 1.0, "LIE fraction degenerate");
    return std_normal_inverse_cdf(fraction);
}

/// Per coordinate: mean(benign) - z * std(benign), population std.
inline ParamVector lie_craft_with_z(const BenignView& view, double z) {
    require(!view.benign_models.empty(), "LIE needs at least one benign model");
    const auto models = values_of(view.benign_models);
    const Vec mu = mean(models);
    Vec out(mu.size());
    const double n = static_cast<double>(models.size());
    for (std::size_t j = 0; j < mu.size(); ++j) {
        double var = 0.0;
        for (const auto& m : models) {
            const double d = m[j] - mu[j];
            var += d * d;
        }
        out[j] = mu[j] - z * std::sqrt(var / n);
    }
    return view.benign_models.front().with_values(std::move(out));
}

inline ParamVector lie_craft(const BenignView& view, std::size_t n, std::size_t m) {
    return lie_craft_with_z(view, lie_z_max(n, m));
}

// ---------------------------------------------------------------------------
// Fang

/// Estimated change direction per coordinate: sign of the mean benign update
/// (a zero mean counts as +1).
inline std::vector<int> fang_directions(const BenignView& view) {
    require(!view.benign_models.empty(), "Fang needs at least one benign model");
    const Vec mu = mean(view.updates());
    std::vector<int> s(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) {
        s[j] = mu[j] < 0.0 ? -1 : 1;
    }
    return s;
}

/// Samples each coordinate uniformly from the interval that pushes against
/// the estimated direction, scaled by b from the benign extreme.
inline ParamVector fang_craft(const BenignView& view, std::span<const int> directions, double b, RngStream& rng) {
    require(!view.benign_models.empty(), "Fang needs at least one benign model");
    require(b > 1.0, "Fang b must exceed 1");
    const auto models = values_of(view.benign_models);
    const std::size_t d = models.front().size();
    require(directions.size() == d, "dimension mismatch");

    Vec out(d);
    for (std::size_t j = 0; j < d; ++j) {
        double w_max = models.front()[j];
        double w_min = w_max;
        for (const auto& m : models) {
            w_max = std::max(w_max, m[j]);
            w_min = std::min(w_min, m[j]);
        }
        double lo = 0.0;
        double hi = 0.0;
        if (directions[j] < 0) {
            if (w_max > 0.0) {
                lo = w_max;
                hi = b * w_max;
            } else {
                lo = w_max;
                hi = w_max / b;
            }
        } else {
            if (w_min > 0.0) {
                lo = w_min / b;
                hi = w_min;
            } else {
                lo = b * w_min;
                hi = w_min;
            }
        }
        out[j] = rng.uniform(lo, hi);
    }
    return view.benign_models.front().with_values(std::move(out));
}

// ---------------------------------------------------------------------------
// MinMax / MinSum

enum class DistanceVariant { minmax, minsum };

/// Feasibility of a candidate malicious update against the benign updates.
inline bool distance_constraint_holds(std::span<const Vec> benign, std::span<const double> candidate,
                                      DistanceVariant variant, MinSumBound bound = MinSumBound::max_sum) {
    const std::size_t n = benign.size();
    if (variant == DistanceVariant::minmax) {
        double max_pair = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                max_pair = std::max(max_pair, distance(benign[i], benign[j]));
            }
        }
        double worst = 0.0;
        for (const auto& b : benign) {
            worst = std::max(worst, distance(candidate, b));
        }
        return worst <= max_pair;
    }
    double rhs = 0.0;
    if (bound == MinSumBound::pairwise_max) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                rhs = std::max(rhs, squared_distance(benign[i], benign[j]));
            }
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row += squared_distance(benign[i], benign[j]);
            }
            rhs = std::max(rhs, row);
        }
    }
    double total = 0.0;
    for (const auto& b : benign) {
        total += squared_distance(candidate, b);
    }
    return total <= rhs;
}

struct DistanceAttackResult {
    ParamVector model;
    double gamma = 0.0;
};

/// Mean benign update pushed by gamma along the inverse unit direction, with
/// gamma the largest value (to within tau, searched by halving on
/// [0, gamma_hi]) that keeps the crafted update as close to the benign ones
/// as the benign ones are to each other.
inline DistanceAttackResult minmax_minsum_craft(const BenignView& view, DistanceVariant variant, double gamma_hi,
                                                double tau, MinSumBound bound = MinSumBound::max_sum) {
    require(view.benign_models.size() >= 2, "MinMax/MinSum need at least 2 benign models");
    require(gamma_hi > 0.0 && tau > 0.0, "gamma_hi and tau must be positive");
    const auto updates = view.updates();
    const Vec center = mean(updates);
    const double center_norm = norm(center);
    require(center_norm > 0.0, "undefined perturbation direction");
    const Vec perturbation = scaled(center, -1.0 / center_norm);

    auto craft = [&](double gamma) {
        Vec v = center;
        axpy(gamma, perturbation, v);
        return v;
    };
    auto feasible = [&](double gamma) {
        return distance_constraint_holds(updates, craft(gamma), variant, bound);
    };

    double lo = 0.0;
    double hi = gamma_hi;
    if (!feasible(lo)) {
        hi = 0.0;
    } else if (feasible(hi)) {
        lo = hi;
    }
    while (hi - lo > tau) {
        const double mid = 0.5 * (lo + hi);
        if (feasible(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Vec update = craft(lo);
    axpy(1.0, view.global_model.values(), update);
    return {view.global_model.with_values(std::move(update)), lo};
}

// ---------------------------------------------------------------------------
// MPAF

/// global + lambda * (baseline - global).
inline ParamVector mpaf_craft(const ParamVector& global, const ParamVector& baseline, double lambda) {
    require(lambda > 0.0, "MPAF lambda must be positive");
    require(global.size() == baseline.size(), "dimension mismatch");
    Vec out = global.values();
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] += lambda * (baseline[j] - global[j]);
    }
    return global.with_values(std::move(out));
}

// ---------------------------------------------------------------------------
// Data-side attacks

/// Trains a fresh surrogate on the clean shard, then relabels every sample to
/// the class the surrogate finds least probable (lowest index on ties).
inline ClientDataset dynamic_flip(const ClientDataset& data, const MlpArch& arch, std::size_t surrogate_epochs,
                                  double lr, std::size_t batch_size, RngStream& rng) {
    require(!data.empty(), "client has no data");
    MlpModel surrogate = MlpModel::initialize(arch, rng);
    if (surrogate_epochs > 0) {
        const std::size_t batch = std::min(batch_size, data.size());
        const std::size_t steps_per_epoch = (data.size() + batch - 1) / batch;
        TrainOptions opts{surrogate_epochs * steps_per_epoch, lr, batch, LossKind::cross_entropy};
        surrogate = sgd_local_train(surrogate, data, opts, rng).model;
    }
    ClientDataset out = data;
    for (auto& s : out.samples) {
        const auto logits = forward_logits(surrogate, s.features);
        s.label = static_cast<ClassId>(std::min_element(logits.begin(), logits.end()) - logits.begin());
    }
    return out;
}

/// Local training with the uniformity objective in place of cross-entropy.
inline ParamVector adaptive_submit(const MlpModel& global, const ClientDataset& data, TrainOptions opts,
                                   RngStream& rng) {
    opts.loss = LossKind::uniformity;
    return sgd_local_train(global, data, opts, rng).model.params;
}

}  // namespace fedgram
