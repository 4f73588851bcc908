#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedgram/dataset.hpp"
#include "fedgram/error.hpp"
#include "fedgram/mathcore.hpp"
#include "fedgram/model.hpp"
#include "fedgram/param_vector.hpp"
#include "fedgram/rng.hpp"

namespace fedgram {

using ClientId = std::size_t;

/// One client's submission. `is_malicious` is ground truth for metrics and is
/// never read by any aggregation rule.
struct ClientUpdate {
    ClientId client_id = 0;
    ParamVector model;
    bool is_malicious = false;
};

struct GramScore {
    ClientId client_id = 0;
    double score = 0.0;
    /// An auxiliary embedding was all-zero; score was pinned to the upper bound.
    bool degenerate = false;
};

struct AggregationAudit {
    std::vector<ClientId> kept_ids;
    std::vector<ClientId> removed_ids;
    std::vector<std::pair<ClientId, double>> scores;
    std::vector<std::string> notes;
};

struct AggregateResult {
    ParamVector model;
    AggregationAudit audit;
};

namespace detail {

/// Submissions sorted by client id, after checking ids are unique and shapes agree.
inline std::vector<const ClientUpdate*> canonical(std::span<const ClientUpdate> updates) {
    require(!updates.empty(), "no client updates");
    std::vector<const ClientUpdate*> out;
    out.reserve(updates.size());
    for (const auto& u : updates) {
        require(u.model.size() == updates.front().model.size(), "client model dimension mismatch");
        out.push_back(&u);
    }
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->client_id < b->client_id; });
    for (std::size_t i = 1; i < out.size(); ++i) {
        require(out[i]->client_id != out[i - 1]->client_id, "duplicate client id");
    }
    return out;
}

inline std::vector<Vec> models_of(const std::vector<const ClientUpdate*>& ordered) {
    std::vector<Vec> out;
    out.reserve(ordered.size());
    for (const auto* u : ordered) {
        out.push_back(u->model.values());
    }
    return out;
}

inline std::vector<Vec> updates_of(const std::vector<const ClientUpdate*>& ordered, const ParamVector& global) {
    std::vector<Vec> out;
    out.reserve(ordered.size());
    for (const auto* u : ordered) {
        require(u->model.size() == global.size(), "client model dimension does not match global");
        out.push_back(subtract(u->model.values(), global.values()));
    }
    return out;
}

inline std::vector<ClientId> ids_of(const std::vector<const ClientUpdate*>& ordered) {
    std::vector<ClientId> out;
    for (const auto* u : ordered) {
        out.push_back(u->client_id);
    }
    return out;
}

/// Splits ordered ids into kept/removed given a removal mask.
inline void fill_partition(AggregationAudit& audit, const std::vector<const ClientUpdate*>& ordered,
                           const std::vector<bool>& removed) {
    audit.kept_ids.clear();
    audit.removed_ids.clear();
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        (removed[i] ? audit.removed_ids : audit.kept_ids).push_back(ordered[i]->client_id);
    }
}

/// Vector scaled down to norm at most `bound` (unchanged if already inside).
inline Vec clip_to_norm(Vec v, double bound) {
    const double n = norm(v);
    if (n > bound && n > 0.0) {
        const double factor = bound / n;
        for (auto& x : v) {
            x *= factor;
        }
    }
    return v;
}

/// Indices of the `count` highest scores, ties resolved toward the lower index
/// (callers pass ids in ascending order, so lower index == lower client id).
inline std::vector<bool> top_by_score(std::span<const double> scores, std::size_t count) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return total_greater(scores[a], scores[b]); });
    std::vector<bool> mask(scores.size(), false);
    for (std::size_t i = 0; i < count && i < order.size(); ++i) {
        mask[order[i]] = true;
    }
    return mask;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// FedGraM

/// Frobenius norm of the Gram matrix of row-normalized auxiliary embeddings.
///
/// Rows follow the auxiliary classes in increasing class order. Lies in
/// [sqrt(K), K] for K auxiliary samples. A zero embedding row makes the
/// cosine undefined; such a model, like one with non-finite embeddings, is
/// scored at the upper bound K.
inline GramScore gram_score(const MlpModel& model, const AuxiliaryDataset& aux, ClientId id = 0) {
    require(!aux.empty(), "auxiliary dataset is empty");
    Matrix p(aux.size(), model.arch.embedding_dim);
    std::size_t r = 0;
    for (const auto& [cls, x] : aux.entries) {
        const auto emb = forward_embed(model, x);
        std::copy(emb.begin(), emb.end(), p.row(r).begin());
        ++r;
    }
    const double upper = static_cast<double>(aux.size());
    if (!all_finite(p.data())) {
        return {id, upper, true};
    }
    try {
        const Matrix g = gram(normalize_rows(p));
        const double score = frobenius_norm(g);
        return std::isfinite(score) ? GramScore{id, score, false} : GramScore{id, upper, true};
    } catch (const Error&) {
        return {id, upper, true};
    }
}

enum class PostFilter { avg, trimmed_mean };

/// Scores every submission, drops the ceil(C * n) highest (lower client id
/// first among ties), and aggregates the survivors by plain mean or by a
/// coordinate-wise trimmed mean with k = floor(ceil(C * survivors) / 2).
inline AggregateResult fedgram_aggregate(const MlpModel& global, std::span<const ClientUpdate> updates,
                                         const AuxiliaryDataset& aux, double filter_fraction,
                                         PostFilter then = PostFilter::avg,
                                         std::vector<GramScore>* scores_out = nullptr) {
    require(filter_fraction > 0.0 && filter_fraction < 1.0, "filter fraction must be in (0, 1)");
    const auto ordered = detail::canonical(updates);
    const std::size_t n = ordered.size();
    const std::size_t remove = ceil_count(filter_fraction, n);
    require(remove < n, "filter removes everything");

    AggregateResult out;
    std::vector<double> scores(n);
    std::vector<GramScore> gram_scores;
    for (std::size_t i = 0; i < n; ++i) {
        const auto gs = gram_score(global.with_params(ordered[i]->model), aux, ordered[i]->client_id);
        scores[i] = gs.score;
        out.audit.scores.emplace_back(gs.client_id, gs.score);
        if (gs.degenerate) {
            out.audit.notes.push_back("client " + std::to_string(gs.client_id) +
                                      ": zero or non-finite auxiliary embedding, scored at upper bound");
        }
        gram_scores.push_back(gs);
    }
    const auto removed = detail::top_by_score(scores, remove);
    detail::fill_partition(out.audit, ordered, removed);

    std::vector<Vec> survivors;
    for (std::size_t i = 0; i < n; ++i) {
        if (!removed[i]) {
            survivors.push_back(ordered[i]->model.values());
        }
    }
    Vec aggregated;
    if (then == PostFilter::avg) {
        aggregated = mean(survivors);
    } else {
        const std::size_t k = ceil_count(filter_fraction, survivors.size()) / 2;
        aggregated = coordinate_trimmed_mean(survivors, k);
    }
    out.model = global.params.with_values(std::move(aggregated));
    if (scores_out != nullptr) {
        *scores_out = std::move(gram_scores);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Baselines

inline ParamVector fedavg(std::span<const ClientUpdate> updates) {
    const auto ordered = detail::canonical(updates);
    return ordered.front()->model.with_values(mean(detail::models_of(ordered)));
}

inline ParamVector trimmed_mean_aggregate(std::span<const ClientUpdate> updates, std::size_t k) {
    const auto ordered = detail::canonical(updates);
    return ordered.front()->model.with_values(coordinate_trimmed_mean(detail::models_of(ordered), k));
}

inline ParamVector median_aggregate(std::span<const ClientUpdate> updates) {
    const auto ordered = detail::canonical(updates);
    return ordered.front()->model.with_values(coordinate_median(detail::models_of(ordered)));
}

/// global + mean of the updates, each clipped to Euclidean norm p.
inline ParamVector norm_bound_aggregate(const ParamVector& global, std::span<const ClientUpdate> updates,
                                        double p) {
    require(p > 0.0, "norm bound must be positive");
    const auto ordered = detail::canonical(updates);
    auto deltas = detail::updates_of(ordered, global);
    for (auto& d : deltas) {
        d = detail::clip_to_norm(std::move(d), p);
    }
    return global.with_values(add(global.values(), mean(deltas)));
}

enum class CrflClip {
    /// Clip the aggregate update (mean - global).
    update,
    /// Clip the averaged parameters themselves.
    parameters,
};

/// Mean of the models, norm-clipped to rho, plus N(0, sigma^2) per coordinate.
inline ParamVector crfl_aggregate(const ParamVector& global, std::span<const ClientUpdate> updates, double rho,
                                  double sigma, RngStream& rng, CrflClip clip = CrflClip::update) {
    require(rho > 0.0, "CRFL rho must be positive");
    require(sigma >= 0.0, "CRFL sigma must be non-negative");
    const auto ordered = detail::canonical(updates);
    Vec w = mean(detail::models_of(ordered));
    if (clip == CrflClip::update) {
        w = add(global.values(), detail::clip_to_norm(subtract(w, global.values()), rho));
    } else {
        w = detail::clip_to_norm(std::move(w), rho);
    }
    if (sigma > 0.0) {
        for (auto& x : w) {
            x += sigma * rng.normal();
        }
    }
    return global.with_values(std::move(w));
}

/// Krum score of every vector: sum of squared distances to its `neighbors`
/// nearest other vectors.
inline std::vector<double> krum_scores(std::span<const Vec> vectors, std::size_t neighbors) {
    const std::size_t n = vectors.size();
    std::vector<double> d2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            d2[i * n + j] = d2[j * n + i] = squared_distance(vectors[i], vectors[j]);
        }
    }
    std::vector<double> scores(n, 0.0);
    Vec row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                row.push_back(d2[i * n + j]);
            }
        }
        std::sort(row.begin(), row.end(), total_less);
        const std::size_t count = std::min(neighbors, row.size());
        for (std::size_t k = 0; k < count; ++k) {
            scores[i] += row[k];
        }
    }
    return scores;
}

/// (Multi-)Krum: average of the `multi` lowest-scoring submissions, where a
/// score sums squared distances to the n - f - 2 nearest neighbours.
inline AggregateResult krum_select(std::span<const ClientUpdate> updates, std::size_t f, std::size_t multi = 1) {
    const auto ordered = detail::canonical(updates);
    const std::size_t n = ordered.size();
    require(n >= f + 3, "Krum requires n >= f + 3");
    require(multi >= 1 && multi <= n, "Krum selection count must be in [1, n]");
    const auto models = detail::models_of(ordered);
    const auto scores = krum_scores(models, n - f - 2);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return total_less(scores[a], scores[b]); });
    std::vector<bool> removed(n, true);
    std::vector<Vec> chosen;
    for (std::size_t i = 0; i < multi; ++i) {
        removed[order[i]] = false;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!removed[i]) {
            chosen.push_back(models[i]);
        }
    }
    AggregateResult out;
    for (std::size_t i = 0; i < n; ++i) {
        out.audit.scores.emplace_back(ordered[i]->client_id, scores[i]);
    }
    detail::fill_partition(out.audit, ordered, removed);
    out.model = ordered.front()->model.with_values(mean(chosen));
    return out;
}

/// Bulyan: pick theta = n - 2f submissions by repeated Krum, then per
/// coordinate average the beta = theta - 2f picked values closest to the
/// coordinate median of the picks.
///
/// Later Krum rounds run on a shrinking pool; their neighbour count is
/// pool - f - 2, floored at 1.
inline AggregateResult bulyan_aggregate(std::span<const ClientUpdate> updates, std::size_t f) {
    const auto ordered = detail::canonical(updates);
    const std::size_t n = ordered.size();
    require(n >= 4 * f + 3, "Bulyan infeasible");
    const std::size_t theta = n - 2 * f;
    const std::size_t beta = theta - 2 * f;
    const auto models = detail::models_of(ordered);

    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> picked;
    while (picked.size() < theta) {
        std::vector<Vec> pool_models;
        for (auto idx : pool) {
            pool_models.push_back(models[idx]);
        }
        const std::size_t neighbors = pool.size() > f + 3 ? pool.size() - f - 2 : 1;
        const auto scores = krum_scores(pool_models, neighbors);
        const auto best = static_cast<std::size_t>(std::min_element(scores.begin(), scores.end(), total_less) - scores.begin());
        picked.push_back(pool[best]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    }
    std::sort(picked.begin(), picked.end());

    const std::size_t d = models.front().size();
    Vec out(d);
    Vec column(theta);
    std::vector<std::size_t> order(theta);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < theta; ++i) {
            column[i] = models[picked[i]][j];
        }
        const double med = median_of(column);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return total_less(std::abs(column[a] - med), std::abs(column[b] - med));
        });
        double s = 0.0;
        for (std::size_t i = 0; i < beta; ++i) {
            s += column[order[i]];
        }
        out[j] = s / static_cast<double>(beta);
    }

    AggregateResult result;
    std::vector<bool> removed(n, true);
    for (auto idx : picked) {
        removed[idx] = false;
    }
    detail::fill_partition(result.audit, ordered, removed);
    result.model = ordered.front()->model.with_values(std::move(out));
    return result;
}

/// Geometric median of the submitted models (smoothed Weiszfeld).
/// Weights are matched to submissions in the order given; empty means uniform.
inline ParamVector rfa_aggregate(std::span<const ClientUpdate> updates, std::span<const double> weights = {},
                                 const GeometricMedianOptions& opts = {}) {
    require(weights.empty() || weights.size() == updates.size(), "one weight per update required");
    const auto ordered = detail::canonical(updates);
    Vec w(ordered.size(), 1.0);
    if (!weights.empty()) {
        for (std::size_t i = 0; i < ordered.size(); ++i) {
            w[i] = weights[static_cast<std::size_t>(ordered[i] - updates.data())];
        }
    }
    const auto gm = geometric_median(detail::models_of(ordered), w, opts);
    return ordered.front()->model.with_values(gm.median);
}

/// Robust learning rate: per coordinate, step +eta along the mean update when
/// at least theta clients agree on its sign, -eta otherwise.
inline ParamVector rlr_aggregate(const ParamVector& global, std::span<const ClientUpdate> updates, std::size_t theta,
                                 double eta) {
    const auto ordered = detail::canonical(updates);
    const auto deltas = detail::updates_of(ordered, global);
    const Vec mu = mean(deltas);
    Vec out = global.values();
    for (std::size_t j = 0; j < out.size(); ++j) {
        long long sign_sum = 0;
        for (const auto& d : deltas) {
            sign_sum += (d[j] > 0.0) - (d[j] < 0.0);
        }
        const auto agreement = static_cast<std::size_t>(std::llabs(sign_sum));
        const double rate = agreement >= theta ? eta : -eta;
        out[j] += rate * mu[j];
    }
    return global.with_values(std::move(out));
}

/// Shuffles submissions into buckets of `bucket_size`, averages each bucket,
/// then takes a coordinate trimmed mean (k per side) over bucket means.
inline ParamVector bucket_aggregate(std::span<const ClientUpdate> updates, std::size_t bucket_size, std::size_t k,
                                    RngStream& rng) {
    require(bucket_size >= 1, "bucket size must be >= 1");
    const auto ordered = detail::canonical(updates);
    auto models = detail::models_of(ordered);
    std::vector<std::size_t> perm(models.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);

    std::vector<Vec> bucket_means;
    for (std::size_t start = 0; start < perm.size(); start += bucket_size) {
        std::vector<Vec> members;
        for (std::size_t i = start; i < std::min(perm.size(), start + bucket_size); ++i) {
            members.push_back(models[perm[i]]);
        }
        bucket_means.push_back(mean(members));
    }
    return ordered.front()->model.with_values(coordinate_trimmed_mean(bucket_means, k));
}

/// FLTrust: the server trains its own update on root data; each client update
/// is weighted by its rectified cosine to the server update and rescaled to
/// the server update's norm.
inline AggregateResult fltrust_aggregate(const MlpModel& global, std::span<const ClientUpdate> updates,
                                         const Dataset& root_data, const TrainOptions& train, RngStream& rng) {
    require(!root_data.empty(), "FLTrust root dataset is empty");
    const auto ordered = detail::canonical(updates);
    const auto server_model = sgd_local_train(global, root_data, train, rng).model;
    const Vec server_delta = subtract(server_model.params.values(), global.params.values());
    const double server_norm = norm(server_delta);

    AggregateResult out;
    out.model = global.params;
    std::vector<bool> removed(ordered.size(), false);
    if (server_norm == 0.0) {
        out.audit.notes.push_back("server update has zero norm; global model unchanged");
        detail::fill_partition(out.audit, ordered, removed);
        return out;
    }

    const auto deltas = detail::updates_of(ordered, global.params);
    Vec acc(server_delta.size(), 0.0);
    double ts_sum = 0.0;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const double ts = std::max(0.0, cosine_similarity(deltas[i], server_delta));
        out.audit.scores.emplace_back(ordered[i]->client_id, ts);
        if (ts <= 0.0) {
            removed[i] = true;
            continue;
        }
        axpy(ts * server_norm / norm(deltas[i]), deltas[i], acc);
        ts_sum += ts;
    }
    detail::fill_partition(out.audit, ordered, removed);
    if (ts_sum == 0.0) {
        out.audit.notes.push_back("all trust scores zero; global model unchanged");
        return out;
    }
    for (auto& x : acc) {
        x /= ts_sum;
    }
    out.model = global.params.with_values(add(global.params.values(), acc));
    return out;
}

/// RONI: a submission's impact is how much the validation error rises when
/// it is included in the average versus left out; the `remove` highest-impact
/// submissions (lower client id first on ties) are dropped and the rest averaged.
inline AggregateResult roni_aggregate(const MlpModel& global, std::span<const ClientUpdate> updates,
                                      const Dataset& validation, std::size_t remove) {
    require(!validation.empty(), "RONI validation dataset is empty");
    const auto ordered = detail::canonical(updates);
    const std::size_t n = ordered.size();
    require(remove < n, "RONI removal count must be below the number of updates");
    const auto models = detail::models_of(ordered);

    const double acc_all = evaluate(global.with_params(global.params.with_values(mean(models))), validation);
    std::vector<double> impact(n, 0.0);
    if (n > 1) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<Vec> others;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    others.push_back(models[j]);
                }
            }
            const double acc_without =
                evaluate(global.with_params(global.params.with_values(mean(others))), validation);
            impact[i] = acc_without - acc_all;
        }
    }

    AggregateResult out;
    for (std::size_t i = 0; i < n; ++i) {
        out.audit.scores.emplace_back(ordered[i]->client_id, impact[i]);
    }
    const auto removed = detail::top_by_score(impact, remove);
    detail::fill_partition(out.audit, ordered, removed);
    std::vector<Vec> kept;
    for (std::size_t i = 0; i < n; ++i) {
        if (!removed[i]) {
            kept.push_back(models[i]);
        }
    }
    out.model = global.params.with_values(mean(kept));
    return out;
}

// ---------------------------------------------------------------------------
// Dispatch

enum class DefenseKind {
    fedavg,
    fedgram,
    trimmed_mean,
    median,
    norm_bound,
    crfl,
    krum,
    multi_krum,
    bulyan,
    rfa,
    rlr,
    bucket,
    fltrust,
    roni,
};

/// Rule choice plus every knob any rule reads. Counts left unset are derived
/// from the number of submissions in the round.
struct DefenseSpec {
    DefenseKind kind = DefenseKind::fedgram;
    double filter_fraction = 0.3;
    PostFilter then = PostFilter::avg;
    /// trimmed_mean: k per side; default floor(trim_fraction * n).
    std::optional<std::size_t> trim_k;
    double trim_fraction = 0.2;
    /// norm_bound clip radius; default the median update norm of the round.
    std::optional<double> norm_bound;
    /// CRFL clip radius; default the median update norm of the round.
    std::optional<double> crfl_rho;
    double crfl_sigma = 0.01;
    CrflClip crfl_clip = CrflClip::update;
    /// Krum/Bulyan tolerated Byzantine count; default floor(trim_fraction * n),
    /// capped to what the rule admits.
    std::optional<std::size_t> byzantine_f;
    /// Multi-Krum selection count; default n - f.
    std::optional<std::size_t> multi_krum_m;
    /// RLR sign-agreement threshold; default floor(0.4 * n).
    std::optional<std::size_t> rlr_theta;
    double rlr_eta = 1.0;
    std::size_t bucket_size = 2;
    /// Trim per side across bucket means; default floor(trim_fraction * buckets).
    std::optional<std::size_t> bucket_trim_k;
    /// RONI removal count; default ceil(filter_fraction * n).
    std::optional<std::size_t> roni_remove;
};

inline constexpr std::string_view to_string(DefenseKind k) {
    switch (k) {
        case DefenseKind::fedavg: return "fedavg";
        case DefenseKind::fedgram: return "fedgram";
        case DefenseKind::trimmed_mean: return "trimmed_mean";
        case DefenseKind::median: return "median";
        case DefenseKind::norm_bound: return "norm_bound";
        case DefenseKind::crfl: return "crfl";
        case DefenseKind::krum: return "krum";
        case DefenseKind::multi_krum: return "multi_krum";
        case DefenseKind::bulyan: return "bulyan";
        case DefenseKind::rfa: return "rfa";
        case DefenseKind::rlr: return "rlr";
        case DefenseKind::bucket: return "bucket";
        case DefenseKind::fltrust: return "fltrust";
        case DefenseKind::roni: return "roni";
    }
    return "?";
}

inline std::optional<DefenseKind> parse_defense_kind(std::string_view s) {
    for (auto k : {DefenseKind::fedavg, DefenseKind::fedgram, DefenseKind::trimmed_mean, DefenseKind::median,
                   DefenseKind::norm_bound, DefenseKind::crfl, DefenseKind::krum, DefenseKind::multi_krum,
                   DefenseKind::bulyan, DefenseKind::rfa, DefenseKind::rlr, DefenseKind::bucket, DefenseKind::fltrust,
                   DefenseKind::roni}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

/// Whether the rule explicitly discards submissions (detection metrics apply).
inline constexpr bool is_filtering(DefenseKind k) {
    return k == DefenseKind::fedgram || k == DefenseKind::krum || k == DefenseKind::multi_krum ||
           k == DefenseKind::bulyan || k == DefenseKind::roni;
}

/// Server-side resources an aggregation rule may read.
struct AggregationContext {
    const MlpModel& global;
    const AuxiliaryDataset* aux = nullptr;
    /// FLTrust root data; also RONI's validation data.
    const Dataset* root = nullptr;
    TrainOptions local;
};

struct RoundAggregation {
    ParamVector model;
    AggregationAudit audit;
    std::vector<GramScore> gram_scores;
};

namespace detail {

inline double median_update_norm(const ParamVector& global, std::span<const ClientUpdate> updates) {
    Vec norms;
    for (const auto& u : updates) {
        norms.push_back(distance(u.model.values(), global.values()));
    }
    const double m = median_of(norms);
    return m > 0.0 ? m : 1.0;
}

}  // namespace detail

inline RoundAggregation aggregate(const DefenseSpec& spec, const AggregationContext& ctx,
                                  std::span<const ClientUpdate> updates, RngStream& rng) {
    const auto ordered = detail::canonical(updates);
    const std::size_t n = ordered.size();
    const auto& global = ctx.global.params;
    RoundAggregation out;
    auto keep_all = [&]() {
        out.audit.kept_ids = detail::ids_of(ordered);
    };
    auto take = [&](AggregateResult r) {
        out.model = std::move(r.model);
        out.audit = std::move(r.audit);
    };
    const auto default_f = static_cast<std::size_t>(std::floor(spec.trim_fraction * static_cast<double>(n)));

    switch (spec.kind) {
        case DefenseKind::fedavg:
            out.model = fedavg(updates);
            keep_all();
            break;
        case DefenseKind::fedgram:
            require(ctx.aux != nullptr, "FedGraM needs an auxiliary dataset");
            take(fedgram_aggregate(ctx.global, updates, *ctx.aux, spec.filter_fraction, spec.then, &out.gram_scores));
            break;
        case DefenseKind::trimmed_mean: {
            auto k = spec.trim_k.value_or(default_f);
            k = std::min(k, (n - 1) / 2);
            out.model = trimmed_mean_aggregate(updates, k);
            keep_all();
            break;
        }
        case DefenseKind::median:
            out.model = median_aggregate(updates);
            keep_all();
            break;
        case DefenseKind::norm_bound:
            out.model = norm_bound_aggregate(global, updates,
                                             spec.norm_bound.value_or(detail::median_update_norm(global, updates)));
            keep_all();
            break;
        case DefenseKind::crfl:
            out.model = crfl_aggregate(global, updates,
                                       spec.crfl_rho.value_or(detail::median_update_norm(global, updates)),
                                       spec.crfl_sigma, rng, spec.crfl_clip);
            keep_all();
            break;
        case DefenseKind::krum:
        case DefenseKind::multi_krum: {
            if (n < 3) {
                out.model = fedavg(updates);
                keep_all();
                out.audit.notes.push_back("too few updates for Krum; averaged instead");
                break;
            }
            const auto f = std::min(spec.byzantine_f.value_or(default_f), n - 3);
            const auto m = spec.kind == DefenseKind::krum ? 1 : std::clamp<std::size_t>(spec.multi_krum_m.value_or(n - f), 1, n);
            take(krum_select(updates, f, m));
            break;
        }
        case DefenseKind::bulyan: {
            if (n < 3) {
                out.model = fedavg(updates);
                keep_all();
                out.audit.notes.push_back("too few updates for Bulyan; averaged instead");
                break;
            }
            const auto f = std::min(spec.byzantine_f.value_or(default_f), (n - 3) / 4);
            take(bulyan_aggregate(updates, f));
            break;
        }
        case DefenseKind::rfa:
            out.model = rfa_aggregate(updates);
            keep_all();
            break;
        case DefenseKind::rlr: {
            const auto theta =
                spec.rlr_theta.value_or(static_cast<std::size_t>(std::floor(0.4 * static_cast<double>(n))));
            out.model = rlr_aggregate(global, updates, theta, spec.rlr_eta);
            keep_all();
            break;
        }
        case DefenseKind::bucket: {
            const std::size_t buckets = (n + spec.bucket_size - 1) / spec.bucket_size;
            auto k = spec.bucket_trim_k.value_or(
                static_cast<std::size_t>(std::floor(spec.trim_fraction * static_cast<double>(buckets))));
            k = std::min(k, (buckets - 1) / 2);
            out.model = bucket_aggregate(updates, spec.bucket_size, k, rng);
            keep_all();
            break;
        }
        case DefenseKind::fltrust:
            require(ctx.root != nullptr, "FLTrust needs a root dataset");
            take(fltrust_aggregate(ctx.global, updates, *ctx.root, ctx.local, rng));
            break;
        case DefenseKind::roni: {
            require(ctx.root != nullptr, "RONI needs a validation dataset");
            const auto r = std::min(spec.roni_remove.value_or(ceil_count(spec.filter_fraction, n)), n - 1);
            take(roni_aggregate(ctx.global, updates, *ctx.root, r));
            break;
        }
    }
    return out;
}

}  // namespace fedgram
