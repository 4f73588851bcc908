#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fedgram/aggregation.hpp"
#include "fedgram/attacks.hpp"
#include "fedgram/data.hpp"
#include "fedgram/dataset.hpp"
#include "fedgram/error.hpp"
#include "fedgram/model.hpp"
#include "fedgram/rng.hpp"

namespace fedgram {

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::size_t num_clients = 50;
    double malicious_fraction = 0.2;
    double sample_fraction = 0.2;
    std::size_t rounds = 150;
    TrainOptions local{};
    MlpArch arch{};
    BlobsConfig blobs{};
    /// When both are set, data comes from CSV files instead of synthetic blobs.
    std::optional<std::string> train_csv;
    std::optional<std::string> test_csv;
    double beta = 1.0;
    std::size_t min_samples_per_client = 8;
    double aux_coverage = 1.0;
    /// Class-balanced server set used by FLTrust (root data) and RONI (validation).
    std::size_t root_size = 100;
    AttackSpec attack{};
    DefenseSpec defense{};
    /// Worker threads for per-client work; 0 = hardware concurrency.
    std::size_t threads = 1;

    /// Every violated constraint, one human-readable line each. Empty when valid.
    std::vector<std::string> violations() const {
        std::vector<std::string> v;
        if (num_clients < 1) v.emplace_back("num_clients >= 1");
        if (!(malicious_fraction >= 0.0 && malicious_fraction < 0.5)) v.emplace_back("malicious_fraction < 0.5 and >= 0");
        if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) v.emplace_back("sample_fraction in (0, 1]");
        if (rounds < 1) v.emplace_back("rounds >= 1");
        if (!(local.lr > 0.0)) v.emplace_back("local.lr > 0");
        if (local.batch_size < 1) v.emplace_back("local.batch_size >= 1");
        if (arch.input_dim < 1 || arch.embedding_dim < 1 || arch.num_classes < 1) v.emplace_back("arch dims >= 1");
        for (auto h : arch.hidden_dims) {
            if (h < 1) v.emplace_back("arch.hidden_dims entries >= 1");
        }
        if (!train_csv && !test_csv) {
            if (blobs.num_classes != arch.num_classes) v.emplace_back("data.num_classes == arch.num_classes");
            if (blobs.feature_dim != arch.input_dim) v.emplace_back("data.feature_dim == arch.input_dim");
            if (blobs.samples_per_class < 1) v.emplace_back("data.samples_per_class >= 1");
            if (!(blobs.radius > 0.0)) v.emplace_back("data.radius > 0");
            if (!(blobs.noise_sigma > 0.0)) v.emplace_back("data.noise_sigma > 0");
        } else if (!train_csv || !test_csv) {
            v.emplace_back("data.train_csv and data.test_csv must be given together");
        }
        if (!(beta > 0.0)) v.emplace_back("partition.beta > 0");
        if (!(aux_coverage > 0.0 && aux_coverage <= 1.0)) v.emplace_back("aux_coverage in (0, 1]");
        if (!(defense.filter_fraction > 0.0 && defense.filter_fraction < 1.0))
            v.emplace_back("defense.C in (0, 1)");
        if (defense.bucket_size < 1) v.emplace_back("defense.bucket_size >= 1");
        if (defense.norm_bound && !(*defense.norm_bound > 0.0)) v.emplace_back("defense.p > 0");
        if (defense.crfl_rho && !(*defense.crfl_rho > 0.0)) v.emplace_back("defense.rho > 0");
        if (!(defense.crfl_sigma >= 0.0)) v.emplace_back("defense.sigma >= 0");
        if ((defense.kind == DefenseKind::fltrust || defense.kind == DefenseKind::roni) && root_size < 1)
            v.emplace_back("root_size >= 1 for fltrust/roni");
        if (!(attack.fang_b > 1.0)) v.emplace_back("attack.b > 1");
        if (!(attack.mpaf_lambda > 0.0)) v.emplace_back("attack.lambda > 0");
        if (!(attack.gamma_hi > 0.0)) v.emplace_back("attack.gamma_hi > 0");
        if (!(attack.tau > 0.0)) v.emplace_back("attack.tau > 0");
        return v;
    }
};

struct RoundRecord {
    std::size_t round = 0;
    double test_accuracy = 0.0;
    double best_accuracy = 0.0;
    std::vector<ClientId> sampled_ids;
    std::size_t n_malicious_sampled = 0;
    std::vector<ClientId> removed_ids;
    std::vector<GramScore> gram_scores;
    /// Set only for defenses that discard submissions.
    std::optional<double> detect_precision;
    std::optional<double> detect_recall;
    /// Set only when gram scores exist and a malicious client was sampled.
    std::optional<double> mean_malicious_rank_fraction;
    std::vector<std::string> notes;
};

struct DetectionMetrics {
    double precision = 1.0;
    double recall = 1.0;
};

/// Precision and recall of `removed` against the malicious flags of `sampled`.
/// Precision is 1 when nothing was removed; recall is 1 when no malicious
/// client was sampled.
inline DetectionMetrics detection_metrics(std::span<const ClientId> removed, std::span<const ClientUpdate> sampled) {
    std::set<ClientId> malicious;
    std::set<ClientId> ids;
    for (const auto& u : sampled) {
        ids.insert(u.client_id);
        if (u.is_malicious) {
            malicious.insert(u.client_id);
        }
    }
    std::size_t hits = 0;
    for (auto id : removed) {
        require(ids.count(id) == 1, "removed id was not sampled");
        hits += malicious.count(id);
    }
    DetectionMetrics m;
    if (!removed.empty()) {
        m.precision = static_cast<double>(hits) / static_cast<double>(removed.size());
    }
    if (!malicious.empty()) {
        m.recall = static_cast<double>(hits) / static_cast<double>(malicious.size());
    }
    return m;
}

/// For each malicious client, its position in the descending score order
/// divided by n (0 = highest score). Ties place the lower client id first.
/// Returned in increasing client id order.
inline std::vector<double> norm_rank_of_malicious(std::span<const GramScore> scores,
                                                  std::span<const ClientId> malicious_ids) {
    std::vector<GramScore> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end(), [](const GramScore& a, const GramScore& b) {
        if (total_greater(a.score, b.score) || total_greater(b.score, a.score)) {
            return total_greater(a.score, b.score);
        }
        return a.client_id < b.client_id;
    });
    const std::set<ClientId> bad(malicious_ids.begin(), malicious_ids.end());
    std::vector<std::pair<ClientId, double>> ranks;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (bad.count(sorted[i].client_id) == 1) {
            ranks.emplace_back(sorted[i].client_id, static_cast<double>(i) / static_cast<double>(sorted.size()));
        }
    }
    std::sort(ranks.begin(), ranks.end());
    std::vector<double> out;
    for (const auto& r : ranks) {
        out.push_back(r.second);
    }
    return out;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware).
/// Each index is handled exactly once; callers write results by index.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += threads) {
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

/// Everything fixed before round 1.
struct ExperimentSetup {
    Dataset test;
    AuxiliaryDataset aux;
    Dataset root;
    std::vector<ClientDataset> clients;
    std::vector<bool> malicious;
    MlpModel initial;
};

inline ExperimentSetup prepare_experiment(const ExperimentConfig& cfg) {
    const auto problems = cfg.violations();
    require(problems.empty(), problems.empty() ? std::string() : "invalid config: " + problems.front());
    const auto seed = cfg.seed;
    ExperimentSetup s;

    Dataset train;
    if (cfg.train_csv) {
        train = load_csv(*cfg.train_csv, cfg.arch.num_classes, cfg.arch.input_dim);
        s.test = load_csv(*cfg.test_csv, cfg.arch.num_classes, cfg.arch.input_dim);
    } else {
        RngStream rng(seed, {0, 0, StreamRole::data});
        auto tt = make_blobs(cfg.blobs, rng);
        train = std::move(tt.train);
        s.test = std::move(tt.test);
    }

    RngStream aux_rng(seed, {0, 0, StreamRole::auxiliary});
    auto aux_split = build_auxiliary(train, cfg.aux_coverage, aux_rng);
    s.aux = std::move(aux_split.aux);

    RngStream root_rng(seed, {0, 0, StreamRole::root});
    auto root_split = take_balanced(aux_split.remaining, cfg.root_size, root_rng);
    s.root = std::move(root_split.held_out);

    RngStream part_rng(seed, {0, 0, StreamRole::partition});
    s.clients = dirichlet_partition(root_split.remaining,
                                    PartitionConfig{cfg.num_clients, cfg.beta, cfg.min_samples_per_client}, part_rng);

    std::vector<std::size_t> ids(cfg.num_clients);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = i;
    }
    RngStream mal_rng(seed, {0, 0, StreamRole::malicious_assignment});
    mal_rng.shuffle(ids);
    s.malicious.assign(cfg.num_clients, false);
    const std::size_t n_mal = ceil_count(cfg.malicious_fraction, cfg.num_clients);
    for (std::size_t i = 0; i < n_mal; ++i) {
        s.malicious[ids[i]] = true;
    }

    for (std::size_t c = 0; c < cfg.num_clients; ++c) {
        if (!s.malicious[c]) {
            continue;
        }
        if (cfg.attack.kind == AttackKind::label_flip) {
            s.clients[c] = flip_labels_static(s.clients[c]);
        } else if (cfg.attack.kind == AttackKind::dynamic_label_flip) {
            RngStream rng(seed, {0, c, StreamRole::surrogate});
            s.clients[c] = dynamic_flip(s.clients[c], cfg.arch, cfg.attack.surrogate_epochs, cfg.local.lr,
                                        cfg.local.batch_size, rng);
        }
    }

    RngStream init_rng(seed, {0, 0, StreamRole::init});
    s.initial = MlpModel::initialize(cfg.arch, init_rng);
    return s;
}

/// Runs the federated rounds. `on_round` (optional) sees each record as soon
/// as it is complete. Output is a deterministic function of the config; the
/// thread count does not affect it.
inline std::vector<RoundRecord> run_experiment(const ExperimentConfig& cfg,
                                               const std::function<void(const RoundRecord&)>& on_round = {}) {
    const auto setup = prepare_experiment(cfg);
    const auto seed = cfg.seed;
    const auto& attack = cfg.attack;
    const std::size_t total_malicious =
        static_cast<std::size_t>(std::count(setup.malicious.begin(), setup.malicious.end(), true));

    std::optional<ParamVector> mpaf_baseline;
    if (attack.kind == AttackKind::mpaf) {
        RngStream rng(seed + 1, {0, 0, StreamRole::init});
        mpaf_baseline = MlpModel::initialize(cfg.arch, rng).params;
    }

    MlpModel global = setup.initial;
    std::vector<RoundRecord> records;
    double best = 0.0;
    const std::size_t per_round = ceil_count(cfg.sample_fraction, cfg.num_clients);

    for (std::size_t t = 1; t <= cfg.rounds; ++t) {
        try {
            RoundRecord rec;
            rec.round = t;
            RngStream sample_rng(seed, {t, 0, StreamRole::sampling});
            rec.sampled_ids = sample_rng.sample_without_replacement(cfg.num_clients, std::max<std::size_t>(1, per_round));
            const std::size_t n = rec.sampled_ids.size();

            std::vector<ClientUpdate> updates(n);
            std::vector<bool> crafted(n, false);
            for (std::size_t i = 0; i < n; ++i) {
                const auto id = rec.sampled_ids[i];
                updates[i].client_id = id;
                updates[i].is_malicious = setup.malicious[id];
                crafted[i] = updates[i].is_malicious && is_model_poisoning(attack.kind);
                rec.n_malicious_sampled += updates[i].is_malicious ? 1 : 0;
            }

            // Honest local work for everyone except crafted submissions. Under
            // coalition knowledge the crafting clients also train honestly, to
            // form their view.
            const bool coalition = attack.knowledge == AttackerKnowledge::coalition;
            std::vector<std::optional<ParamVector>> honest(n);
            parallel_for(n, cfg.threads, [&](std::size_t i) {
                const auto id = updates[i].client_id;
                if (crafted[i] && !coalition) {
                    return;
                }
                RngStream rng(seed, {t, id, StreamRole::local_train});
                if (updates[i].is_malicious && attack.kind == AttackKind::adaptive_uniformity) {
                    honest[i] = adaptive_submit(global, setup.clients[id], cfg.local, rng);
                } else {
                    honest[i] = sgd_local_train(global, setup.clients[id], cfg.local, rng).model.params;
                }
            });

            BenignView view{{}, global.params};
            for (std::size_t i = 0; i < n; ++i) {
                if (crafted[i] ? coalition : (!coalition && !updates[i].is_malicious)) {
                    view.benign_models.push_back(*honest[i]);
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (!crafted[i]) {
                    updates[i].model = *honest[i];
                }
            }

            if (rec.n_malicious_sampled > 0 && is_model_poisoning(attack.kind)) {
                const std::size_t m_round = rec.n_malicious_sampled;
                const std::size_t needed = (attack.kind == AttackKind::minmax || attack.kind == AttackKind::minsum) ? 2 : 1;
                std::optional<ParamVector> shared;
                if (attack.kind == AttackKind::mpaf) {
                    shared = mpaf_craft(global.params, *mpaf_baseline, attack.mpaf_lambda);
                } else if (view.benign_models.size() < needed) {
                    rec.notes.push_back("attack view too small; malicious clients submit the global model");
                    shared = global.params;
                } else if (attack.kind == AttackKind::lie) {
                    const bool total = attack.lie_population == LiePopulation::total;
                    shared = lie_craft(view, total ? cfg.num_clients : n, total ? total_malicious : m_round);
                } else if (attack.kind == AttackKind::minmax || attack.kind == AttackKind::minsum) {
                    const auto variant =
                        attack.kind == AttackKind::minmax ? DistanceVariant::minmax : DistanceVariant::minsum;
                    shared = minmax_minsum_craft(view, variant, attack.gamma_hi, attack.tau, attack.minsum_bound).model;
                }
                std::vector<int> dirs;
                if (attack.kind == AttackKind::fang && !shared) {
                    dirs = fang_directions(view);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    if (!crafted[i]) {
                        continue;
                    }
                    if (shared) {
                        updates[i].model = *shared;
                    } else {
                        RngStream rng(seed, {t, updates[i].client_id, StreamRole::attack});
                        updates[i].model = fang_craft(view, dirs, attack.fang_b, rng);
                    }
                }
            }

            RngStream agg_rng(seed, {t, 0, StreamRole::aggregation});
            const AggregationContext ctx{global, &setup.aux, &setup.root, cfg.local};
            auto agg = aggregate(cfg.defense, ctx, updates, agg_rng);
            rec.removed_ids = agg.audit.removed_ids;
            rec.gram_scores = std::move(agg.gram_scores);
            rec.notes.insert(rec.notes.end(), agg.audit.notes.begin(), agg.audit.notes.end());
            if (!all_finite(agg.model.values())) {
                rec.notes.push_back("aggregated model has non-finite entries");
            }
            global = global.with_params(std::move(agg.model));

            if (is_filtering(cfg.defense.kind)) {
                const auto dm = detection_metrics(rec.removed_ids, updates);
                rec.detect_precision = dm.precision;
                rec.detect_recall = dm.recall;
            }
            if (!rec.gram_scores.empty() && rec.n_malicious_sampled > 0) {
                std::vector<ClientId> bad;
                for (const auto& u : updates) {
                    if (u.is_malicious) {
                        bad.push_back(u.client_id);
                    }
                }
                const auto ranks = norm_rank_of_malicious(rec.gram_scores, bad);
                double s = 0.0;
                for (double r : ranks) {
                    s += r;
                }
                rec.mean_malicious_rank_fraction = s / static_cast<double>(ranks.size());
            }

            rec.test_accuracy = evaluate(global, setup.test);
            best = std::max(best, rec.test_accuracy);
            rec.best_accuracy = best;
            if (on_round) {
                on_round(rec);
            }
            records.push_back(std::move(rec));
        } catch (const Error& e) {
            throw Error("round " + std::to_string(t) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace fedgram
