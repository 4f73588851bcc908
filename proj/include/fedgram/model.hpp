#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "fedgram/dataset.hpp"
#include "fedgram/error.hpp"
#include "fedgram/mathcore.hpp"
#include "fedgram/param_vector.hpp"
#include "fedgram/rng.hpp"

namespace fedgram {

/// Feed-forward classifier shape.
///
/// The representation stack is input -> hidden... -> embedding, each layer
/// linear followed by a rectifier (optionally excepting the embedding layer).
/// The decision layer is a single linear map
/// embedding -> classes.
struct MlpArch {
    std::size_t input_dim = 20;
    std::vector<std::size_t> hidden_dims{32};
    std::size_t embedding_dim = 16;
    std::size_t num_classes = 10;
    /// Whether the embedding layer ends in a rectifier. When false the
    /// embedding is that layer's linear output; earlier layers are unaffected.
    bool embedding_rectified = false;

    void validate() const {
        require(input_dim >= 1 && embedding_dim >= 1 && num_classes >= 1, "architecture dims must be >= 1");
        for (auto h : hidden_dims) {
            require(h >= 1, "architecture dims must be >= 1");
        }
    }

    /// Widths of every layer boundary: input, hidden..., embedding, classes.
    std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w{input_dim};
        w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
        w.push_back(embedding_dim);
        w.push_back(num_classes);
        return w;
    }

    std::size_t num_layers() const { return hidden_dims.size() + 2; }

    std::size_t num_params() const {
        const auto w = widths();
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < w.size(); ++l) {
            n += w[l] * w[l + 1] + w[l + 1];
        }
        return n;
    }

    /// Weight segment then bias segment for each layer; the last layer is the decision layer.
    std::vector<Segment> layout() const {
        const auto w = widths();
        std::vector<Segment> segs;
        std::size_t cursor = 0;
        for (std::size_t l = 0; l + 1 < w.size(); ++l) {
            const auto role = (l + 2 == w.size()) ? LayerRole::decision : LayerRole::representation;
            segs.push_back({cursor, w[l] * w[l + 1], role});
            cursor += w[l] * w[l + 1];
            segs.push_back({cursor, w[l + 1], role});
            cursor += w[l + 1];
        }
        return segs;
    }

    friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

struct MlpModel {
    MlpArch arch;
    ParamVector params;

    static MlpModel zeros(const MlpArch& arch) {
        arch.validate();
        return MlpModel{arch, ParamVector(Vec(arch.num_params(), 0.0), arch.layout())};
    }

    /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    static MlpModel initialize(const MlpArch& arch, RngStream& rng) {
        MlpModel m = zeros(arch);
        const auto w = arch.widths();
        std::size_t cursor = 0;
        for (std::size_t l = 0; l + 1 < w.size(); ++l) {
            const double limit = std::sqrt(6.0 / static_cast<double>(w[l] + w[l + 1]));
            for (std::size_t i = 0; i < w[l] * w[l + 1]; ++i) {
                m.params[cursor + i] = rng.uniform(-limit, limit);
            }
            cursor += w[l] * w[l + 1] + w[l + 1];
        }
        return m;
    }

    MlpModel with_params(ParamVector p) const {
        require(p.size() == arch.num_params(), "parameter count does not match architecture");
        return MlpModel{arch, std::move(p)};
    }
};

namespace detail {

/// Per-sample forward cache: outputs of every representation layer (index 0
/// is the input) plus logits.
struct ForwardCache {
    std::vector<Vec> activations;
    Vec logits;
};

inline void forward_layer(std::span<const double> params, std::size_t offset, std::size_t in, std::size_t out,
                          std::span<const double> x, Vec& y, bool rectify) {
    y.assign(out, 0.0);
    const double* weights = params.data() + offset;
    const double* bias = weights + in * out;
    for (std::size_t o = 0; o < out; ++o) {
        double s = bias[o];
        const double* row = weights + o * in;
        for (std::size_t i = 0; i < in; ++i) {
            s += row[i] * x[i];
        }
        y[o] = (rectify && s < 0.0) ? 0.0 : s;
    }
}

inline void forward(const MlpModel& model, std::span<const double> x, ForwardCache& cache, bool with_logits) {
    const auto w = model.arch.widths();
    require(x.size() == model.arch.input_dim, "input dimension mismatch");
    const std::size_t rep_layers = w.size() - 2;
    cache.activations.resize(rep_layers + 1);
    cache.activations[0].assign(x.begin(), x.end());
    const auto& p = model.params.values();
    std::size_t offset = 0;
    for (std::size_t l = 0; l < rep_layers; ++l) {
        const bool rectify = l + 1 < rep_layers || model.arch.embedding_rectified;
        forward_layer(p, offset, w[l], w[l + 1], cache.activations[l], cache.activations[l + 1], rectify);
        offset += w[l] * w[l + 1] + w[l + 1];
    }
    if (with_logits) {
        forward_layer(p, offset, w[rep_layers], w[rep_layers + 1], cache.activations[rep_layers], cache.logits,
                      false);
    }
}

/// Backpropagates d(loss)/d(embedding) through the representation stack,
/// accumulating into grad. `upstream` is consumed.
inline void backprop_representation(const MlpModel& model, const ForwardCache& cache, Vec upstream,
                                    std::span<double> grad) {
    const auto w = model.arch.widths();
    const std::size_t rep_layers = w.size() - 2;
    const auto& p = model.params.values();

    std::vector<std::size_t> offsets(rep_layers);
    std::size_t offset = 0;
    for (std::size_t l = 0; l < rep_layers; ++l) {
        offsets[l] = offset;
        offset += w[l] * w[l + 1] + w[l + 1];
    }

    Vec down;
    for (std::size_t l = rep_layers; l-- > 0;) {
        const std::size_t in = w[l];
        const std::size_t out = w[l + 1];
        const auto& a_out = cache.activations[l + 1];
        const auto& a_in = cache.activations[l];
        // Rectifier gradient: zero where the unit was clamped.
        if (l + 1 < rep_layers || model.arch.embedding_rectified) {
            for (std::size_t o = 0; o < out; ++o) {
                if (a_out[o] <= 0.0) {
                    upstream[o] = 0.0;
                }
            }
        }
        double* gw = grad.data() + offsets[l];
        double* gb = gw + in * out;
        const double* weights = p.data() + offsets[l];
        for (std::size_t o = 0; o < out; ++o) {
            const double g = upstream[o];
            if (g == 0.0) {
                continue;
            }
            gb[o] += g;
            double* grow = gw + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                grow[i] += g * a_in[i];
            }
        }
        if (l > 0) {
            down.assign(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double g = upstream[o];
                if (g == 0.0) {
                    continue;
                }
                const double* row = weights + o * in;
                for (std::size_t i = 0; i < in; ++i) {
                    down[i] += g * row[i];
                }
            }
            upstream.swap(down);
        }
    }
}

inline double log_sum_exp(std::span<const double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

}  // namespace detail

/// Representation output f(phi; x).
inline Vec forward_embed(const MlpModel& model, std::span<const double> x) {
    detail::ForwardCache cache;
    detail::forward(model, x, cache, false);
    return cache.activations.back();
}

/// Decision layer applied to the embedding.
inline Vec forward_logits(const MlpModel& model, std::span<const double> x) {
    detail::ForwardCache cache;
    detail::forward(model, x, cache, true);
    return cache.logits;
}

inline Vec softmax(std::span<const double> logits) {
    const double lse = detail::log_sum_exp(logits);
    Vec p(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - lse);
    }
    return p;
}

/// Argmax of the logits; ties go to the lowest class index.
inline ClassId predict(const MlpModel& model, std::span<const double> x) {
    const auto logits = forward_logits(model, x);
    return static_cast<ClassId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

/// Fraction of samples whose argmax prediction matches the label.
inline double evaluate(const MlpModel& model, const Dataset& test) {
    require(!test.empty(), "empty evaluation set");
    detail::ForwardCache cache;
    std::size_t correct = 0;
    for (const auto& s : test.samples) {
        detail::forward(model, s.features, cache, true);
        const auto& z = cache.logits;
        const auto pred = static_cast<ClassId>(std::max_element(z.begin(), z.end()) - z.begin());
        correct += (pred == s.label) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

struct LossAndGradient {
    double loss = 0.0;
    ParamVector grad;
};

/// Mean cross-entropy over the batch and its exact gradient.
inline LossAndGradient ce_loss_grad(const MlpModel& model, std::span<const Sample> batch) {
    require(!batch.empty(), "empty batch");
    const auto w = model.arch.widths();
    const std::size_t rep_layers = w.size() - 2;
    const std::size_t e = w[rep_layers];
    const std::size_t k = w[rep_layers + 1];
    const auto& p = model.params.values();
    std::size_t dec_offset = 0;
    for (std::size_t l = 0; l < rep_layers; ++l) {
        dec_offset += w[l] * w[l + 1] + w[l + 1];
    }
    const double* dec_w = p.data() + dec_offset;

    Vec grad(p.size(), 0.0);
    double* gw = grad.data() + dec_offset;
    double* gb = gw + e * k;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;

    detail::ForwardCache cache;
    Vec dz(k);
    Vec de(e);
    for (const auto& s : batch) {
        require(s.label < k, "label out of range");
        detail::forward(model, s.features, cache, true);
        const double lse = detail::log_sum_exp(cache.logits);
        loss += (lse - cache.logits[s.label]) * inv_b;
        for (std::size_t c = 0; c < k; ++c) {
            dz[c] = std::exp(cache.logits[c] - lse) * inv_b;
        }
        dz[s.label] -= inv_b;

        const auto& emb = cache.activations.back();
        std::fill(de.begin(), de.end(), 0.0);
        for (std::size_t c = 0; c < k; ++c) {
            gb[c] += dz[c];
            const double* row = dec_w + c * e;
            double* grow = gw + c * e;
            for (std::size_t i = 0; i < e; ++i) {
                grow[i] += dz[c] * emb[i];
                de[i] += dz[c] * row[i];
            }
        }
        detail::backprop_representation(model, cache, de, grad);
    }
    return {loss, model.params.with_values(std::move(grad))};
}

/// Embedding-uniformity objective: log of the mean over unordered sample
/// pairs of exp(-||f(x1) - f(x2)||^2). Only the representation stack
/// receives gradient.
inline LossAndGradient uniformity_loss_grad(const MlpModel& model, std::span<const Vec> batch) {
    require(batch.size() >= 2, "uniformity loss needs at least 2 samples");
    const std::size_t n = batch.size();

    std::vector<detail::ForwardCache> caches(n);
    for (std::size_t i = 0; i < n; ++i) {
        detail::forward(model, batch[i], caches[i], false);
    }

    // Pair log-weights -d^2, normalized with log-sum-exp for stability.
    const std::size_t pairs = n * (n - 1) / 2;
    Vec neg_d2;
    neg_d2.reserve(pairs);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            neg_d2.push_back(-squared_distance(caches[a].activations.back(), caches[b].activations.back()));
        }
    }
    const double lse = detail::log_sum_exp(neg_d2);
    const double loss = lse - std::log(static_cast<double>(pairs));

    const std::size_t e = model.arch.embedding_dim;
    std::vector<Vec> de(n, Vec(e, 0.0));
    std::size_t idx = 0;
    for (std::size_t a = 0; a < n; ++a) {
        const auto& za = caches[a].activations.back();
        for (std::size_t b = a + 1; b < n; ++b) {
            const auto& zb = caches[b].activations.back();
            const double weight = std::exp(neg_d2[idx++] - lse);
            for (std::size_t i = 0; i < e; ++i) {
                const double g = -2.0 * weight * (za[i] - zb[i]);
                de[a][i] += g;
                de[b][i] -= g;
            }
        }
    }

    Vec grad(model.params.size(), 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        detail::backprop_representation(model, caches[a], std::move(de[a]), grad);
    }
    return {loss, model.params.with_values(std::move(grad))};
}

enum class LossKind { cross_entropy, uniformity };

struct TrainOptions {
    std::size_t steps = 10;
    double lr = 0.1;
    std::size_t batch_size = 32;
    LossKind loss = LossKind::cross_entropy;
};

struct LocalTrainResult {
    MlpModel model;
    /// Loss of each minibatch, evaluated before its update.
    std::vector<double> step_losses;
};

/// Plain minibatch SGD. The sample order is reshuffled at the start of every
/// pass over the data; a batch never wraps across passes.
inline LocalTrainResult sgd_local_train(const MlpModel& start, const Dataset& data, const TrainOptions& opts,
                                        RngStream& rng) {
    require(!data.empty(), "client has no data");
    require(opts.lr > 0.0, "learning rate must be positive");
    require(opts.batch_size >= 1, "batch size must be >= 1");
    if (opts.loss == LossKind::uniformity) {
        require(data.size() >= 2, "uniformity loss needs at least 2 samples");
    }

    LocalTrainResult result{start, {}};
    result.step_losses.reserve(opts.steps);
    if (opts.steps == 0) {
        return result;
    }

    const std::size_t n = data.size();
    const std::size_t batch = std::min(opts.batch_size, n);
    std::vector<std::size_t> order(n);
    std::size_t cursor = n;

    std::vector<Sample> samples;
    std::vector<Vec> features;
    for (std::size_t step = 0; step < opts.steps; ++step) {
        if (cursor + batch > n) {
            for (std::size_t i = 0; i < n; ++i) {
                order[i] = i;
            }
            rng.shuffle(order);
            cursor = 0;
        }
        LossAndGradient lg;
        if (opts.loss == LossKind::cross_entropy) {
            samples.clear();
            for (std::size_t i = 0; i < batch; ++i) {
                samples.push_back(data.samples[order[cursor + i]]);
            }
            lg = ce_loss_grad(result.model, samples);
        } else {
            features.clear();
            for (std::size_t i = 0; i < std::max<std::size_t>(batch, 2); ++i) {
                features.push_back(data.samples[order[(cursor + i) % n]].features);
            }
            lg = uniformity_loss_grad(result.model, features);
        }
        cursor += batch;
        result.step_losses.push_back(lg.loss);
        axpy(-opts.lr, lg.grad.values(), result.model.params.values());
    }
    return result;
}

}  // namespace fedgram
