#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgram/aggregation.hpp"
#include "fedgram/attacks.hpp"
#include "fedgram/error.hpp"
#include "fedgram/simulation.hpp"

namespace fedgram {

using Json = nlohmann::json;

namespace detail {

/// Reads fields out of one JSON object, recording problems instead of
/// throwing so that a single pass reports every violation.
class FieldReader {
public:
    FieldReader(const Json& obj, std::string path, std::vector<std::string>& violations)
        : obj_(obj), path_(std::move(path)), violations_(violations) {
        if (!obj_.is_object()) {
            violations_.push_back(label("") + "must be an object");
            valid_ = false;
        }
    }

    ~FieldReader() = default;
    FieldReader(const FieldReader&) = delete;
    FieldReader& operator=(const FieldReader&) = delete;

    /// Flags keys that no read_* call asked for.
    void finish() {
        if (!valid_) {
            return;
        }
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (seen_.count(it.key()) == 0) {
                violations_.push_back(label(it.key()) + "unknown key");
            }
        }
    }

    const Json* find(const std::string& key) {
        seen_.insert(key);
        if (!valid_ || !obj_.contains(key) || obj_.at(key).is_null()) {
            return nullptr;
        }
        return &obj_.at(key);
    }

    void read(const std::string& key, double& out) {
        if (const auto* v = find(key)) {
            if (v->is_number()) {
                out = v->get<double>();
            } else {
                violations_.push_back(label(key) + "expected a number");
            }
        }
    }

    void read(const std::string& key, std::size_t& out) {
        if (const auto* v = find(key)) {
            if (v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0)) {
                out = v->get<std::size_t>();
            } else {
                violations_.push_back(label(key) + "expected a non-negative integer");
            }
        }
    }

    void read(const std::string& key, bool& out) {
        if (const auto* v = find(key)) {
            if (v->is_boolean()) {
                out = v->get<bool>();
            } else {
                violations_.push_back(label(key) + "expected a boolean");
            }
        }
    }

    void read(const std::string& key, std::optional<std::size_t>& out) {
        if (find(key) != nullptr) {
            std::size_t tmp = 0;
            read(key, tmp);
            out = tmp;
        }
    }

    void read(const std::string& key, std::optional<double>& out) {
        if (find(key) != nullptr) {
            double tmp = 0.0;
            read(key, tmp);
            out = tmp;
        }
    }

    void read(const std::string& key, std::optional<std::string>& out) {
        if (const auto* v = find(key)) {
            if (v->is_string()) {
                out = v->get<std::string>();
            } else {
                violations_.push_back(label(key) + "expected a string");
            }
        }
    }

    void read(const std::string& key, std::vector<std::size_t>& out) {
        if (const auto* v = find(key)) {
            bool ok = v->is_array();
            std::vector<std::size_t> tmp;
            if (ok) {
                for (const auto& e : *v) {
                    if (!(e.is_number_unsigned() || (e.is_number_integer() && e.get<long long>() >= 0))) {
                        ok = false;
                        break;
                    }
                    tmp.push_back(e.get<std::size_t>());
                }
            }
            if (ok) {
                out = std::move(tmp);
            } else {
                violations_.push_back(label(key) + "expected an array of non-negative integers");
            }
        }
    }

    /// String field mapped through `parse`; unknown values are violations.
    template <typename T, typename Parse>
    void read_enum(const std::string& key, T& out, Parse parse) {
        if (const auto* v = find(key)) {
            if (!v->is_string()) {
                violations_.push_back(label(key) + "expected a string");
                return;
            }
            const auto s = v->get<std::string>();
            if (auto parsed = parse(s)) {
                out = *parsed;
            } else {
                violations_.push_back(label(key) + "unknown value \"" + s + "\"");
            }
        }
    }

    std::string label(const std::string& key) const {
        std::string p = path_;
        if (!key.empty()) {
            p += (p.empty() ? "" : ".") + key;
        }
        return p.empty() ? std::string() : p + ": ";
    }

private:
    const Json& obj_;
    std::string path_;
    std::vector<std::string>& violations_;
    std::set<std::string> seen_;
    bool valid_ = true;
};

inline std::optional<AttackerKnowledge> parse_knowledge(const std::string& s) {
    if (s == "full") return AttackerKnowledge::full;
    if (s == "coalition") return AttackerKnowledge::coalition;
    return std::nullopt;
}

inline std::optional<LiePopulation> parse_lie_population(const std::string& s) {
    if (s == "total") return LiePopulation::total;
    if (s == "round") return LiePopulation::round;
    return std::nullopt;
}

inline std::optional<MinSumBound> parse_minsum_bound(const std::string& s) {
    if (s == "max_sum") return MinSumBound::max_sum;
    if (s == "pairwise_max") return MinSumBound::pairwise_max;
    return std::nullopt;
}

inline std::optional<PostFilter> parse_post_filter(const std::string& s) {
    if (s == "avg") return PostFilter::avg;
    if (s == "trimmed_mean") return PostFilter::trimmed_mean;
    return std::nullopt;
}

inline std::optional<CrflClip> parse_crfl_clip(const std::string& s) {
    if (s == "update") return CrflClip::update;
    if (s == "parameters") return CrflClip::parameters;
    return std::nullopt;
}

/// Defense names accepted in configs: every rule name plus the shorthand
/// "fedgram_trim" for FedGraM followed by a trimmed mean.
inline std::optional<std::pair<DefenseKind, std::optional<PostFilter>>> parse_defense_name(const std::string& s) {
    if (s == "fedgram_trim") {
        return std::pair{DefenseKind::fedgram, std::optional<PostFilter>(PostFilter::trimmed_mean)};
    }
    if (auto k = parse_defense_kind(s)) {
        return std::pair{*k, std::optional<PostFilter>()};
    }
    return std::nullopt;
}

}  // namespace detail

struct ParsedConfig {
    ExperimentConfig config;
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

/// Builds a config from built-in defaults overridden by `j`. Schema problems
/// and constraint violations are collected, not thrown.
inline ParsedConfig parse_config(const Json& j) {
    ParsedConfig out;
    auto& c = out.config;
    auto& v = out.violations;
    detail::FieldReader top(j, "", v);

    std::size_t seed = c.seed;
    top.read("seed", seed);
    c.seed = seed;
    top.read("num_clients", c.num_clients);
    top.read("malicious_fraction", c.malicious_fraction);
    top.read("sample_fraction", c.sample_fraction);
    top.read("rounds", c.rounds);
    top.read("threads", c.threads);
    top.read("aux_coverage", c.aux_coverage);
    top.read("root_size", c.root_size);

    if (const auto* sub = top.find("local")) {
        detail::FieldReader r(*sub, "local", v);
        r.read("steps", c.local.steps);
        r.read("lr", c.local.lr);
        r.read("batch_size", c.local.batch_size);
        r.finish();
    }
    if (const auto* sub = top.find("arch")) {
        detail::FieldReader r(*sub, "arch", v);
        r.read("hidden_dims", c.arch.hidden_dims);
        r.read("embedding_dim", c.arch.embedding_dim);
        r.read("embedding_rectified", c.arch.embedding_rectified);
        r.finish();
    }
    if (const auto* sub = top.find("data")) {
        detail::FieldReader r(*sub, "data", v);
        r.read("num_classes", c.blobs.num_classes);
        r.read("feature_dim", c.blobs.feature_dim);
        r.read("samples_per_class", c.blobs.samples_per_class);
        r.read("radius", c.blobs.radius);
        r.read("noise_sigma", c.blobs.noise_sigma);
        r.read("train_csv", c.train_csv);
        r.read("test_csv", c.test_csv);
        r.finish();
    }
    c.arch.num_classes = c.blobs.num_classes;
    c.arch.input_dim = c.blobs.feature_dim;
    if (const auto* sub = top.find("partition")) {
        detail::FieldReader r(*sub, "partition", v);
        r.read("beta", c.beta);
        r.read("min_samples_per_client", c.min_samples_per_client);
        r.finish();
    }
    if (const auto* sub = top.find("attack")) {
        detail::FieldReader r(*sub, "attack", v);
        auto& a = c.attack;
        r.read_enum("kind", a.kind, [](const std::string& s) { return parse_attack_kind(s); });
        r.read_enum("knowledge", a.knowledge, detail::parse_knowledge);
        r.read_enum("lie_population", a.lie_population, detail::parse_lie_population);
        r.read("b", a.fang_b);
        r.read("lambda", a.mpaf_lambda);
        r.read("gamma_hi", a.gamma_hi);
        r.read("tau", a.tau);
        r.read_enum("minsum_bound", a.minsum_bound, detail::parse_minsum_bound);
        r.read("surrogate_epochs", a.surrogate_epochs);
        r.finish();
    }
    if (const auto* sub = top.find("defense")) {
        detail::FieldReader r(*sub, "defense", v);
        auto& d = c.defense;
        std::optional<PostFilter> alias_then;
        r.read_enum("kind", d.kind, [&](const std::string& s) -> std::optional<DefenseKind> {
            auto parsed = detail::parse_defense_name(s);
            if (!parsed) return std::nullopt;
            alias_then = parsed->second;
            return parsed->first;
        });
        if (alias_then) {
            d.then = *alias_then;
        }
        r.read("C", d.filter_fraction);
        r.read_enum("then", d.then, detail::parse_post_filter);
        r.read("k", d.trim_k);
        r.read("trim_fraction", d.trim_fraction);
        r.read("p", d.norm_bound);
        r.read("rho", d.crfl_rho);
        r.read("sigma", d.crfl_sigma);
        r.read_enum("crfl_clip", d.crfl_clip, detail::parse_crfl_clip);
        r.read("f", d.byzantine_f);
        r.read("m", d.multi_krum_m);
        r.read("theta", d.rlr_theta);
        r.read("eta", d.rlr_eta);
        r.read("bucket_size", d.bucket_size);
        r.read("bucket_k", d.bucket_trim_k);
        r.read("remove", d.roni_remove);
        r.finish();
    }
    top.finish();

    for (auto& problem : c.violations()) {
        v.push_back(std::move(problem));
    }
    return out;
}

/// Parses a config file. Unreadable files and JSON syntax errors throw.
inline ParsedConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    Json j;
    try {
        const auto text = buf.str();
        j = text.find_first_not_of(" \t\r\n") == std::string::npos ? Json::object() : Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(path + ": " + e.what());
    }
    return parse_config(j);
}

namespace detail {

template <typename T>
Json optional_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

inline std::string to_string(AttackerKnowledge k) { return k == AttackerKnowledge::full ? "full" : "coalition"; }
inline std::string to_string(LiePopulation p) { return p == LiePopulation::total ? "total" : "round"; }
inline std::string to_string(MinSumBound b) { return b == MinSumBound::max_sum ? "max_sum" : "pairwise_max"; }
inline std::string to_string(PostFilter f) { return f == PostFilter::avg ? "avg" : "trimmed_mean"; }
inline std::string to_string(CrflClip c) { return c == CrflClip::update ? "update" : "parameters"; }

}  // namespace detail

/// Fully resolved config; parse_config(to_json(c)) reproduces c.
inline Json to_json(const ExperimentConfig& c) {
    using detail::optional_json;
    Json j;
    j["seed"] = c.seed;
    j["num_clients"] = c.num_clients;
    j["malicious_fraction"] = c.malicious_fraction;
    j["sample_fraction"] = c.sample_fraction;
    j["rounds"] = c.rounds;
    j["threads"] = c.threads;
    j["aux_coverage"] = c.aux_coverage;
    j["root_size"] = c.root_size;
    j["local"] = {{"steps", c.local.steps}, {"lr", c.local.lr}, {"batch_size", c.local.batch_size}};
    j["arch"] = {{"hidden_dims", c.arch.hidden_dims}, {"embedding_dim", c.arch.embedding_dim},
                 {"embedding_rectified", c.arch.embedding_rectified}};
    j["data"] = {{"num_classes", c.blobs.num_classes},
                 {"feature_dim", c.blobs.feature_dim},
                 {"samples_per_class", c.blobs.samples_per_class},
                 {"radius", c.blobs.radius},
                 {"noise_sigma", c.blobs.noise_sigma},
                 {"train_csv", optional_json(c.train_csv)},
                 {"test_csv", optional_json(c.test_csv)}};
    j["partition"] = {{"beta", c.beta}, {"min_samples_per_client", c.min_samples_per_client}};
    const auto& a = c.attack;
    j["attack"] = {{"kind", std::string(to_string(a.kind))},
                   {"knowledge", detail::to_string(a.knowledge)},
                   {"lie_population", detail::to_string(a.lie_population)},
                   {"b", a.fang_b},
                   {"lambda", a.mpaf_lambda},
                   {"gamma_hi", a.gamma_hi},
                   {"tau", a.tau},
                   {"minsum_bound", detail::to_string(a.minsum_bound)},
                   {"surrogate_epochs", a.surrogate_epochs}};
    const auto& d = c.defense;
    j["defense"] = {{"kind", std::string(to_string(d.kind))},
                    {"C", d.filter_fraction},
                    {"then", detail::to_string(d.then)},
                    {"k", optional_json(d.trim_k)},
                    {"trim_fraction", d.trim_fraction},
                    {"p", optional_json(d.norm_bound)},
                    {"rho", optional_json(d.crfl_rho)},
                    {"sigma", d.crfl_sigma},
                    {"crfl_clip", detail::to_string(d.crfl_clip)},
                    {"f", optional_json(d.byzantine_f)},
                    {"m", optional_json(d.multi_krum_m)},
                    {"theta", optional_json(d.rlr_theta)},
                    {"eta", d.rlr_eta},
                    {"bucket_size", d.bucket_size},
                    {"bucket_k", optional_json(d.bucket_trim_k)},
                    {"remove", optional_json(d.roni_remove)}};
    return j;
}

}  // namespace fedgram
