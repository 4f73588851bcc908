#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgram/mathcore.hpp"
#include "fedgram/simulation.hpp"

namespace fedgram {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr const char* kCsvHeader =
    "round,test_acc,best_acc,n_sampled,n_malicious_sampled,n_removed,detect_precision,detect_recall,"
    "mean_malicious_rank_fraction";

/// Six significant digits, locale-independent.
inline std::string format_g6(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

inline std::string format_optional(const std::optional<double>& x) { return x ? format_g6(*x) : std::string(); }

inline std::string csv_row(const RoundRecord& r) {
    std::string s = std::to_string(r.round);
    s += ',' + format_g6(r.test_accuracy);
    s += ',' + format_g6(r.best_accuracy);
    s += ',' + std::to_string(r.sampled_ids.size());
    s += ',' + std::to_string(r.n_malicious_sampled);
    s += ',' + std::to_string(r.removed_ids.size());
    s += ',' + format_optional(r.detect_precision);
    s += ',' + format_optional(r.detect_recall);
    s += ',' + format_optional(r.mean_malicious_rank_fraction);
    return s;
}

inline void write_csv(std::ostream& out, std::span<const RoundRecord> records) {
    out << kCsvHeader << '\n';
    for (const auto& r : records) {
        out << csv_row(r) << '\n';
    }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct RunSummary {
    double best_accuracy = 0.0;
    double final_accuracy = 0.0;
    /// Aggregates over rounds >= first_scored_round that carry the metric.
    std::optional<double> mean_precision;
    std::optional<double> mean_recall;
    std::optional<double> median_recall;
    std::optional<double> mean_rank_fraction;
    std::size_t first_scored_round = 10;
};

inline RunSummary summarize(std::span<const RoundRecord> records, std::size_t first_scored_round = 10) {
    RunSummary s;
    s.first_scored_round = first_scored_round;
    if (records.empty()) {
        return s;
    }
    s.best_accuracy = records.back().best_accuracy;
    s.final_accuracy = records.back().test_accuracy;
    Vec precision;
    Vec recall;
    Vec rank;
    for (const auto& r : records) {
        if (r.round < first_scored_round) {
            continue;
        }
        if (r.detect_precision) precision.push_back(*r.detect_precision);
        if (r.detect_recall) recall.push_back(*r.detect_recall);
        if (r.mean_malicious_rank_fraction) rank.push_back(*r.mean_malicious_rank_fraction);
    }
    auto avg = [](const Vec& v) -> std::optional<double> {
        if (v.empty()) return std::nullopt;
        double t = 0.0;
        for (double x : v) t += x;
        return t / static_cast<double>(v.size());
    };
    s.mean_precision = avg(precision);
    s.mean_recall = avg(recall);
    if (!recall.empty()) {
        s.median_recall = median_of(recall);
    }
    s.mean_rank_fraction = avg(rank);
    return s;
}

inline nlohmann::json to_json(const RunSummary& s) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"best_accuracy", s.best_accuracy},
            {"final_accuracy", s.final_accuracy},
            {"first_scored_round", s.first_scored_round},
            {"mean_detect_precision", opt(s.mean_precision)},
            {"mean_detect_recall", opt(s.mean_recall)},
            {"median_detect_recall", opt(s.median_recall)},
            {"mean_malicious_rank_fraction", opt(s.mean_rank_fraction)}};
}

/// JSON text with doubles printed at full round-trip precision.
inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace fedgram
