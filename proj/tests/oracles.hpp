#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance gate. They avoid the library's sorting and scoring helpers.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fedgram/mathcore.hpp"

namespace fedgram::oracle {

inline Vec brute_trimmed_mean(std::vector<Vec> vs, std::size_t k) {
    const std::size_t d = vs.front().size();
    Vec out(d);
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> col;
        for (const auto& v : vs) {
            col.push_back(v[j]);
        }
        for (std::size_t r = 0; r < k; ++r) {
            col.erase(std::max_element(col.begin(), col.end()));
            col.erase(std::min_element(col.begin(), col.end()));
        }
        double s = 0.0;
        for (double x : col) {
            s += x;
        }
        out[j] = s / static_cast<double>(col.size());
    }
    return out;
}

inline double sq(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        s += (a[j] - b[j]) * (a[j] - b[j]);
    }
    return s;
}

inline std::vector<double> brute_krum_scores(const std::vector<Vec>& vs, std::size_t neighbors) {
    std::vector<double> scores;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < vs.size(); ++j) {
            if (j != i) {
                d.push_back(sq(vs[i], vs[j]));
            }
        }
        std::sort(d.begin(), d.end());
        double s = 0.0;
        for (std::size_t t = 0; t < std::min(neighbors, d.size()); ++t) {
            s += d[t];
        }
        scores.push_back(s);
    }
    return scores;
}

inline std::size_t first_argmin(const std::vector<double>& s) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i] < s[best]) {
            best = i;
        }
    }
    return best;
}

inline Vec brute_krum(const std::vector<Vec>& vs, std::size_t f) {
    return vs[first_argmin(brute_krum_scores(vs, vs.size() - f - 2))];
}

inline Vec brute_bulyan(const std::vector<Vec>& vs, std::size_t f) {
    const std::size_t theta = vs.size() - 2 * f;
    const std::size_t beta = theta - 2 * f;
    std::vector<std::size_t> pool(vs.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> picked;
    while (picked.size() < theta) {
        std::vector<Vec> cur;
        for (auto p : pool) {
            cur.push_back(vs[p]);
        }
        const std::size_t nb = pool.size() > f + 3 ? pool.size() - f - 2 : 1;
        const auto best = first_argmin(brute_krum_scores(cur, nb));
        picked.push_back(pool[best]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    }
    std::sort(picked.begin(), picked.end());
    Vec out(vs.front().size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        std::vector<double> col;
        for (auto p : picked) {
            col.push_back(vs[p][j]);
        }
        std::vector<double> sorted = col;
        std::sort(sorted.begin(), sorted.end());
        const double med = theta % 2 ? sorted[theta / 2] : 0.5 * (sorted[theta / 2 - 1] + sorted[theta / 2]);
        std::vector<bool> used(theta, false);
        double s = 0.0;
        for (std::size_t t = 0; t < beta; ++t) {
            std::size_t best = theta;
            for (std::size_t i = 0; i < theta; ++i) {
                if (!used[i] && (best == theta || std::abs(col[i] - med) < std::abs(col[best] - med))) {
                    best = i;
                }
            }
            used[best] = true;
            s += col[best];
        }
        out[j] = s / static_cast<double>(beta);
    }
    return out;
}

}  // namespace fedgram::oracle
