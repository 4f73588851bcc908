#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fedgram/error.hpp"

namespace fedgram {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, Vec data) : rows_(rows), cols_(cols), data_(std::move(data)) {
        require(data_.size() == rows_ * cols_, "matrix data size does not match shape");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    const Vec& data() const { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

// ---------------------------------------------------------------------------
// Vector primitives

inline double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

inline Vec add(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dimension mismatch");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] + b[i];
    }
    return out;
}

inline Vec subtract(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dimension mismatch");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return out;
}

inline Vec scaled(std::span<const double> a, double s) {
    Vec out(a.begin(), a.end());
    for (auto& x : out) {
        x *= s;
    }
    return out;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require(x.size() == y.size(), "dimension mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot(a, b) / (na * nb);
}

inline bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

inline void require_same_dimension(std::span<const Vec> vectors) {
    require(!vectors.empty(), "empty input");
    const auto d = vectors.front().size();
    for (const auto& v : vectors) {
        require(v.size() == d, "dimension mismatch");
    }
}

/// Arithmetic mean of equally sized vectors, accumulated in input order.
inline Vec mean(std::span<const Vec> vectors) {
    require_same_dimension(vectors);
    Vec out(vectors.front().size(), 0.0);
    for (const auto& v : vectors) {
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] += v[j];
        }
    }
    const double n = static_cast<double>(vectors.size());
    for (auto& x : out) {
        x /= n;
    }
    return out;
}

/// ceil(fraction * n) with a small guard so 0.3*10 counts as 3 even when the
/// product lands a hair above the integer.
inline std::size_t ceil_count(double fraction, std::size_t n) {
    const double raw = fraction * static_cast<double>(n);
    return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

/// Strict weak order on doubles with NaN after every number, so sorting
/// stays well defined when a diverged model leaks NaN into a column.
inline bool total_less(double a, double b) {
    if (std::isnan(a)) {
        return false;
    }
    return std::isnan(b) || a < b;
}

/// Descending counterpart of total_less (NaN still last).
inline bool total_greater(double a, double b) {
    if (std::isnan(a)) {
        return false;
    }
    return std::isnan(b) || a > b;
}

// ---------------------------------------------------------------------------
// Matrix primitives

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            t(c, r) = m(r, c);
        }
    }
    return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "dimension mismatch");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

/// m * m^T, the Gram matrix of the rows of m.
inline Matrix gram(const Matrix& m) {
    Matrix g(m.rows(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = i; j < m.rows(); ++j) {
            const double v = dot(m.row(i), m.row(j));
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return g;
}

inline double frobenius_norm(const Matrix& m) {
    require(!m.empty(), "empty input");
    double s = 0.0;
    for (double x : m.data()) {
        s += x * x;
    }
    return std::sqrt(s);
}

/// Scales every row to unit Euclidean norm. Throws on an all-zero row.
inline Matrix normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        const double n = norm(row);
        require(n > 0.0 && std::isfinite(n), "degenerate embedding");
        for (auto& x : row) {
            x /= n;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error ~1.15e-9) followed by one
/// Halley step against erfc, which brings the result to near machine precision.
inline double std_normal_inverse_cdf(double p) {
    require(p > 0.0 && p < 1.0 && std::isfinite(p), "probability out of range");

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    constexpr double p_high = 1.0 - p_low;

    double x = 0.0;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= p_high) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = std_normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

/// Per-dimension mean after dropping the k largest and k smallest values.
inline Vec coordinate_trimmed_mean(std::span<const Vec> vectors, std::size_t k) {
    require_same_dimension(vectors);
    const std::size_t n = vectors.size();
    require(2 * k < n, "over-trimmed");
    const std::size_t d = vectors.front().size();
    Vec out(d);
    Vec column(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            column[i] = vectors[i][j];
        }
        if (k > 0) {
            std::sort(column.begin(), column.end(), total_less);
        }
        double s = 0.0;
        for (std::size_t i = k; i < n - k; ++i) {
            s += column[i];
        }
        out[j] = s / static_cast<double>(n - 2 * k);
    }
    return out;
}

inline double median_of(Vec values) {
    require(!values.empty(), "empty input");
    std::sort(values.begin(), values.end(), total_less);
    const std::size_t n = values.size();
    if (n % 2 == 1) {
        return values[n / 2];
    }
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

/// Per-dimension median; an even count takes the midpoint of the two central values.
inline Vec coordinate_median(std::span<const Vec> vectors) {
    require_same_dimension(vectors);
    const std::size_t d = vectors.front().size();
    Vec out(d);
    Vec column(vectors.size());
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            column[i] = vectors[i][j];
        }
        out[j] = median_of(column);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Geometric median

struct GeometricMedianOptions {
    double tol = 1e-8;
    std::size_t max_iter = 200;
    double smoothing = 1e-6;
};

struct GeometricMedianResult {
    Vec median;
    /// Weighted sum of distances, one entry per iterate (including the start).
    std::vector<double> objective_trace;
    std::size_t iterations = 0;
    bool converged = false;
};

inline double weighted_distance_sum(std::span<const Vec> points, std::span<const double> weights,
                                    std::span<const double> v) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        s += weights[i] * distance(v, points[i]);
    }
    return s;
}

/// Smoothed Weiszfeld iteration for argmin_v sum_i w_i * ||v - p_i||.
///
/// Distances are floored at `smoothing` so an iterate landing on an input
/// point does not divide by zero. Starts from the weighted mean.
inline GeometricMedianResult geometric_median(std::span<const Vec> points, std::span<const double> weights,
                                              const GeometricMedianOptions& opts = {}) {
    require_same_dimension(points);
    require(weights.size() == points.size(), "one weight per point required");
    require(std::all_of(weights.begin(), weights.end(), [](double w) { return w > 0.0; }),
            "weights must be positive");
    require(opts.tol > 0.0 && opts.smoothing > 0.0, "tol and smoothing must be positive");

    const std::size_t d = points.front().size();
    double total_weight = 0.0;
    for (double w : weights) {
        total_weight += w;
    }

    GeometricMedianResult result;
    Vec v(d, 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        axpy(weights[i] / total_weight, points[i], v);
    }
    result.objective_trace.push_back(weighted_distance_sum(points, weights, v));

    Vec next(d);
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        double beta_sum = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double beta = weights[i] / std::max(opts.smoothing, distance(v, points[i]));
            axpy(beta, points[i], next);
            beta_sum += beta;
        }
        for (auto& x : next) {
            x /= beta_sum;
        }
        const double step = distance(next, v);
        v.swap(next);
        result.iterations = it + 1;
        result.objective_trace.push_back(weighted_distance_sum(points, weights, v));
        if (step < opts.tol) {
            result.converged = true;
            break;
        }
    }
    result.median = std::move(v);
    return result;
}

}  // namespace fedgram
