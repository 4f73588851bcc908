#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "fedgram/mathcore.hpp"
#include "fedgram/rng.hpp"

using namespace fedgram;

namespace {

// Bisection on the complementary error function; independent of the
// rational approximation under test.
double inverse_cdf_oracle(double p) {
    double lo = -40.0;
    double hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

Vec random_vec(RngStream& rng, std::size_t d) {
    Vec v(d);
    for (auto& x : v) {
        x = rng.normal();
    }
    return v;
}

}  // namespace

TEST(FrobeniusNorm, KnownMatrices) {
    EXPECT_DOUBLE_EQ(frobenius_norm(Matrix::identity(2)), std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(frobenius_norm(Matrix(2, 2, 1.0)), 2.0);
    const Matrix m(2, 2, Vec{1.0, 0.7071, 0.7071, 1.0});
    EXPECT_NEAR(frobenius_norm(m), std::sqrt(2.0 + 2.0 * 0.7071 * 0.7071), 1e-15);
    EXPECT_NEAR(frobenius_norm(m), std::sqrt(3.0), 1e-4);
}

TEST(FrobeniusNorm, EmptyThrows) {
    EXPECT_THROW(
        {
            try {
                frobenius_norm(Matrix());
            } catch (const Error& e) {
                EXPECT_STREQ(e.what(), "empty input");
                throw;
            }
        },
        Error);
}

TEST(NormalizeRows, Examples) {
    const auto a = normalize_rows(Matrix(1, 2, Vec{3.0, 4.0}));
    EXPECT_DOUBLE_EQ(a(0, 0), 0.6);
    EXPECT_DOUBLE_EQ(a(0, 1), 0.8);
    const auto b = normalize_rows(Matrix(1, 2, Vec{1.0, 0.0}));
    EXPECT_EQ(b(0, 0), 1.0);
    EXPECT_EQ(b(0, 1), 0.0);
    const auto c = normalize_rows(Matrix(1, 3, Vec{1.0, 1.0, 1.0}));
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_NEAR(c(0, j), 1.0 / std::sqrt(3.0), 1e-15);
    }
}

TEST(NormalizeRows, ZeroRowIsDegenerate) {
    try {
        normalize_rows(Matrix(2, 2, Vec{1.0, 0.0, 0.0, 0.0}));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "degenerate embedding");
    }
}

TEST(NormalizeRows, UnitNormProperty) {
    RngStream rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t r = 1 + rng.below(6);
        const std::size_t c = 1 + rng.below(6);
        Matrix m(r, c);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                m(i, j) = rng.normal();
            }
        }
        const auto n = normalize_rows(m);
        for (std::size_t i = 0; i < r; ++i) {
            EXPECT_NEAR(norm(n.row(i)), 1.0, 1e-12);
            EXPECT_GT(dot(n.row(i), m.row(i)), 0.0);
        }
    }
}

TEST(GramBounds, RandomMatricesStayInRange) {
    RngStream rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 1 + rng.below(10);
        const std::size_t e = 1 + rng.below(8);
        Matrix p(k, e);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < e; ++j) {
                p(i, j) = rng.normal();
            }
        }
        const double s = frobenius_norm(gram(normalize_rows(p)));
        EXPECT_GE(s, std::sqrt(static_cast<double>(k)) - 1e-12);
        EXPECT_LE(s, static_cast<double>(k) + 1e-12);
    }
}

TEST(Gram, MatchesTransposeProduct) {
    RngStream rng(13);
    Matrix p(4, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            p(i, j) = rng.normal();
        }
    }
    const auto g = gram(p);
    const auto h = matmul(p, transpose(p));
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_NEAR(g(i, j), h(i, j), 1e-12);
        }
    }
}

TEST(InverseNormalCdf, Examples) {
    EXPECT_EQ(std_normal_inverse_cdf(0.5), 0.0);
    EXPECT_NEAR(std_normal_inverse_cdf(0.5333333), inverse_cdf_oracle(0.5333333), 1.2e-9);
    EXPECT_NEAR(std_normal_inverse_cdf(0.5333333), 0.08365, 5e-5);
    EXPECT_NEAR(std_normal_inverse_cdf(0.975), 1.959964, 1e-6);
}

TEST(InverseNormalCdf, MatchesBisectionOracleAcrossRange) {
    for (double p = 1e-6; p < 1.0; p += 0.0137) {
        EXPECT_NEAR(std_normal_inverse_cdf(p), inverse_cdf_oracle(p), 1.2e-9) << "p=" << p;
    }
    for (double p : {1e-10, 1e-8, 0.02425, 0.97575, 1.0 - 1e-8}) {
        EXPECT_NEAR(std_normal_inverse_cdf(p), inverse_cdf_oracle(p), 1.2e-9) << "p=" << p;
    }
}

TEST(InverseNormalCdf, MonotoneAndAntisymmetric) {
    double prev = -std::numeric_limits<double>::infinity();
    for (int i = 1; i < 1000; ++i) {
        const double p = i / 1000.0;
        const double z = std_normal_inverse_cdf(p);
        EXPECT_GT(z, prev);
        prev = z;
        EXPECT_NEAR(std_normal_inverse_cdf(1.0 - p), -z, 1e-9);
    }
}

TEST(InverseNormalCdf, OutOfRange) {
    for (double p : {0.0, 1.0, -0.1, 1.5}) {
        try {
            std_normal_inverse_cdf(p);
            FAIL() << "expected an error for p=" << p;
        } catch (const Error& e) {
            EXPECT_STREQ(e.what(), "probability out of range");
        }
    }
}

TEST(TrimmedMean, Examples) {
    const std::vector<Vec> a{{1}, {2}, {3}, {4}, {100}};
    EXPECT_DOUBLE_EQ(coordinate_trimmed_mean(a, 1)[0], 3.0);
    const std::vector<Vec> b{{5}, {5}, {5}};
    EXPECT_DOUBLE_EQ(coordinate_trimmed_mean(b, 1)[0], 5.0);
    const std::vector<Vec> c{{0, 10}, {1, 0}, {2, 5}, {3, 1}, {4, 2}};
    const auto t = coordinate_trimmed_mean(c, 1);
    EXPECT_DOUBLE_EQ(t[0], 2.0);
    EXPECT_NEAR(t[1], 8.0 / 3.0, 1e-15);
}

TEST(TrimmedMean, OverTrimmed) {
    const std::vector<Vec> a{{1}, {2}, {3}, {4}};
    try {
        coordinate_trimmed_mean(a, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "over-trimmed");
    }
}

TEST(TrimmedMean, ZeroTrimIsExactMean) {
    RngStream rng(14);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Vec> v;
        for (std::size_t i = 0; i < 1 + rng.below(9); ++i) {
            v.push_back(random_vec(rng, 4));
        }
        EXPECT_EQ(coordinate_trimmed_mean(v, 0), mean(v));
    }
}

TEST(TrimmedMean, ToleratesNaNColumns) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const std::vector<Vec> v{{1.0}, {nan}, {2.0}, {3.0}, {nan}};
    const auto t = coordinate_trimmed_mean(v, 1);
    EXPECT_TRUE(std::isnan(t[0]));
    EXPECT_DOUBLE_EQ(median_of({1.0, 2.0, 3.0, nan, nan}), 3.0);
}

TEST(CoordinateMedian, Examples) {
    EXPECT_DOUBLE_EQ(coordinate_median(std::vector<Vec>{{1}, {2}, {3}})[0], 2.0);
    EXPECT_DOUBLE_EQ(coordinate_median(std::vector<Vec>{{1}, {2}, {3}, {4}})[0], 2.5);
    EXPECT_EQ(coordinate_median(std::vector<Vec>{{1, 9}, {5, 1}, {3, 5}}), (Vec{3, 5}));
}

TEST(GeometricMedian, SinglePoint) {
    const std::vector<Vec> p{{1.5, -2.0}};
    const Vec w{1.0};
    EXPECT_EQ(geometric_median(p, w).median, p[0]);
}

TEST(GeometricMedian, EquilateralTriangle) {
    const std::vector<Vec> p{{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2}};
    const Vec w{1, 1, 1};
    const auto r = geometric_median(p, w);
    EXPECT_NEAR(r.median[0], 0.5, 1e-6);
    EXPECT_NEAR(r.median[1], std::sqrt(3.0) / 6, 1e-6);
}

TEST(GeometricMedian, MatchesGridSearchOracle) {
    const std::vector<Vec> p{{0, 0}, {10, 0}, {0.1, 0}, {0.2, 0}};
    const Vec w{1, 1, 1, 1};
    const auto r = geometric_median(p, w);
    double best_x = 0.0;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 200000; ++i) {
        const double x = -1.0 + 12.0 * i / 200000.0;
        const double obj = weighted_distance_sum(p, w, Vec{x, 0.0});
        if (obj < best_obj) {
            best_obj = obj;
            best_x = x;
        }
    }
    EXPECT_LE(weighted_distance_sum(p, w, r.median), best_obj + 1e-4);
    // The objective is flat on [0.1, 0.2]; any minimiser there is correct.
    EXPECT_GE(r.median[0], 0.1 - 1e-4);
    EXPECT_LE(r.median[0], 0.2 + 1e-4);
    EXPECT_NEAR(r.median[1], 0.0, 1e-4);
    EXPECT_GE(best_x, 0.1 - 1e-4);
}

TEST(GeometricMedian, ObjectiveNeverIncreases) {
    RngStream rng(15);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<Vec> p;
        Vec w;
        const std::size_t n = 1 + rng.below(12);
        for (std::size_t i = 0; i < n; ++i) {
            p.push_back(random_vec(rng, 3));
            w.push_back(0.1 + rng.uniform());
        }
        const auto r = geometric_median(p, w);
        for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
            EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1] + 1e-12);
        }
    }
}

TEST(CeilCount, GuardsRoundingNoise) {
    EXPECT_EQ(ceil_count(0.3, 10), 3u);
    EXPECT_EQ(ceil_count(0.2, 50), 10u);
    EXPECT_EQ(ceil_count(0.31, 10), 4u);
    EXPECT_EQ(ceil_count(0.0, 10), 0u);
}
