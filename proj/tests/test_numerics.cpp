#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "atvr/numerics.hpp"

using namespace atvr;

namespace {

// Independent oracle: singular values of a 2x2 matrix from the eigenvalues of
// W^T W via the quadratic formula.
std::pair<double, double> svd2x2_oracle(const Matrix& w) {
    const double a = w(0, 0) * w(0, 0) + w(1, 0) * w(1, 0);
    const double b = w(0, 0) * w(0, 1) + w(1, 0) * w(1, 1);
    const double c = w(0, 1) * w(0, 1) + w(1, 1) * w(1, 1);
    const double mean = 0.5 * (a + c);
    const double disc = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    return {std::sqrt(mean + disc), std::sqrt(std::max(mean - disc, 0.0))};
}

Matrix random_matrix(std::size_t rows, std::size_t cols, RandomSource& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = rng.normal();
    return m;
}

// Gram-Schmidt orthonormalization of the columns (test-only helper).
Matrix orthonormal_columns(std::size_t rows, std::size_t cols, RandomSource& rng) {
    Matrix m = random_matrix(rows, cols, rng);
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double proj = 0.0;
            for (std::size_t i = 0; i < rows; ++i) proj += m(i, j) * m(i, k);
            for (std::size_t i = 0; i < rows; ++i) m(i, j) -= proj * m(i, k);
        }
        const double n = m.column_norm2(j);
        for (std::size_t i = 0; i < rows; ++i) m(i, j) /= n;
    }
    return m;
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("svd of diagonal and identity matrices") {
    Matrix d(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    const SpectralStats s = svd_spectrum(d);
    CHECK(s.sigma_max == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(s.sigma_min == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.condition_number == doctest::Approx(3.0).epsilon(1e-12));

    const SpectralStats id = svd_spectrum(Matrix::identity(5));
    CHECK(id.sigma_max == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(id.sigma_min == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(id.condition_number == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd matches the 2x2 quadratic-formula oracle") {
    RandomSource rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix w = random_matrix(2, 2, rng);
        const auto [hi, lo] = svd2x2_oracle(w);
        const SpectralStats s = svd_spectrum(w);
        CHECK(s.sigma_max == doctest::Approx(hi).epsilon(1e-10));
        CHECK(s.sigma_min == doctest::Approx(lo).epsilon(1e-10));
    }
}

TEST_CASE("svd reproduces a constructed spectrum at 128x128 to 1e-9 relative") {
    RandomSource rng(11);
    const std::size_t n = 128;
    const Matrix u = orthonormal_columns(n, n, rng);
    const Matrix v = orthonormal_columns(n, n, rng);
    Vec spectrum(n);
    for (std::size_t i = 0; i < n; ++i)
        spectrum[i] = std::pow(10.0, 2.0 - 4.0 * static_cast<double>(i) / (n - 1));
    Matrix a(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += u(i, k) * spectrum[k] * v(j, k);
            a(i, j) = acc;
        }
    const SvdResult svd = jacobi_svd(a);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(svd.singular_values[i] == doctest::Approx(spectrum[i]).epsilon(1e-9));
}

TEST_CASE("operator norm property: ||Mv|| <= sigma_max ||v||") {
    RandomSource rng(21);
    const Matrix m = random_matrix(13, 29, rng);
    const double smax = svd_spectrum(m).sigma_max;
    for (int trial = 0; trial < 1000; ++trial) {
        const Vec v = rng.normal_vec(29);
        CHECK(norm2(m.apply(v)) <= smax * norm2(v) * (1.0 + 1e-9));
    }
}

TEST_CASE("orthonormal columns have unit spectrum") {
    RandomSource rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const Matrix q = orthonormal_columns(40, 12, rng);
        const SpectralStats s = svd_spectrum(q);
        CHECK(s.sigma_max == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(s.sigma_min == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("right singular vectors reach the operator norm, both orientations") {
    RandomSource rng(31);
    for (const auto [rows, cols] : {std::pair<int, int>{9, 4}, {4, 9}}) {
        const Matrix m = random_matrix(rows, cols, rng);
        const SvdResult svd = jacobi_svd(m);
        Vec top(static_cast<std::size_t>(cols));
        for (int i = 0; i < cols; ++i) top[i] = svd.right_vectors(i, 0);
        CHECK(norm2(top) == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(norm2(m.apply(top)) == doctest::Approx(svd.singular_values[0]).epsilon(1e-10));
    }
}

TEST_CASE("svd rejects bad input") {
    CHECK_THROWS_AS(svd_spectrum(Matrix()), std::invalid_argument);
    Matrix bad(2, 2);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(svd_spectrum(bad), std::invalid_argument);
    Matrix rank_deficient(2, 2, 0.0);
    rank_deficient(0, 0) = 1.0;
    CHECK(std::isinf(svd_spectrum(rank_deficient).condition_number));
}

TEST_CASE("finite_diff_check on quadratic and constant fields") {
    RandomSource rng(5);
    Vec x = rng.normal_vec(8);
    const auto quadratic = [](const Vec& v) { return 0.5 * dot(v, v); };
    CHECK(finite_diff_check(quadratic, x, x, 1e-5) < 1e-7);

    const auto constant = [](const Vec&) { return 4.25; };
    CHECK(finite_diff_check(constant, Vec(8, 0.0), x, 1e-5) == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(finite_diff_check(quadratic, x, x, 0.0), std::invalid_argument);
    const auto exploding = [](const Vec& v) { return v[0] > 0 ? std::nan("") : 0.0; };
    CHECK_THROWS_AS(finite_diff_check(exploding, Vec(8, 0.0), Vec(8, 0.0), 1e-5),
                    std::runtime_error);
}

TEST_CASE("random source is deterministic and substreams ignore parent state") {
    RandomSource a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

    RandomSource parent1(9), parent2(9);
    parent2.normal_vec(17);  // consume some of parent2 first
    RandomSource sub1 = parent1.substream(3);
    RandomSource sub2 = parent2.substream(3);
    for (int i = 0; i < 20; ++i) CHECK(sub1.next_u64() == sub2.next_u64());

    RandomSource other = parent1.substream(4);
    CHECK(other.next_u64() != parent1.substream(3).next_u64());
}

TEST_CASE("uniform stays in range and normal has sane moments") {
    RandomSource rng(123);
    double sum = 0.0, sumsq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform(-2.0, 3.0);
        CHECK(u >= -2.0);
        CHECK(u < 3.0);
        const double z = rng.normal();
        sum += z;
        sumsq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("parallel_for matches serial execution") {
    std::vector<double> serial(257), parallel(257);
    for (std::size_t i = 0; i < serial.size(); ++i) serial[i] = std::sqrt(static_cast<double>(i));
    parallel_for(parallel.size(), 4,
                 [&](std::size_t i) { parallel[i] = std::sqrt(static_cast<double>(i)); });
    CHECK(serial == parallel);
}

}  // TEST_SUITE
