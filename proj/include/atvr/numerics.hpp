#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace atvr {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Small sizes only (<= a few hundred);
/// everything in this library is desk scale.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    Vec& data() { return data_; }
    const Vec& data() const { return data_; }

    /// y = M x
    Vec apply(const Vec& x) const;
    /// y = M^T x
    Vec apply_transposed(const Vec& x) const;
    Matrix transposed() const;
    Matrix multiply(const Matrix& other) const;
    double column_norm2(std::size_t j) const;
    bool all_finite() const;

    bool operator==(const Matrix& other) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

/// Largest/smallest of the min(rows, cols) singular values.
/// condition_number is +inf when sigma_min is exactly zero.
struct SpectralStats {
    double sigma_max = 0.0;
    double sigma_min = 0.0;
    double condition_number = 0.0;
};

struct SvdResult {
    Vec singular_values;   // sorted descending, min(rows, cols) entries
    Matrix right_vectors;  // cols x k; column j is the right singular vector for value j
};

/// One-sided Jacobi SVD. Accurate to ~1e-13 relative on the dense sizes used
/// here (<= 128x128). Throws std::invalid_argument on empty or non-finite input.
SvdResult jacobi_svd(const Matrix& m);

SpectralStats svd_spectrum(const Matrix& m);

/// Deterministic seeded random stream. Substreams derived from
/// (construction seed, index) do not depend on how much of the parent
/// stream has been consumed, so per-sample streams are iteration-order
/// independent.
class RandomSource {
  public:
    explicit RandomSource(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller (portable, no libstdc++ distribution).
    double normal();

    Vec uniform_vec(std::size_t n, double lo, double hi);
    Vec normal_vec(std::size_t n);

    RandomSource substream(std::uint64_t index) const;

  private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Max over coordinates of |central difference - grad_i| / (|grad_i| + 1e-12)
/// at step size `step`. Throws on non-positive step or non-finite evaluations.
double finite_diff_check(const std::function<double(const Vec&)>& fn, const Vec& grad_at_x,
                         const Vec& x, double step);

// Small vector helpers shared across modules.
double dot(const Vec& a, const Vec& b);
double norm2(const Vec& v);
double norm1(const Vec& v);
double norm_inf(const Vec& v);
Vec sub(const Vec& a, const Vec& b);
Vec add(const Vec& a, const Vec& b);
/// y += alpha * x
void axpy(double alpha, const Vec& x, Vec& y);
bool all_finite(const Vec& v);

/// Fixed-order-safe parallel map: fn(i) must be pure w.r.t. shared state
/// except its own output slot. threads <= 1 runs serially.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace atvr
