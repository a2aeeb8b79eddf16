#include "atvr/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace atvr {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Vec Matrix::apply(const Vec& x) const {
    if (x.size() != cols_) throw std::invalid_argument("Matrix::apply: dimension mismatch");
    Vec y(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
        const double* row = data_.data() + i * cols_;
        double acc = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

Vec Matrix::apply_transposed(const Vec& x) const {
    if (x.size() != rows_) throw std::invalid_argument("Matrix::apply_transposed: dimension mismatch");
    Vec y(cols_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
        const double* row = data_.data() + i * cols_;
        const double xi = x[i];
        for (std::size_t j = 0; j < cols_; ++j) y[j] += row[j] * xi;
    }
    return y;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Matrix Matrix::multiply(const Matrix& other) const {
    if (cols_ != other.rows()) throw std::invalid_argument("Matrix::multiply: dimension mismatch");
    Matrix out(rows_, other.cols(), 0.0);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t k = 0; k < cols_; ++k) {
            const double aik = (*this)(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < other.cols(); ++j) out(i, j) += aik * other(k, j);
        }
    return out;
}

double Matrix::column_norm2(std::size_t j) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) acc += (*this)(i, j) * (*this)(i, j);
    return std::sqrt(acc);
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

// One-sided Jacobi on b (rows >= cols): rotates column pairs until all are
// mutually orthogonal. v accumulates the right rotations.
void jacobi_orthogonalize(Matrix& b, Matrix& v) {
    const std::size_t m = b.rows();
    const std::size_t n = b.cols();
    const double tol = 1e-15;
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    const double bi = b(k, i), bj = b(k, j);
                    alpha += bi * bi;
                    beta += bj * bj;
                    gamma += bi * bj;
                }
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < m; ++k) {
                    const double bi = b(k, i), bj = b(k, j);
                    b(k, i) = c * bi - s * bj;
                    b(k, j) = s * bi + c * bj;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vi = v(k, i), vj = v(k, j);
                    v(k, i) = c * vi - s * vj;
                    v(k, j) = s * vi + c * vj;
                }
            }
        }
        if (!rotated) break;
    }
}

}  // namespace

SvdResult jacobi_svd(const Matrix& input) {
    if (input.empty()) throw std::invalid_argument("jacobi_svd: empty matrix");
    if (!input.all_finite()) throw std::invalid_argument("jacobi_svd: non-finite entries");

    const bool transposed = input.rows() < input.cols();
    Matrix b = transposed ? input.transposed() : input;
    const std::size_t n = b.cols();
    Matrix v = Matrix::identity(n);
    jacobi_orthogonalize(b, v);

    Vec sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = b.column_norm2(j);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t c) { return sigma[a] > sigma[c]; });

    SvdResult out;
    out.singular_values.resize(n);
    // Right singular vectors of the original matrix: the accumulated rotations
    // when no transpose happened, otherwise the normalized columns of b
    // (left vectors of the transpose).
    const std::size_t vec_dim = input.cols();
    out.right_vectors = Matrix(vec_dim, n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t j = order[r];
        out.singular_values[r] = sigma[j];
        if (!transposed) {
            for (std::size_t k = 0; k < vec_dim; ++k) out.right_vectors(k, r) = v(k, j);
        } else if (sigma[j] > 0.0) {
            for (std::size_t k = 0; k < vec_dim; ++k) out.right_vectors(k, r) = b(k, j) / sigma[j];
        }
    }
    return out;
}

SpectralStats svd_spectrum(const Matrix& m) {
    const SvdResult svd = jacobi_svd(m);
    SpectralStats stats;
    stats.sigma_max = svd.singular_values.front();
    stats.sigma_min = svd.singular_values.back();
    stats.condition_number = stats.sigma_min > 0.0
                                 ? stats.sigma_max / stats.sigma_min
                                 : std::numeric_limits<double>::infinity();
    return stats;
}

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

RandomSource::RandomSource(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

double RandomSource::uniform() {
    // 53 random bits -> [0, 1); avoids implementation-defined distributions.
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double RandomSource::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RandomSource::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

Vec RandomSource::uniform_vec(std::size_t n, double lo, double hi) {
    Vec v(n);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
}

Vec RandomSource::normal_vec(std::size_t n) {
    Vec v(n);
    for (auto& x : v) x = normal();
    return v;
}

RandomSource RandomSource::substream(std::uint64_t index) const {
    return RandomSource(splitmix64(seed_ ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

double finite_diff_check(const std::function<double(const Vec&)>& fn, const Vec& grad_at_x,
                         const Vec& x, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be positive");
    if (grad_at_x.size() != x.size())
        throw std::invalid_argument("finite_diff_check: gradient dimension mismatch");
    Vec probe = x;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + step;
        const double fp = fn(probe);
        probe[i] = x[i] - step;
        const double fm = fn(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_check: non-finite function evaluation");
        const double fd = (fp - fm) / (2.0 * step);
        const double err = std::abs(fd - grad_at_x[i]) / (std::abs(grad_at_x[i]) + 1e-12);
        worst = std::max(worst, err);
    }
    return worst;
}

double dot(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

double norm1(const Vec& v) {
    double acc = 0.0;
    for (double x : v) acc += std::abs(x);
    return acc;
}

double norm_inf(const Vec& v) {
    double acc = 0.0;
    for (double x : v) acc = std::max(acc, std::abs(x));
    return acc;
}

Vec sub(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vec add(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

void axpy(double alpha, const Vec& x, Vec& y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

bool all_finite(const Vec& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const int workers = std::min<int>(threads, static_cast<int>(count));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace atvr
