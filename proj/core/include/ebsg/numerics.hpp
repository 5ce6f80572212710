#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ebsg {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles with explicit dimensions.
class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0);

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    std::span<double> row(int r);
    std::span<const double> row(int r) const;

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }

    bool operator==(const Matrix&) const = default;

  private:
    int rows_ = 0;
    int cols_ = 0;
    Vector data_;
};

/// Deterministic SplitMix64 stream. The state advances by the 64-bit golden
/// gamma (0x9E3779B97F4A7C15) per draw and is finalized with the standard
/// two-round mix, so a given seed yields the same draw sequence on every
/// platform. Single-owner mutable state: use one Rng per worker, forked from
/// a recorded master seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random mantissa bits; consumes one draw.
    double next_double();

    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller; consumes exactly two draws per call.
    double normal();

    /// Gamma(alpha, 1) via Marsaglia-Tsang squeeze (with the boost for
    /// alpha < 1). Draw count is data-dependent but deterministic in the
    /// stream position.
    double gamma(double alpha);

    /// Child stream seeded from the parent's next draw.
    Rng fork();

  private:
    std::uint64_t state_;
};

/// Numerically stable softmax (max-subtraction). Entries in (0,1), sum 1
/// within 1e-12. Throws std::invalid_argument on empty or non-finite input.
Vector softmax(std::span<const double> v);

/// ln(sum_i exp(v_i)), stable under large magnitudes. Throws on empty input.
double log_sum_exp(std::span<const double> v);

/// Central finite differences (f(x+h e_i) - f(x-h e_i)) / (2h) per coordinate.
/// The oracle for every analytic gradient in the test suite. Throws if f
/// evaluates to a non-finite value or h <= 0.
Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, double h);

/// Draws index i with probability p[i]; consumes exactly one uniform draw.
/// Requires entries >= 0 and sum within 1e-9 of 1.
int categorical_sample(std::span<const double> p, Rng& rng);

/// True when every entry is finite.
bool all_finite(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);

/// y += scale * x
void add_scaled(std::span<double> y, std::span<const double> x, double scale);

/// out = M x
Vector matvec(const Matrix& m, std::span<const double> x);

/// out = M^T x
Vector matvec_transpose(const Matrix& m, std::span<const double> x);

}  // namespace ebsg
