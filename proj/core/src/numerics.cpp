#include "ebsg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ebsg {

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) {
        throw std::invalid_argument("Matrix: negative dimension");
    }
}

std::span<double> Matrix::row(int r) {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
}

std::span<const double> Matrix::row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
}

std::uint64_t Rng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

double Rng::normal() {
    // u1 in (0, 1] so the log is finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::gamma(double alpha) {
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("gamma: alpha must be positive");
    }
    if (alpha < 1.0) {
        double u = next_double();
        while (u <= 0.0) {
            u = next_double();
        }
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) {
            continue;
        }
        v = v * v * v;
        double u = next_double();
        while (u <= 0.0) {
            u = next_double();
        }
        double x2 = x * x;
        if (std::log(u) < 0.5 * x2 + d - d * v + d * std::log(v)) {
            return d * v;
        }
    }
}

Rng Rng::fork() {
    return Rng(next_u64());
}

Vector softmax(std::span<const double> v) {
    if (v.empty()) {
        throw std::invalid_argument("softmax: empty input");
    }
    if (!all_finite(v)) {
        throw std::invalid_argument("softmax: non-finite entry");
    }
    const double m = *std::max_element(v.begin(), v.end());
    Vector out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        sum += out[i];
    }
    for (double& p : out) {
        p /= sum;
    }
    return out;
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) {
        throw std::invalid_argument("log_sum_exp: empty input");
    }
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) {
        return m;
    }
    double sum = 0.0;
    for (double x : v) {
        sum += std::exp(x - m);
    }
    return m + std::log(sum);
}

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("finite_diff_grad: h must be positive");
    }
    Vector point(x.begin(), x.end());
    Vector grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = point[i];
        point[i] = orig + h;
        const double fp = f(point);
        point[i] = orig - h;
        const double fm = f(point);
        point[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw std::invalid_argument("finite_diff_grad: non-finite function value");
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

int categorical_sample(std::span<const double> p, Rng& rng) {
    if (p.empty()) {
        throw std::invalid_argument("categorical_sample: empty distribution");
    }
    double sum = 0.0;
    for (double x : p) {
        if (x < 0.0 || !std::isfinite(x)) {
            throw std::invalid_argument("categorical_sample: negative or non-finite entry");
        }
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("categorical_sample: probabilities do not sum to 1");
    }
    const double u = rng.next_double();
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        cum += p[i];
        if (u < cum) {
            return static_cast<int>(i);
        }
    }
    return static_cast<int>(p.size()) - 1;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("dot: size mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

void add_scaled(std::span<double> y, std::span<const double> x, double scale) {
    if (y.size() != x.size()) {
        throw std::invalid_argument("add_scaled: size mismatch");
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += scale * x[i];
    }
}

Vector matvec(const Matrix& m, std::span<const double> x) {
    if (static_cast<std::size_t>(m.cols()) != x.size()) {
        throw std::invalid_argument("matvec: size mismatch");
    }
    Vector out(m.rows(), 0.0);
    for (int r = 0; r < m.rows(); ++r) {
        out[r] = dot(m.row(r), x);
    }
    return out;
}

Vector matvec_transpose(const Matrix& m, std::span<const double> x) {
    if (static_cast<std::size_t>(m.rows()) != x.size()) {
        throw std::invalid_argument("matvec_transpose: size mismatch");
    }
    Vector out(m.cols(), 0.0);
    for (int r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (int c = 0; c < m.cols(); ++c) {
            out[c] += row[c] * x[r];
        }
    }
    return out;
}

}  // namespace ebsg
