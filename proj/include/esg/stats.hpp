#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "esg/errors.hpp"

namespace esg {

inline double normal_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014326779399461;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// Abs error below 1e-15 over the representable range (erfc-based).
inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * 0.7071067811865475244008444);
}

// Wichura's AS 241 PPND16: inverse normal CDF, abs error ~1e-15.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw FormulaInapplicable("normal_quantile: p must lie in (0,1)");
    const double q = p - 0.5;
    double r;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -x : x;
}

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double eps = std::numeric_limits<double>::epsilon();
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 10.0 * eps) break;
    }
    return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                  a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::beta_cf(a, b, x) / a;
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          b * std::log1p(-x) + a * std::log(x)) *
                     detail::beta_cf(b, a, 1.0 - x) / b;
}

// Student-t CDF with nu degrees of freedom.
inline double student_t_cdf(double t, double nu) {
    const double ib = incomplete_beta(0.5 * nu, 0.5, nu / (nu + t * t));
    return (t >= 0.0) ? 1.0 - 0.5 * ib : 0.5 * ib;
}

// Upper-tail Student-t quantile by bracketed bisection; p in (0,1).
inline double student_t_quantile(double p, double nu) {
    if (!(p > 0.0 && p < 1.0))
        throw FormulaInapplicable("student_t_quantile: p must lie in (0,1)");
    if (!(nu >= 1.0))
        throw FormulaInapplicable("student_t_quantile: need nu >= 1");
    if (p == 0.5) return 0.0;
    const bool lower = p < 0.5;
    const double pt = lower ? 1.0 - p : p;
    double hi = 2.0;
    while (student_t_cdf(hi, nu) < pt && hi < 1e308) hi *= 2.0;
    double lo = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, nu) < pt)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-14 * std::max(1.0, hi)) break;
    }
    const double x = 0.5 * (lo + hi);
    return lower ? -x : x;
}

// Neumaier compensated accumulator; deterministic for a fixed add order.
class NeumaierSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::fabs(sum_) >= std::fabs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct SampleStats {
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    std::size_t n = 0;
    double se() const { return n > 0 ? std::sqrt(variance / double(n)) : 0.0; }
};

inline SampleStats sample_stats(const std::vector<double>& xs) {
    SampleStats s;
    s.n = xs.size();
    if (s.n == 0) return s;
    NeumaierSum acc;
    for (double v : xs) acc.add(v);
    s.mean = acc.value() / double(s.n);
    if (s.n > 1) {
        NeumaierSum sq;
        for (double v : xs) {
            const double d = v - s.mean;
            sq.add(d * d);
        }
        s.variance = sq.value() / double(s.n - 1);
    }
    return s;
}

// Type-7 (linear interpolation) quantile of a sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw EmptyData("quantile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    const double h = q * double(sorted.size() - 1);
    const std::size_t i = static_cast<std::size_t>(std::floor(h));
    if (i + 1 >= sorted.size()) return sorted.back();
    const double w = h - double(i);
    return sorted[i] + w * (sorted[i + 1] - sorted[i]);
}

struct Histogram {
    std::vector<double> edges;            // size bins+1
    std::vector<std::vector<long>> counts;  // one vector per series
};

// Freedman-Diaconis bin width on the pooled sample; shared edges for all series.
inline Histogram freedman_diaconis_histogram(const std::vector<std::vector<double>>& series) {
    std::vector<double> pooled;
    for (const auto& s : series) pooled.insert(pooled.end(), s.begin(), s.end());
    if (pooled.empty()) throw EmptyData("histogram of empty sample");
    std::sort(pooled.begin(), pooled.end());
    const double lo = pooled.front(), hi = pooled.back();
    const double iqr = sorted_quantile(pooled, 0.75) - sorted_quantile(pooled, 0.25);
    double width = 2.0 * iqr / std::cbrt(double(pooled.size()));
    std::size_t bins;
    if (width <= 0.0 || hi <= lo) {
        bins = 1;
        width = std::max(hi - lo, 1.0);
    } else {
        bins = std::min<std::size_t>(static_cast<std::size_t>(std::ceil((hi - lo) / width)), 1u << 20);
        bins = std::max<std::size_t>(bins, 1);
    }
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        h.edges[i] = lo + (hi - lo) * double(i) / double(bins);
    h.edges.back() = hi;
    for (const auto& s : series) {
        std::vector<long> c(bins, 0);
        for (double v : s) {
            std::size_t b;
            if (v >= hi)
                b = bins - 1;
            else
                b = std::min<std::size_t>(bins - 1,
                    static_cast<std::size_t>((v - lo) / (hi - lo) * double(bins)));
            ++c[b];
        }
        h.counts.push_back(std::move(c));
    }
    return h;
}

// Composite Simpson rule with n subintervals (bumped to even).
template <typename F>
double simpson(F&& f, double a, double b, int n) {
    if (b == a) return 0.0;
    if (n < 2) n = 2;
    if (n % 2 != 0) ++n;
    const double h = (b - a) / n;
    NeumaierSum odd, even;
    for (int i = 1; i < n; i += 2) odd.add(f(a + h * i));
    for (int i = 2; i < n; i += 2) even.add(f(a + h * i));
    return h / 3.0 * (f(a) + f(b) + 4.0 * odd.value() + 2.0 * even.value());
}

}  // namespace esg
