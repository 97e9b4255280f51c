#include "dps/theory.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

namespace dps {

void MogPair::validate() const {
    if (a1.size() == 0 || a1.size() != a2.size()) throw std::invalid_argument("mog pair means must share a dimension");
    if (std::abs(w.sum() - 1.0) > 1e-12 || std::abs(w_tilde.sum() - 1.0) > 1e-12) {
        throw std::invalid_argument("mog pair weights must each sum to 1");
    }
    if ((w.array() < 0.0).any() || (w_tilde.array() < 0.0).any()) {
        throw std::invalid_argument("mog pair weights must be nonnegative");
    }
}

GaussianMixture MogPair::first() const {
    GaussianMixture m;
    m.weights = w;
    m.means = {a1, a2};
    m.variance = 1.0;
    return m;
}

GaussianMixture MogPair::second() const {
    GaussianMixture m = first();
    m.weights = w_tilde;
    return m;
}

MogPair random_separated_pair(Rng& rng, double min_separation, double box) {
    if (!(min_separation < 2.0 * std::sqrt(2.0) * box)) throw std::invalid_argument("separation cannot fit in the box");
    std::uniform_real_distribution<double> coord(-box, box), weight(0.05, 0.95);
    MogPair p;
    do {
        p.a1 = Eigen::Vector2d(coord(rng), coord(rng));
        p.a2 = Eigen::Vector2d(coord(rng), coord(rng));
    } while ((p.a1 - p.a2).norm() < min_separation);
    const double w1 = weight(rng), wt1 = weight(rng);
    p.w = Eigen::Vector2d(w1, 1.0 - w1);
    p.w_tilde = Eigen::Vector2d(wt1, 1.0 - wt1);
    return p;
}

double kl_lower_bound(const MogPair& pair) {
    pair.validate();
    const double dist2 = (pair.a1 - pair.a2).squaredNorm();
    const double d = pair.dim();
    const double near = std::exp(-dist2 / 4.0);
    const double w1 = pair.w[0], w2 = pair.w[1];
    return w1 * (std::log(w1) - std::log(pair.w_tilde[0] + near)) +
           w2 * (std::log(w2) - std::log(pair.w_tilde[1] + near)) -
           (std::log(4.0) + d) * std::exp(0.5 * d * std::log(2.0) - dist2 / 64.0);
}

double fisher_upper_bound(const MogPair& pair) {
    pair.validate();
    if ((pair.w.array() <= 0.0).any() || (pair.w_tilde.array() <= 0.0).any()) {
        throw std::invalid_argument("fisher bound needs strictly positive weights");
    }
    const double dist2 = (pair.a1 - pair.a2).squaredNorm();
    const double d = pair.dim();
    const auto sq = [](double v) { return v * v; };
    const double ratios = sq(pair.w[1] / pair.w[0]) + sq(pair.w_tilde[1] / pair.w_tilde[0]) +
                          sq(pair.w[0] / pair.w[1]) + sq(pair.w_tilde[0] / pair.w_tilde[1]);
    return 2.0 * std::exp(-dist2 / 2.0) * ratios * dist2 +
           8.0 * (pair.a1.squaredNorm() + pair.a2.squaredNorm()) * std::exp(0.5 * d * std::log(2.0) - dist2 / 64.0);
}

namespace {

enum class Quantity { Kl, Fisher, Gap };

// Pointwise quantities of two unit-variance mixtures with shared means.
struct PairAt {
    Eigen::VectorXd m1, m2;
    double lw1, lw2, lv1, lv2;  // log weights of pi and pi~
    double log_norm;

    PairAt(const GaussianMixture& p, const GaussianMixture& q)
        : m1(p.means[0]), m2(p.means[1]), lw1(std::log(p.weights[0])), lw2(std::log(p.weights[1])),
          lv1(std::log(q.weights[0])), lv2(std::log(q.weights[1])),
          log_norm(-0.5 * static_cast<double>(p.dim()) * std::log(2.0 * M_PI)) {}

    static double lse(double a, double b) {
        const double m = std::max(a, b);
        if (m == -INFINITY) return m;
        return m + std::log(std::exp(a - m) + std::exp(b - m));
    }

    // Returns (density of pi, integrand value under pi).
    std::pair<double, double> eval(const Eigen::VectorXd& x, Quantity q) const {
        const double l1 = -0.5 * (x - m1).squaredNorm() + log_norm;
        const double l2 = -0.5 * (x - m2).squaredNorm() + log_norm;
        const double lp = lse(lw1 + l1, lw2 + l2);
        const double lq = lse(lv1 + l1, lv2 + l2);
        double g = 0.0;
        switch (q) {
            case Quantity::Kl:
                g = lp - lq;
                break;
            case Quantity::Gap:
                g = (lp - lq) * (lp - lq);
                break;
            case Quantity::Fisher: {
                // grad log pi - grad log pi~ = (r1 - r~1)(m1 - m2)
                const double r = std::exp(lw1 + l1 - lp) - std::exp(lv1 + l1 - lq);
                g = r * r * (m1 - m2).squaredNorm();
                break;
            }
        }
        return {std::exp(lp), g};
    }
};

double grid_integral(const PairAt& pa, Quantity q, double half_width, int cells) {
    using GL = boost::math::quadrature::gauss<double, 5>;
    std::vector<double> node, weight;
    const auto& xs = GL::abscissa();
    const auto& ws = GL::weights();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        node.push_back(xs[i]);
        weight.push_back(ws[i]);
        if (xs[i] != 0.0) {
            node.push_back(-xs[i]);
            weight.push_back(ws[i]);
        }
    }
    const double h = 2.0 * half_width / cells;
    std::vector<double> pts, wts;
    for (int c = 0; c < cells; ++c) {
        const double mid = -half_width + (c + 0.5) * h;
        for (std::size_t i = 0; i < node.size(); ++i) {
            pts.push_back(mid + 0.5 * h * node[i]);
            wts.push_back(0.5 * h * weight[i]);
        }
    }
    double total = 0.0;
    Eigen::VectorXd x(2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double row = 0.0;
        x[0] = pts[i];
        for (std::size_t j = 0; j < pts.size(); ++j) {
            x[1] = pts[j];
            const auto [dens, g] = pa.eval(x, q);
            row += wts[j] * dens * g;
        }
        total += wts[i] * row;
    }
    return total;
}

DivergenceEstimate integrate(const MogPair& pair, double t, Quantity q, const OracleOptions& opts) {
    pair.validate();
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("oracle time must lie in [0, 1]");
    const GaussianMixture p = mog_perturbed(pair.first(), t);
    const GaussianMixture pt = mog_perturbed(pair.second(), t);
    const PairAt pa(p, pt);
    DivergenceEstimate est;

    if (pair.dim() == 2) {
        for (const auto& m : p.means) {
            if (m.cwiseAbs().maxCoeff() > opts.half_width - 4.0) {
                throw std::invalid_argument("mixture mean lies too close to the quadrature box edge");
            }
        }
        int cells = opts.initial_cells;
        double prev = grid_integral(pa, q, opts.half_width, cells);
        while (true) {
            if (2 * cells > opts.max_cells) {
                std::ostringstream os;
                os << "quadrature did not converge: last change " << est.error << " at " << cells
                   << " cells per axis (tolerance " << opts.tol << ")";
                throw QuadratureError(os.str());
            }
            cells *= 2;
            const double cur = grid_integral(pa, q, opts.half_width, cells);
            est.error = std::abs(cur - prev);
            est.value = cur;
            est.cells = cells;
            if (est.error < opts.tol) return est;
            prev = cur;
        }
    }

    Rng rng = make_stream(opts.seed, "oracle");
    const Eigen::MatrixXd xs = mog_sample(p, opts.mc_samples, rng);
    double sum = 0.0, sq = 0.0;
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        const double g = pa.eval(xs.row(i).transpose(), q).second;
        sum += g;
        sq += g * g;
    }
    const double n = static_cast<double>(xs.rows());
    est.value = sum / n;
    est.error = std::sqrt(std::max(sq / n - est.value * est.value, 0.0) / n);
    est.quadrature = false;
    return est;
}

}  // namespace

DivergenceEstimate numeric_kl(const MogPair& pair, double t, const OracleOptions& opts) {
    return integrate(pair, t, Quantity::Kl, opts);
}

DivergenceEstimate numeric_fisher(const MogPair& pair, double t, const OracleOptions& opts) {
    return integrate(pair, t, Quantity::Fisher, opts);
}

DivergenceEstimate logdensity_gap(const MogPair& pair, double t, const OracleOptions& opts) {
    return integrate(pair, t, Quantity::Gap, opts);
}

Eigen::VectorXd score_fpe_residual(const AnalyticScore& field, const Eigen::VectorXd& x, double t) {
    const Eigen::Index d = x.size();
    const double c = 1.0 / (2.0 * (1.0 - t));
    // (g^2/2)(div s + |s|^2) - f.s - div f
    const auto bracket = [&](const Eigen::VectorXd& y) {
        const ScoreFieldDerivatives f = field(y, t);
        return c * (f.jacobian.trace() + f.s.squaredNorm() + y.dot(f.s) + static_cast<double>(d));
    };
    constexpr double h = 1e-5;
    Eigen::VectorXd grad(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        grad[i] = (bracket(xp) - bracket(xm)) / (2.0 * h);
    }
    return field(x, t).dt - grad;
}

}  // namespace dps
