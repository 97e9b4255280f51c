#include "dps/targets.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dps {

void GaussianMixture::validate() const {
    if (means.empty()) throw std::invalid_argument("mixture needs at least one component");
    if (static_cast<std::size_t>(weights.size()) != means.size()) {
        throw std::invalid_argument("mixture weights and means differ in length");
    }
    if (!(variance > 0.0) || !std::isfinite(variance)) throw std::invalid_argument("mixture variance must be > 0");
    const Eigen::Index d = means.front().size();
    if (d < 1) throw std::invalid_argument("mixture dimension must be >= 1");
    for (const auto& m : means) {
        if (m.size() != d) throw std::invalid_argument("mixture means have different dimensions");
        if (!m.allFinite()) throw std::invalid_argument("mixture mean is not finite");
    }
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        if (!(weights[i] > 0.0)) throw std::invalid_argument("mixture weights must be > 0");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-12) throw std::invalid_argument("mixture weights must sum to 1");
}

GaussianMixture mog_perturbed(const GaussianMixture& mix, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("mog_perturbed: t must lie in [0, 1]");
    GaussianMixture out = mix;
    const double scale = std::sqrt(1.0 - t);
    for (auto& m : out.means) m *= scale;
    out.variance = (1.0 - t) * mix.variance + t;
    return out;
}

namespace {

// Component log-responsibilities up to the shared normalizer.
Eigen::VectorXd component_logits(const GaussianMixture& mix, const Eigen::VectorXd& x) {
    Eigen::VectorXd l(mix.components());
    for (std::size_t i = 0; i < mix.components(); ++i) {
        l[i] = std::log(mix.weights[i]) - (x - mix.means[i]).squaredNorm() / (2.0 * mix.variance);
    }
    return l;
}

}  // namespace

double mog_logdensity(const GaussianMixture& mix, const Eigen::VectorXd& x) {
    const Eigen::VectorXd l = component_logits(mix, x);
    const double m = l.maxCoeff();
    return m + std::log((l.array() - m).exp().sum()) - 0.5 * mix.dim() * std::log(2.0 * M_PI * mix.variance);
}

Eigen::VectorXd mog_score(const GaussianMixture& mix, const Eigen::VectorXd& x) {
    Eigen::VectorXd l = component_logits(mix, x);
    l = (l.array() - l.maxCoeff()).exp();
    l /= l.sum();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(x.size());
    for (std::size_t i = 0; i < mix.components(); ++i) mean += l[i] * mix.means[i];
    return (mean - x) / mix.variance;
}

Eigen::MatrixXd mog_sample(const GaussianMixture& mix, Eigen::Index n, Rng& rng) {
    const int d = mix.dim();
    std::discrete_distribution<int> pick(mix.weights.data(), mix.weights.data() + mix.weights.size());
    const double sd = std::sqrt(mix.variance);
    Eigen::MatrixXd out(n, d);
    for (Eigen::Index r = 0; r < n; ++r) {
        const int c = pick(rng);
        for (int k = 0; k < d; ++k) out(r, k) = mix.means[c][k] + sd * standard_normal(rng);
    }
    return out;
}

Eigen::VectorXd RingsDensity::grad(const Eigen::VectorXd& x) const {
    const double r = x.norm();
    if (r < r_min) return Eigen::VectorXd::Zero(2);
    Eigen::VectorXd l(radii.size()), dl(radii.size());
    for (std::size_t i = 0; i < radii.size(); ++i) {
        l[i] = std::log(weights[i]) - (r - radii[i]) * (r - radii[i]) / (2.0 * variance);
        dl[i] = -(r - radii[i]) / variance;
    }
    l = (l.array() - l.maxCoeff()).exp();
    const double dr = l.dot(dl) / l.sum() - 1.0 / r;
    return dr * x / r;
}

Eigen::VectorXd FunnelDensity::grad(const Eigen::VectorXd& x) const {
    const double e = std::exp(-x[0]);
    Eigen::VectorXd g(d);
    g[0] = -x[0] / 9.0 - 0.5 * (d - 1) + 0.5 * e * x.tail(d - 1).squaredNorm();
    g.tail(d - 1) = -e * x.tail(d - 1);
    return g;
}

Eigen::VectorXd DoubleWellDensity::grad(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g(d);
    for (int i = 0; i < d; ++i) {
        g[i] = i < wells ? -4.0 * x[i] * x[i] * x[i] + 12.0 * x[i] + 0.5 : -x[i];
    }
    return g;
}

namespace {

double well_potential(double x) { return -x * x * x * x + 6.0 * x * x + 0.5 * x; }

}  // namespace

double doublewell_positive_mass() {
    static const double mass = [] {
        using boost::math::quadrature::gauss_kronrod;
        auto f = [](double x) { return std::exp(well_potential(x)); };
        // e^{-x^4} is below 1e-200 beyond |x| = 6.
        const double neg = gauss_kronrod<double, 61>::integrate(f, -6.0, 0.0, 15, 1e-14);
        const double pos = gauss_kronrod<double, 61>::integrate(f, 0.0, 6.0, 15, 1e-14);
        return pos / (pos + neg);
    }();
    return mass;
}

int ModeSet::assign(const Eigen::VectorXd& x) const {
    if (modes.empty()) throw std::logic_error("empty mode set");
    switch (rule) {
        case ModeRule::NearestCenter: {
            int best = 0;
            double best_d = (x - modes[0].center).squaredNorm();
            for (std::size_t i = 1; i < modes.size(); ++i) {
                const double dd = (x - modes[i].center).squaredNorm();
                if (dd < best_d) {
                    best_d = dd;
                    best = static_cast<int>(i);
                }
            }
            return best;
        }
        case ModeRule::NearestRadius: {
            const double r = x.norm();
            int best = 0;
            for (std::size_t i = 1; i < modes.size(); ++i) {
                if (std::abs(r - modes[i].radius) < std::abs(r - modes[best].radius)) best = static_cast<int>(i);
            }
            return best;
        }
        case ModeRule::SignPattern: {
            for (std::size_t i = 0; i < modes.size(); ++i) {
                const Eigen::VectorXi& s = modes[i].signs;
                bool match = true;
                for (Eigen::Index k = 0; k < s.size() && match; ++k) match = (x[k] >= 0.0) == (s[k] > 0);
                if (match) return static_cast<int>(i);
            }
            throw std::logic_error("sign-pattern mode set is incomplete");
        }
    }
    return 0;
}

Eigen::VectorXd ModeSet::weights() const {
    Eigen::VectorXd w(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i) w[i] = modes[i].weight;
    return w;
}

TargetDistribution::TargetDistribution(std::string name, Density density, std::optional<ModeSet> modes,
                                       std::optional<GaussianMixture> oracle)
    : name_(std::move(name)),
      density_(std::move(density)),
      dim_(std::visit([](const auto& f) { return f.dim(); }, density_)),
      modes_(std::move(modes)),
      oracle_(std::move(oracle)) {
    if (dim_ < 1) throw std::invalid_argument("target dimension must be >= 1");
    if (oracle_) oracle_->validate();
    if (modes_) {
        if (modes_->modes.empty()) throw std::invalid_argument("mode set is empty");
        if (std::abs(modes_->weights().sum() - 1.0) > 1e-12) {
            throw std::invalid_argument("mode weights must sum to 1");
        }
    }
}

double TargetDistribution::log_mu(const Eigen::VectorXd& x) const {
    return std::visit([&](const auto& f) { return autodiff::value(f, x); }, density_);
}

Eigen::VectorXd TargetDistribution::grad_log_mu(const Eigen::VectorXd& x) const {
    return std::visit([&](const auto& f) { return f.grad(x); }, density_);
}

Eigen::MatrixXd TargetDistribution::hessian_log_mu(const Eigen::VectorXd& x) const {
    return std::visit([&](const auto& f) { return autodiff::hessian(f, x); }, density_);
}

double TargetDistribution::laplacian_log_mu(const Eigen::VectorXd& x) const {
    return std::visit(
        [&](const auto& f) {
            double acc = 0.0;
            for (int i = 0; i < dim_; ++i) {
                const Eigen::VectorXd e = Eigen::VectorXd::Unit(dim_, i);
                acc += autodiff::second_directional(f, x, e, e);
            }
            return acc;
        },
        density_);
}

double TargetDistribution::hessian_quadratic(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
    return std::visit([&](const auto& f) { return autodiff::second_directional(f, x, v, v); }, density_);
}

Eigen::VectorXd TargetDistribution::grad_laplacian_log_mu(const Eigen::VectorXd& x) const {
    return std::visit(
        [&](const auto& f) {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(dim_);
            for (int j = 0; j < dim_; ++j) {
                const Eigen::VectorXd ej = Eigen::VectorXd::Unit(dim_, j);
                for (int k = 0; k < dim_; ++k) {
                    const Eigen::VectorXd ek = Eigen::VectorXd::Unit(dim_, k);
                    g[j] += autodiff::third_directional(f, x, ej, ek, ek);
                }
            }
            return g;
        },
        density_);
}

namespace {

std::string point_label(const Eigen::VectorXd& c) {
    std::ostringstream os;
    os << '(';
    for (Eigen::Index i = 0; i < c.size(); ++i) os << (i ? "," : "") << c[i];
    os << ')';
    return os.str();
}

ModeSet nearest_center_modes(const GaussianMixture& mix) {
    ModeSet set;
    set.rule = ModeRule::NearestCenter;
    for (std::size_t i = 0; i < mix.components(); ++i) {
        set.modes.push_back({point_label(mix.means[i]), mix.means[i], 0.0, {}, mix.weights[i]});
    }
    return set;
}

}  // namespace

TargetDistribution make_mixture_target(std::string name, GaussianMixture mix) {
    mix.validate();
    ModeSet modes = nearest_center_modes(mix);
    return TargetDistribution(std::move(name), MixtureDensity{mix}, std::move(modes), mix);
}

TargetDistribution make_9gaussians(double variance) {
    GaussianMixture mix;
    mix.variance = variance;
    const double grid[3] = {-5.0, 0.0, 5.0};
    std::vector<double> w;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            mix.means.push_back(Eigen::Vector2d(grid[i], grid[j]));
            const bool corner = i != 1 && j != 1;
            w.push_back(corner ? 0.2 : 0.04);
        }
    }
    mix.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    return make_mixture_target("9gaussians", std::move(mix));
}

TargetDistribution make_rings() {
    RingsDensity rings;
    ModeSet modes;
    modes.rule = ModeRule::NearestRadius;
    for (std::size_t i = 0; i < rings.radii.size(); ++i) {
        ModeDescriptor m;
        m.label = "r=" + std::to_string(static_cast<int>(rings.radii[i]));
        m.radius = rings.radii[i];
        m.weight = rings.weights[i];
        modes.modes.push_back(m);
    }
    return TargetDistribution("rings", rings, std::move(modes), std::nullopt);
}

TargetDistribution make_funnel() { return TargetDistribution("funnel", FunnelDensity{}, std::nullopt, std::nullopt); }

TargetDistribution make_doublewell() {
    DoubleWellDensity dw;
    const double p = doublewell_positive_mass();
    ModeSet modes;
    modes.rule = ModeRule::SignPattern;
    for (int pattern = 0; pattern < (1 << dw.wells); ++pattern) {
        ModeDescriptor m;
        m.signs.resize(dw.wells);
        m.weight = 1.0;
        m.label = "(";
        for (int k = 0; k < dw.wells; ++k) {
            // Bit k set means coordinate k negative; pattern 0 is (+,+,+).
            const bool neg = (pattern >> k) & 1;
            m.signs[k] = neg ? -1 : 1;
            m.weight *= neg ? 1.0 - p : p;
            m.label += neg ? '-' : '+';
        }
        m.label += ')';
        modes.modes.push_back(m);
    }
    return TargetDistribution("doublewell", dw, std::move(modes), std::nullopt);
}

TargetDistribution make_gaussian(int d) {
    if (d < 1) throw std::invalid_argument("gaussian target needs d >= 1");
    GaussianMixture mix;
    mix.weights = Eigen::VectorXd::Ones(1);
    mix.means.push_back(Eigen::VectorXd::Zero(d));
    mix.variance = 1.0;
    return make_mixture_target("gaussian", std::move(mix));
}

TargetDistribution make_target(const std::string& name) {
    if (name == "9gaussians") return make_9gaussians();
    if (name == "rings") return make_rings();
    if (name == "funnel") return make_funnel();
    if (name == "doublewell") return make_doublewell();
    if (name == "gaussian") return make_gaussian(2);
    throw std::invalid_argument("unknown target '" + name + "'");
}

namespace {

Eigen::MatrixXd sample_rings(const RingsDensity& rings, Eigen::Index n, Rng& rng) {
    std::discrete_distribution<int> pick(rings.weights.begin(), rings.weights.end());
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    const double sd = std::sqrt(rings.variance);
    Eigen::MatrixXd out(n, 2);
    for (Eigen::Index r = 0; r < n; ++r) {
        const int c = pick(rng);
        double radius;
        do {
            radius = rings.radii[c] + sd * standard_normal(rng);
        } while (radius <= 0.0);
        const double a = angle(rng);
        out(r, 0) = radius * std::cos(a);
        out(r, 1) = radius * std::sin(a);
    }
    return out;
}

Eigen::MatrixXd sample_funnel(const FunnelDensity& f, Eigen::Index n, Rng& rng) {
    Eigen::MatrixXd out(n, f.d);
    for (Eigen::Index r = 0; r < n; ++r) {
        out(r, 0) = 3.0 * standard_normal(rng);
        const double sd = std::exp(0.5 * out(r, 0));
        for (int k = 1; k < f.d; ++k) out(r, k) = sd * standard_normal(rng);
    }
    return out;
}

// Rejection sampler for the 1-D density proportional to e^{well_potential}
// with a two-Gaussian envelope centred on the wells.
class WellSampler {
public:
    WellSampler() {
        for (double start : {-1.8, 1.8}) {
            double x = start;
            for (int it = 0; it < 50; ++it) {
                x -= (-4.0 * x * x * x + 12.0 * x + 0.5) / (-12.0 * x * x + 12.0);
            }
            centers_.push_back(x);
        }
        peak_ = std::max(well_potential(centers_[0]), well_potential(centers_[1]));
        const double m0 = std::exp(well_potential(centers_[0]) - peak_);
        const double m1 = std::exp(well_potential(centers_[1]) - peak_);
        left_prob_ = m0 / (m0 + m1);
        double bound = 0.0;
        for (double x = -6.0; x <= 6.0; x += 1e-4) bound = std::max(bound, target(x) / envelope(x));
        bound_ = 1.05 * bound;
    }

    double draw(Rng& rng) const {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (;;) {
            const double c = u(rng) < left_prob_ ? centers_[0] : centers_[1];
            const double x = c + kScale * standard_normal(rng);
            if (u(rng) * bound_ * envelope(x) <= target(x)) return x;
        }
    }

private:
    static constexpr double kScale = 0.5;

    double target(double x) const { return std::exp(well_potential(x) - peak_); }
    double envelope(double x) const {
        auto phi = [](double z) { return std::exp(-0.5 * z * z) / (kScale * std::sqrt(2.0 * M_PI)); };
        return left_prob_ * phi((x - centers_[0]) / kScale) + (1.0 - left_prob_) * phi((x - centers_[1]) / kScale);
    }

    std::vector<double> centers_;
    double peak_ = 0.0;
    double left_prob_ = 0.5;
    double bound_ = 1.0;
};

Eigen::MatrixXd sample_doublewell(const DoubleWellDensity& dw, Eigen::Index n, Rng& rng) {
    static const WellSampler well;
    Eigen::MatrixXd out(n, dw.d);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (int k = 0; k < dw.d; ++k) out(r, k) = k < dw.wells ? well.draw(rng) : standard_normal(rng);
    }
    return out;
}

}  // namespace

Eigen::MatrixXd sample_reference(const TargetDistribution& target, Eigen::Index n, Rng& rng) {
    return std::visit(
        [&](const auto& f) -> Eigen::MatrixXd {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, MixtureDensity>) {
                return mog_sample(f.mix, n, rng);
            } else if constexpr (std::is_same_v<T, RingsDensity>) {
                return sample_rings(f, n, rng);
            } else if constexpr (std::is_same_v<T, FunnelDensity>) {
                return sample_funnel(f, n, rng);
            } else {
                return sample_doublewell(f, n, rng);
            }
        },
        target.density());
}

}  // namespace dps
