#include "dps/network.hpp"

#include "dps/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dps::nn {

namespace {

using Layout = NetworkJet::Layout;
using LayerCache = NetworkJet::LayerCache;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

DenseLayer zero_layer(int in, int out) {
    return {Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)};
}

auto block(Eigen::MatrixXd& m, int c, Eigen::Index batch) { return m.middleCols(c * batch, batch).array(); }
auto block(const Eigen::MatrixXd& m, int c, Eigen::Index batch) { return m.middleCols(c * batch, batch).array(); }

// Activation jet: value, first-order chain rule, second-order chain rule
// sigma''(z) z_i z_j + sigma'(z) z_ij.
Eigen::MatrixXd gelu_forward(const Eigen::MatrixXd& z, const Layout& layout, Eigen::Index batch, LayerCache& cache,
                             Activation activation) {
    const Eigen::Index rows = z.rows();
    cache.s1.resize(rows, batch);
    cache.s2.resize(rows, batch);
    cache.s3.resize(rows, batch);
    if (activation == Activation::Identity) {
        cache.s1.setOnes();
        cache.s2.setZero();
        cache.s3.setZero();
        return z;
    }
    Eigen::MatrixXd a(rows, z.cols());
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            const double v = z(r, b);
            const double cdf = 0.5 * std::erfc(-v * kInvSqrt2);
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            a(r, b) = v * cdf;
            cache.s1(r, b) = cdf + v * pdf;
            cache.s2(r, b) = pdf * (2.0 - v * v);
            cache.s3(r, b) = pdf * (v * v * v - 4.0 * v);
        }
    }
    for (int c = 1; c <= layout.first; ++c) block(a, c, batch) = cache.s1 * block(z, c, batch);
    for (std::size_t p = 0; p < layout.second.size(); ++p) {
        const int idx = 1 + layout.first + static_cast<int>(p);
        const int c1 = 1 + layout.second[p].first;
        const int c2 = 1 + layout.second[p].second;
        block(a, idx, batch) =
            cache.s2 * block(z, c1, batch) * block(z, c2, batch) + cache.s1 * block(z, idx, batch);
    }
    return a;
}

Eigen::MatrixXd gelu_backward(const Eigen::MatrixXd& abar, const LayerCache& cache, const Layout& layout,
                              Eigen::Index batch) {
    const Eigen::MatrixXd& z = cache.pre;
    Eigen::MatrixXd zbar(z.rows(), z.cols());
    block(zbar, 0, batch) = block(abar, 0, batch) * cache.s1;
    for (int c = 1; c <= layout.first; ++c) {
        block(zbar, c, batch) = block(abar, c, batch) * cache.s1;
        block(zbar, 0, batch) += block(abar, c, batch) * cache.s2 * block(z, c, batch);
    }
    for (std::size_t p = 0; p < layout.second.size(); ++p) {
        const int idx = 1 + layout.first + static_cast<int>(p);
        const int c1 = 1 + layout.second[p].first;
        const int c2 = 1 + layout.second[p].second;
        const auto ab = block(abar, idx, batch);
        block(zbar, idx, batch) = ab * cache.s1;
        block(zbar, c1, batch) += ab * cache.s2 * block(z, c2, batch);
        block(zbar, c2, batch) += ab * cache.s2 * block(z, c1, batch);
        block(zbar, 0, batch) +=
            ab * (cache.s3 * block(z, c1, batch) * block(z, c2, batch) + cache.s2 * block(z, idx, batch));
    }
    return zbar;
}

Eigen::MatrixXd mlp_forward(const std::vector<DenseLayer>& layers, Activation activation, bool activate_last,
                            const Layout& layout, Eigen::Index batch, Eigen::MatrixXd a,
                            std::vector<LayerCache>& caches) {
    caches.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        LayerCache& cache = caches[l];
        Eigen::MatrixXd z = layers[l].weight * a;
        z.leftCols(batch).colwise() += layers[l].bias;
        cache.input = std::move(a);
        cache.activated = activate_last || l + 1 < layers.size();
        if (cache.activated) {
            a = gelu_forward(z, layout, batch, cache, activation);
            cache.pre = std::move(z);
        } else {
            a = std::move(z);
        }
    }
    return a;
}

// Accumulates parameter gradients into grads; returns the input cotangent
// when need_input is set.
Eigen::MatrixXd mlp_backward(const std::vector<DenseLayer>& layers, std::vector<DenseLayer>& grads,
                             const std::vector<LayerCache>& caches, const Layout& layout, Eigen::Index batch,
                             Eigen::MatrixXd abar, bool need_input) {
    for (std::size_t i = layers.size(); i-- > 0;) {
        const LayerCache& cache = caches[i];
        Eigen::MatrixXd zbar = cache.activated ? gelu_backward(abar, cache, layout, batch) : std::move(abar);
        grads[i].weight.noalias() += zbar * cache.input.transpose();
        grads[i].bias += zbar.leftCols(batch).rowwise().sum();
        if (i > 0 || need_input) {
            abar.noalias() = layers[i].weight.transpose() * zbar;
        }
    }
    return need_input ? abar : Eigen::MatrixXd();
}

void check_layer(const DenseLayer& layer, int in, int out, const std::string& name) {
    if (layer.weight.rows() != out || layer.weight.cols() != in || layer.bias.size() != out) {
        throw std::invalid_argument("layer " + name + " has shape " + std::to_string(layer.weight.rows()) + "x" +
                                    std::to_string(layer.weight.cols()) + ", expected " + std::to_string(out) + "x" +
                                    std::to_string(in));
    }
}

}  // namespace

bool operator==(const TimeEmbedding& a, const TimeEmbedding& b) {
    return a.dim == b.dim && a.frequency_base == b.frequency_base && a.time_scale == b.time_scale;
}

bool operator==(const Architecture& a, const Architecture& b) {
    return a.input_dim == b.input_dim && a.output_dim == b.output_dim && a.hidden == b.hidden &&
           a.embedding == b.embedding && a.activation == b.activation;
}

Eigen::Index NetworkParams::parameter_count() const {
    Eigen::Index n = 0;
    for_each_layer([&](const std::string&, const DenseLayer& l) { n += l.weight.size() + l.bias.size(); });
    return n;
}

Eigen::VectorXd NetworkParams::flatten() const {
    Eigen::VectorXd flat(parameter_count());
    Eigen::Index pos = 0;
    for_each_layer([&](const std::string&, const DenseLayer& l) {
        flat.segment(pos, l.weight.size()) = l.weight.reshaped();
        pos += l.weight.size();
        flat.segment(pos, l.bias.size()) = l.bias;
        pos += l.bias.size();
    });
    return flat;
}

void NetworkParams::assign(const Eigen::VectorXd& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("flat parameter vector has wrong length");
    Eigen::Index pos = 0;
    for_each_layer([&](const std::string&, DenseLayer& l) {
        l.weight.reshaped() = flat.segment(pos, l.weight.size());
        pos += l.weight.size();
        l.bias = flat.segment(pos, l.bias.size());
        pos += l.bias.size();
    });
}

NetworkParams NetworkParams::zeros_like() const {
    NetworkParams z = *this;
    z.for_each_layer([](const std::string&, DenseLayer& l) {
        l.weight.setZero();
        l.bias.setZero();
    });
    return z;
}

bool NetworkParams::all_finite() const {
    bool ok = true;
    for_each_layer([&](const std::string&, const DenseLayer& l) {
        ok = ok && l.weight.allFinite() && l.bias.allFinite();
    });
    return ok;
}

void NetworkParams::validate() const {
    const int d = arch.input_dim;
    const int h = arch.hidden;
    if (d < 1 || arch.output_dim < 1 || h < 1) throw std::invalid_argument("architecture dimensions must be >= 1");
    if (embx.size() != 1 || embt.size() != 2 || dec.size() != 3) {
        throw std::invalid_argument("network must have 1 embx, 2 embt and 3 dec layers");
    }
    check_layer(embx[0], d, h, "embx.0");
    check_layer(embt[0], arch.embedding.dim, h, "embt.0");
    check_layer(embt[1], h, h, "embt.1");
    check_layer(dec[0], h, h, "dec.0");
    check_layer(dec[1], h, h, "dec.1");
    check_layer(dec[2], h, arch.output_dim, "dec.2");
}

NetworkParams& NetworkParams::operator+=(const NetworkParams& other) {
    auto add = [](std::vector<DenseLayer>& a, const std::vector<DenseLayer>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i].weight += b[i].weight;
            a[i].bias += b[i].bias;
        }
    };
    add(embx, other.embx);
    add(embt, other.embt);
    add(dec, other.dec);
    return *this;
}

NetworkParams& NetworkParams::operator*=(double s) {
    for_each_layer([s](const std::string&, DenseLayer& l) {
        l.weight *= s;
        l.bias *= s;
    });
    return *this;
}

NetworkParams zero_network(const Architecture& arch) {
    if (arch.input_dim < 1) throw std::invalid_argument("input dimension must be >= 1");
    if (arch.embedding.dim % 2 != 0) throw std::invalid_argument("time embedding dimension must be even");
    NetworkParams p;
    p.arch = arch;
    const int h = arch.hidden;
    p.embx = {zero_layer(arch.input_dim, h)};
    p.embt = {zero_layer(arch.embedding.dim, h), zero_layer(h, h)};
    p.dec = {zero_layer(h, h), zero_layer(h, h), zero_layer(h, arch.output_dim)};
    return p;
}

NetworkParams init_network(const Architecture& arch, std::uint64_t seed) {
    NetworkParams p = zero_network(arch);
    Rng rng = make_stream(seed, "init");
    p.for_each_layer([&](const std::string&, DenseLayer& l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = u(rng);
    });
    return p;
}

NetworkParams init_network(int input_dim, std::uint64_t seed) {
    Architecture arch;
    arch.input_dim = input_dim;
    return init_network(arch, seed);
}

Eigen::VectorXd sinusoidal_embed(double t, int dim, const TimeEmbedding& cfg) {
    if (dim % 2 != 0 || dim <= 0) throw std::invalid_argument("sinusoidal embedding dimension must be positive and even");
    Eigen::VectorXd e(dim);
    for (int i = 0; i < dim / 2; ++i) {
        const double w = std::pow(cfg.frequency_base, -2.0 * i / dim);
        const double arg = cfg.time_scale * t * w;
        e[2 * i] = std::sin(arg);
        e[2 * i + 1] = std::cos(arg);
    }
    return e;
}

Eigen::VectorXd sinusoidal_embed_dt(double t, int dim, const TimeEmbedding& cfg) {
    if (dim % 2 != 0 || dim <= 0) throw std::invalid_argument("sinusoidal embedding dimension must be positive and even");
    Eigen::VectorXd e(dim);
    for (int i = 0; i < dim / 2; ++i) {
        const double w = std::pow(cfg.frequency_base, -2.0 * i / dim);
        const double arg = cfg.time_scale * t * w;
        e[2 * i] = cfg.time_scale * w * std::cos(arg);
        e[2 * i + 1] = -cfg.time_scale * w * std::sin(arg);
    }
    return e;
}

double gelu(double z) { return z * 0.5 * std::erfc(-z * kInvSqrt2); }
double gelu_d1(double z) { return 0.5 * std::erfc(-z * kInvSqrt2) + z * kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double gelu_d2(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z) * (2.0 - z * z); }
double gelu_d3(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z) * (z * z * z - 4.0 * z); }

JetRequest JetRequest::axes(int d, Eigen::Index batch, bool time_tangent, bool diagonal_second) {
    JetRequest r;
    r.time_tangent = time_tangent;
    for (int i = 0; i < d; ++i) {
        Eigen::MatrixXd e = Eigen::MatrixXd::Zero(d, batch);
        e.row(i).setOnes();
        r.directions.push_back(std::move(e));
        if (diagonal_second) r.second_order.emplace_back(i, i);
    }
    return r;
}

NetworkJet::NetworkJet(const NetworkParams& params, const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                       JetRequest request)
    : params_(&params), request_(std::move(request)), batch_(x.cols()) {
    params.validate();
    const int d = params.arch.input_dim;
    if (x.rows() != d) {
        throw std::invalid_argument("input has dimension " + std::to_string(x.rows()) + ", network expects " +
                                    std::to_string(d));
    }
    if (t.size() != batch_) throw std::invalid_argument("time vector length does not match batch size");
    const int nd = static_cast<int>(request_.directions.size());
    for (const auto& dir : request_.directions) {
        if (dir.rows() != d || dir.cols() != batch_) throw std::invalid_argument("direction seed has wrong shape");
    }
    for (const auto& [i, j] : request_.second_order) {
        if (i < 0 || j < 0 || i >= nd || j >= nd) throw std::invalid_argument("second-order pair out of range");
    }

    full_.first = nd + (request_.time_tangent ? 1 : 0);
    full_.second = request_.second_order;
    time_only_.first = request_.time_tangent ? 1 : 0;

    Eigen::MatrixXd xin = Eigen::MatrixXd::Zero(d, batch_ * full_.count());
    xin.leftCols(batch_) = x;
    for (int k = 0; k < nd; ++k) xin.middleCols((1 + k) * batch_, batch_) = request_.directions[k];
    Eigen::MatrixXd hx = mlp_forward(params.embx, params.arch.activation, true, full_, batch_, std::move(xin), embx_cache_);

    const TimeEmbedding& emb = params.arch.embedding;
    if (emb.dim % 2 != 0 || emb.dim <= 0) {
        throw std::invalid_argument("sinusoidal embedding dimension must be positive and even");
    }
    // Same arithmetic as sinusoidal_embed(_dt), with the frequencies and
    // each sin/cos pair computed once.
    Eigen::VectorXd freq(emb.dim / 2);
    for (int i = 0; i < emb.dim / 2; ++i) freq[i] = std::pow(emb.frequency_base, -2.0 * i / emb.dim);
    Eigen::MatrixXd tin(emb.dim, batch_ * time_only_.count());
    for (Eigen::Index b = 0; b < batch_; ++b) {
        for (int i = 0; i < emb.dim / 2; ++i) {
            const double arg = emb.time_scale * t[b] * freq[i];
            const double s = std::sin(arg), c = std::cos(arg);
            tin(2 * i, b) = s;
            tin(2 * i + 1, b) = c;
            if (request_.time_tangent) {
                tin(2 * i, batch_ + b) = emb.time_scale * freq[i] * c;
                tin(2 * i + 1, batch_ + b) = -emb.time_scale * freq[i] * s;
            }
        }
    }
    Eigen::MatrixXd ht = mlp_forward(params.embt, params.arch.activation, true, time_only_, batch_, std::move(tin), embt_cache_);

    hx.leftCols(batch_) += ht.leftCols(batch_);
    if (request_.time_tangent) hx.middleCols((1 + nd) * batch_, batch_) += ht.middleCols(batch_, batch_);
    output_ = mlp_forward(params.dec, params.arch.activation, false, full_, batch_, std::move(hx), dec_cache_);
}

Eigen::MatrixXd NetworkJet::time() const {
    if (!request_.time_tangent) throw std::logic_error("time tangent was not requested");
    return channel(1 + static_cast<int>(request_.directions.size()));
}

Eigen::MatrixXd NetworkJet::second_order(int p) const { return channel(1 + full_.first + p); }

NetworkParams NetworkJet::backward(const JetCotangent& cot) const {
    const int out = params_->arch.output_dim;
    const int nd = static_cast<int>(request_.directions.size());
    Eigen::MatrixXd ybar = Eigen::MatrixXd::Zero(out, batch_ * full_.count());
    auto put = [&](const Eigen::MatrixXd& m, int c) {
        if (m.size() == 0) return;
        if (m.rows() != out || m.cols() != batch_) throw std::invalid_argument("cotangent block has wrong shape");
        ybar.middleCols(c * batch_, batch_) = m;
    };
    put(cot.value, 0);
    for (std::size_t k = 0; k < cot.directions.size() && static_cast<int>(k) < nd; ++k) put(cot.directions[k], 1 + k);
    if (request_.time_tangent) put(cot.time, 1 + nd);
    for (std::size_t p = 0; p < cot.second_order.size() && p < full_.second.size(); ++p) {
        put(cot.second_order[p], 1 + full_.first + static_cast<int>(p));
    }

    NetworkParams grad = params_->zeros_like();
    Eigen::MatrixXd hbar = mlp_backward(params_->dec, grad.dec, dec_cache_, full_, batch_, std::move(ybar), true);

    Eigen::MatrixXd tbar(hbar.rows(), batch_ * time_only_.count());
    tbar.leftCols(batch_) = hbar.leftCols(batch_);
    if (request_.time_tangent) tbar.middleCols(batch_, batch_) = hbar.middleCols((1 + nd) * batch_, batch_);

    mlp_backward(params_->embx, grad.embx, embx_cache_, full_, batch_, std::move(hbar), false);
    mlp_backward(params_->embt, grad.embt, embt_cache_, time_only_, batch_, std::move(tbar), false);
    return grad;
}

namespace {

void require_scalar(const NetworkParams& params) {
    if (params.arch.output_dim != 1) throw std::invalid_argument("operation requires a scalar-output network");
}

}  // namespace

double nn_eval(const NetworkParams& params, const Eigen::VectorXd& x, double t) {
    require_scalar(params);
    NetworkJet jet(params, x, Eigen::VectorXd::Constant(1, t), {});
    return jet.value()(0, 0);
}

Eigen::VectorXd nn_eval_vector(const NetworkParams& params, const Eigen::VectorXd& x, double t) {
    NetworkJet jet(params, x, Eigen::VectorXd::Constant(1, t), {});
    return jet.value().col(0);
}

EvalRecord nn_derivatives(const NetworkParams& params, const Eigen::VectorXd& x, double t) {
    require_scalar(params);
    const int d = params.arch.input_dim;
    NetworkJet jet(params, x, Eigen::VectorXd::Constant(1, t), JetRequest::axes(d, 1, true, true));
    EvalRecord r;
    r.u = jet.value()(0, 0);
    r.grad_x.resize(d);
    r.laplacian_x = 0.0;
    for (int i = 0; i < d; ++i) {
        r.grad_x[i] = jet.direction(i)(0, 0);
        r.laplacian_x += jet.second_order(i)(0, 0);
    }
    r.dt = jet.time()(0, 0);
    return r;
}

double quadratic_probe(const NetworkParams& params, const Eigen::VectorXd& x, double t, const Eigen::VectorXd& v) {
    require_scalar(params);
    if (v.size() != params.arch.input_dim) throw std::invalid_argument("probe dimension mismatch");
    JetRequest req;
    req.directions.push_back(v);
    req.second_order.emplace_back(0, 0);
    NetworkJet jet(params, x, Eigen::VectorXd::Constant(1, t), std::move(req));
    return jet.second_order(0)(0, 0);
}

}  // namespace dps::nn
