#pragma once

// The three-block MLP NN(x, t) = dec(embx(x) + embt(emb(t))) and an exact
// differentiation engine for it.
//
// Derivatives with respect to the inputs are propagated forward as jets:
// alongside the value, every activation carries first-order tangents along
// requested spatial directions (and optionally along t) and second-order
// terms for requested pairs of those directions. The jet computation is then
// differentiated in reverse with respect to the parameters, which is what a
// PINN loss containing Laplacians needs (third mixed derivatives).

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dps::nn {

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
};

// Sinusoidal time features: entry 2i = sin(s t w_i), entry 2i+1 = cos(s t w_i)
// with w_i = base^(-2i/dim) and s = time_scale.
struct TimeEmbedding {
    int dim = 256;
    double frequency_base = 10000.0;
    double time_scale = 1000.0;
};

enum class Activation { Gelu, Identity };

struct Architecture {
    int input_dim = 2;
    int output_dim = 1;
    int hidden = 128;
    TimeEmbedding embedding;
    // Identity turns the network into a multilinear map; it exists for
    // derivative tests with closed-form answers.
    Activation activation = Activation::Gelu;
};

bool operator==(const TimeEmbedding& a, const TimeEmbedding& b);
bool operator==(const Architecture& a, const Architecture& b);

struct NetworkParams {
    Architecture arch;
    std::vector<DenseLayer> embx;  // widths [d, hidden]
    std::vector<DenseLayer> embt;  // widths [emb, hidden, hidden]
    std::vector<DenseLayer> dec;   // widths [hidden, hidden, hidden, out]

    // Visits every layer with a stable name ("embx.0", "dec.2", ...).
    template <typename F>
    void for_each_layer(F&& f) {
        visit_layers(*this, f);
    }
    template <typename F>
    void for_each_layer(F&& f) const {
        visit_layers(*this, f);
    }

    Eigen::Index parameter_count() const;
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& flat);
    NetworkParams zeros_like() const;
    bool all_finite() const;
    // Throws std::invalid_argument when a layer does not match the architecture.
    void validate() const;

    NetworkParams& operator+=(const NetworkParams& other);
    NetworkParams& operator*=(double s);

private:
    template <typename Self, typename F>
    static void visit_layers(Self& self, F& f) {
        for (std::size_t i = 0; i < self.embx.size(); ++i) f("embx." + std::to_string(i), self.embx[i]);
        for (std::size_t i = 0; i < self.embt.size(); ++i) f("embt." + std::to_string(i), self.embt[i]);
        for (std::size_t i = 0; i < self.dec.size(); ++i) f("dec." + std::to_string(i), self.dec[i]);
    }
};

// Layer shapes for an architecture with all weights and biases zero.
NetworkParams zero_network(const Architecture& arch);

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
NetworkParams init_network(const Architecture& arch, std::uint64_t seed);
NetworkParams init_network(int input_dim, std::uint64_t seed);

Eigen::VectorXd sinusoidal_embed(double t, int dim, const TimeEmbedding& cfg = {});
// d/dt of sinusoidal_embed.
Eigen::VectorXd sinusoidal_embed_dt(double t, int dim, const TimeEmbedding& cfg = {});

// GELU in its exact erf form and its first three derivatives.
double gelu(double z);
double gelu_d1(double z);
double gelu_d2(double z);
double gelu_d3(double z);

// Which input derivatives to carry. Directions are spatial tangent seeds,
// one d x B matrix each (column b is the direction for batch point b).
// second_order lists pairs of direction indices (i, j) for which the
// second derivative D^2 NN [dir_i, dir_j] is wanted.
struct JetRequest {
    std::vector<Eigen::MatrixXd> directions;
    bool time_tangent = false;
    std::vector<std::pair<int, int>> second_order;

    // Coordinate axes e_1..e_d; optionally the time tangent and the d
    // diagonal second derivatives (for the exact Laplacian).
    static JetRequest axes(int d, Eigen::Index batch, bool time_tangent, bool diagonal_second);
};

// Cotangents for the jet outputs, each output_dim x B. Empty matrices are
// treated as zero.
struct JetCotangent {
    Eigen::MatrixXd value;
    std::vector<Eigen::MatrixXd> directions;
    Eigen::MatrixXd time;
    std::vector<Eigen::MatrixXd> second_order;
};

// Forward jet evaluation over a batch of points; keeps what the parameter
// backward pass needs.
class NetworkJet {
public:
    // x is d x B, t has B entries.
    NetworkJet(const NetworkParams& params, const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
               JetRequest request);

    Eigen::Index batch() const { return batch_; }
    int output_dim() const { return params_->arch.output_dim; }
    const JetRequest& request() const { return request_; }

    // output_dim x B blocks.
    Eigen::MatrixXd value() const { return channel(0); }
    Eigen::MatrixXd direction(int k) const { return channel(1 + k); }
    Eigen::MatrixXd time() const;
    Eigen::MatrixXd second_order(int p) const;

    // Gradient of sum_channels <cotangent, output> with respect to every parameter.
    NetworkParams backward(const JetCotangent& cotangent) const;

    struct LayerCache {
        Eigen::MatrixXd input;
        Eigen::MatrixXd pre;
        Eigen::ArrayXXd s1, s2, s3;  // GELU derivatives at the pre-activation value
        bool activated = false;
    };

    struct Layout {
        int first = 0;
        std::vector<std::pair<int, int>> second;
        int count() const { return 1 + first + static_cast<int>(second.size()); }
    };

private:
    Eigen::MatrixXd channel(int c) const { return output_.middleCols(c * batch_, batch_); }

    const NetworkParams* params_;
    JetRequest request_;
    Eigen::Index batch_;
    Layout full_;
    Layout time_only_;
    std::vector<LayerCache> embx_cache_, embt_cache_, dec_cache_;
    Eigen::MatrixXd output_;
};

// u, its spatial gradient and Laplacian, and its time derivative at one point.
struct EvalRecord {
    double u = 0.0;
    Eigen::VectorXd grad_x;
    double laplacian_x = 0.0;
    double dt = 0.0;
};

double nn_eval(const NetworkParams& params, const Eigen::VectorXd& x, double t);
Eigen::VectorXd nn_eval_vector(const NetworkParams& params, const Eigen::VectorXd& x, double t);
// Exact derivatives; the Laplacian uses d directional second-derivative passes.
EvalRecord nn_derivatives(const NetworkParams& params, const Eigen::VectorXd& x, double t);
// v^T H v for the spatial Hessian H of the (scalar) network.
double quadratic_probe(const NetworkParams& params, const Eigen::VectorXd& x, double t, const Eigen::VectorXd& v);

}  // namespace dps::nn
