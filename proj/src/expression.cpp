#include "dps/expression.hpp"

#include <stdexcept>

namespace dps::nn {

namespace {

ExprTape* same_tape(ExprTape* a, ExprTape* b) {
    if (a != b) throw std::invalid_argument("expressions belong to different tapes");
    return a;
}

}  // namespace

double Expr::value() const { return tape_->nodes_[id_].value; }

ExprTape::ExprTape(const NetworkParams& params) : params_(params) {
    params.validate();
    if (params.arch.output_dim != 1) throw std::invalid_argument("expression tape requires a scalar network");
}

int ExprTape::add_point(const Eigen::VectorXd& x, double t, std::vector<Eigen::VectorXd> probes) {
    const int d = params_.arch.input_dim;
    JetRequest req = JetRequest::axes(d, 1, true, true);
    for (std::size_t k = 0; k < probes.size(); ++k) {
        if (probes[k].size() != d) throw std::invalid_argument("probe dimension mismatch");
        req.directions.push_back(probes[k]);
        req.second_order.emplace_back(d + static_cast<int>(k), d + static_cast<int>(k));
    }
    points_.push_back({NetworkJet(params_, x, Eigen::VectorXd::Constant(1, t), std::move(req)),
                       static_cast<int>(probes.size())});
    return static_cast<int>(points_.size()) - 1;
}

void ExprTape::check_point(int point) const {
    if (point < 0 || point >= static_cast<int>(points_.size())) throw std::out_of_range("unknown point handle");
}

Expr ExprTape::push(Node n) {
    nodes_.push_back(n);
    return Expr(this, static_cast<int>(nodes_.size()) - 1);
}

Expr ExprTape::constant(double c) { return push({Op::Constant, -1, -1, -1, -1, c}); }

Expr ExprTape::u(int point) {
    check_point(point);
    return push({Op::Value, -1, -1, point, -1, points_[point].jet.value()(0, 0)});
}

Expr ExprTape::dt(int point) {
    check_point(point);
    return push({Op::Time, -1, -1, point, -1, points_[point].jet.time()(0, 0)});
}

Expr ExprTape::grad(int point, int i) {
    check_point(point);
    if (i < 0 || i >= params_.arch.input_dim) throw std::out_of_range("gradient index out of range");
    return push({Op::Grad, -1, -1, point, i, points_[point].jet.direction(i)(0, 0)});
}

Expr ExprTape::laplacian(int point) {
    check_point(point);
    double lap = 0.0;
    for (int i = 0; i < params_.arch.input_dim; ++i) lap += points_[point].jet.second_order(i)(0, 0);
    return push({Op::Laplacian, -1, -1, point, -1, lap});
}

Expr ExprTape::quad(int point, int probe) {
    check_point(point);
    if (probe < 0 || probe >= points_[point].probes) throw std::out_of_range("probe index out of range");
    const int p = params_.arch.input_dim + probe;
    return push({Op::Quad, -1, -1, point, probe, points_[point].jet.second_order(p)(0, 0)});
}

NetworkParams ExprTape::param_gradient(const Expr& root) const {
    if (root.tape_ != this) throw std::invalid_argument("expression belongs to another tape");
    const int d = params_.arch.input_dim;
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[root.id_] = 1.0;

    std::vector<JetCotangent> cot(points_.size());
    std::vector<bool> touched(points_.size(), false);
    auto leaf = [&](int point) -> JetCotangent& {
        JetCotangent& c = cot[point];
        if (!touched[point]) {
            const int nprobe = points_[point].probes;
            c.value = Eigen::MatrixXd::Zero(1, 1);
            c.time = Eigen::MatrixXd::Zero(1, 1);
            c.directions.assign(d + nprobe, Eigen::MatrixXd::Zero(1, 1));
            c.second_order.assign(d + nprobe, Eigen::MatrixXd::Zero(1, 1));
            touched[point] = true;
        }
        return c;
    };

    for (int id = root.id_; id >= 0; --id) {
        const double g = adj[id];
        if (g == 0.0) continue;
        const Node& n = nodes_[id];
        switch (n.op) {
            case Op::Constant:
            case Op::Detach:
                break;
            case Op::Value:
                leaf(n.point).value(0, 0) += g;
                break;
            case Op::Time:
                leaf(n.point).time(0, 0) += g;
                break;
            case Op::Grad:
                leaf(n.point).directions[n.index](0, 0) += g;
                break;
            case Op::Laplacian: {
                JetCotangent& c = leaf(n.point);
                for (int i = 0; i < d; ++i) c.second_order[i](0, 0) += g;
                break;
            }
            case Op::Quad:
                leaf(n.point).second_order[d + n.index](0, 0) += g;
                break;
            case Op::Add:
                adj[n.a] += g;
                adj[n.b] += g;
                break;
            case Op::Sub:
                adj[n.a] += g;
                adj[n.b] -= g;
                break;
            case Op::Mul:
                adj[n.a] += g * nodes_[n.b].value;
                adj[n.b] += g * nodes_[n.a].value;
                break;
            case Op::Neg:
                adj[n.a] -= g;
                break;
        }
    }

    NetworkParams total = params_.zeros_like();
    for (std::size_t p = 0; p < points_.size(); ++p) {
        if (touched[p]) total += points_[p].jet.backward(cot[p]);
    }
    return total;
}

Expr operator+(const Expr& a, const Expr& b) {
    ExprTape* t = same_tape(a.tape_, b.tape_);
    return t->push({ExprTape::Op::Add, a.id_, b.id_, -1, -1, a.value() + b.value()});
}

Expr operator-(const Expr& a, const Expr& b) {
    ExprTape* t = same_tape(a.tape_, b.tape_);
    return t->push({ExprTape::Op::Sub, a.id_, b.id_, -1, -1, a.value() - b.value()});
}

Expr operator*(const Expr& a, const Expr& b) {
    ExprTape* t = same_tape(a.tape_, b.tape_);
    return t->push({ExprTape::Op::Mul, a.id_, b.id_, -1, -1, a.value() * b.value()});
}

Expr operator-(const Expr& a) { return a.tape_->push({ExprTape::Op::Neg, a.id_, -1, -1, -1, -a.value()}); }

Expr detach(const Expr& a) { return a.tape_->push({ExprTape::Op::Detach, a.id_, -1, -1, -1, a.value()}); }

Expr operator+(const Expr& a, double c) { return a + a.tape()->constant(c); }
Expr operator+(double c, const Expr& a) { return a.tape()->constant(c) + a; }
Expr operator-(const Expr& a, double c) { return a - a.tape()->constant(c); }
Expr operator-(double c, const Expr& a) { return a.tape()->constant(c) - a; }
Expr operator*(const Expr& a, double c) { return a * a.tape()->constant(c); }
Expr operator*(double c, const Expr& a) { return a.tape()->constant(c) * a; }
Expr square(const Expr& a) { return a * a; }

}  // namespace dps::nn
