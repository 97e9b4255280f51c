#pragma once

// Scalar expressions over network derivative quantities, differentiated with
// respect to the network parameters.
//
// Leaves are u, du/dt, du/dx_i, the Laplacian, or a probe quadratic form
// v^T H v at a registered point. Interior nodes are + - * and detach; a
// detached subexpression keeps its value but passes no gradient.

#include "dps/network.hpp"

#include <Eigen/Dense>

#include <vector>

namespace dps::nn {

class ExprTape;

class Expr {
public:
    double value() const;
    ExprTape* tape() const { return tape_; }

private:
    friend class ExprTape;
    friend Expr operator+(const Expr&, const Expr&);
    friend Expr operator-(const Expr&, const Expr&);
    friend Expr operator*(const Expr&, const Expr&);
    friend Expr operator-(const Expr&);
    friend Expr detach(const Expr&);

    Expr(ExprTape* tape, int id) : tape_(tape), id_(id) {}
    ExprTape* tape_;
    int id_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator+(const Expr& a, double c);
Expr operator+(double c, const Expr& a);
Expr operator-(const Expr& a, double c);
Expr operator-(double c, const Expr& a);
Expr operator*(const Expr& a, double c);
Expr operator*(double c, const Expr& a);
Expr square(const Expr& a);
Expr detach(const Expr& a);

class ExprTape {
public:
    explicit ExprTape(const NetworkParams& params);
    ExprTape(const ExprTape&) = delete;
    ExprTape& operator=(const ExprTape&) = delete;

    // Evaluates the network jet at (x, t) with the given probe directions;
    // returns the point handle.
    int add_point(const Eigen::VectorXd& x, double t, std::vector<Eigen::VectorXd> probes = {});

    Expr constant(double c);
    Expr u(int point);
    Expr dt(int point);
    Expr grad(int point, int i);
    Expr laplacian(int point);
    Expr quad(int point, int probe);

    NetworkParams param_gradient(const Expr& root) const;

private:
    friend class Expr;
    friend Expr operator+(const Expr&, const Expr&);
    friend Expr operator-(const Expr&, const Expr&);
    friend Expr operator*(const Expr&, const Expr&);
    friend Expr operator-(const Expr&);
    friend Expr detach(const Expr&);

    enum class Op { Constant, Value, Time, Grad, Laplacian, Quad, Add, Sub, Mul, Neg, Detach };
    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        int point = -1;
        int index = -1;
        double value = 0.0;
    };
    struct Point {
        NetworkJet jet;
        int probes;
    };

    Expr push(Node n);
    void check_point(int point) const;

    const NetworkParams& params_;
    std::vector<Point> points_;
    std::vector<Node> nodes_;
};

}  // namespace dps::nn
