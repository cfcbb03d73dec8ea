#ifndef JFLOW_EXPRESSION_HPP
#define JFLOW_EXPRESSION_HPP

#include "jflow/linalg.hpp"

#include <memory>
#include <string>
#include <string_view>

namespace jflow {

/// Value, gradient and Hessian of a scalar function at a point.
struct Jet {
    double value = 0.0;
    Vec grad;
    Mat hess;

    static Jet constant(double c, int n);
    static Jet variable(int index, double x, int n);
};

Jet operator+(const Jet& a, const Jet& b);
Jet operator-(const Jet& a, const Jet& b);
Jet operator-(const Jet& a);
Jet operator*(const Jet& a, const Jet& b);
Jet operator/(const Jet& a, const Jet& b);

/// Applies a scalar function given its value and first two derivatives at a.value.
Jet compose(const Jet& a, double f, double df, double d2f);

Jet exp(const Jet& a);
Jet log(const Jet& a);
Jet sin(const Jet& a);
Jet cos(const Jet& a);
Jet sqrt(const Jet& a);
Jet pow(const Jet& a, const Jet& b);

/// Closed-form scalar expression in y1..yn with + - * / ^, pow, exp, log,
/// sin, cos and sqrt. Evaluation propagates second-order jets.
class Expression {
public:
    static Expression parse(std::string_view text, int dim);

    Jet eval(const Vec& y) const;
    double value(const Vec& y) const { return eval(y).value; }
    const std::string& text() const { return text_; }
    int dim() const { return dim_; }

    struct Node;

private:
    std::shared_ptr<const Node> root_;
    std::string text_;
    int dim_ = 0;
};

}  // namespace jflow

#endif
