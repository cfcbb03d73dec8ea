#include "jflow/expression.hpp"

#include "jflow/errors.hpp"

#include <cctype>
#include <cmath>
#include <vector>

namespace jflow {

Jet Jet::constant(double c, int n) {
    Jet j;
    j.value = c;
    j.grad = Vec::Zero(n);
    j.hess = Mat::Zero(n, n);
    return j;
}

Jet Jet::variable(int index, double x, int n) {
    Jet j = constant(x, n);
    j.grad(index) = 1.0;
    return j;
}

Jet operator+(const Jet& a, const Jet& b) {
    return Jet{a.value + b.value, a.grad + b.grad, a.hess + b.hess};
}

Jet operator-(const Jet& a, const Jet& b) {
    return Jet{a.value - b.value, a.grad - b.grad, a.hess - b.hess};
}

Jet operator-(const Jet& a) { return Jet{-a.value, -a.grad, -a.hess}; }

Jet operator*(const Jet& a, const Jet& b) {
    Mat cross = a.grad * b.grad.transpose();
    return Jet{a.value * b.value, a.value * b.grad + b.value * a.grad,
               a.value * b.hess + b.value * a.hess + cross + cross.transpose()};
}

Jet compose(const Jet& a, double f, double df, double d2f) {
    return Jet{f, df * a.grad, df * a.hess + d2f * (a.grad * a.grad.transpose())};
}

Jet operator/(const Jet& a, const Jet& b) {
    const double x = b.value;
    return a * compose(b, 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x));
}

Jet exp(const Jet& a) {
    const double e = std::exp(a.value);
    return compose(a, e, e, e);
}

Jet log(const Jet& a) {
    const double x = a.value;
    return compose(a, std::log(x), 1.0 / x, -1.0 / (x * x));
}

Jet sin(const Jet& a) {
    return compose(a, std::sin(a.value), std::cos(a.value), -std::sin(a.value));
}

Jet cos(const Jet& a) {
    return compose(a, std::cos(a.value), -std::sin(a.value), -std::cos(a.value));
}

Jet sqrt(const Jet& a) {
    const double s = std::sqrt(a.value);
    return compose(a, s, 0.5 / s, -0.25 / (s * a.value));
}

Jet pow(const Jet& a, const Jet& b) {
    const bool constant_exponent = b.grad.isZero(0.0) && b.hess.isZero(0.0);
    if (constant_exponent) {
        const double p = b.value;
        const double x = a.value;
        return compose(a, std::pow(x, p), p * std::pow(x, p - 1.0), p * (p - 1.0) * std::pow(x, p - 2.0));
    }
    return exp(b * log(a));
}

struct Expression::Node {
    enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Exp, Log, Sin, Cos, Sqrt } op;
    double constant = 0.0;
    int var = 0;
    std::shared_ptr<const Node> lhs, rhs;

    Jet eval(const Vec& y) const {
        const int n = static_cast<int>(y.size());
        switch (op) {
            case Op::Const: return Jet::constant(constant, n);
            case Op::Var: return Jet::variable(var, y(var), n);
            case Op::Add: return lhs->eval(y) + rhs->eval(y);
            case Op::Sub: return lhs->eval(y) - rhs->eval(y);
            case Op::Mul: return lhs->eval(y) * rhs->eval(y);
            case Op::Div: return lhs->eval(y) / rhs->eval(y);
            case Op::Neg: return -lhs->eval(y);
            case Op::Pow: return pow(lhs->eval(y), rhs->eval(y));
            case Op::Exp: return exp(lhs->eval(y));
            case Op::Log: return log(lhs->eval(y));
            case Op::Sin: return sin(lhs->eval(y));
            case Op::Cos: return cos(lhs->eval(y));
            case Op::Sqrt: return sqrt(lhs->eval(y));
        }
        return Jet::constant(0.0, n);
    }
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make(Node::Op op, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->lhs = std::move(lhs);
    node->rhs = std::move(rhs);
    return node;
}

class Parser {
public:
    Parser(std::string_view text, int dim) : text_(text), dim_(dim) {}

    NodePtr parse() {
        NodePtr e = expression();
        skip_space();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorKind::ParseError,
                    "expression '" + std::string(text_) + "' at " + std::to_string(pos_) + ": " + msg);
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodePtr expression() {
        NodePtr lhs = term();
        while (true) {
            if (accept('+'))
                lhs = make(Node::Op::Add, lhs, term());
            else if (accept('-'))
                lhs = make(Node::Op::Sub, lhs, term());
            else
                return lhs;
        }
    }

    NodePtr term() {
        NodePtr lhs = unary();
        while (true) {
            if (accept('*'))
                lhs = make(Node::Op::Mul, lhs, unary());
            else if (accept('/'))
                lhs = make(Node::Op::Div, lhs, unary());
            else
                return lhs;
        }
    }

    NodePtr unary() {
        if (accept('-')) return make(Node::Op::Neg, unary());
        if (accept('+')) return unary();
        NodePtr base = primary();
        if (accept('^')) return make(Node::Op::Pow, base, unary());
        return base;
    }

    NodePtr primary() {
        skip_space();
        if (pos_ >= text_.size()) fail("unexpected end");
        const char c = text_[pos_];
        if (accept('(')) {
            NodePtr e = expression();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = text_.data() + pos_;
            char* end = nullptr;
            const double value = std::strtod(begin, &end);
            if (end == begin) fail("bad number");
            pos_ += static_cast<std::size_t>(end - begin);
            auto node = std::make_shared<Node>();
            node->op = Node::Op::Const;
            node->constant = value;
            return node;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::string name;
            while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_])))
                name += text_[pos_++];
            if (name.size() > 1 && name[0] == 'y' &&
                name.find_first_not_of("0123456789", 1) == std::string::npos) {
                const int index = std::stoi(name.substr(1)) - 1;
                if (index < 0 || index >= dim_) fail("variable " + name + " out of range");
                auto node = std::make_shared<Node>();
                node->op = Node::Op::Var;
                node->var = index;
                return node;
            }
            if (name == "pi") {
                auto node = std::make_shared<Node>();
                node->op = Node::Op::Const;
                node->constant = M_PI;
                return node;
            }
            expect('(');
            NodePtr arg = expression();
            NodePtr result;
            if (name == "pow") {
                expect(',');
                result = make(Node::Op::Pow, arg, expression());
            } else if (name == "exp") {
                result = make(Node::Op::Exp, arg);
            } else if (name == "log") {
                result = make(Node::Op::Log, arg);
            } else if (name == "sin") {
                result = make(Node::Op::Sin, arg);
            } else if (name == "cos") {
                result = make(Node::Op::Cos, arg);
            } else if (name == "sqrt") {
                result = make(Node::Op::Sqrt, arg);
            } else {
                fail("unknown function '" + name + "'");
            }
            expect(')');
            return result;
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    std::string_view text_;
    int dim_;
    std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(std::string_view text, int dim) {
    if (dim < 1 || dim > kMaxDim)
        throw Error(ErrorKind::Unsupported, "expressions support dimensions 1.." + std::to_string(kMaxDim));
    Expression e;
    e.root_ = Parser(text, dim).parse();
    e.text_ = std::string(text);
    e.dim_ = dim;
    return e;
}

Jet Expression::eval(const Vec& y) const { return root_->eval(y); }

}  // namespace jflow
