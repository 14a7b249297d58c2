#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bsdelab/errors.hpp"

namespace bsdelab {

/// Parser and evaluator for polynomial expression strings over named
/// variables, e.g. "x^2 - 0.5*t*y + 1". Supports + - * ^ (nonnegative
/// integer powers), parentheses and unary minus.
class PolyExpr {
public:
    static PolyExpr parse(const std::string& text, std::vector<std::string> variables) {
        PolyExpr e;
        e.vars_ = std::move(variables);
        Parser p{text, 0, &e};
        e.root_ = std::shared_ptr<Node>(p.expr().release());
        p.skip_ws();
        if (p.pos != text.size())
            throw config_error("expression: trailing input at '" + text.substr(p.pos) + "'");
        return e;
    }

    double eval(std::span<const double> values) const {
        if (values.size() != vars_.size())
            throw alignment_error("expression: wrong number of variable values");
        return eval_node(*root_, values);
    }

    const std::vector<std::string>& variables() const { return vars_; }

private:
    struct Node {
        enum class Op { constant, variable, add, sub, mul, pow, neg } op;
        double value = 0.0;
        std::size_t var = 0;
        unsigned exponent = 0;
        std::unique_ptr<Node> lhs, rhs;
    };

    static double eval_node(const Node& n, std::span<const double> v) {
        switch (n.op) {
            case Node::Op::constant: return n.value;
            case Node::Op::variable: return v[n.var];
            case Node::Op::add: return eval_node(*n.lhs, v) + eval_node(*n.rhs, v);
            case Node::Op::sub: return eval_node(*n.lhs, v) - eval_node(*n.rhs, v);
            case Node::Op::mul: return eval_node(*n.lhs, v) * eval_node(*n.rhs, v);
            case Node::Op::neg: return -eval_node(*n.lhs, v);
            case Node::Op::pow: {
                double base = eval_node(*n.lhs, v);
                double acc = 1.0;
                for (unsigned i = 0; i < n.exponent; ++i) acc *= base;
                return acc;
            }
        }
        return 0.0;
    }

    struct Parser {
        const std::string& text;
        std::size_t pos;
        PolyExpr* owner;

        void skip_ws() {
            while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
        }
        bool eat(char c) {
            skip_ws();
            if (pos < text.size() && text[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }

        std::unique_ptr<Node> expr() {
            auto lhs = term();
            while (true) {
                if (eat('+')) {
                    auto n = std::make_unique<Node>();
                    n->op = Node::Op::add;
                    n->lhs = std::move(lhs);
                    n->rhs = term();
                    lhs = std::move(n);
                } else if (eat('-')) {
                    auto n = std::make_unique<Node>();
                    n->op = Node::Op::sub;
                    n->lhs = std::move(lhs);
                    n->rhs = term();
                    lhs = std::move(n);
                } else {
                    return lhs;
                }
            }
        }

        std::unique_ptr<Node> term() {
            auto lhs = factor();
            while (eat('*')) {
                auto n = std::make_unique<Node>();
                n->op = Node::Op::mul;
                n->lhs = std::move(lhs);
                n->rhs = factor();
                lhs = std::move(n);
            }
            return lhs;
        }

        std::unique_ptr<Node> factor() {
            auto base = atom();
            if (eat('^')) {
                skip_ws();
                std::size_t start = pos;
                while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
                if (pos == start) throw config_error("expression: integer exponent expected after ^");
                auto n = std::make_unique<Node>();
                n->op = Node::Op::pow;
                n->exponent = static_cast<unsigned>(std::stoul(text.substr(start, pos - start)));
                n->lhs = std::move(base);
                return n;
            }
            return base;
        }

        std::unique_ptr<Node> atom() {
            skip_ws();
            if (eat('-')) {
                auto n = std::make_unique<Node>();
                n->op = Node::Op::neg;
                n->lhs = atom();
                return n;
            }
            if (eat('(')) {
                auto inner = expr();
                if (!eat(')')) throw config_error("expression: missing closing parenthesis");
                return inner;
            }
            if (pos < text.size() &&
                (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.')) {
                std::size_t used = 0;
                const double v = std::stod(text.substr(pos), &used);
                pos += used;
                auto n = std::make_unique<Node>();
                n->op = Node::Op::constant;
                n->value = v;
                return n;
            }
            if (pos < text.size() && (std::isalpha(static_cast<unsigned char>(text[pos])) ||
                                      text[pos] == '_')) {
                std::size_t start = pos;
                while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) ||
                                             text[pos] == '_'))
                    ++pos;
                const std::string name = text.substr(start, pos - start);
                for (std::size_t i = 0; i < owner->vars_.size(); ++i) {
                    if (owner->vars_[i] == name) {
                        auto n = std::make_unique<Node>();
                        n->op = Node::Op::variable;
                        n->var = i;
                        return n;
                    }
                }
                throw config_error("expression: unknown variable '" + name + "'");
            }
            throw config_error("expression: unexpected input at position " + std::to_string(pos));
        }
    };

    std::vector<std::string> vars_;
    std::shared_ptr<Node> root_;  // immutable after parse; copies share it
};

}  // namespace bsdelab
