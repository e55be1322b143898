#pragma once

// Tiny arithmetic expression language for user densities.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | 'x' | 'pi' | 'e' | call | '(' expr ')'
//   call    := ('exp' | 'log' | 'sqrt') '(' expr ')' | 'pow' '(' expr ',' expr ')'
//
// Parsed once into a tree; evaluation is reentrant.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>

#include "steinind/error.hpp"

namespace steinind {

class Expression {
public:
    explicit Expression(std::string_view source) : source_(source) {
        Parser p{source_, 0};
        root_ = p.expr();
        p.skip();
        if (p.pos != source_.size())
            throw ConfigError("unexpected '" + std::string(1, source_[p.pos]) + "' in expression '" + source_ + "'");
    }

    double operator()(double x) const { return root_->eval(x); }

    const std::string& source() const noexcept { return source_; }

private:
    struct Node {
        virtual ~Node() = default;
        virtual double eval(double x) const = 0;
    };
    using Ptr = std::shared_ptr<const Node>;

    struct Constant final : Node {
        double v;
        explicit Constant(double v) : v(v) {}
        double eval(double) const override { return v; }
    };
    struct Variable final : Node {
        double eval(double x) const override { return x; }
    };
    struct Unary final : Node {
        char op;
        Ptr a;
        Unary(char op, Ptr a) : op(op), a(std::move(a)) {}
        double eval(double x) const override {
            const double v = a->eval(x);
            switch (op) {
                case '-': return -v;
                case 'e': return std::exp(v);
                case 'l': return std::log(v);
                default: return std::sqrt(v);
            }
        }
    };
    struct Binary final : Node {
        char op;
        Ptr a, b;
        Binary(char op, Ptr a, Ptr b) : op(op), a(std::move(a)), b(std::move(b)) {}
        double eval(double x) const override {
            const double u = a->eval(x), v = b->eval(x);
            switch (op) {
                case '+': return u + v;
                case '-': return u - v;
                case '*': return u * v;
                case '/': return u / v;
                default: return std::pow(u, v);
            }
        }
    };

    struct Parser {
        const std::string& s;
        std::size_t pos;

        void skip() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool eat(char c) {
            skip();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }
        [[noreturn]] void fail(const std::string& what) const {
            throw ConfigError(what + " at offset " + std::to_string(pos) + " in expression '" + s + "'");
        }
        void expect(char c) {
            if (!eat(c)) fail(std::string("expected '") + c + "'");
        }

        Ptr expr() {
            Ptr lhs = term();
            for (;;) {
                if (eat('+'))
                    lhs = std::make_shared<Binary>('+', lhs, term());
                else if (eat('-'))
                    lhs = std::make_shared<Binary>('-', lhs, term());
                else
                    return lhs;
            }
        }
        Ptr term() {
            Ptr lhs = unary();
            for (;;) {
                if (eat('*'))
                    lhs = std::make_shared<Binary>('*', lhs, unary());
                else if (eat('/'))
                    lhs = std::make_shared<Binary>('/', lhs, unary());
                else
                    return lhs;
            }
        }
        Ptr unary() {
            if (eat('-')) return std::make_shared<Unary>('-', unary());
            if (eat('+')) return unary();
            return power();
        }
        Ptr power() {
            Ptr base = primary();
            if (eat('^')) return std::make_shared<Binary>('^', base, unary());
            return base;
        }
        Ptr primary() {
            skip();
            if (pos >= s.size()) fail("unexpected end");
            const char c = s[pos];
            if (c == '(') {
                ++pos;
                Ptr e = expr();
                expect(')');
                return e;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                const char* begin = s.c_str() + pos;
                char* end = nullptr;
                const double v = std::strtod(begin, &end);
                if (end == begin) fail("bad number");
                pos += static_cast<std::size_t>(end - begin);
                return std::make_shared<Constant>(v);
            }
            if (std::isalpha(static_cast<unsigned char>(c))) {
                std::size_t start = pos;
                while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
                const std::string name = s.substr(start, pos - start);
                if (name == "x") return std::make_shared<Variable>();
                if (name == "pi") return std::make_shared<Constant>(std::numbers::pi);
                if (name == "e") return std::make_shared<Constant>(std::numbers::e);
                if (name == "exp" || name == "log" || name == "sqrt") {
                    expect('(');
                    Ptr a = expr();
                    expect(')');
                    return std::make_shared<Unary>(name[0] == 'e' ? 'e' : name[0] == 'l' ? 'l' : 's', a);
                }
                if (name == "pow") {
                    expect('(');
                    Ptr a = expr();
                    expect(',');
                    Ptr b = expr();
                    expect(')');
                    return std::make_shared<Binary>('^', a, b);
                }
                pos = start;
                fail("unknown name '" + name + "'");
            }
            fail(std::string("unexpected '") + c + "'");
        }
    };

    std::string source_;
    Ptr root_;
};

}  // namespace steinind
