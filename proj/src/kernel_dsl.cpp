#include "modeldisc/kernel_dsl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "modeldisc/errors.hpp"

namespace modeldisc {
namespace {

struct Token {
  enum class Type { Base, Plus, Times, LParen, RParen, End } type;
  BaseKind base = BaseKind::C;
  std::size_t pos = 0;
};

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    switch (c) {
      case '+': out.push_back({Token::Type::Plus, BaseKind::C, i++}); continue;
      case '*': out.push_back({Token::Type::Times, BaseKind::C, i++}); continue;
      case '(': out.push_back({Token::Type::LParen, BaseKind::C, i++}); continue;
      case ')': out.push_back({Token::Type::RParen, BaseKind::C, i++}); continue;
      default: break;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
      auto word = text.substr(i, j - i);
      auto kind = base_kind_from_name(word);
      if (!kind) {
        throw ParseError("unknown token '" + std::string(word) + "' at " + std::to_string(i), i);
      }
      out.push_back({Token::Type::Base, *kind, i});
      i = j;
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c + "' at " + std::to_string(i), i);
  }
  out.push_back({Token::Type::End, BaseKind::C, text.size()});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  KernelExpr parse() {
    auto e = expr();
    if (peek().type != Token::Type::End) {
      throw ParseError("unexpected token at " + std::to_string(peek().pos), peek().pos);
    }
    return e;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }

  KernelExpr expr() {
    std::vector<KernelExpr> terms;
    terms.push_back(term());
    while (peek().type == Token::Type::Plus) {
      next();
      terms.push_back(term());
    }
    return terms.size() == 1 ? std::move(terms.front()) : KernelExpr::sum(std::move(terms));
  }

  KernelExpr term() {
    std::vector<KernelExpr> factors;
    factors.push_back(factor());
    while (peek().type == Token::Type::Times) {
      next();
      factors.push_back(factor());
    }
    return factors.size() == 1 ? std::move(factors.front())
                               : KernelExpr::product(std::move(factors));
  }

  KernelExpr factor() {
    const Token& t = next();
    switch (t.type) {
      case Token::Type::Base: return KernelExpr::leaf(t.base);
      case Token::Type::LParen: {
        auto inner = expr();
        if (peek().type != Token::Type::RParen) {
          throw ParseError("unbalanced parentheses: expected ')' at " + std::to_string(peek().pos),
                           peek().pos);
        }
        next();
        return inner;
      }
      case Token::Type::RParen:
        throw ParseError("unbalanced parentheses: unexpected ')' at " + std::to_string(t.pos),
                         t.pos);
      case Token::Type::End:
        throw ParseError("unexpected end of expression at " + std::to_string(t.pos), t.pos);
      default:
        throw ParseError("expected a base kernel at " + std::to_string(t.pos), t.pos);
    }
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

// Canonical text of an already-canonical expression.
std::string text_of(const KernelExpr& e) {
  switch (e.op()) {
    case KernelExpr::Op::Leaf: return std::string(base_kind_name(e.base()));
    case KernelExpr::Op::Sum: {
      std::string s;
      for (const auto& c : e.children()) {
        if (!s.empty()) s += " + ";
        s += text_of(c);
      }
      return s;
    }
    case KernelExpr::Op::Product: {
      std::string s;
      for (const auto& c : e.children()) {
        if (!s.empty()) s += " * ";
        if (c.op() == KernelExpr::Op::Sum) {
          s += "(" + text_of(c) + ")";
        } else {
          s += text_of(c);
        }
      }
      return s;
    }
  }
  return {};
}

void collect_leaves(const KernelExpr& e, NodePath& path, std::vector<LeafRef>& out,
                    std::map<BaseKind, std::size_t>& counts) {
  if (e.is_leaf()) {
    out.push_back({path, e.base(), ++counts[e.base()]});
    return;
  }
  for (std::size_t i = 0; i < e.children().size(); ++i) {
    path.push_back(i);
    collect_leaves(e.children()[i], path, out, counts);
    path.pop_back();
  }
}

KernelExpr replace_at(const KernelExpr& e, const NodePath& path, std::size_t depth,
                      BaseKind kind) {
  if (depth == path.size()) return KernelExpr::leaf(kind);
  auto children = e.children();
  children[path[depth]] = replace_at(children[path[depth]], path, depth + 1, kind);
  return e.op() == KernelExpr::Op::Sum ? KernelExpr::sum(std::move(children))
                                       : KernelExpr::product(std::move(children));
}

struct Bounds {
  double lower;
  double upper;
  bool log_space;
};

Bounds bounds_for(const std::string& name) {
  if (name == "variance") return {1e-6, 1e3, true};
  if (name == "lengthscale") return {1e-4, 1e2, true};
  if (name == "period") return {1e-3, 2.0, true};
  return {-2.0, 3.0, false};  // offset
}

}  // namespace

std::string_view base_kind_name(BaseKind kind) {
  switch (kind) {
    case BaseKind::LIN: return "LIN";
    case BaseKind::PER: return "PER";
    case BaseKind::SE: return "SE";
    case BaseKind::C: return "C";
    case BaseKind::WN: return "WN";
  }
  return "?";
}

std::optional<BaseKind> base_kind_from_name(std::string_view name) {
  for (auto k : kAllBaseKinds) {
    if (base_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

KernelExpr KernelExpr::leaf(BaseKind kind) { return KernelExpr(Op::Leaf, kind, {}); }

KernelExpr KernelExpr::sum(std::vector<KernelExpr> children) {
  if (children.size() < 2) throw Error("a sum needs at least two children");
  return KernelExpr(Op::Sum, BaseKind::C, std::move(children));
}

KernelExpr KernelExpr::product(std::vector<KernelExpr> children) {
  if (children.size() < 2) throw Error("a product needs at least two children");
  return KernelExpr(Op::Product, BaseKind::C, std::move(children));
}

std::string path_text(const NodePath& path) {
  std::string s;
  for (auto i : path) {
    if (!s.empty()) s += '.';
    s += std::to_string(i);
  }
  return s;
}

KernelExpr parse_kernel(std::string_view text) {
  return canonicalize(Parser(tokenize(text)).parse());
}

KernelExpr canonicalize(const KernelExpr& expr) {
  if (expr.is_leaf()) return expr;
  std::vector<KernelExpr> flat;
  for (const auto& child : expr.children()) {
    auto c = canonicalize(child);
    if (c.op() == expr.op()) {
      for (const auto& g : c.children()) flat.push_back(g);
    } else {
      flat.push_back(std::move(c));
    }
  }
  std::vector<std::pair<std::string, KernelExpr>> keyed;
  keyed.reserve(flat.size());
  for (auto& c : flat) keyed.emplace_back(text_of(c), std::move(c));
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<KernelExpr> sorted;
  sorted.reserve(keyed.size());
  for (auto& [_, c] : keyed) sorted.push_back(std::move(c));
  if (sorted.size() == 1) return std::move(sorted.front());
  return expr.op() == KernelExpr::Op::Sum ? KernelExpr::sum(std::move(sorted))
                                          : KernelExpr::product(std::move(sorted));
}

std::string canonical_text(const KernelExpr& expr) { return text_of(canonicalize(expr)); }

std::vector<LeafRef> leaves(const KernelExpr& expr) {
  std::vector<LeafRef> out;
  NodePath path;
  std::map<BaseKind, std::size_t> counts;
  collect_leaves(expr, path, out, counts);
  return out;
}

std::vector<std::string> base_param_names(BaseKind kind) {
  switch (kind) {
    case BaseKind::SE: return {"variance", "lengthscale"};
    case BaseKind::PER: return {"variance", "lengthscale", "period"};
    case BaseKind::LIN: return {"variance", "offset"};
    case BaseKind::C: return {"variance"};
    case BaseKind::WN: return {"variance"};
  }
  return {};
}

double ParamSpec::lower_opt() const { return to_opt(lower); }
double ParamSpec::upper_opt() const { return to_opt(upper); }
double ParamSpec::to_opt(double natural) const { return log_space ? std::log(natural) : natural; }
double ParamSpec::to_natural(double opt) const { return log_space ? std::exp(opt) : opt; }

std::optional<std::size_t> ParamSchema::find(std::string_view label) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].label() == label) return i;
  }
  return std::nullopt;
}

ParamSchema param_schema(const KernelExpr& expr) {
  ParamSchema schema;
  const auto refs = leaves(expr);
  for (std::size_t li = 0; li < refs.size(); ++li) {
    const auto& ref = refs[li];
    std::string label(base_kind_name(ref.kind));
    if (ref.kind_ordinal > 1) label += "#" + std::to_string(ref.kind_ordinal);
    for (const auto& name : base_param_names(ref.kind)) {
      const auto b = bounds_for(name);
      schema.params.push_back({name, label, ref.path, li, ref.kind, b.lower, b.upper, b.log_space});
    }
  }
  return schema;
}

std::vector<KernelExpr> neighbors(const KernelExpr& expr) {
  const auto base = canonicalize(expr);
  const auto self_text = text_of(base);
  std::map<std::string, KernelExpr> found;
  auto add = [&](KernelExpr e) {
    auto c = canonicalize(e);
    auto t = text_of(c);
    if (t != self_text) found.emplace(std::move(t), std::move(c));
  };
  for (auto k : kAllBaseKinds) {
    add(KernelExpr::sum({base, KernelExpr::leaf(k)}));
    add(KernelExpr::product({base, KernelExpr::leaf(k)}));
  }
  for (const auto& ref : leaves(base)) {
    for (auto k : kAllBaseKinds) {
      if (k != ref.kind) add(replace_at(base, ref.path, 0, k));
    }
  }
  std::vector<KernelExpr> out;
  out.reserve(found.size());
  for (auto& [_, e] : found) out.push_back(std::move(e));
  return out;
}

}  // namespace modeldisc
