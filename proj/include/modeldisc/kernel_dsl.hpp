#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace modeldisc {

enum class BaseKind { LIN, PER, SE, C, WN };

inline constexpr std::array<BaseKind, 5> kAllBaseKinds = {BaseKind::LIN, BaseKind::PER,
                                                          BaseKind::SE, BaseKind::C, BaseKind::WN};

std::string_view base_kind_name(BaseKind kind);
std::optional<BaseKind> base_kind_from_name(std::string_view name);

/// Compositional covariance structure: a base kernel, or an n-ary sum or
/// product (n >= 2) of sub-expressions.
class KernelExpr {
 public:
  enum class Op { Leaf, Sum, Product };

  static KernelExpr leaf(BaseKind kind);
  static KernelExpr sum(std::vector<KernelExpr> children);
  static KernelExpr product(std::vector<KernelExpr> children);

  Op op() const noexcept { return op_; }
  bool is_leaf() const noexcept { return op_ == Op::Leaf; }
  /// Only meaningful for leaves.
  BaseKind base() const noexcept { return base_; }
  const std::vector<KernelExpr>& children() const noexcept { return children_; }

  bool operator==(const KernelExpr&) const = default;

 private:
  KernelExpr(Op op, BaseKind base, std::vector<KernelExpr> children)
      : op_(op), base_(base), children_(std::move(children)) {}

  Op op_;
  BaseKind base_;
  std::vector<KernelExpr> children_;
};

/// Child-index path from the root to a node; the root itself is the empty path.
using NodePath = std::vector<std::size_t>;

std::string path_text(const NodePath& path);

struct LeafRef {
  NodePath path;
  BaseKind kind;
  /// 1-based ordinal among leaves of the same kind, in canonical order.
  std::size_t kind_ordinal;
};

/// Parses `LIN`, `PER`, `SE`, `C`, `WN` combined with `+`, `*` and
/// parentheses; `*` binds tighter than `+`. The result is canonical.
/// Throws ParseError carrying the byte offset of the offending token.
KernelExpr parse_kernel(std::string_view text);

/// Flattens nested sums/products and sorts children by canonical text.
KernelExpr canonicalize(const KernelExpr& expr);

std::string canonical_text(const KernelExpr& expr);

/// Leaves in depth-first (canonical) order.
std::vector<LeafRef> leaves(const KernelExpr& expr);

struct ParamSpec {
  std::string name;        // variance, lengthscale, period, offset
  std::string leaf_label;  // e.g. "PER" or "PER#2"
  NodePath leaf_path;
  std::size_t leaf_index;  // position in leaves()
  BaseKind kind;
  double lower;  // natural units
  double upper;
  bool log_space;

  /// "PER.period", "SE#2.lengthscale", ...
  std::string label() const { return leaf_label + "." + name; }
  double lower_opt() const;
  double upper_opt() const;
  double to_opt(double natural) const;
  double to_natural(double opt) const;
};

/// Hyperparameters of the kernel, excluding the likelihood noise.
struct ParamSchema {
  std::vector<ParamSpec> params;

  std::size_t k_kernel() const { return params.size(); }
  /// Index of the parameter with `label()` equal to `label`, if any.
  std::optional<std::size_t> find(std::string_view label) const;
};

ParamSchema param_schema(const KernelExpr& expr);

/// Parameter names of one base kernel, in schema order.
std::vector<std::string> base_param_names(BaseKind kind);

/// Additions and multiplications by every base kernel plus every single-leaf
/// replacement by a different base kernel; canonical, deduplicated, sorted by
/// canonical text, never containing `expr` itself.
std::vector<KernelExpr> neighbors(const KernelExpr& expr);

}  // namespace modeldisc
