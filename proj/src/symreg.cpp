#include "modeldisc/symreg.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Core>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "modeldisc/errors.hpp"
#include "modeldisc/fitting.hpp"
#include "modeldisc/hashing.hpp"
#include "modeldisc/plotting.hpp"
#include "modeldisc/prompts.hpp"
#include "modeldisc/proposer.hpp"

namespace modeldisc {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr double kLogEps = 1e-12;
// Stand-in for non-finite residuals during optimization.
constexpr double kResidualCap = 1e10;
const std::set<std::string> kFunctions{"sin", "cos", "tan", "sinh", "cosh", "sqrt", "exp", "log", "abs"};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  FuncExpr parse() {
    auto e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(fmt::format("{} at position {}", what, pos_), pos_, std::string(text_));
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(std::string_view tok) {
    skip_ws();
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  FuncExpr parse_sum() {
    auto lhs = parse_product();
    for (;;) {
      if (accept("+")) lhs = FuncExpr::binary(FuncExpr::Op::Add, std::move(lhs), parse_product());
      else if (accept("-")) lhs = FuncExpr::binary(FuncExpr::Op::Sub, std::move(lhs), parse_product());
      else return lhs;
    }
  }

  FuncExpr parse_product() {
    auto lhs = parse_unary();
    for (;;) {
      skip_ws();
      if (text_.substr(pos_, 2) == "**") return lhs;  // handled by parse_power
      if (accept("*")) lhs = FuncExpr::binary(FuncExpr::Op::Mul, std::move(lhs), parse_unary());
      else if (accept("/")) lhs = FuncExpr::binary(FuncExpr::Op::Div, std::move(lhs), parse_unary());
      else return lhs;
    }
  }

  FuncExpr parse_unary() {
    if (accept("-")) return FuncExpr::unary(FuncExpr::Op::Neg, parse_unary());
    if (accept("+")) return parse_unary();
    return parse_power();
  }

  FuncExpr parse_power() {
    auto base = parse_atom();
    if (accept("^") || accept("**")) {
      skip_ws();
      const bool negative = accept("-");
      skip_ws();
      const auto start = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (start == pos_) fail("exponent must be an integer literal");
      if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == 'e')) {
        fail("exponent must be an integer literal");
      }
      const int k = std::stoi(std::string(text_.substr(start, pos_ - start)));
      return FuncExpr::power(std::move(base), negative ? -k : k);
    }
    return base;
  }

  FuncExpr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      auto e = parse_sum();
      if (!accept(")")) fail("unbalanced parentheses");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::string rest(text_.substr(pos_));
      char* end = nullptr;
      const double v = std::strtod(rest.c_str(), &end);
      if (end == rest.c_str() || !std::isfinite(v)) fail("bad number");
      pos_ += static_cast<std::size_t>(end - rest.c_str());
      return FuncExpr::num(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const auto start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string id(text_.substr(start, pos_ - start));
      if (id == "x") return FuncExpr::x();
      if (id == "pi") return FuncExpr::num(std::numbers::pi);
      if (id.size() > 1 && id[0] == 'c' &&
          std::all_of(id.begin() + 1, id.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
        return FuncExpr::coef(std::stoul(id.substr(1)));
      }
      if (kFunctions.count(id)) {
        if (!accept("(")) fail("function '" + id + "' needs parentheses");
        auto arg = parse_sum();
        if (!accept(")")) fail("unbalanced parentheses");
        return FuncExpr::call(id, std::move(arg));
      }
      pos_ = start;
      fail("unknown token '" + id + "'");
    }
    fail("unknown token '" + std::string(1, c) + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void collect_coefs(const FuncExpr& e, std::set<std::size_t>& out) {
  if (e.op() == FuncExpr::Op::Coef) out.insert(e.index());
  for (const auto& c : e.children()) collect_coefs(c, out);
}

int precedence(const FuncExpr& e) {
  switch (e.op()) {
    case FuncExpr::Op::Add:
    case FuncExpr::Op::Sub: return 1;
    case FuncExpr::Op::Mul:
    case FuncExpr::Op::Div: return 2;
    case FuncExpr::Op::Neg: return 3;
    case FuncExpr::Op::Pow: return 4;
    case FuncExpr::Op::Num: return e.value() < 0.0 ? 3 : 5;
    default: return 5;
  }
}

std::string wrap(const FuncExpr& e, bool parens) {
  const auto t = function_text(e);
  return parens ? "(" + t + ")" : t;
}

double population_variance(std::span<const double> y) {
  const double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double s = 0.0;
  for (double v : y) s += (v - m) * (v - m);
  return s / static_cast<double>(y.size());
}

struct LsqFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const FuncExpr* expr;
  std::span<const double> x;
  std::span<const double> y;
  int n_coefs;

  int inputs() const { return n_coefs; }
  int values() const { return static_cast<int>(x.size()); }

  int operator()(const Eigen::VectorXd& c, Eigen::VectorXd& fvec) const {
    const std::span<const double> coefs(c.data(), static_cast<std::size_t>(c.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = eval_function(*expr, x[i], coefs) - y[i];
      fvec[static_cast<Eigen::Index>(i)] = std::isfinite(r) ? std::clamp(r, -kResidualCap, kResidualCap) : kResidualCap;
    }
    return 0;
  }
};

double rss_of(const FuncExpr& e, std::span<const double> x, std::span<const double> y,
              std::span<const double> coefs) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = eval_function(e, x[i], coefs) - y[i];
    s += r * r;
  }
  return s;
}

std::vector<double> raw_train_x(const Dataset& ds) { return inverse_transform_x(ds, ds.train_x()); }
std::vector<double> raw_train_y(const Dataset& ds) {
  const auto ty = ds.train_y();
  return inverse_transform(ds, ty);
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw RunError("cannot write " + path.string());
}

std::string utc_timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

RmsePoint function_rmse(const FittedFunction& f, const Dataset& ds, int round) {
  auto part = [&](const std::vector<double>& xn, const std::vector<double>& yn) {
    if (xn.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto pred = eval_function(f.expr, inverse_transform_x(ds, xn), f.coefs);
    double s = 0.0;
    for (std::size_t i = 0; i < yn.size(); ++i) {
      const double d = ds.y_transform.forward(pred[i]) - yn[i];
      s += d * d;
    }
    return std::sqrt(s / static_cast<double>(yn.size()));
  };
  RmsePoint p;
  p.round = round;
  p.kernel = f.text();
  p.train = part(ds.train_x(), ds.train_y());
  p.val = part(ds.val_x(), ds.val_y());
  p.test = part(ds.test_x(), ds.test_y());
  return p;
}

json sr_entry_json(const SrEntry& e) {
  return json{{"function", e.fitted.text()},
              {"coefficients", e.fitted.coefs},
              {"rss", number_or_null(e.fitted.rss)},
              {"nmse", number_or_null(e.score.nmse)},
              {"complexity", e.score.complexity},
              {"objective", number_or_null(e.score.objective)},
              {"evaluator",
               {{"resemblance", e.report.fitness_mean_resemblance},
                {"uncertainty", e.report.fitness_uncertainty},
                {"generalizability", e.report.generalizability},
                {"total", e.score.evaluator_total},
                {"backend", e.report.backend == EvaluatorBackendKind::Vlm ? "vlm" : "heuristic"},
                {"failed", e.evaluation_failed}}},
              {"combined", number_or_null(e.score.combined)},
              {"finite", e.score.finite},
              {"round_created", e.fitted.round_created},
              {"provenance", e.fitted.provenance},
              {"plots", e.plot_files},
              {"transcript", e.transcript_ref}};
}

const SrEntry* select_sr_best(const std::vector<SrEntry>& pool) {
  const SrEntry* best = nullptr;
  for (const auto& e : pool) {
    if (!e.score.finite) continue;
    if (!best || e.score.combined > best->score.combined ||
        (e.score.combined == best->score.combined &&
         (e.fitted.round_created > best->fitted.round_created ||
          (e.fitted.round_created == best->fitted.round_created && e.fitted.text() < best->fitted.text())))) {
      best = &e;
    }
  }
  return best;
}

std::string describe_function(const FittedFunction& f) {
  std::string out = "coefficients:\n";
  for (std::size_t i = 0; i < f.coefs.size(); ++i) out += fmt::format("  c{} = {:.6g}\n", i, f.coefs[i]);
  return out;
}

}  // namespace

FuncExpr FuncExpr::num(double v) {
  FuncExpr e;
  e.op_ = Op::Num;
  e.value_ = v;
  return e;
}

FuncExpr FuncExpr::x() {
  FuncExpr e;
  e.op_ = Op::X;
  return e;
}

FuncExpr FuncExpr::coef(std::size_t index) {
  FuncExpr e;
  e.op_ = Op::Coef;
  e.index_ = index;
  return e;
}

FuncExpr FuncExpr::unary(Op op, FuncExpr a) {
  FuncExpr e;
  e.op_ = op;
  e.children_.push_back(std::move(a));
  return e;
}

FuncExpr FuncExpr::binary(Op op, FuncExpr a, FuncExpr b) {
  FuncExpr e;
  e.op_ = op;
  e.children_.push_back(std::move(a));
  e.children_.push_back(std::move(b));
  return e;
}

FuncExpr FuncExpr::power(FuncExpr base, int exponent) {
  FuncExpr e;
  e.op_ = Op::Pow;
  e.exponent_ = exponent;
  e.children_.push_back(std::move(base));
  return e;
}

FuncExpr FuncExpr::call(std::string fn, FuncExpr arg) {
  if (!kFunctions.count(fn)) throw ParseError("unknown function '" + fn + "'");
  FuncExpr e;
  e.op_ = Op::Call;
  e.fn_ = std::move(fn);
  e.children_.push_back(std::move(arg));
  return e;
}

FuncExpr parse_function(std::string_view text) {
  auto e = Parser(text).parse();
  std::set<std::size_t> idx;
  collect_coefs(e, idx);
  if (!idx.empty() && *idx.rbegin() + 1 != idx.size()) {
    throw ParseError("coefficients must be numbered c0..c" + std::to_string(idx.size() - 1) + " without gaps",
                     0, std::string(text));
  }
  return e;
}

std::string function_text(const FuncExpr& e) {
  const auto& ch = e.children();
  switch (e.op()) {
    case FuncExpr::Op::Num: return fmt::format("{}", e.value());
    case FuncExpr::Op::X: return "x";
    case FuncExpr::Op::Coef: return "c" + std::to_string(e.index());
    case FuncExpr::Op::Neg: return "-" + wrap(ch[0], precedence(ch[0]) < 3);
    case FuncExpr::Op::Add: return wrap(ch[0], false) + " + " + wrap(ch[1], precedence(ch[1]) <= 1);
    case FuncExpr::Op::Sub: return wrap(ch[0], false) + " - " + wrap(ch[1], precedence(ch[1]) <= 1);
    case FuncExpr::Op::Mul: return wrap(ch[0], precedence(ch[0]) < 2) + "*" + wrap(ch[1], precedence(ch[1]) <= 2);
    case FuncExpr::Op::Div: return wrap(ch[0], precedence(ch[0]) < 2) + "/" + wrap(ch[1], precedence(ch[1]) <= 2);
    case FuncExpr::Op::Pow: return wrap(ch[0], precedence(ch[0]) <= 4) + "^" + std::to_string(e.exponent());
    case FuncExpr::Op::Call: return e.fn() + "(" + function_text(ch[0]) + ")";
  }
  return {};
}

std::size_t node_count(const FuncExpr& e) {
  std::size_t n = 1;
  for (const auto& c : e.children()) n += node_count(c);
  return n;
}

std::size_t coefficient_count(const FuncExpr& e) {
  std::set<std::size_t> idx;
  collect_coefs(e, idx);
  return idx.empty() ? 0 : *idx.rbegin() + 1;
}

double eval_function(const FuncExpr& e, double x, std::span<const double> coefs) {
  const auto& ch = e.children();
  switch (e.op()) {
    case FuncExpr::Op::Num: return e.value();
    case FuncExpr::Op::X: return x;
    case FuncExpr::Op::Coef:
      if (e.index() >= coefs.size()) throw Error("coefficient c" + std::to_string(e.index()) + " has no value");
      return coefs[e.index()];
    case FuncExpr::Op::Neg: return -eval_function(ch[0], x, coefs);
    case FuncExpr::Op::Add: return eval_function(ch[0], x, coefs) + eval_function(ch[1], x, coefs);
    case FuncExpr::Op::Sub: return eval_function(ch[0], x, coefs) - eval_function(ch[1], x, coefs);
    case FuncExpr::Op::Mul: return eval_function(ch[0], x, coefs) * eval_function(ch[1], x, coefs);
    case FuncExpr::Op::Div: return eval_function(ch[0], x, coefs) / eval_function(ch[1], x, coefs);
    case FuncExpr::Op::Pow: return std::pow(eval_function(ch[0], x, coefs), e.exponent());
    case FuncExpr::Op::Call: {
      const double u = eval_function(ch[0], x, coefs);
      const auto& f = e.fn();
      if (f == "sin") return std::sin(u);
      if (f == "cos") return std::cos(u);
      if (f == "tan") return std::tan(u);
      if (f == "sinh") return std::sinh(u);
      if (f == "cosh") return std::cosh(u);
      if (f == "sqrt") return std::sqrt(std::abs(u));
      if (f == "exp") return std::exp(u);
      if (f == "log") return std::log(std::abs(u) + kLogEps);
      return std::abs(u);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> eval_function(const FuncExpr& e, std::span<const double> x, std::span<const double> coefs) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = eval_function(e, x[i], coefs);
  return out;
}

FittedFunction fit_function(const FuncExpr& expr, std::span<const double> x, std::span<const double> y,
                            int n_restarts, std::uint64_t seed) {
  if (x.size() != y.size()) throw FitError("x and y differ in length");
  const auto k = coefficient_count(expr);
  if (x.size() < k) {
    throw FitError(fmt::format("{} coefficients but only {} points", k, x.size()));
  }
  FittedFunction best;
  best.expr = expr;
  best.rss = std::numeric_limits<double>::infinity();
  if (k == 0) {
    best.rss = rss_of(expr, x, y, {});
    if (!std::isfinite(best.rss)) throw FitError("expression is not finite on the data");
    return best;
  }
  std::vector<std::string> diagnostics;
  const LsqFunctor functor{&expr, x, y, static_cast<int>(k)};
  for (int r = 0; r < std::max(1, n_restarts); ++r) {
    std::mt19937_64 rng(restart_seed(seed, static_cast<std::size_t>(r)));
    std::uniform_real_distribution<double> init(-2.0, 2.0);
    Eigen::VectorXd c(static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = init(rng);
    Eigen::NumericalDiff<LsqFunctor> nd(functor);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<LsqFunctor>> lm(nd);
    lm.parameters.maxfev = 400 * static_cast<int>(k + 1);
    lm.parameters.xtol = 1e-12;
    lm.parameters.ftol = 1e-12;
    const auto status = lm.minimize(c);
    std::vector<double> coefs(c.data(), c.data() + c.size());
    const double rss = rss_of(expr, x, y, coefs);
    diagnostics.push_back(fmt::format("restart {}: status {} rss {}", r, static_cast<int>(status), rss));
    if (std::isfinite(rss) && rss < best.rss) {
      best.rss = rss;
      best.coefs = std::move(coefs);
    }
  }
  if (!std::isfinite(best.rss)) throw FitError("every restart ended non-finite", diagnostics);
  return best;
}

FittedFunction fit_function(const FuncExpr& expr, const Dataset& ds, int n_restarts, std::uint64_t seed) {
  return fit_function(expr, raw_train_x(ds), raw_train_y(ds), n_restarts, seed);
}

double nmse(std::span<const double> prediction, std::span<const double> y) {
  if (y.empty() || prediction.size() != y.size()) throw Error("nmse needs aligned non-empty series");
  const double var = population_variance(y);
  if (!(var > 0.0)) throw Error("nmse is undefined for a zero-variance target");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (prediction[i] - y[i]) * (prediction[i] - y[i]);
  return (s / static_cast<double>(y.size())) / var;
}

SrScore sr_objective(const FittedFunction& f, const Dataset& ds, double lambda_c, double evaluator_total,
                     double alpha_sr) {
  const auto x = raw_train_x(ds);
  const auto y = raw_train_y(ds);
  SrScore s;
  s.complexity = node_count(f.expr);
  const auto pred = eval_function(f.expr, x, f.coefs);
  s.finite = all_finite(pred);
  s.nmse = s.finite ? nmse(pred, y) : std::numeric_limits<double>::infinity();
  if (!std::isfinite(s.nmse)) s.finite = false;
  s.objective = s.nmse + lambda_c * static_cast<double>(s.complexity);
  s.evaluator_total = evaluator_total;
  s.combined = alpha_sr * evaluator_total - s.objective;
  return s;
}

PredictionView function_view(const FittedFunction& f, const Dataset& ds, int grid_points, bool include_test) {
  PredictionView v;
  v.has_band = false;
  v.train_x = ds.train_x();
  v.train_y = ds.train_y();
  const auto [lo, hi] = std::minmax_element(v.train_x.begin(), v.train_x.end());
  v.grid_x = extrapolation_grid(*lo, *hi, grid_points);
  auto predict_norm = [&](const std::vector<double>& xn) {
    auto raw = eval_function(f.expr, inverse_transform_x(ds, xn), f.coefs);
    for (auto& r : raw) r = ds.y_transform.forward(r);
    return raw;
  };
  v.mean = predict_norm(v.grid_x);
  v.low = v.mean;
  v.high = v.mean;
  v.train_mean = predict_norm(v.train_x);
  if (include_test) {
    v.test_x = ds.test_x();
    v.test_y = ds.test_y();
  }
  return v;
}

std::vector<std::string> sr_greedy_propose(const FittedFunction* best, std::size_t count) {
  std::vector<std::string> out;
  if (!best) {
    out = {"c0*x + c1",
           "c0*x^2 + c1*x + c2",
           "c0*sin(c1*x) + c2",
           "c0*exp(c1*x) + c2",
           "c0*x^3 + c1*x^2 + c2*x + c3",
           "c0*log(x) + c1"};
  } else {
    const auto base = best->text();
    const auto k = coefficient_count(best->expr);
    const auto a = "c" + std::to_string(k);
    const auto b = "c" + std::to_string(k + 1);
    for (const auto& term : {a + "*x", a + "*x^2", a + "*x^3", a + "*sin(" + b + "*x)", a + "*cos(" + b + "*x)",
                             a + "*exp(" + b + "*x)", a + "*log(x)", a + "*sqrt(x)"}) {
      out.push_back(base + " + " + term);
    }
  }
  if (out.size() > count) out.resize(count);
  return out;
}

SrResult run_sr_discovery(const RunConfig& config, const Dataset& ds, const fs::path& run_dir,
                          ChatBackend* backend) {
  config.validate();
  if ((config.proposer == ProposerKind::Agent || config.evaluator == EvaluatorKind::Vlm) && !backend) {
    throw ConfigError("agent proposer and vlm evaluator need a chat backend");
  }
  fs::create_directories(run_dir / "rounds");
  fs::create_directories(run_dir / "plots");
  fs::create_directories(run_dir / "transcripts");
  write_text(run_dir / "config.json", to_json(config).dump(2) + "\n");

  SrResult result;
  std::set<std::string> pooled;
  const fs::path prompts_dir = config.prompts_dir.empty() ? default_prompts_dir() : fs::path(config.prompts_dir);
  const auto count = static_cast<std::size_t>(config.sr_candidates);

  for (int r = 1; r <= config.rounds; ++r) {
    const SrEntry* best = select_sr_best(result.pool);
    std::vector<std::string> texts;
    std::vector<std::string> transcript;
    bool fell_back = false;
    int steps = 0;
    switch (config.proposer) {
      case ProposerKind::Scripted:
        if (r - 1 < static_cast<int>(config.scripted_candidates.size())) texts = config.scripted_candidates[r - 1];
        transcript.push_back(fmt::format("scripted round {}: {} candidates\n", r, texts.size()));
        break;
      case ProposerKind::Greedy:
        texts = sr_greedy_propose(best ? &best->fitted : nullptr, count);
        transcript.push_back(fmt::format("greedy extensions: {} candidates\n", texts.size()));
        break;
      case ProposerKind::Agent: {
        std::string refs;
        std::vector<const SrEntry*> ordered;
        for (const auto& e : result.pool) ordered.push_back(&e);
        std::stable_sort(ordered.begin(), ordered.end(),
                         [](const SrEntry* a, const SrEntry* b) { return a->score.combined > b->score.combined; });
        for (std::size_t i = 0; i < ordered.size() && static_cast<int>(i) < config.top_k; ++i) {
          const auto& e = *ordered[i];
          refs += fmt::format("- {}: nmse={:.6g}, complexity={}, visual={:.1f}, combined={:.6g}\n", e.fitted.text(),
                              e.score.nmse, e.score.complexity, e.score.evaluator_total, e.score.combined);
        }
        if (refs.empty()) refs = "(none yet)\n";
        AgentSpec spec;
        spec.max_steps = config.max_agent_steps;
        spec.seed.push_back({Role::System, load_prompt(prompts_dir, "analyzer_system.txt"), {}});
        ChatMessage task{Role::User,
                         load_prompt(prompts_dir, "sr_analyzer_action.txt",
                                     {{"reference_models", refs},
                                      {"best_kernel", best ? best->fitted.text() : std::string("(none yet)")},
                                      {"best_params", best ? describe_function(best->fitted) : std::string()}}),
                         {}};
        PlotSpec data;
        data.kind = PlotKind::Data;
        data.name = fmt::format("r{}_agent_seed", r);
        data.series["x"] = ds.train_x();
        data.series["y"] = ds.train_y();
        task.images.push_back(render(data, run_dir / "plots").image_bytes);
        spec.seed.push_back(std::move(task));
        int tool_calls = 0;
        spec.run_tool = [&](const std::string& name, const json& args) -> ToolResult {
          const auto plot_name = fmt::format("r{}_agent_t{}", r, ++tool_calls);
          const auto tx = ds.train_x();
          std::vector<double> resid;
          if (best) {
            const auto pred = function_view(best->fitted, ds).train_mean;
            const auto ty = ds.train_y();
            for (std::size_t i = 0; i < ty.size(); ++i) resid.push_back(ty[i] - pred[i]);
          }
          if (name == "render_data_plot") {
            PlotSpec s = data;
            s.name = plot_name;
            ToolResult out;
            out.plots.push_back(render(s, run_dir / "plots"));
            out.text = "data plot attached (x in [0, 1], y standardized).";
            return out;
          }
          if (name == "describe_params") {
            if (!best) throw ToolError("no fitted function yet");
            return ToolResult{clip_tool_text(best->fitted.text() + "\n" + describe_function(best->fitted)), {}};
          }
          if (name == "residual_stats") {
            if (!best) throw ToolError("no fitted function yet");
            return residual_summary(tx, resid, best->fitted.text(), run_dir / "plots", plot_name);
          }
          if (name == "periodogram") {
            const auto target = args.value("target", std::string("residuals"));
            if (target == "data" || !best) return tool_periodogram(ds.train_y(), tx, run_dir / "plots", plot_name);
            return tool_periodogram(resid, tx, run_dir / "plots", plot_name);
          }
          if (name == "render_prediction_plot") {
            if (!best) throw ToolError("no fitted function yet");
            const auto plots = render_evaluation_plots(function_view(best->fitted, ds), plot_name, run_dir / "plots");
            return ToolResult{"prediction plot of " + best->fitted.text() + " attached.", {plots.prediction}};
          }
          throw ToolError("unknown tool '" + name + "'");
        };
        spec.parse = [](const std::string& reply) {
          auto a = parse_agent_action(reply);
          for (const auto& item : a.items) {
            try {
              parse_function(item.text);
            } catch (const ParseError& e) {
              throw ParseError("invalid function '" + item.text + "': " + e.what(), e.position(), reply);
            }
          }
          return a;
        };
        auto trace = run_agent_session(*backend, spec);
        steps = trace.steps;
        transcript = std::move(trace.transcript);
        if (trace.proposal) {
          for (const auto& item : trace.proposal->items) texts.push_back(item.text);
        } else {
          fell_back = true;
          texts = sr_greedy_propose(best ? &best->fitted : nullptr, count);
          transcript.push_back(fmt::format("### fallback ({})\n{} greedy extensions\n", trace.stop_reason, texts.size()));
        }
        break;
      }
    }
    const auto transcript_ref = fmt::format("transcripts/r{}.txt", r);
    {
      std::string text;
      for (const auto& t : transcript) text += t + "\n";
      write_text(run_dir / transcript_ref, text);
    }

    json candidates = json::array();
    json skipped = json::array();
    for (std::size_t j = 0; j < texts.size(); ++j) {
      FuncExpr expr = FuncExpr::num(0.0);
      try {
        expr = parse_function(texts[j]);
      } catch (const ParseError& e) {
        skipped.push_back({{"function", texts[j]}, {"status", "parse_failed"}, {"message", e.what()}});
        continue;
      }
      const auto key = function_text(expr);
      if (!pooled.insert(key).second) {
        skipped.push_back({{"function", key}, {"status", "duplicate"}, {"message", "already pooled"}});
        continue;
      }
      SrEntry entry;
      entry.transcript_ref = transcript_ref;
      try {
        entry.fitted = fit_function(expr, ds, config.restarts, candidate_seed(config.seed, key));
      } catch (const FitError& e) {
        spdlog::warn("round {}: fitting {} failed: {}", r, key, e.what());
        entry.fitted.expr = expr;
        entry.fitted.coefs.assign(coefficient_count(expr), 0.0);
        entry.fitted.rss = std::numeric_limits<double>::infinity();
      }
      entry.fitted.round_created = r;
      entry.fitted.provenance = to_string(config.proposer) + (fell_back ? "-fallback" : "");

      entry.score = sr_objective(entry.fitted, ds, config.lambda_c, 0.0, config.alpha_sr);
      if (!std::isfinite(entry.fitted.rss)) entry.score.finite = false;
      if (entry.score.finite) {
        const auto view = function_view(entry.fitted, ds, config.grid_points);
        if (!all_finite(view.mean)) {
          entry.score.finite = false;
        } else {
          try {
            if (config.evaluator == EvaluatorKind::Vlm) {
              EvaluateOptions eopt;
              eopt.n_repeats = config.n_repeats;
              eopt.grid_points = config.grid_points;
              eopt.prompts_dir = prompts_dir;
              eopt.plots_dir = run_dir / "plots";
              eopt.plot_name = fmt::format("r{}_c{}", r, j);
              eopt.prompt_set = sr_prompt_set();
              entry.report = evaluate_view(view, key, *backend, eopt);
            } else {
              entry.report = heuristic_evaluate(view);
              const auto plots = render_evaluation_plots(view, fmt::format("r{}_c{}", r, j), run_dir / "plots");
              entry.report.plot_files = {plots.data.path.filename().string(),
                                         plots.mean_only.path.filename().string(),
                                         plots.prediction.path.filename().string()};
            }
          } catch (const EvaluationError& e) {
            spdlog::warn("round {}: evaluating {} failed: {}", r, key, e.what());
            entry.report = EvaluatorReport{};
            entry.evaluation_failed = true;
          }
        }
      }
      entry.plot_files = entry.report.plot_files;
      entry.score = sr_objective(entry.fitted, ds, config.lambda_c, entry.report.total(), config.alpha_sr);
      if (!std::isfinite(entry.fitted.rss) || !entry.score.finite) {
        entry.score.finite = false;
        entry.score.nmse = std::numeric_limits<double>::infinity();
        entry.score.objective = std::numeric_limits<double>::infinity();
        entry.score.combined = -std::numeric_limits<double>::infinity();
      }
      spdlog::info("round {}: {} nmse={:.6g} visual={:.1f} combined={:.6g}", r, key, entry.score.nmse,
                   entry.score.evaluator_total, entry.score.combined);
      candidates.push_back(sr_entry_json(entry));
      result.pool.push_back(std::move(entry));
    }

    best = select_sr_best(result.pool);
    if (best) result.rmse_series.push_back(function_rmse(best->fitted, ds, r));
    json series = json::array();
    for (const auto& p : result.rmse_series) {
      series.push_back({{"round", p.round},
                        {"kernel", p.kernel},
                        {"train", number_or_null(p.train)},
                        {"val", number_or_null(p.val)},
                        {"test", number_or_null(p.test)}});
    }
    json best_j = nullptr;
    if (best) {
      best_j = {{"text", best->fitted.text()},
                {"selection_score", best->score.combined},
                {"combined", best->score.combined},
                {"nmse", best->score.nmse},
                {"r2", 1.0 - best->score.nmse},
                {"coefficients", best->fitted.coefs},
                {"round_created", best->fitted.round_created}};
    }
    const json log{{"mode", "sr"},
                   {"round", r},
                   {"timestamp", utc_timestamp()},
                   {"proposer", {{"kind", to_string(config.proposer)}, {"fell_back", fell_back}, {"agent_steps", steps}}},
                   {"transcript", transcript_ref},
                   {"candidates", candidates},
                   {"skipped", skipped},
                   {"pool_size", result.pool.size()},
                   {"best", best_j},
                   {"rmse_series", series}};
    write_text(run_dir / "rounds" / ("r" + std::to_string(r)) / "log.json", log.dump(2) + "\n");
  }

  const auto* best = select_sr_best(result.pool);
  if (!best) throw RunError("no finite function was found");
  result.best = *best;
  write_report(run_dir);
  return result;
}

}  // namespace modeldisc
