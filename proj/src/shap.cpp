#include "drn/shap.hpp"

#include <cmath>
#include <limits>

#include "drn/errors.hpp"

namespace drn {

double ValueFunctionSpec::eval_target(const Eigen::VectorXd& x) const {
  if (is_adjustment()) return primary(x) - baseline(x);
  return primary(x);
}

std::vector<std::vector<int>> ValueFunctionSpec::effective_groups(
    int columns) const {
  if (!groups.empty()) return groups;
  std::vector<std::vector<int>> g(static_cast<std::size_t>(columns));
  for (int j = 0; j < columns; ++j) g[static_cast<std::size_t>(j)] = {j};
  return g;
}

void ValueFunctionSpec::validate(int columns) const {
  if (!primary) throw ValidationError("value function needs a primary model");
  if (is_adjustment() && !baseline)
    throw ValidationError("adjustment targets need both models");
  if ((target == Target::Quantile || target == Target::AdjustmentQuantile) &&
      !(alpha > 0.0 && alpha < 1.0))
    throw ValidationError("quantile level must lie in (0,1)");
  if (background.rows() < 1) throw ValidationError("empty background sample");
  if (background.cols() != columns)
    throw DimensionError("background width != feature count");
  if (mc_samples < 1 || mc_samples > background.rows())
    throw ValidationError(
        "mc_samples must lie in [1, background rows]");
  for (const auto& g : groups)
    for (int c : g)
      if (c < 0 || c >= columns)
        throw ValidationError("player group references a bad column");
}

std::string ValueFunctionSpec::describe() const {
  switch (target) {
    case Target::Mean:
      return "mean";
    case Target::Quantile:
      return "quantile(" + std::to_string(alpha) + ")";
    case Target::AdjustmentMean:
      return "adjustment-mean";
    case Target::AdjustmentQuantile:
      return "adjustment-quantile(" + std::to_string(alpha) + ")";
  }
  return "?";
}

Eigen::MatrixXd draw_background(const Eigen::MatrixXd& X_train, int n_rows,
                                Rng& rng) {
  if (n_rows > X_train.rows())
    throw ValidationError("background larger than the training set");
  std::vector<int> perm = rng.permutation(static_cast<int>(X_train.rows()));
  Eigen::MatrixXd bg(n_rows, X_train.cols());
  for (int i = 0; i < n_rows; ++i)
    bg.row(i) = X_train.row(perm[static_cast<std::size_t>(i)]);
  return bg;
}

namespace {

double value_of_subset(const ValueFunctionSpec& spec, const Eigen::VectorXd& x,
                       const std::vector<std::vector<int>>& groups,
                       const std::vector<char>& member) {
  // Average the target over background rows with the member players' columns
  // pinned to x.
  double acc = 0.0;
  Eigen::VectorXd z(x.size());
  for (int m = 0; m < spec.mc_samples; ++m) {
    z = spec.background.row(m).transpose();
    for (std::size_t g = 0; g < groups.size(); ++g)
      if (member[g])
        for (int c : groups[g]) z(c) = x(c);
    acc += spec.eval_target(z);
  }
  return acc / static_cast<double>(spec.mc_samples);
}

}  // namespace

double marginal_value_function(const ValueFunctionSpec& spec,
                               const Eigen::VectorXd& x,
                               std::span<const int> subset) {
  spec.validate(static_cast<int>(x.size()));
  auto groups = spec.effective_groups(static_cast<int>(x.size()));
  std::vector<char> member(groups.size(), 0);
  for (int g : subset) {
    if (g < 0 || g >= static_cast<int>(groups.size()))
      throw ValidationError("subset references a bad player");
    member[static_cast<std::size_t>(g)] = 1;
  }
  return value_of_subset(spec, x, groups, member);
}

ShapExplanation kernel_shap(const ValueFunctionSpec& spec,
                            const Eigen::VectorXd& x) {
  spec.validate(static_cast<int>(x.size()));
  auto groups = spec.effective_groups(static_cast<int>(x.size()));
  const int p = static_cast<int>(groups.size());
  if (p < 2) throw ValidationError("kernel shap needs at least two players");

  const std::vector<char> none(static_cast<std::size_t>(p), 0);
  const double v_empty = value_of_subset(spec, x, groups, none);
  const double v_full = spec.eval_target(x);
  const double delta = v_full - v_empty;

  // Weighted least squares with phi_0 and the efficiency sum eliminated:
  // regress v(S) - phi0 - 1{p in S} * delta on z_j - z_p for j < p.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p - 1, p - 1);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p - 1);
  Eigen::VectorXd a(p - 1);

  auto accumulate = [&](const std::vector<char>& member, double weight) {
    double v = value_of_subset(spec, x, groups, member);
    double zp = member[static_cast<std::size_t>(p - 1)] ? 1.0 : 0.0;
    for (int j = 0; j < p - 1; ++j)
      a(j) = (member[static_cast<std::size_t>(j)] ? 1.0 : 0.0) - zp;
    double t = v - v_empty - zp * delta;
    A.noalias() += weight * a * a.transpose();
    c.noalias() += weight * a * t;
  };

  if (p <= 13) {
    // Exact enumeration over all proper nonempty subsets.
    std::vector<double> log_binom(static_cast<std::size_t>(p) + 1);
    for (int s = 0; s <= p; ++s)
      log_binom[static_cast<std::size_t>(s)] =
          std::lgamma(p + 1.0) - std::lgamma(s + 1.0) - std::lgamma(p - s + 1.0);
    std::vector<char> member(static_cast<std::size_t>(p), 0);
    for (std::uint32_t mask = 1; mask + 1 < (1u << p); ++mask) {
      int size = 0;
      for (int j = 0; j < p; ++j) {
        member[static_cast<std::size_t>(j)] = (mask >> j) & 1u;
        size += member[static_cast<std::size_t>(j)];
      }
      double weight =
          (p - 1.0) /
          (std::exp(log_binom[static_cast<std::size_t>(size)]) * size * (p - size));
      accumulate(member, weight);
    }
  } else {
    // Sample subsets with probability proportional to the kernel weight:
    // the size distribution is then proportional to (p-1)/(s(p-s)).
    Rng rng(spec.seed ^ 0x5A17u);
    std::vector<double> size_cdf(static_cast<std::size_t>(p) - 1);
    double total = 0.0;
    for (int s = 1; s <= p - 1; ++s) {
      total += 1.0 / (static_cast<double>(s) * (p - s));
      size_cdf[static_cast<std::size_t>(s) - 1] = total;
    }
    std::vector<char> member(static_cast<std::size_t>(p), 0);
    for (int draw = 0; draw < spec.sample_budget; ++draw) {
      double u = rng.uniform() * total;
      int size = 1;
      while (size < p - 1 && size_cdf[static_cast<std::size_t>(size) - 1] < u)
        ++size;
      std::fill(member.begin(), member.end(), 0);
      std::vector<int> perm = rng.permutation(p);
      for (int k = 0; k < size; ++k)
        member[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = 1;
      accumulate(member, 1.0);
    }
  }

  Eigen::LDLT<Eigen::MatrixXd> solver(A);
  if (solver.info() != Eigen::Success || !solver.isPositive())
    throw RankError("singular constrained system in the kernel solve");
  Eigen::VectorXd theta = solver.solve(c);

  ShapExplanation ex;
  ex.phi0 = v_empty;
  ex.phi.resize(p);
  ex.phi.head(p - 1) = theta;
  ex.phi(p - 1) = delta - theta.sum();
  ex.prediction = v_full;
  ex.target_description = spec.describe();
  return ex;
}

ShapExplanation adjustment_shap(const ValueFunctionSpec& spec,
                                const Eigen::VectorXd& x) {
  if (!spec.is_adjustment())
    throw ValidationError("adjustment_shap needs an adjustment target");
  return kernel_shap(spec, x);
}

Eigen::VectorXd shap_importance(std::span<const ShapExplanation> explanations) {
  if (explanations.empty()) throw ValidationError("no explanations");
  Eigen::VectorXd imp = Eigen::VectorXd::Zero(explanations[0].phi.size());
  for (const auto& ex : explanations) {
    if (ex.phi.size() != imp.size())
      throw DimensionError("explanations disagree on player count");
    imp += ex.phi.cwiseAbs();
  }
  return imp / static_cast<double>(explanations.size());
}

std::vector<DependencePoint> dependence_data(
    std::span<const ShapExplanation> explanations, const Eigen::MatrixXd& X,
    int feature_column, int player, int color_column) {
  if (static_cast<Eigen::Index>(explanations.size()) != X.rows())
    throw DimensionError("one explanation per row required");
  std::vector<DependencePoint> pts;
  pts.reserve(explanations.size());
  for (std::size_t i = 0; i < explanations.size(); ++i) {
    double color = color_column >= 0
                       ? X(static_cast<Eigen::Index>(i), color_column)
                       : std::numeric_limits<double>::quiet_NaN();
    pts.push_back({X(static_cast<Eigen::Index>(i), feature_column),
                   explanations[i].phi(player), color});
  }
  return pts;
}

}  // namespace drn
