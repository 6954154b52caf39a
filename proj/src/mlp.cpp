#include "drn/mlp.hpp"

#include <cmath>

#include "drn/errors.hpp"

namespace drn {

void MlpParams::validate() const {
  if (weights.empty() || weights.size() != biases.size())
    throw DimensionError("network needs matching weight/bias lists");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].cols() != biases[l].size())
      throw DimensionError("bias width mismatch at layer " + std::to_string(l));
    if (l + 1 < weights.size() && weights[l].cols() != weights[l + 1].rows())
      throw DimensionError("non-conformable layers " + std::to_string(l) +
                           " -> " + std::to_string(l + 1));
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw ValidationError("non-finite parameter at layer " + std::to_string(l));
  }
}

MlpParams MlpParams::init(int input_dim, int hidden_layers, int neurons,
                          int output_dim, Rng& rng, double leaky_slope) {
  std::vector<int> dims;
  dims.push_back(input_dim);
  for (int l = 0; l < hidden_layers; ++l) dims.push_back(neurons);
  dims.push_back(output_dim);

  MlpParams p;
  p.leaky_slope = leaky_slope;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    int fan_in = dims[l], fan_out = dims[l + 1];
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_in, fan_out);
    for (int i = 0; i < fan_in; ++i)
      for (int j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-limit, limit);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return p;
}

MlpParams MlpParams::zeros(const std::vector<int>& dims, double leaky_slope) {
  MlpParams p;
  p.leaky_slope = leaky_slope;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    p.weights.push_back(Eigen::MatrixXd::Zero(dims[l], dims[l + 1]));
    p.biases.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
  }
  return p;
}

Gradients Gradients::zeros_like(const MlpParams& p) {
  Gradients g;
  for (const auto& w : p.weights) g.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : p.biases) g.biases.push_back(Eigen::VectorXd::Zero(b.size()));
  return g;
}

void Gradients::scale(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) b *= s;
}

bool Gradients::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

DropoutMasks sample_dropout_masks(const MlpParams& p, int batch, double rate,
                                  Rng& rng) {
  DropoutMasks m;
  if (rate <= 0.0) return m;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int l = 0; l + 1 < p.layer_count(); ++l) {
    Eigen::MatrixXd mask(batch, p.weights[l].cols());
    for (int i = 0; i < mask.rows(); ++i)
      for (int j = 0; j < mask.cols(); ++j)
        mask(i, j) = rng.uniform() < rate ? 0.0 : keep_scale;
    m.layers.push_back(std::move(mask));
  }
  return m;
}

namespace {

inline double leaky(double v, double slope) { return v >= 0.0 ? v : slope * v; }
// Subgradient at 0 taken on the positive branch.
inline double leaky_deriv(double v, double slope) { return v >= 0.0 ? 1.0 : slope; }

}  // namespace

Eigen::MatrixXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& X,
                            const DropoutMasks* masks, ForwardCache* cache) {
  if (X.cols() != p.input_dim())
    throw DimensionError("input width " + std::to_string(X.cols()) +
                         " != network fan-in " + std::to_string(p.input_dim()));
  const int L = p.layer_count();
  if (masks && !masks->layers.empty() &&
      static_cast<int>(masks->layers.size()) != L - 1)
    throw DimensionError("dropout masks must cover every hidden layer");

  if (cache) {
    cache->preact.assign(static_cast<std::size_t>(L), {});
    cache->act.assign(static_cast<std::size_t>(L) + 1, {});
    cache->act[0] = X;
  }
  Eigen::MatrixXd h = X;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd z = (h * p.weights[l]).rowwise() + p.biases[l].transpose();
    if (cache) cache->preact[static_cast<std::size_t>(l)] = z;
    if (l + 1 < L) {
      h = z.unaryExpr([&](double v) { return leaky(v, p.leaky_slope); });
      if (masks && !masks->layers.empty()) {
        if (masks->layers[static_cast<std::size_t>(l)].rows() != h.rows() ||
            masks->layers[static_cast<std::size_t>(l)].cols() != h.cols())
          throw DimensionError("dropout mask shape mismatch at layer " +
                               std::to_string(l));
        h = h.cwiseProduct(masks->layers[static_cast<std::size_t>(l)]);
      }
    } else {
      h = z;  // linear output layer
    }
    if (cache) cache->act[static_cast<std::size_t>(l) + 1] = h;
  }
  return h;
}

Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::VectorXd& x) {
  Eigen::MatrixXd out = mlp_forward(p, Eigen::MatrixXd(x.transpose()));
  return out.row(0).transpose();
}

Gradients mlp_backward(const MlpParams& p, const ForwardCache& cache,
                       const Eigen::MatrixXd& dL_doutput,
                       const DropoutMasks* masks) {
  const int L = p.layer_count();
  Gradients g = Gradients::zeros_like(p);
  Eigen::MatrixXd delta = dL_doutput;  // dL/d(preact of layer L-1), linear out
  for (int l = L - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    g.weights[lu] = cache.act[lu].transpose() * delta;
    g.biases[lu] = delta.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd dh = delta * p.weights[lu].transpose();
    if (masks && !masks->layers.empty())
      dh = dh.cwiseProduct(masks->layers[lu - 1]);
    delta = dh.cwiseProduct(cache.preact[lu - 1].unaryExpr(
        [&](double v) { return leaky_deriv(v, p.leaky_slope); }));
  }
  return g;
}

std::pair<double, Gradients> mlp_value_and_grad(const MlpParams& p,
                                                const BatchObjective& obj,
                                                std::span<const int> rows,
                                                const DropoutMasks* masks) {
  if (p.output_dim() != obj.output_dim())
    throw DimensionError("network output width != objective expectation");
  std::vector<int> idx(rows.begin(), rows.end());
  Eigen::MatrixXd X = obj.features()(idx, Eigen::all);
  ForwardCache cache;
  Eigen::MatrixXd out = mlp_forward(p, X, masks, &cache);
  Eigen::MatrixXd grad_out(out.rows(), out.cols());
  double loss = obj.value_and_grad(out, rows, grad_out);
  if (!std::isfinite(loss))
    throw NumericalError("non-finite training loss", rows.empty() ? -1 : rows[0]);
  return {loss, mlp_backward(p, cache, grad_out, masks)};
}

double finite_diff_check(const MlpParams& p, const BatchObjective& obj,
                         std::span<const int> rows, double step) {
  auto [loss, analytic] = mlp_value_and_grad(p, obj, rows);
  (void)loss;
  std::vector<int> idx(rows.begin(), rows.end());
  Eigen::MatrixXd X = obj.features()(idx, Eigen::all);
  MlpParams q = p;

  auto eval = [&]() {
    Eigen::MatrixXd out = mlp_forward(q, X);
    return obj.value(out, rows);
  };

  double max_rel = 0.0;
  auto check = [&](double& param, double analytic_g) {
    const double orig = param;
    param = orig + step;
    double up = eval();
    param = orig - step;
    double down = eval();
    param = orig;
    double fd = (up - down) / (2.0 * step);
    double rel = std::abs(analytic_g - fd) / std::max(1.0, std::abs(analytic_g));
    max_rel = std::max(max_rel, rel);
  };

  for (int l = 0; l < q.layer_count(); ++l) {
    const auto lu = static_cast<std::size_t>(l);
    for (int i = 0; i < q.weights[lu].rows(); ++i)
      for (int j = 0; j < q.weights[lu].cols(); ++j)
        check(q.weights[lu](i, j), analytic.weights[lu](i, j));
    for (int i = 0; i < q.biases[lu].size(); ++i)
      check(q.biases[lu](i), analytic.biases[lu](i));
  }
  return max_rel;
}

}  // namespace drn
