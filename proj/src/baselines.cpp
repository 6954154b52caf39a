#include "drn/baselines.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>

#include "drn/errors.hpp"
#include "drn/numeric.hpp"
#include "loss_kernels.hpp"

namespace drn {

namespace {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline double gamma_log_density(double y, double shape, double scale) {
  return (shape - 1.0) * std::log(y) - y / scale - std::lgamma(shape) -
         shape * std::log(scale);
}

}  // namespace

// ---- CANN -----------------------------------------------------------------

MlpParams make_cann_net(int input_dim, int hidden_layers, int neurons,
                        Rng& rng, double credibility_bias) {
  MlpParams net = MlpParams::init(input_dim, hidden_layers, neurons, 2, rng);
  net.biases.back()(0) = credibility_bias;
  return net;
}

double cann_credibility(const CannModel& model, const Eigen::VectorXd& x) {
  return sigmoid(mlp_forward(model.net, x)(0));
}

double cann_mean(const CannModel& model, const Eigen::VectorXd& x) {
  Eigen::VectorXd out = mlp_forward(model.net, x);
  double alpha = sigmoid(out(0));
  double eta = model.glm.linear_predictor(x);
  return std::exp(alpha * eta + (1.0 - alpha) * out(1));
}

GammaDist cann_conditional(const CannModel& model, const Eigen::VectorXd& x) {
  double mu = cann_mean(model, x);
  return GammaDist(1.0 / model.dispersion, mu * model.dispersion);
}

double cann_loss(const CannModel& model, const Eigen::MatrixXd& X,
                 const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw DimensionError("batch size mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double mu = cann_mean(model, X.row(i).transpose());
    total += 2.0 * ((y(i) - mu) / mu - std::log(y(i) / mu));
  }
  return total;
}

CannObjective::CannObjective(const GammaGlmModel& glm, Eigen::MatrixXd X,
                             Eigen::VectorXd y)
    : X_(std::move(X)), y_(std::move(y)) {
  if (X_.rows() != y_.size()) throw DimensionError("response length != rows");
  if ((y_.array() <= 0.0).any())
    throw ValidationError("gamma deviance needs strictly positive responses");
  eta_glm_.resize(X_.rows());
  for (Eigen::Index i = 0; i < X_.rows(); ++i)
    eta_glm_(i) = glm.linear_predictor(X_.row(i).transpose());
}

double CannObjective::value(const Eigen::MatrixXd& outputs,
                            std::span<const int> rows) const {
  return evaluate(outputs, rows, nullptr);
}

double CannObjective::value_and_grad(const Eigen::MatrixXd& outputs,
                                     std::span<const int> rows,
                                     Eigen::MatrixXd& grad) const {
  return evaluate(outputs, rows, &grad);
}

double CannObjective::evaluate(const Eigen::MatrixXd& outputs,
                               std::span<const int> rows,
                               Eigen::MatrixXd* grad) const {
  if (rows.empty()) throw ValidationError("empty batch");
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double total = 0.0;
  for (Eigen::Index j = 0; j < outputs.rows(); ++j) {
    const int i = rows[static_cast<std::size_t>(j)];
    double s = outputs(j, 0);
    double t = outputs(j, 1);
    double alpha = sigmoid(s);
    double eta = alpha * eta_glm_(i) + (1.0 - alpha) * t;
    double mu = std::exp(eta);
    double yi = y_(i);
    total += inv_n * 2.0 * ((yi - mu) / mu - std::log(yi / mu));
    if (grad) {
      // dDev/deta = 2*(mu - y)/mu since mu = exp(eta).
      double deta = 2.0 * (mu - yi) / mu;
      (*grad)(j, 0) = inv_n * deta * alpha * (1.0 - alpha) * (eta_glm_(i) - t);
      (*grad)(j, 1) = inv_n * deta * (1.0 - alpha);
    }
  }
  return total;
}

double cann_pearson_dispersion(const CannModel& model, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw DimensionError("batch size mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double mu = cann_mean(model, X.row(i).transpose());
    double r = (y(i) - mu) / mu;
    total += r * r;
  }
  auto dof = X.rows() - X.cols() - 1;
  if (dof < 1) dof = 1;
  return total / static_cast<double>(dof);
}

// ---- MDN ------------------------------------------------------------------

namespace {

double positive_transform(double v, MdnModel::Transform t) {
  if (t == MdnModel::Transform::Exp) return std::exp(v);
  // softplus, stable for large v
  return v > 30.0 ? v : std::log1p(std::exp(v));
}

double positive_transform_deriv(double v, double transformed,
                                MdnModel::Transform t) {
  if (t == MdnModel::Transform::Exp) return transformed;
  return sigmoid(v);
}

MdnParams params_from_raw(const Eigen::VectorXd& raw, int components,
                          MdnModel::Transform transform) {
  MdnParams p;
  Eigen::VectorXd mix_logits = raw.head(components);
  double mx = mix_logits.maxCoeff();
  Eigen::VectorXd e = (mix_logits.array() - mx).exp();
  p.mix = e / e.sum();
  p.shape.resize(components);
  p.scale.resize(components);
  for (int k = 0; k < components; ++k) {
    p.shape(k) = positive_transform(raw(components + k), transform);
    p.scale(k) = positive_transform(raw(2 * components + k), transform);
  }
  return p;
}

}  // namespace

MdnParams mdn_params(const MdnModel& model, const Eigen::VectorXd& x) {
  if (model.net.output_dim() != 3 * model.components)
    throw DimensionError("mdn net output width must be 3 * components");
  return params_from_raw(mlp_forward(model.net, x), model.components,
                         model.transform);
}

MixtureDistribution::MixtureDistribution(MdnParams params)
    : params_(std::move(params)) {
  if (params_.mix.size() != params_.shape.size() ||
      params_.mix.size() != params_.scale.size())
    throw DimensionError("mixture parameter blocks disagree in length");
  if ((params_.shape.array() <= 0.0).any() ||
      (params_.scale.array() <= 0.0).any())
    throw ValidationError("mixture shapes and scales must be positive");
}

double MixtureDistribution::log_pdf(double y) const {
  if (y <= 0.0) return -std::numeric_limits<double>::infinity();
  std::vector<double> terms(static_cast<std::size_t>(params_.mix.size()));
  for (int k = 0; k < params_.mix.size(); ++k)
    terms[static_cast<std::size_t>(k)] =
        std::log(std::max(params_.mix(k), 1e-300)) +
        gamma_log_density(y, params_.shape(k), params_.scale(k));
  return log_sum_exp(terms);
}

double MixtureDistribution::pdf(double y) const {
  if (y < 0.0) return 0.0;
  return std::exp(log_pdf(y));
}

double MixtureDistribution::cdf(double y) const {
  if (y <= 0.0) return 0.0;
  double f = 0.0;
  for (int k = 0; k < params_.mix.size(); ++k)
    f += params_.mix(k) * GammaDist(params_.shape(k), params_.scale(k)).cdf(y);
  return f;
}

double MixtureDistribution::quantile(double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("quantile level must lie in (0,1)");
  double hi = 0.0;
  for (int k = 0; k < params_.mix.size(); ++k)
    hi = std::max(hi, GammaDist(params_.shape(k), params_.scale(k)).quantile(
                          std::min(1.0 - 1e-12, alpha + (1.0 - alpha) * 0.5)));
  return bisect_quantile(*this, alpha, 0.0, std::max(hi, 1.0), 1e-10);
}

double MixtureDistribution::mean() const {
  double mu = 0.0;
  for (int k = 0; k < params_.mix.size(); ++k)
    mu += params_.mix(k) * params_.shape(k) * params_.scale(k);
  return mu;
}

MixtureDistribution mdn_conditional(const MdnModel& model,
                                    const Eigen::VectorXd& x) {
  return MixtureDistribution(mdn_params(model, x));
}

double mdn_nll(const MdnModel& model, const Eigen::MatrixXd& X,
               const Eigen::VectorXd& y) {
  MdnObjective obj(X, y, model.components, model.transform);
  std::vector<int> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  Eigen::MatrixXd out = mlp_forward(model.net, X);
  return obj.value(out, rows) * static_cast<double>(X.rows());
}

MdnObjective::MdnObjective(Eigen::MatrixXd X, Eigen::VectorXd y, int components,
                           MdnModel::Transform transform)
    : X_(std::move(X)), y_(std::move(y)), components_(components),
      transform_(transform) {
  if (X_.rows() != y_.size()) throw DimensionError("response length != rows");
  if (components_ < 1) throw ValidationError("need at least one component");
  if ((y_.array() <= 0.0).any())
    throw ValidationError("gamma mixture needs strictly positive responses");
}

double MdnObjective::value(const Eigen::MatrixXd& outputs,
                           std::span<const int> rows) const {
  return evaluate(outputs, rows, nullptr);
}

double MdnObjective::value_and_grad(const Eigen::MatrixXd& outputs,
                                    std::span<const int> rows,
                                    Eigen::MatrixXd& grad) const {
  return evaluate(outputs, rows, &grad);
}

double MdnObjective::evaluate(const Eigen::MatrixXd& outputs,
                              std::span<const int> rows,
                              Eigen::MatrixXd* grad) const {
  if (rows.empty()) throw ValidationError("empty batch");
  if (outputs.cols() != 3 * components_)
    throw DimensionError("mdn output width must be 3 * components");
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  const int K = components_;
  double total = 0.0;
  std::vector<double> log_terms(static_cast<std::size_t>(K));
  for (Eigen::Index j = 0; j < outputs.rows(); ++j) {
    const int i = rows[static_cast<std::size_t>(j)];
    const double yi = y_(i);
    MdnParams p = params_from_raw(outputs.row(j).transpose(), K, transform_);
    for (int k = 0; k < K; ++k)
      log_terms[static_cast<std::size_t>(k)] =
          std::log(std::max(p.mix(k), 1e-300)) +
          gamma_log_density(yi, p.shape(k), p.scale(k));
    double lse = log_sum_exp(log_terms);
    total -= inv_n * lse;
    if (grad) {
      for (int k = 0; k < K; ++k) {
        double rho = std::exp(log_terms[static_cast<std::size_t>(k)] - lse);
        // mixing logits
        (*grad)(j, k) = inv_n * (p.mix(k) - rho);
        // shape head: dlogf/dshape = ln y - ln scale - digamma(shape)
        double dshape = std::log(yi) - std::log(p.scale(k)) -
                        boost::math::digamma(p.shape(k));
        (*grad)(j, K + k) =
            -inv_n * rho * dshape *
            positive_transform_deriv(outputs(j, K + k), p.shape(k), transform_);
        // scale head: dlogf/dscale * scale' ; with exp transform this is
        // y/scale - shape
        double dscale = yi / (p.scale(k) * p.scale(k)) - p.shape(k) / p.scale(k);
        (*grad)(j, 2 * K + k) =
            -inv_n * rho * dscale *
            positive_transform_deriv(outputs(j, 2 * K + k), p.scale(k),
                                     transform_);
      }
    }
  }
  return total;
}

// ---- DDR ------------------------------------------------------------------

Eigen::VectorXd ddr_forward(const DdrModel& model, const Eigen::VectorXd& x) {
  Eigen::VectorXd raw = mlp_forward(model.net, x);
  double mx = raw.maxCoeff();
  Eigen::VectorXd e = (raw.array() - mx).exp();
  return e / e.sum();
}

DdrDistribution::DdrDistribution(Partition part, Eigen::VectorXd probs)
    : part_(std::move(part)), probs_(std::move(probs)) {
  part_.validate();
  if (probs_.size() != part_.interval_count())
    throw DimensionError("probability vector width != interval count");
  cum_.resize(probs_.size() + 1);
  cum_(0) = 0.0;
  for (int k = 0; k < probs_.size(); ++k) cum_(k + 1) = cum_(k) + probs_(k);
}

double DdrDistribution::pdf(double y) const {
  int k = part_.interval_of(y);
  if (k < 0) return 0.0;
  return probs_(k) / part_.width(k);
}

double DdrDistribution::cdf(double y) const {
  if (y < part_.lower()) return 0.0;
  if (y >= part_.upper()) return 1.0;
  int k = part_.interval_of(y);
  return cum_(k) + (y - part_.cutpoints[static_cast<std::size_t>(k)]) *
                       (probs_(k) / part_.width(k));
}

double DdrDistribution::quantile(double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("quantile level must lie in (0,1)");
  const auto* begin = cum_.data();
  const auto* end = cum_.data() + cum_.size();
  const auto* it = std::upper_bound(begin, end, alpha);
  int k = static_cast<int>(it - begin) - 1;
  k = std::min(k, part_.interval_count() - 1);
  if (probs_(k) <= 0.0) return part_.cutpoints[static_cast<std::size_t>(k)];
  return part_.cutpoints[static_cast<std::size_t>(k)] +
         (alpha - cum_(k)) * part_.width(k) / probs_(k);
}

double DdrDistribution::mean() const {
  double mu = 0.0;
  for (int k = 0; k < probs_.size(); ++k) mu += probs_(k) * part_.midpoint(k);
  return mu;
}

double DdrDistribution::crps(double y) const {
  double total = 0.0;
  // Outside the region the CDF is exactly 0 or 1.
  if (y < part_.lower()) total += part_.lower() - y;
  if (y > part_.upper()) total += y - part_.upper();
  for (int k = 0; k < probs_.size(); ++k) {
    double a = part_.cutpoints[static_cast<std::size_t>(k)];
    double b = part_.cutpoints[static_cast<std::size_t>(k) + 1];
    double slope = probs_(k) / part_.width(k);
    auto seg = [&](double c, double h, double len) {
      double base = c - h;
      if (slope == 0.0) return base * base * len;
      double upper = base + slope * len;
      return (upper * upper * upper - base * base * base) / (3.0 * slope);
    };
    if (y > a && y < b) {
      total += seg(cum_(k), 0.0, y - a);
      total += seg(cum_(k) + slope * (y - a), 1.0, b - y);
    } else {
      total += seg(cum_(k), y <= a ? 1.0 : 0.0, b - a);
    }
  }
  return total;
}

DdrDistribution ddr_conditional(const DdrModel& model, const Eigen::VectorXd& x) {
  return DdrDistribution(model.partition, ddr_forward(model, x));
}

double ddr_loss(const DdrModel& model, const Eigen::MatrixXd& X,
                const Eigen::VectorXd& y) {
  DdrObjective obj(X, y, model.partition);
  std::vector<int> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  Eigen::MatrixXd out = mlp_forward(model.net, X);
  return obj.value(out, rows);
}

DdrObjective::DdrObjective(Eigen::MatrixXd X, Eigen::VectorXd y, Partition part)
    : X_(std::move(X)), y_(std::move(y)), partition_(std::move(part)) {
  if (X_.rows() != y_.size()) throw DimensionError("response length != rows");
  partition_.validate();
  cut_index_.reserve(static_cast<std::size_t>(y_.size()));
  for (Eigen::Index i = 0; i < y_.size(); ++i)
    cut_index_.push_back(detail::cut_index_of(partition_, y_(i)));
}

double DdrObjective::value(const Eigen::MatrixXd& outputs,
                           std::span<const int> rows) const {
  return evaluate(outputs, rows, nullptr);
}

double DdrObjective::value_and_grad(const Eigen::MatrixXd& outputs,
                                    std::span<const int> rows,
                                    Eigen::MatrixXd& grad) const {
  return evaluate(outputs, rows, &grad);
}

double DdrObjective::evaluate(const Eigen::MatrixXd& outputs,
                              std::span<const int> rows,
                              Eigen::MatrixXd* grad) const {
  if (rows.empty()) throw ValidationError("empty batch");
  const int K = partition_.interval_count();
  if (outputs.cols() != K) throw DimensionError("output width != intervals");
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double total = 0.0;
  Eigen::VectorXd u(K);
  for (Eigen::Index j = 0; j < outputs.rows(); ++j) {
    const int i = rows[static_cast<std::size_t>(j)];
    Eigen::VectorXd raw = outputs.row(j).transpose();
    double mx = raw.maxCoeff();
    Eigen::VectorXd e = (raw.array() - mx).exp();
    Eigen::VectorXd m = e / e.sum();
    u.setZero();
    Eigen::VectorXd* up = grad ? &u : nullptr;
    total += inv_n * detail::jbce_kernel(
                         partition_, m, 0.0,
                         cut_index_[static_cast<std::size_t>(i)], up);
    if (grad) grad->row(j) = inv_n * (u - m * u.sum()).transpose();
  }
  return total;
}

}  // namespace drn
