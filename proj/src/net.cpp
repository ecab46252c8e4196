#include "avgeo/net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "avgeo/errors.hpp"

namespace avgeo {
namespace {

void apply_activation(Activation act, const MatrixXd& pre, MatrixXd& out) {
  switch (act) {
  case Activation::Identity: out = pre; break;
  case Activation::Gelu: out = pre.unaryExpr([](double x) { return gelu(x); }); break;
  }
}

} // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidInput("network needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    if (L.bias.size() != L.weight.rows()) throw InvalidInput("bias size does not match layer " + std::to_string(l));
    if (l > 0 && L.weight.cols() != layers_[l - 1].weight.rows())
      throw InvalidInput("layer " + std::to_string(l) + " input width does not match previous output");
  }
}

DenseNet::DenseNet(const std::vector<int>& widths, Rng& rng, Activation hidden) {
  if (widths.size() < 2) throw InvalidInput("network needs at least input and output widths");
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    if (in <= 0 || out <= 0) throw InvalidInput("layer widths must be positive");
    DenseLayer layer;
    layer.weight = MatrixXd(out, in);
    const double scale = std::sqrt(2.0 / in);
    for (int c = 0; c < in; ++c)
      for (int r = 0; r < out; ++r) layer.weight(r, c) = scale * g(rng);
    layer.bias = VectorXd::Zero(out);
    layer.activation = (l + 2 == widths.size()) ? Activation::Identity : hidden;
    layers_.push_back(std::move(layer));
  }
}

int DenseNet::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
int DenseNet::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

std::vector<int> DenseNet::widths() const {
  std::vector<int> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const auto& L : layers_) w.push_back(static_cast<int>(L.weight.rows()));
  return w;
}

std::size_t DenseNet::num_params() const {
  std::size_t n = 0;
  for (const auto& L : layers_) n += static_cast<std::size_t>(L.weight.size() + L.bias.size());
  return n;
}

MatrixXd DenseNet::forward(const MatrixXd& x, Cache* cache) const {
  if (x.rows() != input_dim())
    throw InvalidInput("input has " + std::to_string(x.rows()) + " rows, network expects " + std::to_string(input_dim()));
  if (cache) {
    cache->inputs.resize(layers_.size());
    cache->preactivations.resize(layers_.size());
  }
  MatrixXd h = x;
  MatrixXd pre;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    pre.noalias() = L.weight * h;
    pre.colwise() += L.bias;
    if (cache) {
      cache->inputs[l] = std::move(h);
      apply_activation(L.activation, pre, h);
      cache->preactivations[l] = pre;
    } else {
      apply_activation(L.activation, pre, h);
    }
  }
  return h;
}

DenseNet::Gradients DenseNet::backward(const Cache& cache, const MatrixXd& grad_out) const {
  if (cache.inputs.size() != layers_.size()) throw InvalidInput("cache does not belong to this network");
  Gradients g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  MatrixXd delta = grad_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& L = layers_[l];
    if (L.activation == Activation::Gelu)
      delta.array() *= cache.preactivations[l].unaryExpr([](double x) { return gelu_grad(x); }).array();
    g.weight[l].noalias() = delta * cache.inputs[l].transpose();
    g.bias[l] = delta.rowwise().sum();
    MatrixXd next;
    next.noalias() = L.weight.transpose() * delta;
    delta = std::move(next);
  }
  g.input = std::move(delta);
  return g;
}

VectorXd DenseNet::flat_params() const {
  VectorXd flat(static_cast<Eigen::Index>(num_params()));
  Eigen::Index at = 0;
  for (const auto& L : layers_) {
    flat.segment(at, L.weight.size()) = L.weight.reshaped();
    at += L.weight.size();
    flat.segment(at, L.bias.size()) = L.bias;
    at += L.bias.size();
  }
  return flat;
}

void DenseNet::set_flat_params(const VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(num_params())) throw InvalidInput("flat parameter size mismatch");
  Eigen::Index at = 0;
  for (auto& L : layers_) {
    L.weight.reshaped() = flat.segment(at, L.weight.size());
    at += L.weight.size();
    L.bias = flat.segment(at, L.bias.size());
    at += L.bias.size();
  }
}

VectorXd DenseNet::flatten(const Gradients& g) const {
  VectorXd flat(static_cast<Eigen::Index>(num_params()));
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    flat.segment(at, g.weight[l].size()) = g.weight[l].reshaped();
    at += g.weight[l].size();
    flat.segment(at, g.bias[l].size()) = g.bias[l];
    at += g.bias[l].size();
  }
  return flat;
}

void DenseNet::zero_output_layer() {
  if (layers_.empty()) return;
  layers_.back().weight.setZero();
  layers_.back().bias.setZero();
}

void TimeEmbedding::write(double t, Eigen::Ref<VectorXd> out) const {
  for (int k = 0; k < num_frequencies; ++k) {
    const double w = std::numbers::pi * (k + 1) * t;
    out[2 * k] = std::sin(w);
    out[2 * k + 1] = std::cos(w);
  }
}

VectorXd TimeEmbedding::operator()(double t) const {
  VectorXd out(dim());
  write(t, out);
  return out;
}

Adam::Adam(std::size_t num_params, AdamOptions options)
    : options_(options), m_(VectorXd::Zero(static_cast<Eigen::Index>(num_params))),
      v_(VectorXd::Zero(static_cast<Eigen::Index>(num_params))) {}

void Adam::step(Eigen::Ref<VectorXd> params, const VectorXd& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw InvalidInput("optimizer state size mismatch");
  ++steps_;
  const auto& o = options_;
  m_ = o.beta1 * m_ + (1.0 - o.beta1) * grads;
  v_ = o.beta2 * v_ + (1.0 - o.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(steps_));
  if (o.weight_decay != 0.0) params *= (1.0 - o.lr * o.weight_decay);
  params.array() -= o.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + o.eps);
}

GradCheckReport grad_check(const VectorXd& params, const std::function<double(const VectorXd&)>& loss,
                           const VectorXd& analytic, double tolerance, double step) {
  if (analytic.size() != params.size()) throw InvalidInput("analytic gradient size mismatch");
  GradCheckReport report;
  report.tolerance = tolerance;
  VectorXd probe = params;
  for (Eigen::Index k = 0; k < params.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + step;
    const double up = loss(probe);
    probe[k] = orig - step;
    const double down = loss(probe);
    probe[k] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double abs_err = std::abs(numeric - analytic[k]);
    const double rel = abs_err / std::max({std::abs(numeric), std::abs(analytic[k]), 1e-6});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = static_cast<std::size_t>(k);
    }
    ++report.num_checked;
  }
  return report;
}

GradCheckReport grad_check(const DenseNet& net, const MatrixXd& input, const OutputLoss& loss, double tolerance) {
  DenseNet::Cache cache;
  const MatrixXd out = net.forward(input, &cache);
  MatrixXd grad_out;
  loss(out, &grad_out);
  const VectorXd analytic = net.flatten(net.backward(cache, grad_out));
  DenseNet probe = net;
  auto f = [&](const VectorXd& p) {
    probe.set_flat_params(p);
    return loss(probe.forward(input), nullptr);
  };
  return grad_check(net.flat_params(), f, analytic, tolerance);
}

} // namespace avgeo
