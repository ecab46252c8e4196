#include "avgeo/rfm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "avgeo/errors.hpp"

namespace avgeo {
namespace {

constexpr Eigen::Index kLikelihoodChunk = 512;

void project_columns(const MatrixXd& y, MatrixXd& v) {
  for (Eigen::Index c = 0; c < y.cols(); ++c) v.col(c) -= y.col(c).dot(v.col(c)) * y.col(c);
}

// Exponential map applied column by column; `v` is assumed tangent.
MatrixXd exp_columns(const MatrixXd& y, const MatrixXd& v) {
  MatrixXd out(3, y.cols());
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    const double n = v.col(c).norm();
    if (n == 0.0) {
      out.col(c) = y.col(c);
      continue;
    }
    Vec3 p = std::cos(n) * y.col(c) + (std::sin(n) / n) * v.col(c);
    out.col(c) = p / p.norm();
  }
  return out;
}

void check_finite(const MatrixXd& v, int step, double t, const char* phase) {
  if (!v.allFinite())
    throw IntegrationError(std::string("non-finite vector field during ") + phase + " at step " + std::to_string(step) +
                           " (t = " + std::to_string(t) + ")");
}

void check_psi(const FlowModel& model, const VectorXd& psi) {
  if (psi.size() != model.psi_dim())
    throw InvalidInput("conditioning vector has dimension " + std::to_string(psi.size()) + ", model expects " +
                       std::to_string(model.psi_dim()));
  if (!psi.allFinite()) throw InvalidInput("conditioning vector is not finite");
}

MatrixXd to_columns(std::span<const UnitVec> ys) {
  MatrixXd y(3, static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) y.col(static_cast<Eigen::Index>(i)) = ys[i].vec();
  return y;
}

struct FieldAndDivergence {
  MatrixXd velocity; // 3 x n
  VectorXd divergence;
};

FieldAndDivergence field_and_divergence(const FlowModel& model, const MatrixXd& y, double t, const VectorXd& psi,
                                        double eps) {
  const Eigen::Index n = y.cols();
  MatrixXd stacked(3, 5 * n);
  std::vector<std::array<Vec3, 2>> bases(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c) {
    const UnitVec base = UnitVec::normalize(y.col(c));
    const auto basis = tangent_basis(base);
    bases[static_cast<std::size_t>(c)] = basis;
    stacked.col(5 * c) = base.vec();
    for (int k = 0; k < 2; ++k) {
      stacked.col(5 * c + 1 + 2 * k) = exp_map(base, eps * basis[static_cast<std::size_t>(k)]).vec();
      stacked.col(5 * c + 2 + 2 * k) = exp_map(base, -eps * basis[static_cast<std::size_t>(k)]).vec();
    }
  }
  const MatrixXd v = model.velocity(stacked, t, psi);
  FieldAndDivergence out{MatrixXd(3, n), VectorXd(n)};
  for (Eigen::Index c = 0; c < n; ++c) {
    out.velocity.col(c) = v.col(5 * c);
    double div = 0.0;
    for (int k = 0; k < 2; ++k) {
      const Vec3& e = bases[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
      div += e.dot(v.col(5 * c + 1 + 2 * k) - v.col(5 * c + 2 + 2 * k)) / (2.0 * eps);
    }
    out.divergence[c] = div;
  }
  return out;
}

std::vector<double> log_likelihood_chunk(const FlowModel& model, MatrixXd y, const VectorXd& psi, int steps) {
  const double h = 1.0 / steps;
  const double eps = model.defaults().divergence_eps;
  VectorXd integral = VectorXd::Zero(y.cols());
  for (int s = steps; s >= 1; --s) {
    const double t = s * h;
    const auto k1 = field_and_divergence(model, y, t, psi, eps);
    check_finite(k1.velocity, s, t, "likelihood");
    const MatrixXd y_pred = exp_columns(y, -h * k1.velocity);
    check_finite(y_pred, s, t - h, "likelihood");
    const auto k2 = field_and_divergence(model, y_pred, t - h, psi, eps);
    check_finite(k2.velocity, s, t - h, "likelihood");
    MatrixXd d = 0.5 * (k1.velocity + k2.velocity);
    project_columns(y, d);
    y = exp_columns(y, -h * d);
    integral += 0.5 * h * (k1.divergence + k2.divergence);
    check_finite(y, s, t - h, "likelihood");
    check_finite(integral, s, t - h, "likelihood");
  }
  std::vector<double> out(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index c = 0; c < y.cols(); ++c) out[static_cast<std::size_t>(c)] = uniform_log_density() - integral[c];
  return out;
}

void check_training(const FlowTrainOptions& o) {
  if (o.epochs < 1 || o.batch < 1) throw InvalidInput("epochs and batch size must be positive");
  if (!(o.final_lr_fraction >= 0.0 && o.final_lr_fraction <= 1.0))
    throw InvalidInput("final_lr_fraction must lie in [0, 1]");
}

double scheduled_lr(const FlowTrainOptions& o, std::size_t step, std::size_t total) {
  const double f = o.final_lr_fraction;
  const double progress = static_cast<double>(step) / static_cast<double>(total);
  return o.adam.lr * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

} // namespace

FlowModel::FlowModel(int psi_dim, const std::vector<int>& hidden, Rng& rng, TimeEmbedding time,
                     IntegrationDefaults defaults)
    : psi_dim_(psi_dim), time_(time), defaults_(defaults) {
  if (psi_dim < 0) throw InvalidInput("psi dimension must be nonnegative");
  std::vector<int> widths{3 + time_.dim() + psi_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(3);
  net_ = DenseNet(widths, rng, Activation::Gelu);
}

FlowModel::FlowModel(DenseNet net, int psi_dim, TimeEmbedding time, IntegrationDefaults defaults)
    : net_(std::move(net)), psi_dim_(psi_dim), time_(time), defaults_(defaults) {
  if (net_.input_dim() != 3 + time_.dim() + psi_dim_ || net_.output_dim() != 3)
    throw InvalidInput("network shape does not match the flow model layout");
}

MatrixXd FlowModel::features(const MatrixXd& y, const VectorXd& t, const MatrixXd& psi) const {
  const Eigen::Index b = y.cols();
  if (y.rows() != 3 || t.size() != b || psi.rows() != psi_dim_ || psi.cols() != b)
    throw InvalidInput("flow feature batch has inconsistent shapes");
  MatrixXd f(net_.input_dim(), b);
  f.topRows(3) = y;
  for (Eigen::Index c = 0; c < b; ++c) time_.write(t[c], f.col(c).segment(3, time_.dim()));
  f.bottomRows(psi_dim_) = psi;
  return f;
}

MatrixXd FlowModel::velocity(const MatrixXd& y, double t, const VectorXd& psi) const {
  check_psi(*this, psi);
  const MatrixXd psi_b = psi.replicate(1, y.cols());
  MatrixXd v = net_.forward(features(y, VectorXd::Constant(y.cols(), t), psi_b));
  project_columns(y, v);
  return v;
}

Vec3 FlowModel::velocity(const UnitVec& y, double t, const VectorXd& psi) const {
  return velocity(MatrixXd(y.vec()), t, psi).col(0);
}

FlowBatch draw_flow_batch(std::span<const FlowExample> examples, Rng& rng) {
  if (examples.empty()) throw InvalidInput("flow batch is empty");
  const auto b = static_cast<Eigen::Index>(examples.size());
  const auto psi_dim = examples.front().psi.size();
  FlowBatch batch{MatrixXd(3, b), VectorXd(b), MatrixXd(3, b), MatrixXd(psi_dim, b)};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index c = 0; c < b; ++c) {
    const auto& ex = examples[static_cast<std::size_t>(c)];
    if (ex.psi.size() != psi_dim) throw InvalidInput("conditioning vectors in a batch differ in size");
    const double t = unit(rng);
    for (;;) {
      const UnitVec y0 = sample_uniform(rng);
      try {
        const GeodesicPoint g = geodesic_interpolate(y0, ex.target, t);
        batch.y_t.col(c) = g.point.vec();
        batch.y_dot.col(c) = g.velocity.v;
        break;
      } catch (const SingularityError&) {
        // Antipodal noise draw; try another.
      }
    }
    batch.t[c] = t;
    batch.psi.col(c) = ex.psi;
  }
  return batch;
}

FlowMatchLoss flow_matching_loss(const MatrixXd& net_out, const FlowBatch& batch) {
  if (net_out.rows() != 3 || net_out.cols() != batch.y_t.cols()) throw InvalidInput("network output shape mismatch");
  MatrixXd diff = net_out;
  project_columns(batch.y_t, diff);
  diff -= batch.y_dot;
  const double inv_b = 1.0 / static_cast<double>(net_out.cols());
  FlowMatchLoss out;
  out.loss = diff.squaredNorm() * inv_b;
  out.grad_out = 2.0 * inv_b * diff;
  project_columns(batch.y_t, out.grad_out);
  return out;
}

FlowLoss rfm_loss(const FlowModel& model, const FlowBatch& batch) {
  DenseNet::Cache cache;
  const MatrixXd out = model.net().forward(model.features(batch.y_t, batch.t, batch.psi), &cache);
  const FlowMatchLoss fm = flow_matching_loss(out, batch);
  const auto grads = model.net().backward(cache, fm.grad_out);
  FlowLoss result;
  result.loss = fm.loss;
  result.grad = model.net().flatten(grads);
  result.psi_grad = grads.input.bottomRows(model.psi_dim());
  return result;
}

FlowLoss rfm_loss(const FlowModel& model, std::span<const FlowExample> examples, Rng& rng) {
  return rfm_loss(model, draw_flow_batch(examples, rng));
}

VectorXd temporal_mean(const std::vector<VectorXd>& frames) {
  if (frames.empty()) throw InvalidInput("at least one visual frame is required");
  VectorXd sum = VectorXd::Zero(frames.front().size());
  for (const auto& f : frames) {
    if (f.size() != sum.size()) throw InvalidInput("visual frames differ in dimension");
    sum += f;
  }
  return sum / static_cast<double>(frames.size());
}

FusionProjection::FusionProjection(int visual_dim, int num_atoms, int psi_dim, Rng& rng) : visual_dim_(visual_dim) {
  if (visual_dim < 0 || num_atoms < 0 || psi_dim <= 0 || visual_dim + num_atoms == 0)
    throw InvalidInput("fusion projection dimensions are invalid");
  const int in = visual_dim + num_atoms;
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  weight_ = MatrixXd(psi_dim, in);
  for (Eigen::Index c = 0; c < weight_.cols(); ++c)
    for (Eigen::Index r = 0; r < weight_.rows(); ++r) weight_(r, c) = g(rng);
  bias_ = VectorXd::Zero(psi_dim);
}

FusionProjection::FusionProjection(MatrixXd weight, VectorXd bias, int visual_dim)
    : weight_(std::move(weight)), bias_(std::move(bias)), visual_dim_(visual_dim) {
  if (bias_.size() != weight_.rows() || visual_dim_ < 0 || visual_dim_ > weight_.cols())
    throw InvalidInput("fusion projection shapes are inconsistent");
}

VectorXd FusionProjection::features(const FusionInput& input) const {
  const VectorXd mean = temporal_mean(input.visual_frames);
  if (mean.size() != visual_dim_) throw InvalidInput("visual frame dimension does not match the fusion projection");
  if (input.atoms.size() != num_atoms()) throw InvalidInput("atom vector dimension does not match the fusion projection");
  if ((input.atoms.array() < 0.0).any()) throw InvalidInput("atom activations must be nonnegative");
  VectorXd f(weight_.cols());
  f << mean, input.atoms;
  return f;
}

VectorXd FusionProjection::fuse(const FusionInput& input) const { return weight_ * features(input) + bias_; }

FlowTrainResult train_flow(FlowModel& model, const std::vector<FlowExample>& data, const FlowTrainOptions& options,
                           Rng& rng) {
  if (data.empty()) throw InvalidInput("flow training set is empty");
  check_training(options);
  for (const auto& ex : data) check_psi(model, ex.psi);
  Adam adam(model.net().num_params(), options.adam);
  VectorXd params = model.net().flat_params();
  FlowTrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<FlowExample> batch;
  const std::size_t per_epoch = (data.size() + static_cast<std::size_t>(options.batch) - 1) / static_cast<std::size_t>(options.batch);
  const std::size_t total = per_epoch * static_cast<std::size_t>(options.epochs);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(data[order[i]]);
      const FlowLoss l = rfm_loss(model, batch, rng);
      adam.options().lr = scheduled_lr(options, result.loss_curve.size(), total);
      adam.step(params, l.grad);
      model.net().set_flat_params(params);
      result.loss_curve.push_back(l.loss);
    }
  }
  return result;
}

FlowTrainResult train_flow(FlowModel& model, FusionProjection& fusion, const std::vector<FusedExample>& data,
                           const FlowTrainOptions& options, Rng& rng) {
  if (data.empty()) throw InvalidInput("flow training set is empty");
  check_training(options);
  if (fusion.psi_dim() != model.psi_dim()) throw InvalidInput("fusion output does not match the model's psi dimension");
  const Eigen::Index in = fusion.weight().cols();
  MatrixXd feats(in, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) feats.col(static_cast<Eigen::Index>(i)) = fusion.features(data[i].input);

  const auto n_net = static_cast<Eigen::Index>(model.net().num_params());
  const Eigen::Index n_w = fusion.weight().size();
  const Eigen::Index n_b = fusion.bias().size();
  VectorXd params(n_net + n_w + n_b);
  params << model.net().flat_params(), fusion.weight().reshaped(), fusion.bias();
  Adam adam(static_cast<std::size_t>(params.size()), options.adam);

  FlowTrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<FlowExample> batch;
  VectorXd grad(params.size());
  const std::size_t per_epoch = (data.size() + static_cast<std::size_t>(options.batch) - 1) / static_cast<std::size_t>(options.batch);
  const std::size_t total = per_epoch * static_cast<std::size_t>(options.epochs);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch));
      MatrixXd phi(in, static_cast<Eigen::Index>(stop - start));
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) {
        phi.col(static_cast<Eigen::Index>(i - start)) = feats.col(static_cast<Eigen::Index>(order[i]));
        batch.push_back({data[order[i]].target, fusion.weight() * phi.col(static_cast<Eigen::Index>(i - start)) + fusion.bias()});
      }
      const FlowLoss l = rfm_loss(model, batch, rng);
      const MatrixXd grad_w = l.psi_grad * phi.transpose();
      grad << l.grad, grad_w.reshaped(), l.psi_grad.rowwise().sum();
      adam.options().lr = scheduled_lr(options, result.loss_curve.size(), total);
      adam.step(params, grad);
      model.net().set_flat_params(params.head(n_net));
      fusion.weight().reshaped() = params.segment(n_net, n_w);
      fusion.bias() = params.tail(n_b);
      result.loss_curve.push_back(l.loss);
    }
  }
  return result;
}

std::vector<UnitVec> sample_many(const FlowModel& model, const VectorXd& psi, int count, int steps, Rng& rng) {
  if (steps < 1) throw InvalidInput("integration needs at least one step");
  if (count < 0) throw InvalidInput("sample count must be nonnegative");
  check_psi(model, psi);
  MatrixXd y(3, count);
  for (int c = 0; c < count; ++c) y.col(c) = sample_uniform(rng).vec();
  const double h = 1.0 / steps;
  for (int s = 0; s < steps; ++s) {
    const double t = s * h;
    const MatrixXd k1 = model.velocity(y, t, psi);
    check_finite(k1, s, t, "sampling");
    const MatrixXd y_pred = exp_columns(y, h * k1);
    check_finite(y_pred, s, t + h, "sampling");
    const MatrixXd k2 = model.velocity(y_pred, t + h, psi);
    check_finite(k2, s, t + h, "sampling");
    MatrixXd d = 0.5 * (k1 + k2);
    project_columns(y, d);
    y = exp_columns(y, h * d);
    check_finite(y, s, t + h, "sampling");
  }
  std::vector<UnitVec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) out.push_back(UnitVec::normalize(y.col(c)));
  return out;
}

UnitVec sample(const FlowModel& model, const VectorXd& psi, int steps, Rng& rng) {
  return sample_many(model, psi, 1, steps, rng).front();
}

double uniform_log_density() { return -std::log(4.0 * std::numbers::pi); }

std::vector<double> log_likelihood_many(const FlowModel& model, std::span<const UnitVec> ys, const VectorXd& psi,
                                        int steps) {
  if (steps < 1) throw InvalidInput("integration needs at least one step");
  check_psi(model, psi);
  std::vector<double> out;
  out.reserve(ys.size());
  for (std::size_t start = 0; start < ys.size(); start += kLikelihoodChunk) {
    const std::size_t stop = std::min(ys.size(), start + kLikelihoodChunk);
    const auto part = log_likelihood_chunk(model, to_columns(ys.subspan(start, stop - start)), psi, steps);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

double log_likelihood(const FlowModel& model, const UnitVec& y, const VectorXd& psi, int steps) {
  return log_likelihood_many(model, std::span<const UnitVec>(&y, 1), psi, steps).front();
}

Heatmap heatmap(const FlowModel& model, const VectorXd& psi, double resolution_deg, int steps) {
  if (!(resolution_deg > 0.0) || resolution_deg > 90.0) throw InvalidInput("heatmap resolution must be in (0, 90] degrees");
  Heatmap map;
  map.resolution_deg = resolution_deg;
  const int rows = static_cast<int>(std::ceil(180.0 / resolution_deg - 1e-9));
  const int cols = static_cast<int>(std::ceil(360.0 / resolution_deg - 1e-9));
  for (int r = 0; r < rows; ++r) map.lat_centers.push_back(std::min(90.0, -90.0 + (r + 0.5) * resolution_deg));
  for (int c = 0; c < cols; ++c) map.lon_centers.push_back(std::min(180.0, -180.0 + (c + 0.5) * resolution_deg));
  std::vector<UnitVec> ys;
  ys.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  for (double lat : map.lat_centers)
    for (double lon : map.lon_centers) ys.push_back(to_unit(GeoPoint::make(lat, lon)));
  const auto logp = log_likelihood_many(model, ys, psi, steps);
  map.density = MatrixXd(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      map.density(r, c) = std::exp(logp[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]);
  return map;
}

} // namespace avgeo
