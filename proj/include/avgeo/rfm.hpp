#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "avgeo/net.hpp"
#include "avgeo/random.hpp"
#include "avgeo/sphere.hpp"

namespace avgeo {

struct IntegrationDefaults {
  int sample_steps = 100;
  int likelihood_steps = 64;
  double divergence_eps = 1e-4;
};

/// Conditional tangent vector field v(y, t, psi) on the unit sphere.
///
/// The network sees [y, time features, psi] and emits an ambient 3-vector that
/// is projected onto the tangent plane at y before any use.
class FlowModel {
public:
  FlowModel() = default;
  /// `hidden` lists the hidden widths; the default matches a 4-layer MLP of width 256.
  FlowModel(int psi_dim, const std::vector<int>& hidden, Rng& rng, TimeEmbedding time = {},
            IntegrationDefaults defaults = {});
  FlowModel(DenseNet net, int psi_dim, TimeEmbedding time, IntegrationDefaults defaults);

  int psi_dim() const { return psi_dim_; }
  const DenseNet& net() const { return net_; }
  DenseNet& net() { return net_; }
  const TimeEmbedding& time_embedding() const { return time_; }
  const IntegrationDefaults& defaults() const { return defaults_; }
  IntegrationDefaults& defaults() { return defaults_; }

  /// Network input for points `y` (3 x B) at times `t` with conditioning `psi` (psi_dim x B).
  MatrixXd features(const MatrixXd& y, const VectorXd& t, const MatrixXd& psi) const;

  /// Projected field for every column of `y` at a common time and conditioning.
  MatrixXd velocity(const MatrixXd& y, double t, const VectorXd& psi) const;
  Vec3 velocity(const UnitVec& y, double t, const VectorXd& psi) const;

private:
  DenseNet net_;
  int psi_dim_ = 0;
  TimeEmbedding time_;
  IntegrationDefaults defaults_;
};

struct FlowExample {
  UnitVec target;
  VectorXd psi;
};

/// One draw of (t, y0) per example, turned into regression pairs on the geodesic.
struct FlowBatch {
  MatrixXd y_t;   // 3 x B
  VectorXd t;     // B
  MatrixXd y_dot; // 3 x B, tangent at y_t
  MatrixXd psi;   // psi_dim x B
};

/// Draws t ~ U(0, 1) and y0 ~ uniform per example; antipodal y0 draws are redrawn.
FlowBatch draw_flow_batch(std::span<const FlowExample> examples, Rng& rng);

struct FlowMatchLoss {
  double loss = 0.0;
  MatrixXd grad_out; // d loss / d raw network output
};

/// Mean over the batch of ||P_{y_t} out - y_dot||^2.
FlowMatchLoss flow_matching_loss(const MatrixXd& net_out, const FlowBatch& batch);

struct FlowLoss {
  double loss = 0.0;
  VectorXd grad;     // flat network parameters
  MatrixXd psi_grad; // psi_dim x B
};

FlowLoss rfm_loss(const FlowModel& model, const FlowBatch& batch);
FlowLoss rfm_loss(const FlowModel& model, std::span<const FlowExample> examples, Rng& rng);

/// Visual frames and atom activations that are fused into psi.
struct FusionInput {
  std::vector<VectorXd> visual_frames;
  VectorXd atoms;
};

VectorXd temporal_mean(const std::vector<VectorXd>& frames);

/// psi = W [mean(frames) ; z] + b.
class FusionProjection {
public:
  FusionProjection() = default;
  FusionProjection(int visual_dim, int num_atoms, int psi_dim, Rng& rng);
  FusionProjection(MatrixXd weight, VectorXd bias, int visual_dim);

  int visual_dim() const { return visual_dim_; }
  int num_atoms() const { return static_cast<int>(weight_.cols()) - visual_dim_; }
  int psi_dim() const { return static_cast<int>(weight_.rows()); }
  const MatrixXd& weight() const { return weight_; }
  const VectorXd& bias() const { return bias_; }
  MatrixXd& weight() { return weight_; }
  VectorXd& bias() { return bias_; }

  /// [mean(frames) ; z], validated.
  VectorXd features(const FusionInput& input) const;
  VectorXd fuse(const FusionInput& input) const;

private:
  MatrixXd weight_;
  VectorXd bias_;
  int visual_dim_ = 0;
};

struct FusedExample {
  UnitVec target;
  FusionInput input;
};

struct FlowTrainOptions {
  int epochs = 50;
  int batch = 128;
  AdamOptions adam{1e-3};
  /// Cosine decay of the learning rate from adam.lr to adam.lr * final_lr_fraction
  /// over all batches; 1 keeps it constant.
  double final_lr_fraction = 1.0;
};

struct FlowTrainResult {
  std::vector<double> loss_curve; // per batch
};

FlowTrainResult train_flow(FlowModel& model, const std::vector<FlowExample>& data, const FlowTrainOptions& options,
                           Rng& rng);

/// Trains the flow and the fusion projection jointly.
FlowTrainResult train_flow(FlowModel& model, FusionProjection& fusion, const std::vector<FusedExample>& data,
                           const FlowTrainOptions& options, Rng& rng);

/// Heun integration of dy/dt = v from a uniform y0 over [0, 1] with a
/// projection-retraction each step. Throws IntegrationError on non-finite field values.
UnitVec sample(const FlowModel& model, const VectorXd& psi, int steps, Rng& rng);
std::vector<UnitVec> sample_many(const FlowModel& model, const VectorXd& psi, int count, int steps, Rng& rng);

/// Log-density in nats w.r.t. surface measure, by reverse-time integration of
/// the tangent-space divergence (central differences along geodesics).
double log_likelihood(const FlowModel& model, const UnitVec& y, const VectorXd& psi, int steps);
std::vector<double> log_likelihood_many(const FlowModel& model, std::span<const UnitVec> ys, const VectorXd& psi,
                                        int steps);

/// -log(4 pi): log-density of the uniform base.
double uniform_log_density();

/// Densities on a regular lat/lon grid, evaluated at cell centres.
struct Heatmap {
  double resolution_deg = 0.0;
  std::vector<double> lat_centers; // south to north
  std::vector<double> lon_centers; // west to east
  MatrixXd density;                // rows: lat, cols: lon
};

Heatmap heatmap(const FlowModel& model, const VectorXd& psi, double resolution_deg, int steps);

} // namespace avgeo
