#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "avgeo/random.hpp"

namespace avgeo {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { Identity, Gelu };

struct DenseLayer {
  MatrixXd weight; // out x in
  VectorXd bias;   // out
  Activation activation = Activation::Identity;
};

/// Feed-forward network of affine layers. Batches are column-major: one sample per column.
class DenseNet {
public:
  struct Cache {
    std::vector<MatrixXd> inputs;         // input to each layer
    std::vector<MatrixXd> preactivations; // W x + b of each layer
  };

  struct Gradients {
    std::vector<MatrixXd> weight;
    std::vector<VectorXd> bias;
    MatrixXd input;
  };

  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  /// `widths` lists input, hidden and output sizes. Hidden layers use `hidden`,
  /// the output layer is linear. Weights are He-scaled Gaussians, biases zero.
  DenseNet(const std::vector<int>& widths, Rng& rng, Activation hidden = Activation::Gelu);

  int input_dim() const;
  int output_dim() const;
  std::vector<int> widths() const;
  std::size_t num_params() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const;
  Gradients backward(const Cache& cache, const MatrixXd& grad_out) const;

  /// Parameters flattened layer by layer: weight (column-major), then bias.
  VectorXd flat_params() const;
  void set_flat_params(const VectorXd& flat);
  VectorXd flatten(const Gradients& g) const;

  /// Sets every output-layer weight and bias to zero, making the net the zero map.
  void zero_output_layer();

private:
  std::vector<DenseLayer> layers_;
};

double gelu(double x);
double gelu_grad(double x);

/// Sinusoidal features of t: [sin(pi k t), cos(pi k t)] for k = 1..n.
struct TimeEmbedding {
  int num_frequencies = 8;

  int dim() const { return 2 * num_frequencies; }
  void write(double t, Eigen::Ref<VectorXd> out) const;
  VectorXd operator()(double t) const;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0; // decoupled (AdamW)
};

/// Adaptive-moment optimizer over a flat parameter vector.
class Adam {
public:
  Adam() = default;
  Adam(std::size_t num_params, AdamOptions options);

  void step(Eigen::Ref<VectorXd> params, const VectorXd& grads);

  const AdamOptions& options() const { return options_; }
  AdamOptions& options() { return options_; }
  long step_count() const { return steps_; }
  const VectorXd& first_moment() const { return m_; }
  const VectorXd& second_moment() const { return v_; }

private:
  AdamOptions options_;
  VectorXd m_;
  VectorXd v_;
  long steps_ = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t num_checked = 0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error < tolerance; }
};

/// Central-difference check of `analytic` against `loss` around `params`.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check(const VectorXd& params, const std::function<double(const VectorXd&)>& loss,
                           const VectorXd& analytic, double tolerance, double step = 1e-6);

/// Loss of a network output; writes dL/d(out) into `grad_out` when non-null.
using OutputLoss = std::function<double(const MatrixXd& out, MatrixXd* grad_out)>;

/// Checks DenseNet::backward for every parameter of `net` on a fixed input batch.
GradCheckReport grad_check(const DenseNet& net, const MatrixXd& input, const OutputLoss& loss, double tolerance);

} // namespace avgeo
