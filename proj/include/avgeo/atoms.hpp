#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "avgeo/net.hpp"
#include "avgeo/random.hpp"

namespace avgeo {

/// Class-partitioned dictionary: column j is kernel w_j, and kernels
/// [c * block_size, (c + 1) * block_size) belong to class c.
class Dictionary {
public:
  Dictionary() = default;
  /// Takes ownership of `kernels` (dim x N). N must be a multiple of `num_classes`.
  Dictionary(MatrixXd kernels, int num_classes);

  /// Gaussian kernels, normalized to unit columns.
  static Dictionary random(int dim, int num_classes, int block_size, Rng& rng);

  int dim() const { return static_cast<int>(kernels_.rows()); }
  int num_kernels() const { return static_cast<int>(kernels_.cols()); }
  int num_classes() const { return num_classes_; }
  int block_size() const { return num_classes_ == 0 ? 0 : num_kernels() / num_classes_; }
  int class_of(int kernel) const { return kernel / block_size(); }

  const MatrixXd& kernels() const { return kernels_; }
  MatrixXd& kernels() { return kernels_; }

  /// Rescales every kernel to unit L2 norm.
  void normalize_columns();

private:
  MatrixXd kernels_;
  int num_classes_ = 0;
};

struct ClipEmbedding {
  VectorXd vec;
  int class_id = 0;
};

/// Per-class prototypes plus perturbed clips drawn around them.
struct ClipBank {
  int num_classes = 0;
  int dim = 0;
  std::vector<VectorXd> prototypes;
  std::vector<ClipEmbedding> clips;

  /// Indices into `clips` for each class.
  std::vector<std::vector<std::size_t>> by_class() const;
};

/// Prototypes form a random orthonormal set when num_classes <= dim (Gaussian
/// unit vectors otherwise). Each clip is normalize(prototype + noise_scale * n / sqrt(dim)).
ClipBank make_clip_bank(int num_classes, int clips_per_class, int dim, Rng& rng, double noise_scale = 0.3);

/// Maps a (gain-scaled) clip to the embedding space. The desk-scale model is the identity.
using AudioEncoder = std::function<VectorXd(const VectorXd&)>;

struct MixtureComponent {
  int class_id = 0;
  VectorXd clip;
  double gain = 0.0;
};

struct MixtureSample {
  std::vector<MixtureComponent> components;
  VectorXd x_mix;

  int num_components() const { return static_cast<int>(components.size()); }
  std::vector<int> classes() const;
};

struct GainRange {
  double lo = 0.2;
  double hi = 1.0;
};

/// Validates strictly decreasing gains and forms x_mix = encoder(sum g_k c_k)
/// (sum g_k c_k when `encoder` is empty).
MixtureSample mix_components(std::vector<MixtureComponent> components, const AudioEncoder& encoder = {});

/// K distinct classes, one clip each, gains uniform on `gains` sorted descending.
MixtureSample make_mixture(const ClipBank& bank, int K, Rng& rng, GainRange gains = {});

struct DecompositionStep {
  int kernel = -1;
  int predicted_class = -1;
  double activation = 0.0; // z_k, always >= 0
  VectorXd reconstruction; // z_k * w_{j*}
  double residual_norm = 0.0;
};

struct DecompositionTrace {
  std::vector<DecompositionStep> steps;
  VectorXd final_residual;
};

/// Iterative residual subtraction: K rounds of argmax kernel selection,
/// relu activation and atom subtraction. Dot products are accumulated in
/// index order so results are reproducible bit for bit.
DecompositionTrace decompose(const Dictionary& dict, const VectorXd& x_mix, int K);

/// Residual entering step `k` (0-based) of `trace`.
VectorXd residual_before(const DecompositionTrace& trace, const VectorXd& x_mix, int k);

struct StepLoss {
  double total = 0.0;
  double cross_entropy = 0.0;
  double reconstruction = 0.0;
  int selected_kernel = -1;
  MatrixXd grad; // dL/dW, dim x N
};

/// Loss of one decomposition step given the residual that entered it.
///
/// Class logits are the per-block maxima of a = W^T r, followed by softmax
/// over classes; the reconstruction term is ||z w_{j*} - target||^2. Block
/// argmaxes and j* are held constant when differentiating.
StepLoss step_loss(const Dictionary& dict, const VectorXd& residual, int target_class, const VectorXd& target);

struct MartOptions {
  int epochs = 5;
  int batch = 16;
  AdamOptions adam{};
  AudioEncoder encoder{};
};

struct MartResult {
  std::vector<double> loss_curve; // mean per-mixture loss of each batch
};

/// Mixture-autoregressive training over `train`. Kernels are renormalized after every update.
MartResult train_mart(Dictionary& dict, const std::vector<MixtureSample>& train, const MartOptions& options, Rng& rng);

struct DecompositionAccuracy {
  std::vector<double> per_step;  // top-1 class accuracy at iteration k
  double exact_sequence = 0.0;   // whole class sequence recovered
  std::size_t num_mixtures = 0;
};

DecompositionAccuracy decomposition_accuracy(const Dictionary& dict, const std::vector<MixtureSample>& mixtures);

/// Dense N-vector of summed activations per selected kernel; at most K nonzeros.
VectorXd atom_histogram(const DecompositionTrace& trace, int num_kernels);

} // namespace avgeo
