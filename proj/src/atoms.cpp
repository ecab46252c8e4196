#include "avgeo/atoms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/QR>

#include "avgeo/errors.hpp"

namespace avgeo {
namespace {

// Index-order accumulation; decompose relies on this for reproducibility.
double dot_sequential(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

VectorXd gaussian_vector(int n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

} // namespace

Dictionary::Dictionary(MatrixXd kernels, int num_classes) : kernels_(std::move(kernels)), num_classes_(num_classes) {
  if (num_classes_ <= 0) throw InvalidInput("dictionary needs at least one class");
  if (kernels_.cols() == 0 || kernels_.cols() % num_classes_ != 0)
    throw InvalidInput("kernel count must be a positive multiple of the class count");
  if (!kernels_.allFinite()) throw InvalidInput("dictionary kernels must be finite");
}

Dictionary Dictionary::random(int dim, int num_classes, int block_size, Rng& rng) {
  if (dim <= 0 || num_classes <= 0 || block_size <= 0) throw InvalidInput("dictionary dimensions must be positive");
  MatrixXd w(dim, num_classes * block_size);
  for (Eigen::Index j = 0; j < w.cols(); ++j) w.col(j) = gaussian_vector(dim, rng);
  Dictionary d(std::move(w), num_classes);
  d.normalize_columns();
  return d;
}

void Dictionary::normalize_columns() {
  for (Eigen::Index j = 0; j < kernels_.cols(); ++j) {
    const double n = kernels_.col(j).norm();
    if (n == 0.0 || !std::isfinite(n)) throw InvalidInput("kernel " + std::to_string(j) + " cannot be normalized");
    kernels_.col(j) /= n;
  }
}

std::vector<std::vector<std::size_t>> ClipBank::by_class() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < clips.size(); ++i) out[static_cast<std::size_t>(clips[i].class_id)].push_back(i);
  return out;
}

ClipBank make_clip_bank(int num_classes, int clips_per_class, int dim, Rng& rng, double noise_scale) {
  if (num_classes <= 0 || clips_per_class <= 0 || dim <= 0) throw InvalidInput("clip bank dimensions must be positive");
  if (!(noise_scale >= 0.0)) throw InvalidInput("noise scale must be nonnegative");
  ClipBank bank;
  bank.num_classes = num_classes;
  bank.dim = dim;
  if (num_classes <= dim) {
    MatrixXd g(dim, num_classes);
    for (int c = 0; c < num_classes; ++c) g.col(c) = gaussian_vector(dim, rng);
    Eigen::HouseholderQR<MatrixXd> qr(g);
    const MatrixXd q = qr.householderQ() * MatrixXd::Identity(dim, num_classes);
    const MatrixXd r = qr.matrixQR();
    for (int c = 0; c < num_classes; ++c) {
      // Sign fix makes the frame Haar-distributed.
      const double sign = r(c, c) < 0.0 ? -1.0 : 1.0;
      bank.prototypes.push_back(sign * q.col(c));
    }
  } else {
    for (int c = 0; c < num_classes; ++c) bank.prototypes.push_back(gaussian_vector(dim, rng).normalized());
  }
  const double scale = noise_scale / std::sqrt(static_cast<double>(dim));
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < clips_per_class; ++i) {
      VectorXd v = bank.prototypes[static_cast<std::size_t>(c)] + scale * gaussian_vector(dim, rng);
      bank.clips.push_back({v.normalized(), c});
    }
  }
  return bank;
}

std::vector<int> MixtureSample::classes() const {
  std::vector<int> out;
  for (const auto& c : components) out.push_back(c.class_id);
  return out;
}

MixtureSample mix_components(std::vector<MixtureComponent> components, const AudioEncoder& encoder) {
  if (components.empty()) throw InvalidInput("a mixture needs at least one component");
  const auto dim = components.front().clip.size();
  VectorXd sum = VectorXd::Zero(dim);
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& c = components[k];
    if (c.clip.size() != dim) throw InvalidInput("mixture components have different dimensions");
    if (!c.clip.allFinite() || !std::isfinite(c.gain)) throw InvalidInput("mixture component is not finite");
    if (k > 0 && !(c.gain < components[k - 1].gain)) throw InvalidInput("mixture gains must be strictly decreasing");
    sum += c.gain * c.clip;
  }
  MixtureSample m;
  m.x_mix = encoder ? encoder(sum) : sum;
  m.components = std::move(components);
  return m;
}

MixtureSample make_mixture(const ClipBank& bank, int K, Rng& rng, GainRange gains) {
  if (K <= 0) throw InvalidInput("mixture needs K >= 1");
  if (K > bank.num_classes) throw InvalidInput("K exceeds the number of distinct classes");
  if (!(gains.lo < gains.hi)) throw InvalidInput("gain range is empty");
  const auto by_class = bank.by_class();
  std::vector<int> classes(static_cast<std::size_t>(bank.num_classes));
  std::iota(classes.begin(), classes.end(), 0);
  // Partial Fisher-Yates for K distinct classes.
  for (int k = 0; k < K; ++k) {
    std::uniform_int_distribution<int> pick(k, bank.num_classes - 1);
    std::swap(classes[static_cast<std::size_t>(k)], classes[static_cast<std::size_t>(pick(rng))]);
  }
  std::uniform_real_distribution<double> gain(gains.lo, gains.hi);
  std::vector<double> g(static_cast<std::size_t>(K));
  do {
    for (auto& x : g) x = gain(rng);
    std::sort(g.begin(), g.end(), std::greater<>());
  } while (std::adjacent_find(g.begin(), g.end()) != g.end());

  std::vector<MixtureComponent> components;
  for (int k = 0; k < K; ++k) {
    const int c = classes[static_cast<std::size_t>(k)];
    const auto& pool = by_class[static_cast<std::size_t>(c)];
    if (pool.empty()) throw InvalidInput("class " + std::to_string(c) + " has no clips");
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    components.push_back({c, bank.clips[pool[pick(rng)]].vec, g[static_cast<std::size_t>(k)]});
  }
  return mix_components(std::move(components));
}

DecompositionTrace decompose(const Dictionary& dict, const VectorXd& x_mix, int K) {
  if (K < 1) throw InvalidInput("decomposition needs K >= 1");
  if (x_mix.size() != dict.dim()) throw InvalidInput("mixture dimension does not match the dictionary");
  const MatrixXd& W = dict.kernels();
  const Eigen::Index d = W.rows();
  DecompositionTrace trace;
  VectorXd r = x_mix;
  for (int k = 0; k < K; ++k) {
    int best = 0;
    double best_a = dot_sequential(W.col(0).data(), r.data(), d);
    for (int j = 1; j < dict.num_kernels(); ++j) {
      const double a = dot_sequential(W.col(j).data(), r.data(), d);
      if (a > best_a) {
        best_a = a;
        best = j;
      }
    }
    DecompositionStep step;
    step.kernel = best;
    step.predicted_class = dict.class_of(best);
    step.activation = std::max(0.0, best_a);
    step.reconstruction = step.activation * W.col(best);
    r -= step.reconstruction;
    step.residual_norm = r.norm();
    trace.steps.push_back(std::move(step));
  }
  trace.final_residual = std::move(r);
  return trace;
}

VectorXd residual_before(const DecompositionTrace& trace, const VectorXd& x_mix, int k) {
  if (k < 0 || k > static_cast<int>(trace.steps.size())) throw InvalidInput("step index out of range");
  VectorXd r = x_mix;
  for (int i = 0; i < k; ++i) r -= trace.steps[static_cast<std::size_t>(i)].reconstruction;
  return r;
}

StepLoss step_loss(const Dictionary& dict, const VectorXd& residual, int target_class, const VectorXd& target) {
  if (target_class < 0 || target_class >= dict.num_classes()) throw InvalidInput("target class out of range");
  if (residual.size() != dict.dim() || target.size() != dict.dim()) throw InvalidInput("step loss dimension mismatch");
  const MatrixXd& W = dict.kernels();
  const int C = dict.num_classes();
  const int B = dict.block_size();
  const VectorXd a = W.transpose() * residual;

  StepLoss out;
  out.grad = MatrixXd::Zero(W.rows(), W.cols());

  VectorXd logits(C);
  std::vector<int> block_arg(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    Eigen::Index arg = 0;
    logits[c] = a.segment(c * B, B).maxCoeff(&arg);
    block_arg[static_cast<std::size_t>(c)] = c * B + static_cast<int>(arg);
  }
  const double shift = logits.maxCoeff();
  const VectorXd e = (logits.array() - shift).exp();
  const double z_sum = e.sum();
  const VectorXd p = e / z_sum;
  out.cross_entropy = -(logits[target_class] - shift - std::log(z_sum));
  for (int c = 0; c < C; ++c) {
    const double dl = p[c] - (c == target_class ? 1.0 : 0.0);
    out.grad.col(block_arg[static_cast<std::size_t>(c)]) += dl * residual;
  }

  Eigen::Index j = 0;
  a.maxCoeff(&j);
  out.selected_kernel = static_cast<int>(j);
  const double z = a[j];
  if (z > 0.0) {
    const VectorXd w = W.col(j);
    const VectorXd err = z * w - target;
    out.reconstruction = err.squaredNorm();
    out.grad.col(j) += 2.0 * (residual * w.dot(err) + z * err);
  } else {
    out.reconstruction = target.squaredNorm();
  }
  out.total = out.cross_entropy + out.reconstruction;
  return out;
}

MartResult train_mart(Dictionary& dict, const std::vector<MixtureSample>& train, const MartOptions& options, Rng& rng) {
  if (train.empty()) throw InvalidInput("training set is empty");
  if (options.epochs < 1 || options.batch < 1) throw InvalidInput("epochs and batch size must be positive");
  const Eigen::Index n_params = dict.kernels().size();
  Adam adam(static_cast<std::size_t>(n_params), options.adam);
  MartResult result;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  MatrixXd grad(dict.kernels().rows(), dict.kernels().cols());

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch));
      grad.setZero();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const MixtureSample& m = train[order[b]];
        if (m.x_mix.size() != dict.dim()) throw InvalidInput("training mixture dimension does not match the dictionary");
        VectorXd r = m.x_mix;
        for (const auto& comp : m.components) {
          const VectorXd scaled = comp.gain * comp.clip;
          const VectorXd target = options.encoder ? options.encoder(scaled) : scaled;
          StepLoss sl = step_loss(dict, r, comp.class_id, target);
          batch_loss += sl.total;
          grad += sl.grad;
          const double z = std::max(0.0, dict.kernels().col(sl.selected_kernel).dot(r));
          r -= z * dict.kernels().col(sl.selected_kernel);
        }
      }
      const double n = static_cast<double>(stop - start);
      grad /= n;
      Eigen::Map<VectorXd> params(dict.kernels().data(), n_params);
      adam.step(params, grad.reshaped());
      dict.normalize_columns();
      result.loss_curve.push_back(batch_loss / n);
    }
  }
  return result;
}

DecompositionAccuracy decomposition_accuracy(const Dictionary& dict, const std::vector<MixtureSample>& mixtures) {
  DecompositionAccuracy acc;
  acc.num_mixtures = mixtures.size();
  if (mixtures.empty()) return acc;
  std::size_t max_k = 0;
  for (const auto& m : mixtures) max_k = std::max(max_k, m.components.size());
  std::vector<std::size_t> hits(max_k, 0), totals(max_k, 0);
  std::size_t exact = 0;
  for (const auto& m : mixtures) {
    const auto trace = decompose(dict, m.x_mix, m.num_components());
    bool all = true;
    for (std::size_t k = 0; k < m.components.size(); ++k) {
      ++totals[k];
      if (trace.steps[k].predicted_class == m.components[k].class_id)
        ++hits[k];
      else
        all = false;
    }
    if (all) ++exact;
  }
  for (std::size_t k = 0; k < max_k; ++k)
    acc.per_step.push_back(static_cast<double>(hits[k]) / static_cast<double>(totals[k]));
  acc.exact_sequence = static_cast<double>(exact) / static_cast<double>(mixtures.size());
  return acc;
}

VectorXd atom_histogram(const DecompositionTrace& trace, int num_kernels) {
  VectorXd z = VectorXd::Zero(num_kernels);
  for (const auto& s : trace.steps) {
    if (s.kernel < 0 || s.kernel >= num_kernels) throw InvalidInput("trace kernel index out of range");
    z[s.kernel] += s.activation;
  }
  return z;
}

} // namespace avgeo
